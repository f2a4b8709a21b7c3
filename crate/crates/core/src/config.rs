//! Run configuration: an INI file with `[paths]`, `[solver]`, `[beso]`,
//! `[materials]`, `[pulltest]` and `[run]` sections. Relative paths resolve
//! against the directory of the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::Ini;

use crate::beso::BesoSettings;
use crate::equilibrium::SolveSettings;
use crate::error::{Error, Result};
use crate::material::MaterialPair;
use crate::mesh::{load_obj, PoseSequence};
use crate::pulltest::{parse_strain_range, PullTestSpec, Stencil};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub body_rest: Option<PathBuf>,
    pub body_target: Option<PathBuf>,
    /// Motion frames; when empty the frames are the rest and target poses.
    pub sequence: Vec<PathBuf>,
    pub patch: Option<PathBuf>,
    /// Material file; overrides the `[materials]` section.
    pub materials: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub solver: SolveSettings,
    pub beso: BesoSettings,
    pub materials: MaterialPair,
    pub pulltest: PullTestSpec,
    /// Seed for sampled diagnostics.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            solver: SolveSettings::default(),
            beso: BesoSettings::default(),
            materials: MaterialPair::default(),
            pulltest: PullTestSpec::default(),
            seed: 0,
            threads: 0,
        }
    }
}

fn num<T: std::str::FromStr>(path: &Path, section: &str, key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 0, format!("[{section}] {key}: cannot parse '{value}'")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |v: &str| {
            let p = PathBuf::from(v.trim());
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let mut c = RunConfig::default();
        let mut material_file = None;
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                let unknown = || Error::parse(path, 0, format!("unknown key '{key}' in [{section}]"));
                match section {
                    "paths" => match key {
                        "body_rest" => c.paths.body_rest = Some(resolve(value)),
                        "body_target" => c.paths.body_target = Some(resolve(value)),
                        "sequence" => {
                            c.paths.sequence = value
                                .split(',')
                                .map(str::trim)
                                .filter(|s| !s.is_empty())
                                .map(resolve)
                                .collect()
                        }
                        "patch" => c.paths.patch = Some(resolve(value)),
                        "materials" => material_file = Some(resolve(value)),
                        "labels" => c.paths.labels = Some(resolve(value)),
                        _ => return Err(unknown()),
                    },
                    "solver" => {
                        let s = &mut c.solver;
                        match key {
                            "tolerance" => s.tolerance = num(path, section, key, value)?,
                            "max_iterations" => s.max_iterations = num(path, section, key, value)?,
                            "history" => s.history = num(path, section, key, value)?,
                            "c1" => s.c1 = num(path, section, key, value)?,
                            "c2" => s.c2 = num(path, section, key, value)?,
                            "body_weight" => s.body_weight = num(path, section, key, value)?,
                            _ => return Err(unknown()),
                        }
                    }
                    "beso" => {
                        let b = &mut c.beso;
                        match key {
                            "target_area" => b.target_area = num(path, section, key, value)?,
                            "evolutionary_ratio" => b.evolutionary_ratio = num(path, section, key, value)?,
                            "max_admission_ratio" => b.max_admission_ratio = num(path, section, key, value)?,
                            "d_min" => b.d_min = num(path, section, key, value)?,
                            "penalty" => b.penalty = num(path, section, key, value)?,
                            "tolerance" => b.tolerance = num(path, section, key, value)?,
                            "history" => b.history = num(path, section, key, value)?,
                            "max_iterations" => b.max_iterations = num(path, section, key, value)?,
                            "reinit_every" => b.reinit_every = num(path, section, key, value)?,
                            _ => return Err(unknown()),
                        }
                    }
                    "materials" => {
                        let m = &mut c.materials;
                        match key {
                            "E1_pa" => m.e1 = num(path, section, key, value)?,
                            "E2_pa" => m.e2 = num(path, section, key, value)?,
                            "nu" => m.nu = num(path, section, key, value)?,
                            "t1_m" => m.t1 = num(path, section, key, value)?,
                            "t2_m" => m.t2 = num(path, section, key, value)?,
                            "attach_k" => m.attach_k = num(path, section, key, value)?,
                            _ => return Err(unknown()),
                        }
                    }
                    "pulltest" => {
                        let p = &mut c.pulltest;
                        match key {
                            "resolution" => p.resolution = num(path, section, key, value)?,
                            "stencil" => {
                                p.stencil = match Stencil::parse(value.trim()) {
                                    Stencil::Labels(f) => Stencil::Labels(resolve(&f.to_string_lossy())),
                                    s => s,
                                }
                            }
                            "strains" => p.strains = parse_strain_list(value)?,
                            "tolerance" => p.solver.tolerance = num(path, section, key, value)?,
                            "max_iterations" => p.solver.max_iterations = num(path, section, key, value)?,
                            _ => return Err(unknown()),
                        }
                    }
                    "run" => match key {
                        "seed" => c.seed = num(path, section, key, value)?,
                        "threads" => c.threads = num(path, section, key, value)?,
                        _ => return Err(unknown()),
                    },
                    _ => return Err(Error::parse(path, 0, format!("unknown section [{section}]"))),
                }
            }
        }
        if let Some(f) = material_file {
            c.materials = MaterialPair::load(&f)?;
            c.paths.materials = Some(f);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.beso.validate()?;
        self.materials.validate()?;
        Ok(())
    }

    /// The effective configuration with every default spelled out. Numbers
    /// use the shortest representation that reads back exactly; materials
    /// are written inline so the file stands alone.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.paths;
        let path = |x: &Option<PathBuf>| x.as_ref().map(|p| p.display().to_string());
        s.push_str("[paths]\n");
        for (k, v) in [
            ("body_rest", path(&p.body_rest)),
            ("body_target", path(&p.body_target)),
            ("patch", path(&p.patch)),
            ("labels", path(&p.labels)),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        if !p.sequence.is_empty() {
            let list: Vec<String> = p.sequence.iter().map(|x| x.display().to_string()).collect();
            let _ = writeln!(s, "sequence = {}", list.join(", "));
        }
        let v = &self.solver;
        let _ = write!(
            s,
            "\n[solver]\ntolerance = {}\nmax_iterations = {}\nhistory = {}\nc1 = {}\nc2 = {}\nbody_weight = {}\n",
            v.tolerance, v.max_iterations, v.history, v.c1, v.c2, v.body_weight
        );
        let b = &self.beso;
        let _ = write!(
            s,
            "\n[beso]\ntarget_area = {}\nevolutionary_ratio = {}\nmax_admission_ratio = {}\nd_min = {}\npenalty = {}\ntolerance = {}\nhistory = {}\nmax_iterations = {}\nreinit_every = {}\n",
            b.target_area,
            b.evolutionary_ratio,
            b.max_admission_ratio,
            b.d_min,
            b.penalty,
            b.tolerance,
            b.history,
            b.max_iterations,
            b.reinit_every
        );
        s.push_str("\n[materials]\n");
        s.push_str(&self.materials.to_text());
        let t = &self.pulltest;
        let strains: Vec<String> = t.strains.iter().map(|x| x.to_string()).collect();
        let _ = write!(
            s,
            "\n[pulltest]\nresolution = {}\nstencil = {}\nstrains = {}\ntolerance = {}\nmax_iterations = {}\n",
            t.resolution,
            t.stencil.name(),
            strains.join(" "),
            t.solver.tolerance,
            t.solver.max_iterations
        );
        let _ = write!(s, "\n[run]\nseed = {}\nthreads = {}\n", self.seed, self.threads);
        s
    }

    /// Checks that every referenced input exists.
    pub fn check_inputs(&self) -> Result<()> {
        let p = &self.paths;
        let listed = [&p.body_rest, &p.body_target, &p.patch, &p.materials, &p.labels];
        for f in listed.into_iter().flatten().chain(&p.sequence) {
            if !f.is_file() {
                return Err(Error::Invalid(format!("input file not found: {}", f.display())));
            }
        }
        Ok(())
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Invalid(format!("config is missing [paths] {key}")))
    }

    /// Loads the body frames. The target frame is the last one.
    pub fn load_poses(&self) -> Result<PoseSequence> {
        let rest = load_obj(self.require(&self.paths.body_rest, "body_rest")?)?;
        let mut frames = Vec::new();
        if self.paths.sequence.is_empty() {
            frames.push(rest.clone());
            if let Some(t) = &self.paths.body_target {
                frames.push(load_obj(t)?);
            }
        } else {
            for f in &self.paths.sequence {
                frames.push(load_obj(f)?);
            }
        }
        let target = frames.len() - 1;
        PoseSequence::new(rest, frames, target)
    }
}

/// Either `start:end:step` or a whitespace/comma separated list.
fn parse_strain_list(text: &str) -> Result<Vec<f64>> {
    if text.contains(':') {
        return parse_strain_range(text);
    }
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Invalid(format!("bad strain value '{s}'")))
        })
        .collect()
}
