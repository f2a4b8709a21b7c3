use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use kinetex::beso::{has_encircling_band, load_labels, run_beso, BesoOutcome};
use kinetex::config::RunConfig;
use kinetex::equilibrium::evaluate_sequence;
use kinetex::fixture::{CylinderBend, PlaneBend};
use kinetex::patch::PatchSpec;
use kinetex::pulltest::{build_pull_fixture, parse_strain_range, run_pull_test, Stencil};
use kinetex::Error;

#[derive(Parser)]
#[command(name = "kinetex", version, about = "Garment reinforcement simulation and optimisation")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a design over the configured body frames.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Element labels (default: fully reinforced).
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Run the reinforcement optimisation for the target pose.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Uniaxial pull test of a clamped sample.
    Pulltest {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// FULL_CLOTH, FULL_REINFORCED, LINE, X or a label file.
        #[arg(long)]
        stencil: Option<String>,
        /// start:end:step
        #[arg(long)]
        strains: Option<String>,
        /// Elements per 0.1 m.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Write a synthetic body pair, patch spec, materials and config.
    Fixture {
        name: FixtureName,
        #[arg(long)]
        out: PathBuf,
        /// Target bend angle in degrees.
        #[arg(long, default_value_t = 90.0)]
        angle: f64,
        /// Rest bend angle in degrees.
        #[arg(long, default_value_t = 0.0)]
        rest_angle: f64,
        #[arg(long, default_value_t = 0.04)]
        radius: f64,
        #[arg(long, default_value_t = 0.3)]
        length: f64,
        #[arg(long, default_value_t = 32)]
        around: usize,
        #[arg(long, default_value_t = 48)]
        along: usize,
        #[arg(long, default_value_t = 0)]
        subdivisions: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    CylinderBend,
    Plane,
}

enum Failure {
    Numerical(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(m) => Failure::Numerical(m),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate { config, out, labels } => simulate(&config, &out, labels),
        Command::Optimize { config, out } => optimize(&config, &out),
        Command::Pulltest {
            config,
            out,
            stencil,
            strains,
            resolution,
            labels,
        } => pulltest(config.as_deref(), &out, stencil, strains, resolution, labels),
        Command::Fixture {
            name,
            out,
            angle,
            rest_angle,
            radius,
            length,
            around,
            along,
            subdivisions,
        } => fixture(name, &out, angle, rest_angle, radius, length, around, along, subdivisions),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let config = RunConfig::load(path)?;
    config.check_inputs()?;
    if config.threads > 0 {
        // a second global pool is refused silently when --threads already set one
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    Ok(config)
}

/// Collects outputs in a staging directory that is renamed into place when
/// the command finishes, so `out` never holds a half-written result.
struct Staging {
    tmp: PathBuf,
    out: PathBuf,
}

impl Staging {
    fn new(out: &Path) -> Result<Self, Failure> {
        if out.exists() && out.read_dir().map_or(true, |mut d| d.next().is_some()) {
            return Err(Failure::Usage(format!("output directory {} is not empty", out.display())));
        }
        let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
        let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&tmp);
        std::fs::create_dir_all(&tmp).map_err(|e| Error::Io {
            path: tmp.clone(),
            source: e,
        })?;
        Ok(Staging {
            tmp,
            out: out.to_path_buf(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.tmp.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), Failure> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| Failure::from(Error::Io { path: p, source: e }))
    }

    fn commit(self) -> Result<(), Failure> {
        if self.out.exists() {
            std::fs::remove_dir(&self.out).map_err(|e| Error::Io {
                path: self.out.clone(),
                source: e,
            })?;
        }
        std::fs::rename(&self.tmp, &self.out).map_err(|e| {
            Failure::from(Error::Io {
                path: self.out.clone(),
                source: e,
            })
        })
    }
}

fn simulate(config_path: &Path, out: &Path, labels: Option<PathBuf>) -> Outcome {
    let mut config = load_config(config_path)?;
    if labels.is_some() {
        config.paths.labels = labels;
        config.check_inputs()?;
    }
    let poses = config.load_poses()?;
    let spec = PatchSpec::load(config.require(&config.paths.patch, "patch")?)?;
    let mut patch = spec.extract(&poses.rest)?;
    if let Some(l) = &config.paths.labels {
        patch.set_design(load_labels(l, patch.element_count())?)?;
    }
    let stage = Staging::new(out)?;
    stage.write("config.ini", &config.to_text())?;
    let states = evaluate_sequence(&patch, &poses, &config.materials, &config.solver);
    let mut energy = String::from("frame,E_total,E_body,E_garment,E_attach,garment_J,iterations,grad_norm,converged\n");
    let mut audit = String::from("frame,min_phi,penetrating,lifted,unsupported,lost_inside\n");
    let mut failures = Vec::new();
    for (k, s) in states.iter().enumerate() {
        match s {
            Ok(s) => {
                let e = &s.energy;
                let _ = writeln!(
                    energy,
                    "{k},{},{},{},{},{},{},{},{}",
                    e.total(),
                    e.body,
                    e.garment,
                    e.attachments,
                    s.garment_joules,
                    s.iterations,
                    s.grad_norm,
                    s.converged as u8
                );
                if let Some(a) = &s.audit {
                    let min = a.min_phi.map_or(String::from("nan"), |v| v.to_string());
                    let _ = writeln!(
                        audit,
                        "{k},{min},{},{},{},{}",
                        a.penetrating, a.lifted, a.unsupported, a.lost_inside
                    );
                }
                let mesh = patch.mesh().with_vertices(s.positions.clone())?;
                stage.write(&format!("frame_{k:04}.obj"), &mesh.to_obj_string())?;
                stage.write(&format!("frame_{k:04}.log.csv"), &s.log_csv())?;
                if !s.converged {
                    failures.push(format!("frame {k} did not converge ({:?})", s.status));
                }
            }
            Err(e) => failures.push(format!("frame {k}: {e}")),
        }
    }
    stage.write("energy.csv", &energy)?;
    stage.write("audit.csv", &audit)?;
    stage.commit()?;
    if failures.is_empty() {
        println!("simulated {} frames into {}", states.len(), out.display());
        Ok(())
    } else {
        Err(Failure::Numerical(failures.join("; ")))
    }
}

fn optimize(config_path: &Path, out: &Path) -> Outcome {
    let config = load_config(config_path)?;
    let poses = config.load_poses()?;
    let spec = PatchSpec::load(config.require(&config.paths.patch, "patch")?)?;
    let patch = spec.extract(&poses.rest)?;
    let stage = Staging::new(out)?;
    stage.write("config.ini", &config.to_text())?;
    let trace = run_beso(&patch, &poses, &config.materials, &config.solver, &config.beso, |k, it| {
        eprintln!(
            "iteration {k}: area {:.4} energy {:.6e} J density {:.4}",
            it.area_fraction, it.garment_energy, it.density_norm
        );
    })?;
    trace.write_dir(&stage.tmp, &patch)?;
    stage.commit()?;
    let last = trace.iterations.last();
    if let Some(it) = last {
        println!("final normalized energy density: {}", it.density_norm);
        println!("encircling band: {}", has_encircling_band(&patch, &it.design));
    }
    match trace.outcome {
        BesoOutcome::Aborted(reason) => Err(Failure::Numerical(format!("optimisation aborted: {reason}"))),
        BesoOutcome::MaxIterations => {
            eprintln!("warning: iteration limit reached before convergence");
            Ok(())
        }
        BesoOutcome::Converged => Ok(()),
    }
}

fn pulltest(
    config_path: Option<&Path>,
    out: &Path,
    stencil: Option<String>,
    strains: Option<String>,
    resolution: Option<usize>,
    labels: Option<PathBuf>,
) -> Outcome {
    let mut config = match config_path {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let spec = &mut config.pulltest;
    if let Some(s) = stencil {
        spec.stencil = Stencil::parse(&s);
    }
    if let Some(l) = labels {
        spec.stencil = Stencil::Labels(l);
    }
    if let Some(s) = strains {
        spec.strains = parse_strain_range(&s)?;
    }
    if let Some(r) = resolution {
        spec.resolution = r;
    }
    if let Stencil::Labels(p) = &spec.stencil {
        if !p.is_file() {
            return Err(Failure::Usage(format!("stencil label file not found: {}", p.display())));
        }
    }
    let fixture = build_pull_fixture(spec)?;
    let stage = Staging::new(out)?;
    stage.write("config.ini", &config.to_text())?;
    let curve = run_pull_test(&fixture, &config.materials, &config.pulltest)?;
    stage.write("force.csv", &curve.csv())?;
    stage.commit()?;
    if let Some(p) = curve.points.last() {
        println!(
            "{}: force {} N at strain {} (reinforced fraction {})",
            config.pulltest.stencil.name(),
            p.force,
            p.strain,
            fixture.reinforced_active_fraction()
        );
    }
    match curve.points.iter().find(|p| !p.converged) {
        Some(p) => Err(Failure::Numerical(format!("strain step {} did not converge", p.strain))),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn fixture(
    name: FixtureName,
    out: &Path,
    angle: f64,
    rest_angle: f64,
    radius: f64,
    length: f64,
    around: usize,
    along: usize,
    subdivisions: usize,
) -> Outcome {
    let fx = match name {
        FixtureName::CylinderBend => CylinderBend {
            radius,
            length,
            around,
            along,
            angle: angle.to_radians(),
            rest_angle: rest_angle.to_radians(),
            subdivisions,
            ..Default::default()
        }
        .build()?,
        FixtureName::Plane => PlaneBend {
            angle: angle.to_radians(),
            subdivisions,
            ..Default::default()
        }
        .build()?,
    };
    let stage = Staging::new(out)?;
    stage.write("rest.obj", &fx.rest.to_obj_string())?;
    stage.write("target.obj", &fx.target.to_obj_string())?;
    stage.write("patch.txt", &fx.patch.to_text())?;
    let config = RunConfig::default();
    stage.write("materials.txt", &config.materials.to_text())?;
    let mut text = String::from(
        "[paths]\nbody_rest = rest.obj\nbody_target = target.obj\npatch = patch.txt\nmaterials = materials.txt\n\n",
    );
    // everything after [paths] from the defaults, minus the inline materials
    let defaults = config.to_text();
    let rest = defaults.split_once("\n[solver]").map_or("", |(_, r)| r);
    let _ = write!(text, "[solver]{rest}");
    let text = strip_section(&text, "materials");
    stage.write("config.ini", &text)?;
    stage.commit()?;
    println!("wrote fixture to {}", out.display());
    Ok(())
}

fn strip_section(text: &str, name: &str) -> String {
    let header = format!("[{name}]");
    let mut out = String::new();
    let mut skipping = false;
    for line in text.lines() {
        if line.starts_with('[') {
            skipping = line == header;
        }
        if !skipping {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}
