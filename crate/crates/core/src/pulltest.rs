//! Uniaxial pull test of a clamped fabric sample.
//!
//! The sample spans `0.14 m` along the loading axis `x` and `0.10 m` along
//! `y`; the outer `0.02 m` at each end are clamps. The active region is the
//! `0.10 x 0.10 m` square between them. The membrane is solved in the plane
//! `z = 0` with all `z` coordinates held.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::beso::load_labels;
use crate::energy::garment_total_energy;
use crate::equilibrium::{solve, Scene, SolveSettings};
use crate::error::{Error, Result};
use crate::material::MaterialPair;
use crate::mesh::{SurfaceMesh, Vec3};
use crate::patch::{extract_patch, GarmentPatch};

pub const SAMPLE_LENGTH: f64 = 0.14;
pub const SAMPLE_WIDTH: f64 = 0.10;
pub const CLAMP_LENGTH: f64 = 0.02;
pub const ACTIVE_LENGTH: f64 = SAMPLE_LENGTH - 2.0 * CLAMP_LENGTH;
/// Reinforced share of the active area for LINE and X.
pub const STENCIL_FRACTION: f64 = 0.4;

#[derive(Clone, Debug, PartialEq)]
pub enum Stencil {
    FullCloth,
    FullReinforced,
    /// Band along the loading direction, `0.04 m` high, centred.
    Line,
    /// Two corner-to-corner diagonal bands.
    X,
    /// Per-element labels for the whole sample.
    Labels(PathBuf),
}

impl Stencil {
    /// Accepts `FULL_CLOTH`, `FULL_REINFORCED`, `LINE`, `X` (any case) or a
    /// label file path.
    pub fn parse(name: &str) -> Stencil {
        match name.to_ascii_uppercase().replace('-', "_").as_str() {
            "FULL_CLOTH" => Stencil::FullCloth,
            "FULL_REINFORCED" => Stencil::FullReinforced,
            "LINE" => Stencil::Line,
            "X" => Stencil::X,
            _ => Stencil::Labels(PathBuf::from(name)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Stencil::FullCloth => "FULL_CLOTH".into(),
            Stencil::FullReinforced => "FULL_REINFORCED".into(),
            Stencil::Line => "LINE".into(),
            Stencil::X => "X".into(),
            Stencil::Labels(p) => p.display().to_string(),
        }
    }
}

/// Half-width of each X band in unit-square coordinates, measured along
/// the `u - v` and `u + v` axes, chosen so the union covers 40%.
pub fn x_band_half_width() -> f64 {
    // union area 4a - 4a^2 = 0.4
    (1.0 - (1.0 - STENCIL_FRACTION).sqrt()) / 2.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct PullTestSpec {
    /// Elements per `0.1 m`; a multiple of 5 so the clamps fall on grid lines.
    pub resolution: usize,
    pub stencil: Stencil,
    pub strains: Vec<f64>,
    pub solver: SolveSettings,
}

impl Default for PullTestSpec {
    fn default() -> Self {
        PullTestSpec {
            resolution: 20,
            stencil: Stencil::FullCloth,
            strains: strain_range(0.0, 0.1, 0.01),
            solver: SolveSettings {
                tolerance: 1e-10,
                ..SolveSettings::default()
            },
        }
    }
}

/// `start, start + step, ...` up to `end` inclusive.
pub fn strain_range(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// Parses `start:end:step`.
pub fn parse_strain_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some(&[a, b, s]) if s > 0.0 && b >= a => Ok(strain_range(a, b, s)),
        Some(&[a]) => Ok(vec![a]),
        _ => Err(Error::Invalid(format!("strain schedule must be start:end:step, got '{text}'"))),
    }
}

#[derive(Clone, Debug)]
pub struct PullFixture {
    pub patch: GarmentPatch,
    /// Vertices held at their rest position.
    pub fixed_clamp: Vec<usize>,
    /// Vertices translated along `x`.
    pub moving_clamp: Vec<usize>,
    /// Elements whose centroid lies in the active region.
    pub active: Vec<bool>,
}

impl PullFixture {
    pub fn active_area(&self) -> f64 {
        self.active.iter().zip(self.patch.areas()).filter(|(a, _)| **a).map(|(_, a)| a).sum()
    }

    pub fn reinforced_active_fraction(&self) -> f64 {
        let r: f64 = self
            .active
            .iter()
            .zip(self.patch.design())
            .zip(self.patch.areas())
            .filter(|((a, d), _)| **a && **d)
            .map(|(_, a)| a)
            .sum();
        r / self.active_area()
    }

    /// Three flags per vertex: `z` everywhere, `x` and `y` on the clamps.
    pub fn fixed_mask(&self) -> Vec<bool> {
        let n = self.patch.vertex_count();
        let mut mask = vec![false; 3 * n];
        for v in 0..n {
            mask[3 * v + 2] = true;
        }
        for &v in self.fixed_clamp.iter().chain(&self.moving_clamp) {
            mask[3 * v] = true;
            mask[3 * v + 1] = true;
        }
        mask
    }

    /// Rest positions with the moving clamp displaced by `strain * 0.1 m`.
    pub fn prescribed(&self, strain: f64) -> Vec<Vec3> {
        let mut x = self.patch.mesh().vertices().to_vec();
        for &v in &self.moving_clamp {
            x[v].x += strain * ACTIVE_LENGTH;
        }
        x
    }
}

fn sample_mesh(resolution: usize) -> Result<SurfaceMesh> {
    let nx = resolution * 14 / 10;
    let ny = resolution;
    let (dx, dy) = (SAMPLE_LENGTH / nx as f64, SAMPLE_WIDTH / ny as f64);
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push(Vec3::new(i as f64 * dx, j as f64 * dy, 0.0));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut f = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                f.push([a, b, c]);
                f.push([a, c, d]);
            } else {
                f.push([a, b, d]);
                f.push([b, c, d]);
            }
        }
    }
    SurfaceMesh::new(v, f)
}

/// Picks active elements by ascending `score` until 40% of the active area
/// is covered; ties go to the lower element index.
fn ranked_stencil(patch: &GarmentPatch, active: &[bool], score: impl Fn(f64, f64) -> f64) -> Vec<bool> {
    let x = patch.mesh().vertices();
    let scores: Vec<f64> = patch
        .elements()
        .iter()
        .map(|t| {
            let c = (x[t[0]] + x[t[1]] + x[t[2]]) / 3.0;
            score((c.x - CLAMP_LENGTH) / ACTIVE_LENGTH, c.y / SAMPLE_WIDTH)
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).filter(|&e| active[e]).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&e| patch.areas()[e]).sum();
    // slack for rounding in the running sum
    let target = STENCIL_FRACTION * total * (1.0 - 1e-12);
    let mut design = vec![false; scores.len()];
    let mut acc = 0.0;
    for e in order {
        if acc >= target {
            break;
        }
        design[e] = true;
        acc += patch.areas()[e];
    }
    design
}

pub fn build_pull_fixture(spec: &PullTestSpec) -> Result<PullFixture> {
    if spec.resolution < 10 || spec.resolution % 5 != 0 {
        return Err(Error::Invalid(format!(
            "pull-test resolution must be a multiple of 5 and at least 10, got {}",
            spec.resolution
        )));
    }
    let mesh = sample_mesh(spec.resolution)?;
    let faces: Vec<usize> = (0..mesh.face_count()).collect();
    let mut patch = extract_patch(&mesh, &faces, 0, &[])?;
    let eps = 1e-9;
    let x = patch.mesh().vertices().to_vec();
    let fixed_clamp = (0..x.len()).filter(|&v| x[v].x <= CLAMP_LENGTH + eps).collect();
    let moving_clamp = (0..x.len()).filter(|&v| x[v].x >= SAMPLE_LENGTH - CLAMP_LENGTH - eps).collect();
    let active: Vec<bool> = patch
        .elements()
        .iter()
        .map(|t| {
            let cx = (x[t[0]].x + x[t[1]].x + x[t[2]].x) / 3.0;
            cx > CLAMP_LENGTH && cx < SAMPLE_LENGTH - CLAMP_LENGTH
        })
        .collect();
    let n = patch.element_count();
    let design = match &spec.stencil {
        Stencil::FullCloth => vec![false; n],
        Stencil::FullReinforced => vec![true; n],
        Stencil::Line => ranked_stencil(&patch, &active, |_, v| (v - 0.5).abs()),
        Stencil::X => ranked_stencil(&patch, &active, |u, v| (u - v).abs().min((u + v - 1.0).abs())),
        Stencil::Labels(path) => load_labels(path, n)?,
    };
    patch.set_design(design)?;
    Ok(PullFixture {
        patch,
        fixed_clamp,
        moving_clamp,
        active,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForcePoint {
    pub strain: f64,
    /// Reaction at the moving clamp along the loading axis (N).
    pub force: f64,
    /// Reaction at the fixed clamp (N); balances `force` at equilibrium.
    pub fixed_force: f64,
    /// Garment strain energy (J).
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForceCurve {
    pub points: Vec<ForcePoint>,
}

impl ForceCurve {
    pub fn csv(&self) -> String {
        let mut s = String::from("strain,force_N,converged\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.strain, p.force, p.converged as u8);
        }
        s
    }

    /// Force at the given strain, if it was scheduled.
    pub fn force_at(&self, strain: f64) -> Option<f64> {
        self.points.iter().find(|p| (p.strain - strain).abs() < 1e-12).map(|p| p.force)
    }
}

/// Solves every strain step in order, warm-starting each from the previous
/// equilibrium plus the affine extension of the clamp increment.
pub fn run_pull_test(fixture: &PullFixture, materials: &MaterialPair, spec: &PullTestSpec) -> Result<ForceCurve> {
    materials.validate()?;
    let patch = &fixture.patch;
    let scene = Scene::free(patch, materials);
    let mask = fixture.fixed_mask();
    let rest = patch.mesh().vertices();
    let mut curve = ForceCurve::default();
    let mut previous: Option<(f64, Vec<Vec3>)> = None;
    for &strain in &spec.strains {
        let prescribed = fixture.prescribed(strain);
        let init: Vec<Vec3> = match &previous {
            None => prescribed
                .iter()
                .zip(rest)
                .map(|(p, r)| {
                    let s = ((r.x - CLAMP_LENGTH) / ACTIVE_LENGTH).clamp(0.0, 1.0);
                    Vec3::new(r.x + s * strain * ACTIVE_LENGTH, p.y, p.z)
                })
                .collect(),
            Some((prev_strain, prev)) => prev
                .iter()
                .zip(rest)
                .map(|(p, r)| {
                    let s = ((r.x - CLAMP_LENGTH) / ACTIVE_LENGTH).clamp(0.0, 1.0);
                    p + Vec3::new(s * (strain - prev_strain) * ACTIVE_LENGTH, 0.0, 0.0)
                })
                .collect(),
        };
        let state = solve(&scene, &init, &spec.solver, Some(&mask))?;
        let eval = garment_total_energy(patch, &state.positions, materials)?;
        let sum = |ids: &[usize]| ids.iter().map(|&v| eval.gradient[v].x).sum::<f64>();
        curve.points.push(ForcePoint {
            strain,
            force: sum(&fixture.moving_clamp),
            fixed_force: sum(&fixture.fixed_clamp),
            energy: eval.energy,
            converged: state.converged,
            iterations: state.iterations,
        });
        previous = Some((strain, state.positions));
    }
    Ok(curve)
}

/// Small-strain force of a laterally constrained plane-stress strip.
pub fn linear_force(young: f64, thickness: f64, poisson: f64, strain: f64) -> f64 {
    young * thickness * SAMPLE_WIDTH * strain / (1.0 - poisson * poisson)
}

pub fn write_curve(path: &Path, curve: &ForceCurve) -> Result<()> {
    std::fs::write(path, curve.csv()).map_err(|e| Error::io(path, e))
}
