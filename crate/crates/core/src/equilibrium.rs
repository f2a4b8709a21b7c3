//! Quasi-static equilibrium of a garment patch over a posed body.
//!
//! The solver minimises a nondimensional total energy
//!
//! ```text
//! E = w_g E_garment / S + w_a E_attach / S + w_b sum (Phi_i / l)^2
//! ```
//!
//! with `S = E2 t2 A_total`, `l` the mean rest edge length of the garment,
//! and positions measured in units of `L = sqrt(A_total)`. The reported
//! gradient norm is the RMS of `dE/d(x / L)` over free coordinates.

use std::fmt::Write as _;

use crate::energy::{attachment_energy, attachment_targets, garment_total_energy, GarmentEval};
use crate::error::{Error, Result};
use crate::field::{body_penalty, build_field, ImlsField, PenaltyEval};
use crate::lbfgs::{self, IterationLog, LbfgsSettings, Status};
use crate::material::MaterialPair;
use crate::mesh::{PoseSequence, SurfaceMesh, Vec3};
use crate::patch::GarmentPatch;

/// Penetration depth that counts as a violation in audits (m).
pub const PENETRATION_LIMIT: f64 = 1e-4;
/// Separation that counts as lift-off in audits (m).
pub const LIFT_OFF: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyWeights {
    pub body: f64,
    pub garment: f64,
    pub attachments: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            body: 1.0,
            garment: 1.0,
            attachments: 1.0,
        }
    }
}

impl EnergyWeights {
    pub fn scaled(self, factor: f64) -> Self {
        EnergyWeights {
            body: self.body * factor,
            garment: self.garment * factor,
            attachments: self.attachments * factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveSettings {
    /// RMS scaled gradient at convergence.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    /// Multiplier on the body penalty.
    pub body_weight: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tolerance: 1e-7,
            max_iterations: 20_000,
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            body_weight: 0.1,
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.history < 1 || !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Invalid(format!("invalid solver settings: {self:?}")));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsSettings {
        LbfgsSettings {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            history: self.history,
            c1: self.c1,
            c2: self.c2,
            ..LbfgsSettings::default()
        }
    }
}

/// Reference quantities of the nondimensional problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaling {
    /// `E2 t2 A_total` (J).
    pub energy: f64,
    /// `sqrt(A_total)` (m).
    pub length: f64,
    /// Mean rest edge length (m), normalising penetration depth.
    pub contact_length: f64,
}

impl Scaling {
    pub fn for_patch(patch: &GarmentPatch, materials: &MaterialPair) -> Self {
        let area = patch.total_area();
        Scaling {
            energy: materials.base_stiffness() * area,
            length: area.sqrt(),
            contact_length: patch.mean_edge_length(),
        }
    }
}

/// Everything the total energy depends on besides positions.
#[derive(Clone, Debug)]
pub struct Scene<'a> {
    pub patch: &'a GarmentPatch,
    pub field: Option<&'a ImlsField>,
    pub materials: &'a MaterialPair,
    /// Attachment centroid targets, one per element.
    pub targets: Vec<Vec3>,
    pub weights: EnergyWeights,
    pub scaling: Scaling,
}

impl<'a> Scene<'a> {
    /// Scene for a body pose: attachment targets ride with the pose.
    pub fn on_pose(
        patch: &'a GarmentPatch,
        field: &'a ImlsField,
        pose: &SurfaceMesh,
        materials: &'a MaterialPair,
        body_weight: f64,
    ) -> Result<Self> {
        let posed = patch.map_to_pose(pose)?;
        Ok(Scene {
            patch,
            field: Some(field),
            materials,
            targets: attachment_targets(patch, &posed),
            weights: EnergyWeights {
                body: body_weight,
                ..Default::default()
            },
            scaling: Scaling::for_patch(patch, materials),
        })
    }

    /// Scene without a body; attachment targets sit at the rest centroids.
    pub fn free(patch: &'a GarmentPatch, materials: &'a MaterialPair) -> Self {
        Scene {
            patch,
            field: None,
            materials,
            targets: attachment_targets(patch, patch.mesh().vertices()),
            weights: EnergyWeights::default(),
            scaling: Scaling::for_patch(patch, materials),
        }
    }

    /// Attachment stiffness in N/m.
    pub fn attach_stiffness(&self) -> f64 {
        self.materials.attach_k * self.materials.base_stiffness()
    }
}

/// Scaled energy terms (already multiplied by their weights).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub body: f64,
    pub garment: f64,
    pub attachments: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.body + self.garment + self.attachments
    }
}

#[derive(Clone, Debug)]
pub struct TotalEval {
    pub energy: f64,
    pub breakdown: EnergyBreakdown,
    /// d(scaled energy)/dx per vertex (1/m).
    pub gradient: Vec<Vec3>,
    pub garment: GarmentEval,
    pub penalty: Option<PenaltyEval>,
}

/// Sum of the three energy terms and their gradients, in scaled units.
pub fn total_energy_and_gradient(scene: &Scene, positions: &[Vec3]) -> Result<TotalEval> {
    let s = scene.scaling;
    let garment = garment_total_energy(scene.patch, positions, scene.materials)?;
    let (attach, attach_grad) =
        attachment_energy(scene.patch, positions, &scene.targets, scene.attach_stiffness())?;
    let penalty = scene.field.map(|f| body_penalty(f, positions));

    let wg = scene.weights.garment / s.energy;
    let wa = scene.weights.attachments / s.energy;
    let wb = scene.weights.body / (s.contact_length * s.contact_length);
    let breakdown = EnergyBreakdown {
        body: penalty.as_ref().map_or(0.0, |p| wb * p.energy),
        garment: wg * garment.energy,
        attachments: wa * attach,
    };
    let mut gradient: Vec<Vec3> = garment
        .gradient
        .iter()
        .zip(&attach_grad)
        .map(|(g, a)| g * wg + a * wa)
        .collect();
    if let Some(p) = &penalty {
        for (g, b) in gradient.iter_mut().zip(&p.gradient) {
            *g += b * wb;
        }
    }
    let energy = breakdown.total();
    if !energy.is_finite() {
        return Err(Error::Numerical(format!("non-finite energy {energy}")));
    }
    Ok(TotalEval {
        energy,
        breakdown,
        gradient,
        garment,
        penalty,
    })
}

/// Contact audit of a garment configuration against a body field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactAudit {
    pub min_phi: Option<f64>,
    /// Vertices deeper than [`PENETRATION_LIMIT`].
    pub penetrating: usize,
    /// Supported vertices farther out than [`LIFT_OFF`].
    pub lifted: usize,
    pub unsupported: usize,
    /// Unsupported at the solution although they started inside the body.
    pub lost_inside: usize,
}

impl ContactAudit {
    pub fn of(field: &ImlsField, positions: &[Vec3], initial: Option<&[Vec3]>) -> Self {
        let eval = body_penalty(field, positions);
        let mut audit = ContactAudit {
            min_phi: eval.min_phi(),
            unsupported: eval.unsupported(),
            ..Default::default()
        };
        for (i, s) in eval.samples.iter().enumerate() {
            match s {
                Some(s) if s.value < -PENETRATION_LIMIT => audit.penetrating += 1,
                Some(s) if s.value > LIFT_OFF => audit.lifted += 1,
                None => {
                    if let Some(init) = initial {
                        if field.phi(&init[i]).is_some_and(|s| s.value < 0.0) {
                            audit.lost_inside += 1;
                        }
                    }
                }
                _ => {}
            }
        }
        audit
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoggedIteration {
    pub iteration: usize,
    pub energy: EnergyBreakdown,
    pub total: f64,
    pub grad_norm: f64,
    pub step_length: f64,
}

#[derive(Clone, Debug)]
pub struct EquilibriumState {
    pub positions: Vec<Vec3>,
    pub converged: bool,
    pub status: Status,
    pub iterations: usize,
    /// RMS scaled gradient over free coordinates.
    pub grad_norm: f64,
    pub energy: EnergyBreakdown,
    /// Garment strain energy (J).
    pub garment_joules: f64,
    pub log: Vec<LoggedIteration>,
    pub audit: Option<ContactAudit>,
}

impl EquilibriumState {
    /// Iteration log as CSV.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("iteration,E_total,E_body,E_garment,E_attach,grad_norm,step_length\n");
        for r in &self.log {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.iteration, r.total, r.energy.body, r.energy.garment, r.energy.attachments, r.grad_norm, r.step_length
            );
        }
        out
    }
}

/// Minimises the scene energy from `initial`. Coordinates flagged in
/// `fixed` (three per vertex) keep their initial values.
pub fn solve(
    scene: &Scene,
    initial: &[Vec3],
    settings: &SolveSettings,
    fixed: Option<&[bool]>,
) -> Result<EquilibriumState> {
    settings.validate()?;
    let n = scene.patch.vertex_count();
    if initial.len() != n {
        return Err(Error::Invalid(format!("{} initial positions for {n} vertices", initial.len())));
    }
    if let Some(f) = fixed {
        if f.len() != 3 * n {
            return Err(Error::Invalid("fixed mask needs three flags per vertex".into()));
        }
    }
    let free: Vec<usize> = (0..3 * n).filter(|&i| fixed.map_or(true, |f| !f[i])).collect();
    let len = scene.scaling.length;
    let mut work: Vec<Vec3> = initial.to_vec();
    let scatter = |y: &[f64], work: &mut Vec<Vec3>| {
        for (&i, &v) in free.iter().zip(y) {
            work[i / 3][i % 3] = v * len;
        }
    };
    let y0: Vec<f64> = free.iter().map(|&i| initial[i / 3][i % 3] / len).collect();

    let mut breakdowns: Vec<EnergyBreakdown> = Vec::new();
    let mut objective = |y: &[f64], g: &mut [f64]| -> f64 {
        scatter(y, &mut work);
        match total_energy_and_gradient(scene, &work) {
            Ok(t) => {
                breakdowns.push(t.breakdown);
                for (gk, &i) in g.iter_mut().zip(&free) {
                    *gk = t.gradient[i / 3][i % 3] * len;
                }
                t.energy
            }
            Err(_) => {
                breakdowns.push(EnergyBreakdown {
                    body: f64::NAN,
                    garment: f64::NAN,
                    attachments: f64::NAN,
                });
                g.iter_mut().for_each(|v| *v = f64::NAN);
                f64::NAN
            }
        }
    };
    let min = lbfgs::minimize(&mut objective, y0, &settings.lbfgs());
    if min.status == Status::NonFinite {
        return Err(Error::Numerical("non-finite energy at the initial state".into()));
    }
    let log = min
        .log
        .iter()
        .map(|r: &IterationLog| LoggedIteration {
            iteration: r.iteration,
            energy: breakdowns[r.evaluation],
            total: r.value,
            grad_norm: r.grad_norm,
            step_length: r.step_length,
        })
        .collect();

    let mut positions = initial.to_vec();
    if min.iterations > 0 {
        for (&i, &v) in free.iter().zip(&min.x) {
            positions[i / 3][i % 3] = v * len;
        }
    }
    let fin = total_energy_and_gradient(scene, &positions)?;
    let audit = scene.field.map(|f| ContactAudit::of(f, &positions, Some(initial)));
    Ok(EquilibriumState {
        positions,
        converged: min.converged(),
        status: min.status,
        iterations: min.iterations,
        grad_norm: min.grad_norm,
        energy: fin.breakdown,
        garment_joules: fin.garment.energy,
        log,
        audit,
    })
}

/// Solves a pose from the copy-from-body initialisation.
pub fn solve_pose(
    patch: &GarmentPatch,
    pose: &SurfaceMesh,
    materials: &MaterialPair,
    settings: &SolveSettings,
    initial: Option<&[Vec3]>,
) -> Result<EquilibriumState> {
    let field = build_field(pose)?;
    let scene = Scene::on_pose(patch, &field, pose, materials, settings.body_weight)?;
    let mapped;
    let init = match initial {
        Some(x) => x,
        None => {
            mapped = patch.map_to_pose(pose)?;
            &mapped
        }
    };
    solve(&scene, init, settings, None)
}

/// Simulates every frame in order. Each frame starts from the body-mapped
/// positions plus the previous frame's equilibrium offset from its own
/// body mapping, so the warm start follows the body.
pub fn evaluate_sequence(
    patch: &GarmentPatch,
    poses: &PoseSequence,
    materials: &MaterialPair,
    settings: &SolveSettings,
) -> Vec<Result<EquilibriumState>> {
    let mut out = Vec::with_capacity(poses.frames.len());
    let mut previous: Option<(Vec<Vec3>, Vec<Vec3>)> = None;
    for frame in &poses.frames {
        let result = patch.map_to_pose(frame).and_then(|mapped| {
            let init: Vec<Vec3> = match &previous {
                Some((prev_mapped, prev_sol)) => mapped
                    .iter()
                    .zip(prev_mapped.iter().zip(prev_sol))
                    .map(|(m, (pm, ps))| m + (ps - pm))
                    .collect(),
                None => mapped.clone(),
            };
            let state = solve_pose(patch, frame, materials, settings, Some(&init))?;
            Ok((mapped, state))
        });
        match result {
            Ok((mapped, state)) => {
                previous = Some((mapped, state.positions.clone()));
                out.push(Ok(state));
            }
            Err(e) => out.push(Err(e)),
        }
    }
    out
}
