//! Garment strain energy and attachment springs assembled over a patch.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::material::MaterialPair;
use crate::membrane::{element_eval, TensionState};
use crate::mesh::Vec3;
use crate::patch::GarmentPatch;

/// Per-element state of a garment configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ElementEnergyReport {
    /// Relaxed density W (J/m^3).
    pub density: Vec<f64>,
    /// `t A W` (J).
    pub energy: Vec<f64>,
    /// Principal stretches, largest first.
    pub stretches: Vec<(f64, f64)>,
    pub state: Vec<TensionState>,
    /// Elements that collapsed to zero area while stretched.
    pub degenerate: Vec<usize>,
}

impl ElementEnergyReport {
    pub fn compression_flags(&self) -> Vec<bool> {
        self.state.iter().map(|s| s.is_compressed()).collect()
    }

    pub fn total(&self) -> f64 {
        self.energy.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct GarmentEval {
    /// Total strain energy (J).
    pub energy: f64,
    /// dE/dx per vertex (N).
    pub gradient: Vec<Vec3>,
    pub report: ElementEnergyReport,
}

fn check_len(patch: &GarmentPatch, positions: &[Vec3]) -> Result<()> {
    if positions.len() != patch.vertex_count() {
        return Err(Error::Invalid(format!(
            "{} positions for a patch with {} vertices",
            positions.len(),
            patch.vertex_count()
        )));
    }
    Ok(())
}

/// Sum of `t^e A^e W^e` over the patch, with material and thickness picked
/// per element from the design vector.
pub fn garment_total_energy(
    patch: &GarmentPatch,
    positions: &[Vec3],
    materials: &MaterialPair,
) -> Result<GarmentEval> {
    check_len(patch, positions)?;
    let lame = [materials.lame(false), materials.lame(true)];
    let thick = [materials.thickness(false), materials.thickness(true)];
    let evals: Vec<_> = patch
        .elements()
        .par_iter()
        .enumerate()
        .map(|(e, &[a, b, c])| {
            let m = patch.design()[e] as usize;
            element_eval(
                &patch.rest_inverses()[e],
                [&positions[a], &positions[b], &positions[c]],
                patch.areas()[e],
                thick[m],
                lame[m],
            )
        })
        .collect();

    // fixed-order reduction keeps the result bitwise reproducible
    let n = evals.len();
    let mut report = ElementEnergyReport {
        density: Vec::with_capacity(n),
        energy: Vec::with_capacity(n),
        stretches: Vec::with_capacity(n),
        state: Vec::with_capacity(n),
        degenerate: Vec::new(),
    };
    let mut gradient = vec![Vec3::zeros(); positions.len()];
    let mut energy = 0.0;
    for (e, (ev, tri)) in evals.iter().zip(patch.elements()).enumerate() {
        energy += ev.energy;
        for (k, &v) in tri.iter().enumerate() {
            gradient[v] += ev.gradient[k];
        }
        report.density.push(ev.density);
        report.energy.push(ev.energy);
        report.stretches.push(ev.stretches);
        report.state.push(ev.state);
        if ev.degenerate {
            report.degenerate.push(e);
        }
    }
    Ok(GarmentEval {
        energy,
        gradient,
        report,
    })
}

pub fn centroid(positions: &[Vec3], tri: &[usize; 3]) -> Vec3 {
    (positions[tri[0]] + positions[tri[1]] + positions[tri[2]]) / 3.0
}

/// Centroids of every element at the given positions; only attached
/// entries are consulted by [`attachment_energy`].
pub fn attachment_targets(patch: &GarmentPatch, posed: &[Vec3]) -> Vec<Vec3> {
    patch.elements().iter().map(|t| centroid(posed, t)).collect()
}

/// `sum 1/2 k |x_c - x_c0|^2` over attached elements, with `x_c` the
/// deformed centroid and `x_c0` its target.
pub fn attachment_energy(
    patch: &GarmentPatch,
    positions: &[Vec3],
    targets: &[Vec3],
    k: f64,
) -> Result<(f64, Vec<Vec3>)> {
    check_len(patch, positions)?;
    if targets.len() != patch.element_count() {
        return Err(Error::Invalid("one attachment target per element expected".into()));
    }
    let mut energy = 0.0;
    let mut gradient = vec![Vec3::zeros(); positions.len()];
    for ((tri, &att), target) in patch.elements().iter().zip(patch.attached()).zip(targets) {
        if !att {
            continue;
        }
        let d = centroid(positions, tri) - target;
        energy += 0.5 * k * d.norm_squared();
        let g = d * (k / 3.0);
        for &v in tri {
            gradient[v] += g;
        }
    }
    Ok((energy, gradient))
}
