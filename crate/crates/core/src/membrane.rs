//! Constant-strain membrane triangles with a compressible neo-Hookean
//! density and tension-field relaxation of compressive modes.
//!
//! With principal stretches `l1 >= l2` the relaxed density is
//!
//! * slack (`l1 <= 1`): zero,
//! * wrinkled (`l2 < w(l1)`): the neo-Hookean density at `(l1, w(l1))`,
//! * taut: the neo-Hookean density of `C` itself,
//!
//! where `w(l1)` is the transverse stretch at which the transverse stress
//! of a uniaxially stretched strip vanishes. The relaxed density is C1
//! across all three regimes.

use nalgebra::{Matrix2, Matrix3x2, Vector2};

use crate::material::Lame;
use crate::mesh::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TensionState {
    Slack,
    Wrinkled,
    Taut,
}

impl TensionState {
    /// True when at least one principal direction is relaxed.
    pub fn is_compressed(self) -> bool {
        self != TensionState::Taut
    }
}

/// `F = [x1 - x0, x2 - x0] * rest_inv` and `C = F^T F`.
pub fn deformation_gradient(rest_inv: &Matrix2<f64>, x: [&Vec3; 3]) -> (Matrix3x2<f64>, Matrix2<f64>) {
    let ds = Matrix3x2::from_columns(&[x[1] - x[0], x[2] - x[0]]);
    let f = ds * rest_inv;
    let c = f.transpose() * f;
    (f, c)
}

/// Unrelaxed compressible neo-Hookean density on principal stretches.
pub fn neo_hookean(l1: f64, l2: f64, lame: Lame) -> f64 {
    let log_j = (l1 * l2).ln();
    0.5 * lame.mu * (l1 * l1 + l2 * l2 - 2.0) - lame.mu * log_j + 0.5 * lame.lambda * log_j * log_j
}

/// Principal branch of the Lambert W function, taking `ln z` so that very
/// large arguments do not overflow. Solves `w + ln w = log_z` for `w > 0`.
pub fn lambert_w0_from_log(log_z: f64) -> f64 {
    // Newton on u = ln w: f(u) = e^u + u - log_z is convex and increasing.
    let mut u = if log_z > 1.0 {
        (log_z - log_z.ln()).ln()
    } else {
        log_z - 0.5 * log_z.exp()
    };
    for _ in 0..100 {
        let eu = u.exp();
        let step = (eu + u - log_z) / (eu + 1.0);
        u -= step;
        if step.abs() <= 1e-15 * u.abs().max(1.0) {
            break;
        }
    }
    u.exp()
}

/// Transverse stretch that zeroes the transverse stress at fixed `l1`:
/// the root of `mu (l2^2 - 1) + lambda ln(l1 l2) = 0`.
pub fn natural_width(l1: f64, lame: Lame) -> f64 {
    if lame.lambda <= 1e-12 * lame.mu {
        return 1.0;
    }
    // l2^2 = W0(a e^a / l1^2) / a with a = 2 mu / lambda
    let a = 2.0 * lame.mu / lame.lambda;
    let w = lambert_w0_from_log(a.ln() + a - 2.0 * l1.ln());
    (w / a).sqrt()
}

/// Relaxed density and its derivative with respect to `C`.
#[derive(Clone, Copy, Debug)]
pub struct DensityEval {
    pub density: f64,
    /// dW/dC (symmetric).
    pub dw_dc: Matrix2<f64>,
    /// Principal stretches, largest first.
    pub stretches: (f64, f64),
    pub state: TensionState,
}

/// Relaxed density from `C` alone (`J = sqrt(det C)`).
pub fn element_energy_density(c: &Matrix2<f64>, lame: Lame) -> DensityEval {
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
    relaxed_density(c, det.max(0.0).sqrt(), lame)
}

/// Relaxed density given `C` and the area ratio `J`, which callers holding
/// `F` can compute without cancellation.
pub fn relaxed_density(c: &Matrix2<f64>, j: f64, lame: Lame) -> DensityEval {
    let (a, b, d) = (c[(0, 0)], 0.5 * (c[(0, 1)] + c[(1, 0)]), c[(1, 1)]);
    let mean = 0.5 * (a + d);
    let radius = (0.5 * (a - d)).hypot(b);
    let c1 = mean + radius;
    let l1 = c1.max(0.0).sqrt();
    let l2 = if l1 > 0.0 { j / l1 } else { 0.0 };

    if l1 <= 1.0 {
        return DensityEval {
            density: 0.0,
            dw_dc: Matrix2::zeros(),
            stretches: (l1, l2),
            state: TensionState::Slack,
        };
    }
    // strains measured from 1 keep the density accurate at small stretch
    let (alpha, delta) = (a - 1.0, d - 1.0);
    let gamma = 0.5 * (alpha + delta) + radius;
    let width = natural_width(l1, lame);
    if l2 < width {
        // derivative along the relaxed path; dW/dl2 vanishes at the natural width
        let s = width * width - 1.0;
        let q = (gamma + s + gamma * s).ln_1p();
        let dw_dc1 = 0.5 * (lame.mu * gamma + 0.5 * lame.lambda * q) / c1;
        let u = principal_direction(a, b, d, c1);
        return DensityEval {
            density: 0.5 * lame.mu * (gamma + s - q) + 0.125 * lame.lambda * q * q,
            dw_dc: u * u.transpose() * dw_dc1,
            stretches: (l1, l2),
            state: TensionState::Wrinkled,
        };
    }
    // det C = 1 + z; J from C so that the terms of the density cancel exactly
    let z = alpha + delta + alpha * delta - b * b;
    let q = z.ln_1p();
    let det = 1.0 + z;
    let inv = Matrix2::new(d, -b, -b, a) / det;
    // I - C^-1
    let shift = Matrix2::new(d * alpha - b * b, b, b, a * delta - b * b) / det;
    DensityEval {
        density: 0.5 * lame.mu * (b * b - alpha * delta + z - q) + 0.125 * lame.lambda * q * q,
        dw_dc: (shift * lame.mu + inv * (0.5 * lame.lambda * q)) * 0.5,
        stretches: (l1, l2),
        state: TensionState::Taut,
    }
}

/// Unit eigenvector of the symmetric matrix `[[a, b], [b, d]]` for eigenvalue `c1`.
fn principal_direction(a: f64, b: f64, d: f64, c1: f64) -> Vector2<f64> {
    let u = Vector2::new(b, c1 - a);
    let v = Vector2::new(c1 - d, b);
    let pick = if u.norm_squared() >= v.norm_squared() { u } else { v };
    let n = pick.norm();
    if n > 0.0 {
        pick / n
    } else {
        Vector2::x()
    }
}

/// One element's energy and vertex gradients.
#[derive(Clone, Copy, Debug)]
pub struct ElementEval {
    /// `t A W` (J).
    pub energy: f64,
    /// W (J/m^3).
    pub density: f64,
    pub gradient: [Vec3; 3],
    pub stretches: (f64, f64),
    pub state: TensionState,
    /// Deformed area collapsed while stretched.
    pub degenerate: bool,
}

/// Below this area ratio a stretched element counts as collapsed.
pub const DEGENERATE_J: f64 = 1e-10;

pub fn element_eval(
    rest_inv: &Matrix2<f64>,
    x: [&Vec3; 3],
    area: f64,
    thickness: f64,
    lame: Lame,
) -> ElementEval {
    let (f, c) = deformation_gradient(rest_inv, x);
    let j = f.column(0).cross(&f.column(1)).norm();
    let eval = relaxed_density(&c, j, lame);
    let scale = thickness * area;
    let de_df = f * eval.dw_dc * (2.0 * scale);
    let de_dds = de_df * rest_inv.transpose();
    let g1: Vec3 = de_dds.column(0).into();
    let g2: Vec3 = de_dds.column(1).into();
    ElementEval {
        energy: scale * eval.density,
        density: eval.density,
        gradient: [-(g1 + g2), g1, g2],
        stretches: eval.stretches,
        state: eval.state,
        degenerate: j < DEGENERATE_J && eval.stretches.0 > 1.0,
    }
}
