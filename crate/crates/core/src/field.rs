//! Implicit moving least squares (IMLS) distance field over a posed body
//! and the unilateral penetration penalty built on it.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{SurfaceMesh, Vec3};

/// Value and gradient of the field at a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub value: f64,
    pub gradient: Vec3,
}

/// Dense uniform grid over the source points, stored in CSR form.
#[derive(Clone, Debug)]
struct UniformGrid {
    origin: Vec3,
    cell: f64,
    dims: [i64; 3],
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl UniformGrid {
    fn build(points: &[Vec3], cell: f64) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let dims = [0, 1, 2].map(|k| ((hi[k] - lo[k]) / cell).floor() as i64 + 1);
        let mut grid = UniformGrid {
            origin: lo,
            cell,
            dims,
            starts: Vec::new(),
            entries: Vec::new(),
        };
        let ncells = (dims[0] * dims[1] * dims[2]) as usize;
        let cells: Vec<usize> = points
            .iter()
            .map(|p| {
                let c = grid.cell_of(p);
                grid.flat(c[0], c[1], c[2])
            })
            .collect();
        let mut counts = vec![0u32; ncells + 1];
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![0u32; points.len()];
        for (k, &c) in cells.iter().enumerate() {
            entries[fill[c] as usize] = k as u32;
            fill[c] += 1;
        }
        grid.starts = counts;
        grid.entries = entries;
        grid
    }

    fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.cell).floor() as i64)
    }

    fn flat(&self, i: i64, j: i64, k: i64) -> usize {
        ((k * self.dims[1] + j) * self.dims[0] + i) as usize
    }

    /// Calls `f` for every point in the 3x3x3 block of cells around `p`.
    fn for_each_near(&self, p: &Vec3, mut f: impl FnMut(usize)) {
        let c = self.cell_of(p);
        let range = |k: usize| (c[k] - 1).max(0)..=(c[k] + 1).min(self.dims[k] - 1);
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let cell = self.flat(i, j, k);
                    let (s, e) = (self.starts[cell] as usize, self.starts[cell + 1] as usize);
                    for &idx in &self.entries[s..e] {
                        f(idx as usize);
                    }
                }
            }
        }
    }
}

/// Smooth signed distance field blended from the body's oriented vertices.
///
/// Each source vertex contributes its tangent-plane distance weighted by
/// `(1 - r^2/h_k^2)^4`, where `h_k` is twice the mean length of the
/// vertex's one-ring edges.
#[derive(Clone, Debug)]
pub struct ImlsField {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
    radii: Vec<f64>,
    grid: UniformGrid,
}

pub fn build_field(body: &SurfaceMesh) -> Result<ImlsField> {
    let rings = body.vertex_neighbors();
    let v = body.vertices();
    let mut radii = Vec::with_capacity(v.len());
    for (k, ring) in rings.iter().enumerate() {
        if ring.is_empty() {
            return Err(Error::Topology(format!("body vertex {k} has an empty one-ring")));
        }
        let mean = ring.iter().map(|&j| (v[j] - v[k]).norm()).sum::<f64>() / ring.len() as f64;
        radii.push(2.0 * mean);
    }
    let cell = radii.iter().cloned().fold(0.0, f64::max);
    let grid = UniformGrid::build(v, cell);
    Ok(ImlsField {
        points: v.to_vec(),
        normals: body.normals().to_vec(),
        radii,
        grid,
    })
}

impl ImlsField {
    pub fn support_radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn source_count(&self) -> usize {
        self.points.len()
    }

    /// Field value and analytic gradient, or `None` when no source vertex
    /// has `x` inside its support.
    pub fn phi(&self, x: &Vec3) -> Option<FieldSample> {
        let mut sum_w = 0.0;
        let mut sum_wd = 0.0;
        let mut grad_w = Vec3::zeros();
        let mut grad_wd = Vec3::zeros();
        self.grid.for_each_near(x, |k| {
            let d = x - self.points[k];
            let r2 = d.norm_squared();
            let h2 = self.radii[k] * self.radii[k];
            if r2 >= h2 {
                return;
            }
            let q = 1.0 - r2 / h2;
            let q3 = q * q * q;
            let w = q3 * q;
            let dw = d * (-8.0 * q3 / h2);
            let n = &self.normals[k];
            let dist = n.dot(&d);
            sum_w += w;
            sum_wd += w * dist;
            grad_w += dw;
            grad_wd += n * w + dw * dist;
        });
        if sum_w <= 0.0 {
            return None;
        }
        let value = sum_wd / sum_w;
        Some(FieldSample {
            value,
            gradient: (grad_wd - grad_w * value) / sum_w,
        })
    }

    /// Samples the field on a regular lattice as `x,y,z,phi` CSV rows;
    /// unsupported points print `nan`.
    pub fn dump_csv(&self, lo: &Vec3, hi: &Vec3, n: usize) -> String {
        let mut out = String::from("x,y,z,phi\n");
        let steps = n.max(2) - 1;
        for k in 0..=steps {
            for j in 0..=steps {
                for i in 0..=steps {
                    let t = Vec3::new(i as f64, j as f64, k as f64) / steps as f64;
                    let p = lo + (hi - lo).component_mul(&t);
                    let phi = self.phi(&p).map_or(f64::NAN, |s| s.value);
                    let _ = writeln!(out, "{},{},{},{}", p.x, p.y, p.z, phi);
                }
            }
        }
        out
    }
}

/// Result of evaluating the unilateral penalty over all garment vertices.
#[derive(Clone, Debug, Default)]
pub struct PenaltyEval {
    /// `sum Phi(x_i)^2` over vertices with `Phi <= 0` (m^2).
    pub energy: f64,
    pub gradient: Vec<Vec3>,
    pub samples: Vec<Option<FieldSample>>,
}

impl PenaltyEval {
    pub fn unsupported(&self) -> usize {
        self.samples.iter().filter(|s| s.is_none()).count()
    }

    pub fn min_phi(&self) -> Option<f64> {
        self.samples
            .iter()
            .flatten()
            .map(|s| s.value)
            .reduce(f64::min)
    }
}

/// `E = sum_i Phi(x_i)^2` over penetrating vertices; lifted-off and
/// unsupported vertices contribute nothing.
pub fn body_penalty(field: &ImlsField, positions: &[Vec3]) -> PenaltyEval {
    let samples: Vec<Option<FieldSample>> = positions.par_iter().map(|x| field.phi(x)).collect();
    let mut energy = 0.0;
    let gradient = samples
        .iter()
        .map(|s| match s {
            Some(s) if s.value <= 0.0 => {
                energy += s.value * s.value;
                s.gradient * (2.0 * s.value)
            }
            _ => Vec3::zeros(),
        })
        .collect();
    PenaltyEval {
        energy,
        gradient,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;
    use nalgebra::{Rotation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_plane(spacing: f64, n: usize) -> SurfaceMesh {
        // square grid in the xy plane, normals +z, one diagonal per cell
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        let mut f = Vec::new();
        let id = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        SurfaceMesh::new(v, f).unwrap()
    }

    /// Equilateral-triangle lattice: every edge has length `spacing`.
    fn tri_lattice(spacing: f64, n: usize) -> SurfaceMesh {
        let h = spacing * 3f64.sqrt() / 2.0;
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                let shift = if j % 2 == 1 { 0.5 * spacing } else { 0.0 };
                v.push(Vec3::new(i as f64 * spacing + shift, j as f64 * h, 0.0));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut f = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if j % 2 == 0 {
                    f.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
                    f.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
                } else {
                    f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                    f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                }
            }
        }
        SurfaceMesh::new(v, f).unwrap()
    }

    #[test]
    fn uniform_lattice_radii() {
        let mesh = tri_lattice(0.01, 8);
        let field = build_field(&mesh).unwrap();
        for &h in field.support_radii() {
            assert!((h - 0.02).abs() < 1e-12, "{h}");
        }
    }

    #[test]
    fn equilateral_triangle_radii() {
        let s = 0.05;
        let mesh = SurfaceMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::new(s, 0.0, 0.0),
                Vec3::new(0.5 * s, s * 3f64.sqrt() / 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let field = build_field(&mesh).unwrap();
        for &h in field.support_radii() {
            assert!((h - 2.0 * s).abs() < 1e-12);
        }
    }

    #[test]
    fn icosphere_radii_bracket() {
        let mesh = fixture::icosphere(0.1, 2);
        let field = build_field(&mesh).unwrap();
        let lengths: Vec<f64> = mesh
            .edges()
            .iter()
            .map(|&[i, j]| (mesh.vertices()[i] - mesh.vertices()[j]).norm())
            .collect();
        let lo = lengths.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = lengths.iter().cloned().fold(0.0, f64::max);
        let rings = mesh.vertex_neighbors();
        for (k, &h) in field.support_radii().iter().enumerate() {
            let brute: f64 = rings[k]
                .iter()
                .map(|&j| (mesh.vertices()[j] - mesh.vertices()[k]).norm())
                .sum::<f64>()
                / rings[k].len() as f64;
            assert!((h - 2.0 * brute).abs() < 1e-12);
            assert!(h > 0.0 && h >= 2.0 * lo - 1e-15 && h <= 2.0 * hi + 1e-15);
        }
    }

    #[test]
    fn isolated_vertex_is_an_error() {
        let mesh = SurfaceMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(5.0, 5.0, 5.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(matches!(build_field(&mesh), Err(Error::Topology(_))));
    }

    #[test]
    fn single_source_is_a_plane() {
        // a lone source vertex: every weight cancels
        let field = ImlsField {
            points: vec![Vec3::new(0.1, 0.2, 0.3)],
            normals: vec![Vec3::new(0.0, 0.6, 0.8)],
            radii: vec![0.5],
            grid: UniformGrid::build(&[Vec3::new(0.1, 0.2, 0.3)], 0.5),
        };
        let x = Vec3::new(0.2, 0.1, 0.5);
        let s = field.phi(&x).unwrap();
        let expected = Vec3::new(0.0, 0.6, 0.8).dot(&(x - Vec3::new(0.1, 0.2, 0.3)));
        assert!((s.value - expected).abs() < 1e-15);
        assert!((s.gradient - Vec3::new(0.0, 0.6, 0.8)).norm() < 1e-14);
        assert!(field.phi(&Vec3::new(2.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn plane_height_is_exact() {
        let mesh = grid_plane(0.01, 20);
        let field = build_field(&mesh).unwrap();
        for x in [Vec3::new(0.1, 0.1, 0.003), Vec3::new(0.073, 0.121, 0.003)] {
            let s = field.phi(&x).unwrap();
            assert!((s.value - 0.003).abs() < 1e-9);
            assert!((s.gradient - Vec3::z()).norm() < 1e-9);
        }
        let on_vertex = field.phi(&Vec3::new(0.1, 0.1, 0.0)).unwrap();
        assert!(on_vertex.value.abs() < 1e-15);
    }

    #[test]
    fn far_point_is_unsupported() {
        let field = build_field(&grid_plane(0.01, 10)).unwrap();
        assert!(field.phi(&Vec3::new(0.05, 0.05, 0.5)).is_none());
        assert!(field.phi(&Vec3::new(10.0, -3.0, 0.0)).is_none());
    }

    #[test]
    fn rigid_invariance() {
        let mesh = fixture::icosphere(0.1, 2);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(0.3, -1.0, 0.4)), 1.1);
        let shift = Vec3::new(0.5, 0.2, -0.1);
        let moved = mesh
            .with_vertices(mesh.vertices().iter().map(|v| rot * v + shift).collect())
            .unwrap();
        let (fa, fb) = (build_field(&mesh).unwrap(), build_field(&moved).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let x = dir.normalize() * rng.gen_range(0.095..0.105);
            let a = fa.phi(&x).unwrap().value;
            let b = fb.phi(&(rot * x + shift)).unwrap().value;
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn penalty_is_unilateral() {
        let field = build_field(&grid_plane(0.01, 10)).unwrap();
        let above = vec![Vec3::new(0.05, 0.05, 0.001), Vec3::new(0.02, 0.07, 0.004)];
        let eval = body_penalty(&field, &above);
        assert_eq!(eval.energy, 0.0);
        assert!(eval.gradient.iter().all(|g| g.norm() == 0.0));
        let below = vec![Vec3::new(0.05, 0.05, -0.002)];
        let eval = body_penalty(&field, &below);
        assert!((eval.energy - 4e-6).abs() < 1e-15);
    }

    #[test]
    fn penalty_arithmetic() {
        // one vertex at Phi = -0.2 under a single-source plane
        let field = ImlsField {
            points: vec![Vec3::zeros()],
            normals: vec![Vec3::z()],
            radii: vec![1.0],
            grid: UniformGrid::build(&[Vec3::zeros()], 1.0),
        };
        let eval = body_penalty(&field, &[Vec3::new(0.1, 0.0, -0.2)]);
        assert!((eval.energy - 0.04).abs() < 1e-15);
    }

    #[test]
    fn penalty_slope_vanishes_at_clamp() {
        let field = build_field(&fixture::icosphere(0.1, 2)).unwrap();
        let dir = Vec3::new(0.2, 0.5, 0.7).normalize();
        // walk inward from the zero level set
        let mut t = 0.1;
        for _ in 0..60 {
            let phi = field.phi(&(dir * t)).unwrap().value;
            t -= phi * 0.9;
        }
        let mut last = f64::INFINITY;
        for eps in [1e-3, 1e-4, 1e-5, 1e-6] {
            let x = dir * (t - eps);
            let g = body_penalty(&field, &[x]).gradient[0].norm();
            assert!(g < last);
            last = g;
        }
        assert!(last < 1e-5);
    }
}
