//! Synthetic body meshes: an open cylinder that bends like an elbow, a
//! bendable plane, and an icosphere for tests.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::{SurfaceMesh, Vec3};
use crate::patch::PatchSpec;

/// Open tube along +z with `around` segments and `along` rings of faces.
///
/// Face `2 * (j * around + i) + k` lies in ring `j`, so ring `j` owns faces
/// `2 * around * j .. 2 * around * (j + 1)`. Normals point outward.
pub fn cylinder_mesh(radius: f64, length: f64, around: usize, along: usize) -> SurfaceMesh {
    let mut vertices = Vec::with_capacity(around * (along + 1));
    for j in 0..=along {
        let z = length * j as f64 / along as f64;
        for i in 0..around {
            let phi = std::f64::consts::TAU * i as f64 / around as f64;
            vertices.push(Vec3::new(radius * phi.cos(), radius * phi.sin(), z));
        }
    }
    let id = |i: usize, j: usize| j * around + (i % around);
    let mut faces = Vec::with_capacity(2 * around * along);
    for j in 0..along {
        for i in 0..around {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            } else {
                faces.push([a, b, d]);
                faces.push([b, c, d]);
            }
        }
    }
    SurfaceMesh::new(vertices, faces).expect("cylinder mesh is valid")
}

/// Flat sheet in the plane `x = offset`, spanning `y` in `[-width/2, width/2]`
/// and `z` in `[0, length]`, with normals along -x.
///
/// Row `j` (along z) owns faces `2 * nu * j .. 2 * nu * (j + 1)`.
pub fn plane_mesh(width: f64, length: f64, nu: usize, nv: usize, offset: f64) -> SurfaceMesh {
    let mut vertices = Vec::with_capacity((nu + 1) * (nv + 1));
    for j in 0..=nv {
        for i in 0..=nu {
            vertices.push(Vec3::new(
                offset,
                -0.5 * width + width * i as f64 / nu as f64,
                length * j as f64 / nv as f64,
            ));
        }
    }
    let id = |i: usize, j: usize| j * (nu + 1) + i;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            // reversed winding: normals face -x
            if (i + j) % 2 == 0 {
                faces.push([a, c, b]);
                faces.push([a, d, c]);
            } else {
                faces.push([a, d, b]);
                faces.push([b, d, c]);
            }
        }
    }
    SurfaceMesh::new(vertices, faces).expect("plane mesh is valid")
}

/// Bends space about the y axis so that the z axis follows a straight
/// segment, a circular arc of length `bend_length` centred at `z_mid`
/// turning by `angle` toward +x, and another straight segment.
///
/// Points keep their distance to the z axis in the (x, y) cross-section,
/// so +x is the concave side. Zero angle is the identity.
pub fn bend_point(p: &Vec3, angle: f64, z_mid: f64, bend_length: f64) -> Vec3 {
    if angle == 0.0 {
        return *p;
    }
    let z_a = z_mid - 0.5 * bend_length;
    if p.z <= z_a {
        return *p;
    }
    let radius = bend_length / angle;
    let frame = |psi: f64| {
        let centre = Vec3::new(radius - radius * psi.cos(), 0.0, z_a + radius * psi.sin());
        let normal = Vec3::new(psi.cos(), 0.0, -psi.sin());
        let tangent = Vec3::new(psi.sin(), 0.0, psi.cos());
        (centre, normal, tangent)
    };
    let s = p.z - z_a;
    let (centre, normal, extra) = if s <= bend_length {
        let (c, n, _) = frame(angle * s / bend_length);
        (c, n, Vec3::zeros())
    } else {
        let (c, n, t) = frame(angle);
        (c, n, t * (s - bend_length))
    };
    centre + extra + normal * p.x + Vec3::y() * p.y
}

pub fn bend_mesh(mesh: &SurfaceMesh, angle: f64, z_mid: f64, bend_length: f64) -> Result<SurfaceMesh> {
    if angle == 0.0 {
        return Ok(mesh.clone());
    }
    mesh.with_vertices(
        mesh.vertices()
            .iter()
            .map(|p| bend_point(p, angle, z_mid, bend_length))
            .collect(),
    )
}

/// Parameters of the elbow-like cylinder fixture.
#[derive(Clone, Debug, PartialEq)]
pub struct CylinderBend {
    pub radius: f64,
    pub length: f64,
    pub around: usize,
    pub along: usize,
    /// Target pose bend angle (radians).
    pub angle: f64,
    /// Rest pose bend angle (radians); nonzero rest angles give
    /// extension-style motions when `angle < rest_angle`.
    pub rest_angle: f64,
    pub bend_length: f64,
    /// Sleeve extent along the axis, as fractions of `length`.
    pub sleeve: (f64, f64),
    pub subdivisions: usize,
}

impl Default for CylinderBend {
    fn default() -> Self {
        CylinderBend {
            radius: 0.04,
            length: 0.3,
            around: 32,
            along: 48,
            angle: std::f64::consts::FRAC_PI_2,
            rest_angle: 0.0,
            bend_length: 0.1,
            sleeve: (1.0 / 6.0, 5.0 / 6.0),
            subdivisions: 0,
        }
    }
}

/// Rest body, target body and garment patch spec for a fixture.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub rest: SurfaceMesh,
    pub target: SurfaceMesh,
    pub patch: PatchSpec,
}

impl CylinderBend {
    fn check(&self) -> Result<()> {
        let max_angle = self.bend_length / self.radius;
        for a in [self.angle, self.rest_angle] {
            if !(0.0..max_angle).contains(&a) {
                return Err(Error::Invalid(format!(
                    "bend angle {a} rad must lie in [0, {max_angle}) for this radius and bend length"
                )));
            }
        }
        if self.around < 3 || self.along < 2 {
            return Err(Error::Invalid("cylinder resolution too coarse".into()));
        }
        Ok(())
    }

    /// Sleeve rings `[first, last)`.
    pub fn sleeve_rings(&self) -> (usize, usize) {
        let first = (self.sleeve.0 * self.along as f64).round() as usize;
        let last = (self.sleeve.1 * self.along as f64).round() as usize;
        (first, last.max(first + 2).min(self.along))
    }

    pub fn build(&self) -> Result<Fixture> {
        self.check()?;
        let straight = cylinder_mesh(self.radius, self.length, self.around, self.along);
        let z_mid = 0.5 * self.length;
        let rest = bend_mesh(&straight, self.rest_angle, z_mid, self.bend_length)?;
        let target = if self.angle == self.rest_angle {
            rest.clone()
        } else {
            bend_mesh(&straight, self.angle, z_mid, self.bend_length)?
        };
        let (first, last) = self.sleeve_rings();
        let ring = |j: usize| 2 * self.around * j..2 * self.around * (j + 1);
        let faces: Vec<usize> = (first..last).flat_map(ring).collect();
        let attachments: Vec<usize> = ring(first).chain(ring(last - 1)).collect();
        Ok(Fixture {
            rest,
            target,
            patch: PatchSpec {
                faces,
                attachments,
                subdivisions: self.subdivisions,
            },
        })
    }
}

/// Parameters of the plane fixture (a sheet offset from the bending axis).
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneBend {
    pub width: f64,
    pub length: f64,
    pub nu: usize,
    pub nv: usize,
    pub offset: f64,
    pub angle: f64,
    pub bend_length: f64,
    pub subdivisions: usize,
}

impl Default for PlaneBend {
    fn default() -> Self {
        PlaneBend {
            width: 0.1,
            length: 0.3,
            nu: 10,
            nv: 30,
            offset: -0.04,
            angle: 0.0,
            bend_length: 0.1,
            subdivisions: 0,
        }
    }
}

impl PlaneBend {
    pub fn build(&self) -> Result<Fixture> {
        if self.nu < 1 || self.nv < 4 {
            return Err(Error::Invalid("plane resolution too coarse".into()));
        }
        let rest = plane_mesh(self.width, self.length, self.nu, self.nv, self.offset);
        let target = bend_mesh(&rest, self.angle, 0.5 * self.length, self.bend_length)?;
        let (first, last) = (self.nv / 6, self.nv - self.nv / 6);
        let row = |j: usize| 2 * self.nu * j..2 * self.nu * (j + 1);
        Ok(Fixture {
            rest,
            target,
            patch: PatchSpec {
                faces: (first..last).flat_map(row).collect(),
                attachments: row(first).chain(row(last - 1)).collect(),
                subdivisions: self.subdivisions,
            },
        })
    }
}

/// Geodesic icosphere (subdivided icosahedron projected to the sphere).
pub fn icosphere(radius: f64, subdivisions: usize) -> SurfaceMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    SurfaceMesh::new(vertices, faces).expect("icosphere is valid")
}
