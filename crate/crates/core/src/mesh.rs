//! Triangle surface meshes shared by body poses and garment patches.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Faces with area at or below this are rejected.
pub const MIN_FACE_AREA: f64 = 1e-12;

/// Indexed triangle mesh with area-weighted vertex normals.
///
/// Vertices that belong to no face carry a zero normal; every other normal
/// has unit length.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (f, tri) in faces.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::Topology(format!(
                    "face {f} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            let area = triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
            if !(area > MIN_FACE_AREA) {
                return Err(Error::Topology(format!(
                    "face {f} is degenerate (area {area:e} m^2)"
                )));
            }
        }
        let normals = area_weighted_normals(&vertices, &faces);
        Ok(SurfaceMesh {
            vertices,
            faces,
            normals,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Same faces, new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Topology(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        SurfaceMesh::new(vertices, self.faces.clone())
    }

    pub fn same_topology(&self, other: &SurfaceMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .faces
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|[i, j]| if i < j { [i, j] } else { [j, i] })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// One-ring neighbor lists (sorted, unique).
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut rings = vec![Vec::new(); self.vertices.len()];
        for [i, j] in self.edges() {
            rings[i].push(j);
            rings[j].push(i);
        }
        for r in &mut rings {
            r.sort_unstable();
        }
        rings
    }

    /// Faces incident to each vertex.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.vertices.len()];
        for (f, tri) in self.faces.iter().enumerate() {
            for &v in tri {
                incident[v].push(f);
            }
        }
        incident
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        if edges.is_empty() {
            return 0.0;
        }
        edges
            .iter()
            .map(|&[i, j]| (self.vertices[i] - self.vertices[j]).norm())
            .sum::<f64>()
            / edges.len() as f64
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 64);
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for [a, b, c] in &self.faces {
            let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
        }
        out
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn area_weighted_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for &[a, b, c] in faces {
        // |cross| is twice the face area
        let n = (vertices[b] - vertices[a]).cross(&(vertices[c] - vertices[a]));
        acc[a] += n;
        acc[b] += n;
        acc[c] += n;
    }
    for n in &mut acc {
        let len = n.norm();
        if len > 0.0 {
            *n /= len;
        }
    }
    acc
}

/// Reads a triangulated ASCII OBJ. Only `v` and `f` records are used;
/// texture/normal indices on face corners are ignored.
pub fn load_obj(path: &Path) -> Result<SurfaceMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<SurfaceMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 {
                    return Err(Error::parse(path, lineno + 1, "vertex needs 3 coordinates"));
                }
                let mut p = [0.0; 3];
                for (k, tok) in coords.iter().take(3).enumerate() {
                    p[k] = tok.parse().map_err(|_| {
                        Error::parse(path, lineno + 1, format!("bad coordinate '{tok}'"))
                    })?;
                }
                vertices.push(Vec3::new(p[0], p[1], p[2]));
            }
            Some("f") => {
                let corners: Vec<&str> = tokens.collect();
                if corners.len() != 3 {
                    return Err(Error::Topology(format!(
                        "line {}: face with {} corners (only triangles are supported)",
                        lineno + 1,
                        corners.len()
                    )));
                }
                let mut tri = [0usize; 3];
                for (k, corner) in corners.iter().enumerate() {
                    let idx_str = corner.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str.parse().map_err(|_| {
                        Error::parse(path, lineno + 1, format!("bad face index '{corner}'"))
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        -1
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(Error::Topology(format!(
                            "line {}: face index {idx} out of range",
                            lineno + 1
                        )));
                    }
                    tri[k] = resolved as usize;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    SurfaceMesh::new(vertices, faces)
}

/// Body poses sharing one topology. `target` indexes into `frames`.
#[derive(Clone, Debug)]
pub struct PoseSequence {
    pub rest: SurfaceMesh,
    pub frames: Vec<SurfaceMesh>,
    pub target: usize,
}

impl PoseSequence {
    pub fn new(rest: SurfaceMesh, frames: Vec<SurfaceMesh>, target: usize) -> Result<Self> {
        if target >= frames.len() {
            return Err(Error::Invalid(format!(
                "target index {target} outside {} frames",
                frames.len()
            )));
        }
        if let Some(k) = frames.iter().position(|f| !rest.same_topology(f)) {
            return Err(Error::Topology(format!(
                "frame {k} does not share the rest pose topology"
            )));
        }
        Ok(PoseSequence {
            rest,
            frames,
            target,
        })
    }

    pub fn target_pose(&self) -> &SurfaceMesh {
        &self.frames[self.target]
    }
}
