//! Garment patches cut from a body mesh.
//!
//! A patch duplicates the selected body faces (optionally midpoint
//! subdivided) into an independent mesh. Each garment vertex remembers the
//! body vertices it was interpolated from, which is all that is needed to
//! place the garment on any pose sharing the body topology.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use nalgebra::Matrix2;

use crate::error::{Error, Result};
use crate::mesh::{SurfaceMesh, Vec3};

/// Minimum |det| accepted for a rest edge matrix.
pub const MIN_REST_DET: f64 = 1e-14;

/// Garment vertex expressed as a fixed linear combination of body vertices.
pub type Stencil = Vec<(usize, f64)>;

#[derive(Clone, Debug)]
pub struct GarmentPatch {
    parent_faces: Vec<usize>,
    body_vertex_count: usize,
    body_faces: Vec<[usize; 3]>,
    stencils: Vec<Stencil>,
    mesh: SurfaceMesh,
    rest_matrices: Vec<Matrix2<f64>>,
    rest_inverses: Vec<Matrix2<f64>>,
    areas: Vec<f64>,
    attached: Vec<bool>,
    design: Vec<bool>,
}

impl GarmentPatch {
    /// Garment rest embedding.
    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn element_count(&self) -> usize {
        self.mesh.face_count()
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        self.mesh.faces()
    }

    /// Body face each element was cut from.
    pub fn parent_faces(&self) -> &[usize] {
        &self.parent_faces
    }

    pub fn stencils(&self) -> &[Stencil] {
        &self.stencils
    }

    /// Columns are the flattened rest edges `x1 - x0`, `x2 - x0`.
    pub fn rest_matrices(&self) -> &[Matrix2<f64>] {
        &self.rest_matrices
    }

    pub fn rest_inverses(&self) -> &[Matrix2<f64>] {
        &self.rest_inverses
    }

    /// Undeformed element areas (m^2).
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn max_element_area(&self) -> f64 {
        self.areas.iter().cloned().fold(0.0, f64::max)
    }

    pub fn attached(&self) -> &[bool] {
        &self.attached
    }

    pub fn design(&self) -> &[bool] {
        &self.design
    }

    pub fn set_design(&mut self, design: Vec<bool>) -> Result<()> {
        if design.len() != self.element_count() {
            return Err(Error::Invalid(format!(
                "design has {} entries for {} elements",
                design.len(),
                self.element_count()
            )));
        }
        self.design = design;
        Ok(())
    }

    pub fn with_design(mut self, design: Vec<bool>) -> Result<Self> {
        self.set_design(design)?;
        Ok(self)
    }

    pub fn reinforced_area(&self) -> f64 {
        self.areas
            .iter()
            .zip(&self.design)
            .filter(|(_, &d)| d)
            .map(|(a, _)| a)
            .sum()
    }

    /// Places garment vertices on a body pose with the parent topology.
    pub fn map_to_pose(&self, pose: &SurfaceMesh) -> Result<Vec<Vec3>> {
        if pose.vertex_count() != self.body_vertex_count || pose.faces() != self.body_faces {
            return Err(Error::Topology(
                "pose does not match the patch's parent body topology".into(),
            ));
        }
        Ok(interpolate(&self.stencils, pose.vertices()))
    }

    /// Mean rest edge length of the garment mesh.
    pub fn mean_edge_length(&self) -> f64 {
        self.mesh.mean_edge_length()
    }
}

fn interpolate(stencils: &[Stencil], body: &[Vec3]) -> Vec<Vec3> {
    stencils
        .iter()
        .map(|s| {
            s.iter()
                .fold(Vec3::zeros(), |acc, &(k, w)| acc + body[k] * w)
        })
        .collect()
}

/// Isometric 2D embedding of a 3D triangle: returns the 2x2 matrix whose
/// columns are the flattened edges `p1 - p0` and `p2 - p0`.
pub fn flatten_triangle(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> Matrix2<f64> {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let l1 = e1.norm();
    let along = e1.dot(&e2) / l1;
    let across = e1.cross(&e2).norm() / l1;
    Matrix2::new(l1, along, 0.0, across)
}

fn merge_midpoint(a: &Stencil, b: &Stencil) -> Stencil {
    let mut out: Stencil = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(&(ka, wa)), Some(&(kb, wb))) if ka == kb => {
                out.push((ka, 0.5 * wa + 0.5 * wb));
                i += 1;
                j += 1;
            }
            (Some(&(ka, wa)), Some(&(kb, _))) if ka < kb => {
                out.push((ka, 0.5 * wa));
                i += 1;
            }
            (Some(&(ka, wa)), None) => {
                out.push((ka, 0.5 * wa));
                i += 1;
            }
            (_, Some(&(kb, wb))) => {
                out.push((kb, 0.5 * wb));
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// One round of midpoint subdivision; each triangle splits into four.
fn subdivide(
    stencils: &mut Vec<Stencil>,
    faces: &[[usize; 3]],
    parents: &[usize],
) -> (Vec<[usize; 3]>, Vec<usize>) {
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |i: usize, j: usize, stencils: &mut Vec<Stencil>| {
        let key = if i < j { (i, j) } else { (j, i) };
        *midpoints.entry(key).or_insert_with(|| {
            let s = merge_midpoint(&stencils[key.0], &stencils[key.1]);
            stencils.push(s);
            stencils.len() - 1
        })
    };
    let mut out_faces = Vec::with_capacity(faces.len() * 4);
    let mut out_parents = Vec::with_capacity(faces.len() * 4);
    for (&[a, b, c], &p) in faces.iter().zip(parents) {
        let ab = midpoint(a, b, stencils);
        let bc = midpoint(b, c, stencils);
        let ca = midpoint(c, a, stencils);
        out_faces.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        out_parents.extend_from_slice(&[p; 4]);
    }
    (out_faces, out_parents)
}

/// Cuts a garment patch out of `body`.
///
/// `face_ids` selects body faces; `attachment_face_ids` must be a subset.
/// Elements produced by subdividing an attachment face are attached. The
/// design starts fully reinforced.
pub fn extract_patch(
    body: &SurfaceMesh,
    face_ids: &[usize],
    subdivisions: usize,
    attachment_face_ids: &[usize],
) -> Result<GarmentPatch> {
    let selected: BTreeSet<usize> = face_ids.iter().copied().collect();
    if selected.is_empty() {
        return Err(Error::Invalid("empty face selection".into()));
    }
    if let Some(&f) = selected.iter().find(|&&f| f >= body.face_count()) {
        return Err(Error::Invalid(format!(
            "face id {f} out of range ({} body faces)",
            body.face_count()
        )));
    }
    let attach: BTreeSet<usize> = attachment_face_ids.iter().copied().collect();
    if let Some(&f) = attach.iter().find(|f| !selected.contains(f)) {
        return Err(Error::Invalid(format!(
            "attachment face {f} is not part of the patch"
        )));
    }

    // Garment vertices are numbered in order of first use by the selected faces.
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut stencils: Vec<Stencil> = Vec::new();
    let mut faces = Vec::with_capacity(selected.len());
    let mut parents = Vec::with_capacity(selected.len());
    for &f in &selected {
        let tri = body.faces()[f];
        let mut g = [0usize; 3];
        for (k, &v) in tri.iter().enumerate() {
            g[k] = *local.entry(v).or_insert_with(|| {
                stencils.push(vec![(v, 1.0)]);
                stencils.len() - 1
            });
        }
        faces.push(g);
        parents.push(f);
    }
    for _ in 0..subdivisions {
        let (f, p) = subdivide(&mut stencils, &faces, &parents);
        faces = f;
        parents = p;
    }

    let rest = interpolate(&stencils, body.vertices());
    let mesh = SurfaceMesh::new(rest, faces)?;

    let mut rest_matrices = Vec::with_capacity(mesh.face_count());
    let mut rest_inverses = Vec::with_capacity(mesh.face_count());
    let mut areas = Vec::with_capacity(mesh.face_count());
    for (e, &[a, b, c]) in mesh.faces().iter().enumerate() {
        let v = mesh.vertices();
        let dm = flatten_triangle(&v[a], &v[b], &v[c]);
        let det = dm.determinant();
        if det.abs() <= MIN_REST_DET {
            return Err(Error::Topology(format!(
                "element {e} has a singular rest frame (det {det:e})"
            )));
        }
        rest_inverses.push(dm.try_inverse().expect("checked determinant"));
        rest_matrices.push(dm);
        areas.push(0.5 * det.abs());
    }
    let attached = parents.iter().map(|p| attach.contains(p)).collect();
    let n_elem = mesh.face_count();
    Ok(GarmentPatch {
        parent_faces: parents,
        body_vertex_count: body.vertex_count(),
        body_faces: body.faces().to_vec(),
        stencils,
        mesh,
        rest_matrices,
        rest_inverses,
        areas,
        attached,
        design: vec![true; n_elem],
    })
}

/// Contents of a patch spec file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatchSpec {
    pub faces: Vec<usize>,
    pub attachments: Vec<usize>,
    pub subdivisions: usize,
}

impl PatchSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut spec = PatchSpec::default();
        let mut saw_faces = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(path, lineno + 1, "expected 'key: value'"))?;
            let value = value.trim();
            match key.trim() {
                "faces" => {
                    spec.faces = parse_id_list(value)
                        .map_err(|m| Error::parse(path, lineno + 1, m))?;
                    saw_faces = true;
                }
                "attachments" => {
                    spec.attachments = parse_id_list(value)
                        .map_err(|m| Error::parse(path, lineno + 1, m))?
                }
                "subdivisions" => {
                    spec.subdivisions = value.parse().map_err(|_| {
                        Error::parse(path, lineno + 1, format!("bad subdivision count '{value}'"))
                    })?
                }
                other => {
                    return Err(Error::parse(path, lineno + 1, format!("unknown key '{other}'")))
                }
            }
        }
        if !saw_faces {
            return Err(Error::parse(path, 0, "missing 'faces' line"));
        }
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        format!(
            "faces: {}\nattachments: {}\nsubdivisions: {}\n",
            format_id_list(&self.faces),
            format_id_list(&self.attachments),
            self.subdivisions
        )
    }

    pub fn extract(&self, body: &SurfaceMesh) -> Result<GarmentPatch> {
        extract_patch(body, &self.faces, self.subdivisions, &self.attachments)
    }
}

/// Parses `3, 7-12 20` style lists; ranges are inclusive.
pub fn parse_id_list(text: &str) -> std::result::Result<Vec<usize>, String> {
    let mut ids = Vec::new();
    for item in text.split(|c: char| c == ',' || c.is_whitespace()) {
        if item.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = item.split_once('-') {
            let lo: usize = lo.parse().map_err(|_| format!("bad range '{item}'"))?;
            let hi: usize = hi.parse().map_err(|_| format!("bad range '{item}'"))?;
            if hi < lo {
                return Err(format!("empty range '{item}'"));
            }
            ids.extend(lo..=hi);
        } else {
            ids.push(item.parse().map_err(|_| format!("bad id '{item}'"))?);
        }
    }
    Ok(ids)
}

/// Inverse of [`parse_id_list`], collapsing consecutive runs into ranges.
pub fn format_id_list(ids: &[usize]) -> String {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut parts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        let mut end = start;
        while i + 1 < sorted.len() && sorted[i + 1] == end + 1 {
            i += 1;
            end = sorted[i];
        }
        parts.push(if end > start {
            format!("{start}-{end}")
        } else {
            start.to_string()
        });
        i += 1;
    }
    parts.join(", ")
}
