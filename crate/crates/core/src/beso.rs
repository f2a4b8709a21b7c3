//! Soft-kill two-material BESO over the garment patch.
//!
//! Each iteration solves the target pose, turns the element strain energy
//! densities into sensitivities, smooths them in space and time, and
//! reinforces the highest-ranked elements up to the scheduled area.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::energy::garment_total_energy;
use crate::equilibrium::{solve_pose, EquilibriumState, SolveSettings};
use crate::error::{Error, Result};
use crate::material::MaterialPair;
use crate::mesh::{PoseSequence, Vec3};
use crate::patch::GarmentPatch;

#[derive(Clone, Debug, PartialEq)]
pub struct BesoSettings {
    /// Target reinforced fraction of the patch rest area.
    pub target_area: f64,
    pub evolutionary_ratio: f64,
    /// Admissions per iteration as a fraction of the element count.
    pub max_admission_ratio: f64,
    pub d_min: f64,
    pub penalty: f64,
    /// Relative change of the garment energy treated as stable.
    pub tolerance: f64,
    /// Stable iterations required at the target area.
    pub history: usize,
    pub max_iterations: usize,
    /// Cold restart of the equilibrium every this many iterations.
    pub reinit_every: usize,
}

impl Default for BesoSettings {
    fn default() -> Self {
        BesoSettings {
            target_area: 0.15,
            evolutionary_ratio: 0.015,
            max_admission_ratio: 0.015,
            d_min: 0.001,
            penalty: 1.6,
            tolerance: 1e-3,
            history: 5,
            max_iterations: 300,
            reinit_every: 25,
        }
    }
}

impl BesoSettings {
    /// `target_area = 1` is accepted and leaves the design fully dense.
    pub fn validate(&self) -> Result<()> {
        let ok = self.target_area > 0.0
            && self.target_area <= 1.0
            && self.evolutionary_ratio > 0.0
            && self.evolutionary_ratio < 1.0
            && self.max_admission_ratio > 0.0
            && self.d_min > 0.0
            && self.d_min < 1.0
            && self.penalty >= 1.0
            && self.tolerance > 0.0
            && self.history >= 1
            && self.reinit_every >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("invalid BESO settings: {self:?}")))
        }
    }

    /// Sensitivity per unit energy density for reinforced and cloth elements.
    pub fn coefficients(&self, m: &MaterialPair) -> (f64, f64) {
        let reinforced = 0.5 * (1.0 - m.e2 / m.e1);
        let dp = self.d_min.powf(self.penalty);
        let cloth = 0.5 * self.d_min.powf(self.penalty - 1.0) * (m.e1 - m.e2) / (dp * m.e1 + (1.0 - dp) * m.e2);
        (reinforced, cloth)
    }

    /// Maximum 0 to 1 flips per iteration.
    pub fn admission_cap(&self, elements: usize) -> usize {
        (self.max_admission_ratio * elements as f64).ceil() as usize
    }
}

pub fn element_sensitivities(
    density: &[f64],
    design: &[bool],
    materials: &MaterialPair,
    settings: &BesoSettings,
) -> Vec<f64> {
    let (c1, c2) = settings.coefficients(materials);
    density
        .iter()
        .zip(design)
        .map(|(&w, &d)| if d { c1 * w } else { c2 * w })
        .collect()
}

/// Area-weighted element to node transfer, node to element averaging, and
/// an even blend with `previous` when given.
pub fn filter_sensitivities(patch: &GarmentPatch, alpha: &[f64], previous: Option<&[f64]>) -> Vec<f64> {
    let n = patch.vertex_count();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for ((tri, &a), &area) in patch.elements().iter().zip(alpha).zip(patch.areas()) {
        for &v in tri {
            num[v] += area * a;
            den[v] += area;
        }
    }
    let nodal: Vec<f64> = num.iter().zip(&den).map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 }).collect();
    let spatial = patch
        .elements()
        .iter()
        .map(|t| (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / 3.0);
    match previous {
        Some(prev) => spatial.zip(prev).map(|(a, b)| 0.5 * (a + b)).collect(),
        None => spatial.collect(),
    }
}

/// Descending by value, ascending index on ties.
pub fn rank(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

#[derive(Clone, Debug, PartialEq)]
pub struct Threshold {
    pub design: Vec<bool>,
    pub flips_in: usize,
    pub flips_out: usize,
    /// Unreinforced elements ranked above the lowest reinforced one; only
    /// nonempty when the admission cap binds.
    pub blocked: Vec<usize>,
}

/// Elements of `order` up to and including the first one at which the
/// cumulative area reaches `target`.
fn prefix(order: impl Iterator<Item = usize>, areas: &[f64], target: f64, start: f64) -> Vec<usize> {
    let mut acc = start;
    let mut out = Vec::new();
    if acc >= target {
        return out;
    }
    for e in order {
        out.push(e);
        acc += areas[e];
        if acc >= target {
            break;
        }
    }
    out
}

/// Ranks `filtered`, reinforces the prefix reaching `target_area` (absolute,
/// m^2) and enforces the admission cap by keeping only the best-ranked
/// admissions and refilling the budget from current reinforcement.
pub fn apply_threshold(filtered: &[f64], areas: &[f64], target_area: f64, current: &[bool], cap: usize) -> Threshold {
    let order = rank(filtered);
    let n = filtered.len();
    let mut design = vec![false; n];
    let chosen = prefix(order.iter().copied(), areas, target_area, 0.0);
    let admitted: Vec<usize> = chosen.iter().copied().filter(|&e| !current[e]).collect();
    if admitted.len() <= cap {
        for e in chosen {
            design[e] = true;
        }
    } else {
        let kept = &admitted[..cap];
        let kept_area: f64 = kept.iter().map(|&e| areas[e]).sum();
        for &e in kept {
            design[e] = true;
        }
        let refill = prefix(order.iter().copied().filter(|&e| current[e]), areas, target_area, kept_area);
        for e in refill {
            design[e] = true;
        }
    }
    let last = order.iter().rposition(|&e| design[e]).map_or(0, |r| r + 1);
    let blocked = order[..last].iter().copied().filter(|&e| !design[e]).collect();
    let flips_in = design.iter().zip(current).filter(|(d, c)| **d && !**c).count();
    let flips_out = design.iter().zip(current).filter(|(d, c)| !**d && **c).count();
    Threshold {
        design,
        flips_in,
        flips_out,
        blocked,
    }
}

/// Scheduled area fraction after `from`.
pub fn next_area(from: f64, settings: &BesoSettings) -> f64 {
    if from <= settings.target_area {
        settings.target_area
    } else {
        (from * (1.0 - settings.evolutionary_ratio)).max(settings.target_area)
    }
}

/// Area fractions for iterations `0..count`.
pub fn schedule(settings: &BesoSettings, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    let mut a = 1.0;
    for _ in 0..count {
        out.push(a);
        a = next_area(a, settings);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BesoIteration {
    pub design: Vec<bool>,
    pub scheduled_area: f64,
    pub area_fraction: f64,
    /// Garment strain energy at equilibrium (J).
    pub garment_energy: f64,
    /// Reinforced energy per reinforced rest area (J/m^2).
    pub density: f64,
    /// `density` over its iteration-0 value.
    pub density_norm: f64,
    pub flips_in: usize,
    pub flips_out: usize,
    pub sensitivity_min: f64,
    pub sensitivity_max: f64,
    pub sensitivity_mean: f64,
    pub converged_solve: bool,
    pub solver_iterations: usize,
    pub blocked: Vec<usize>,
    pub filtered: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BesoOutcome {
    Converged,
    MaxIterations,
    Aborted(String),
}

#[derive(Clone, Debug)]
pub struct BesoTrace {
    pub iterations: Vec<BesoIteration>,
    pub outcome: BesoOutcome,
    /// Equilibrium positions for the last recorded design.
    pub final_positions: Vec<Vec3>,
}

impl BesoTrace {
    pub fn final_design(&self) -> Option<&[bool]> {
        self.iterations.last().map(|i| i.design.as_slice())
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("iteration,area_fraction,E_garment,density_norm,flips_in,flips_out\n");
        for (i, it) in self.iterations.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{}",
                it.area_fraction, it.garment_energy, it.density_norm, it.flips_in, it.flips_out
            );
        }
        s
    }

    /// Writes snapshots, `trace.csv`, and the final design and mesh.
    pub fn write_dir(&self, dir: &Path, patch: &GarmentPatch) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: &str| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        for (i, it) in self.iterations.iter().enumerate() {
            write(&format!("iter_{i:04}.labels"), &labels_to_text(&it.design))?;
        }
        write("trace.csv", &self.csv())?;
        if let Some(d) = self.final_design() {
            write("final.labels", &labels_to_text(d))?;
            let mesh = if self.final_positions.len() == patch.vertex_count() {
                patch.mesh().with_vertices(self.final_positions.clone())?
            } else {
                patch.mesh().clone()
            };
            write("final.obj", &mesh.to_obj_string())?;
        }
        Ok(())
    }
}

/// Reinforced strain energy over reinforced rest area.
pub fn reinforced_density(energy: &[f64], areas: &[f64], design: &[bool]) -> f64 {
    let (mut e, mut a) = (0.0, 0.0);
    for ((&en, &ar), &d) in energy.iter().zip(areas).zip(design) {
        if d {
            e += en;
            a += ar;
        }
    }
    if a > 0.0 {
        e / a
    } else {
        0.0
    }
}

/// Target area held for the last `N + 1` iterations with every relative
/// change of the garment energy below `tau`.
fn stable(history: &[BesoIteration], settings: &BesoSettings) -> bool {
    let n = settings.history;
    if history.len() < n + 1 {
        return false;
    }
    let tail = &history[history.len() - n - 1..];
    if tail.iter().any(|it| it.scheduled_area != settings.target_area) {
        return false;
    }
    tail.windows(2).all(|w| {
        let (a, b) = (w[0].garment_energy, w[1].garment_energy);
        let change = if a == b { 0.0 } else { ((b - a) / a).abs() };
        change < settings.tolerance
    })
}

/// Optimises the design of `patch` for the target pose of `poses`. The
/// patch design is reset to fully dense first. Progress callbacks receive
/// each recorded iteration.
pub fn run_beso(
    patch: &GarmentPatch,
    poses: &PoseSequence,
    materials: &MaterialPair,
    solve: &SolveSettings,
    settings: &BesoSettings,
    mut progress: impl FnMut(usize, &BesoIteration),
) -> Result<BesoTrace> {
    settings.validate()?;
    materials.validate()?;
    let pose = poses.target_pose();
    let mut patch = patch.clone();
    patch.set_design(vec![true; patch.element_count()])?;
    let cold = patch.map_to_pose(pose)?;
    let total_area = patch.total_area();
    let cap = settings.admission_cap(patch.element_count());

    let mut iterations: Vec<BesoIteration> = Vec::new();
    let mut warm: Option<Vec<Vec3>> = None;
    let mut previous_filtered: Option<Vec<f64>> = None;
    let mut scheduled = 1.0;
    let mut flips = (0, 0, Vec::new());
    let mut base_density = None;
    let mut last_positions = cold.clone();

    let attempt = |patch: &GarmentPatch, init: Option<&[Vec3]>| -> Result<EquilibriumState> {
        let s = solve_pose(patch, pose, materials, solve, init)?;
        if s.converged {
            Ok(s)
        } else {
            Err(Error::Numerical(format!(
                "equilibrium did not converge ({:?}, gradient {})",
                s.status, s.grad_norm
            )))
        }
    };

    for k in 0..settings.max_iterations {
        let init = if k % settings.reinit_every == 0 { None } else { warm.as_deref() };
        let state = match attempt(&patch, init) {
            Ok(s) => s,
            Err(first) if init.is_some() => match attempt(&patch, None) {
                Ok(s) => s,
                Err(e) => return Ok(aborted(iterations, last_positions, format!("iteration {k}: {first}; cold retry: {e}"))),
            },
            Err(e) => {
                return Ok(aborted(iterations, last_positions, format!("iteration {k}: {e}")));
            }
        };
        let eval = garment_total_energy(&patch, &state.positions, materials)?;
        let density = reinforced_density(&eval.report.energy, patch.areas(), patch.design());
        let base = *base_density.get_or_insert(density);
        let alpha = element_sensitivities(&eval.report.density, patch.design(), materials, settings);
        let filtered = filter_sensitivities(&patch, &alpha, previous_filtered.as_deref());
        let (smin, smax, ssum) = filtered
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(a, b, c), &v| (a.min(v), b.max(v), c + v));

        let it = BesoIteration {
            design: patch.design().to_vec(),
            scheduled_area: scheduled,
            area_fraction: patch.reinforced_area() / total_area,
            garment_energy: eval.energy,
            density,
            density_norm: if base > 0.0 { density / base } else { 1.0 },
            flips_in: flips.0,
            flips_out: flips.1,
            sensitivity_min: smin,
            sensitivity_max: smax,
            sensitivity_mean: ssum / filtered.len() as f64,
            converged_solve: state.converged,
            solver_iterations: state.iterations,
            blocked: std::mem::take(&mut flips.2),
            filtered: filtered.clone(),
        };
        progress(k, &it);
        iterations.push(it);
        last_positions = state.positions.clone();
        warm = Some(state.positions);

        if stable(&iterations, settings) {
            return Ok(BesoTrace {
                iterations,
                outcome: BesoOutcome::Converged,
                final_positions: last_positions,
            });
        }
        scheduled = next_area(scheduled, settings);
        let th = apply_threshold(&filtered, patch.areas(), scheduled * total_area, patch.design(), cap);
        flips = (th.flips_in, th.flips_out, th.blocked);
        patch.set_design(th.design)?;
        previous_filtered = Some(filtered);
    }
    Ok(BesoTrace {
        iterations,
        outcome: BesoOutcome::MaxIterations,
        final_positions: last_positions,
    })
}

fn aborted(iterations: Vec<BesoIteration>, positions: Vec<Vec3>, reason: String) -> BesoTrace {
    BesoTrace {
        iterations,
        outcome: BesoOutcome::Aborted(reason),
        final_positions: positions,
    }
}

pub fn labels_to_text(design: &[bool]) -> String {
    let mut s = String::with_capacity(design.len() * 6);
    for (i, &d) in design.iter().enumerate() {
        let _ = writeln!(s, "{i} {}", d as u8);
    }
    s
}

/// Reads `index value` lines; every element must appear exactly once.
pub fn parse_labels(text: &str, elements: usize, path: &Path) -> Result<Vec<bool>> {
    let mut out: Vec<Option<bool>> = vec![None; elements];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(i), Some(v), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(path, ln + 1, "expected 'index value'"));
        };
        let i: usize = i.parse().map_err(|_| Error::parse(path, ln + 1, format!("bad index '{i}'")))?;
        let v = match v {
            "0" => false,
            "1" => true,
            _ => return Err(Error::parse(path, ln + 1, format!("label must be 0 or 1, got '{v}'"))),
        };
        if i >= elements {
            return Err(Error::parse(path, ln + 1, format!("element {i} out of range ({elements} elements)")));
        }
        if out[i].replace(v).is_some() {
            return Err(Error::parse(path, ln + 1, format!("element {i} labelled twice")));
        }
    }
    match out.iter().position(Option::is_none) {
        Some(i) => Err(Error::parse(path, 0, format!("element {i} has no label ({elements} expected)"))),
        None => Ok(out.into_iter().map(Option::unwrap).collect()),
    }
}

pub fn load_labels(path: &Path, elements: usize) -> Result<Vec<bool>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, elements, path)
}

/// Boundary loops of a patch as vertex cycles.
pub fn boundary_loops(patch: &GarmentPatch) -> Vec<Vec<usize>> {
    use std::collections::BTreeMap;
    let mut count: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for t in patch.elements() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *count.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }
    let mut next: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&[a, b], &c) in &count {
        if c == 1 {
            next.entry(a).or_default().push(b);
            next.entry(b).or_default().push(a);
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut loops = Vec::new();
    for &start in next.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut cycle = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &next[&v] {
                if seen.insert(w) {
                    cycle.push(w);
                    queue.push_back(w);
                }
            }
        }
        loops.push(cycle);
    }
    loops
}

/// True when the reinforced elements separate the two boundary loops of an
/// annular patch, i.e. a closed reinforced band goes around it. Patches
/// without exactly two boundary loops never have one.
pub fn has_encircling_band(patch: &GarmentPatch, design: &[bool]) -> bool {
    let loops = boundary_loops(patch);
    if loops.len() != 2 {
        return false;
    }
    let mut side = vec![0u8; patch.vertex_count()];
    for &v in &loops[0] {
        side[v] = 1;
    }
    for &v in &loops[1] {
        side[v] = 2;
    }
    // cloth elements connect through shared vertices, so a reinforced band
    // must be edge-connected to separate them
    let vertex_faces = patch.mesh().vertex_faces();
    let elements = patch.elements();
    let mut visited = vec![false; elements.len()];
    let mut queue = VecDeque::new();
    for (e, t) in elements.iter().enumerate() {
        if !design[e] && t.iter().any(|&v| side[v] == 1) {
            visited[e] = true;
            queue.push_back(e);
        }
    }
    while let Some(e) = queue.pop_front() {
        if elements[e].iter().any(|&v| side[v] == 2) {
            return false;
        }
        for &v in &elements[e] {
            for &f in &vertex_faces[v] {
                if !design[f] && !visited[f] {
                    visited[f] = true;
                    queue.push_back(f);
                }
            }
        }
    }
    true
}
