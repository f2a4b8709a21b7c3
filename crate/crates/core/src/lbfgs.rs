//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Convergence is measured by the root-mean-square gradient entry.

use std::collections::VecDeque;

/// Differentiable scalar objective.
pub trait Objective {
    /// Writes the gradient into `grad` and returns the value. Non-finite
    /// values are allowed and make the line search back off.
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F> Objective for F
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsSettings {
    /// RMS gradient at which the run stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub history: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_evals: usize,
    /// Largest coordinate change of the first (or restarted) step.
    pub initial_step: f64,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        LbfgsSettings {
            tolerance: 1e-7,
            max_iterations: 20_000,
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_evals: 30,
            initial_step: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    /// Zero-based index of the objective evaluation that produced this point.
    pub evaluation: usize,
    pub value: f64,
    pub grad_norm: f64,
    /// Euclidean length of the accepted step.
    pub step_length: f64,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
    /// Row 0 is the starting point; one row per accepted step after that.
    pub log: Vec<IterationLog>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

pub fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (dot(v, v) / v.len() as f64).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: returns `-H g`.
fn direction(history: &VecDeque<Pair>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; history.len()];
    for (i, p) in history.iter().enumerate().rev() {
        alpha[i] = p.rho * dot(&p.s, &q);
        for (qk, yk) in q.iter_mut().zip(&p.y) {
            *qk -= alpha[i] * yk;
        }
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, p) in history.iter().enumerate() {
        let beta = p.rho * dot(&p.y, &q);
        for (qk, sk) in q.iter_mut().zip(&p.s) {
            *qk += (alpha[i] - beta) * sk;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Relative objective change treated as rounding noise.
const ROUNDING: f64 = 1e-12;

struct Trial {
    eval: usize,
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct LineSearch<'a, O: Objective> {
    obj: &'a mut O,
    x0: &'a [f64],
    p: &'a [f64],
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evals: usize,
    max_evals: usize,
    offset: usize,
}

impl<O: Objective> LineSearch<'_, O> {
    fn probe(&mut self, alpha: f64) -> Trial {
        self.evals += 1;
        let x: Vec<f64> = self.x0.iter().zip(self.p).map(|(a, b)| a + alpha * b).collect();
        let mut grad = vec![0.0; x.len()];
        let value = self.obj.eval(&x, &mut grad);
        let slope = dot(&grad, self.p);
        Trial {
            eval: self.offset + self.evals - 1,
            alpha,
            value,
            slope,
            x,
            grad,
        }
    }

    /// Sufficient decrease, or its approximate form once the decrease is
    /// below the rounding level of the objective.
    fn armijo(&self, t: &Trial) -> bool {
        if !t.value.is_finite() {
            return false;
        }
        t.value <= self.f0 + self.c1 * t.alpha * self.slope0
            || (t.value <= self.f0 + ROUNDING * self.f0.abs()
                && t.slope <= (2.0 * self.c1 - 1.0) * self.slope0)
    }

    fn curvature(&self, t: &Trial) -> bool {
        t.slope.abs() <= -self.c2 * self.slope0
    }

    /// Returns an accepted trial (always satisfying sufficient decrease),
    /// or `None` if no decrease was found.
    fn run(&mut self, alpha0: f64) -> Option<Trial> {
        let mut prev = Trial {
            eval: 0,
            alpha: 0.0,
            value: self.f0,
            slope: self.slope0,
            x: self.x0.to_vec(),
            grad: Vec::new(),
        };
        let mut alpha = alpha0;
        let mut first = true;
        while self.evals < self.max_evals {
            let t = self.probe(alpha);
            if !t.value.is_finite() {
                alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
                continue;
            }
            if !self.armijo(&t) || (!first && t.value >= prev.value) {
                return self.zoom(prev, t);
            }
            if self.curvature(&t) {
                return Some(t);
            }
            if t.slope >= 0.0 {
                return self.zoom(t, prev);
            }
            first = false;
            alpha = 2.0 * t.alpha;
            prev = t;
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Option<Trial> {
        while self.evals < self.max_evals {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= 1e-16 * b.max(1e-300) {
                break;
            }
            let mut alpha = cubic_min(&lo, &hi).unwrap_or(0.5 * (lo.alpha + hi.alpha));
            if !(alpha > a + 0.1 * width && alpha < b - 0.1 * width) {
                alpha = 0.5 * (lo.alpha + hi.alpha);
            }
            let t = self.probe(alpha);
            if !self.armijo(&t) || t.value >= lo.value {
                hi = t;
            } else {
                if self.curvature(&t) {
                    return Some(t);
                }
                if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = std::mem::replace(&mut lo, t);
                } else {
                    lo = t;
                }
            }
        }
        (lo.alpha > 0.0).then_some(lo)
    }
}

/// Minimiser of the cubic interpolating value and slope at both ends.
fn cubic_min(a: &Trial, b: &Trial) -> Option<f64> {
    if !(a.value.is_finite() && b.value.is_finite() && a.slope.is_finite() && b.slope.is_finite()) {
        return None;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let denom = b.slope - a.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let alpha = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
    alpha.is_finite().then_some(alpha)
}

pub fn minimize<O: Objective>(obj: &mut O, x0: Vec<f64>, settings: &LbfgsSettings) -> Minimum {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    let mut evaluations = 1;
    let mut gnorm = rms(&g);
    let mut log = vec![IterationLog {
        iteration: 0,
        evaluation: 0,
        value: f,
        grad_norm: gnorm,
        step_length: 0.0,
    }];
    let finish = |x, value, grad_norm, iterations, evaluations, status, log| Minimum {
        x,
        value,
        grad_norm,
        iterations,
        evaluations,
        status,
        log,
    };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(x, f, gnorm, 0, evaluations, Status::NonFinite, log);
    }

    let mut history: VecDeque<Pair> = VecDeque::with_capacity(settings.history);
    let mut fell_back = false;
    for iter in 0..settings.max_iterations {
        if gnorm <= settings.tolerance {
            return finish(x, f, gnorm, iter, evaluations, Status::Converged, log);
        }
        let mut p = direction(&history, &g);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            history.clear();
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }
        let alpha0 = if history.is_empty() {
            (settings.initial_step / amax(&p)).min(1.0)
        } else {
            1.0
        };
        let mut ls = LineSearch {
            obj,
            x0: &x,
            p: &p,
            f0: f,
            slope0: slope,
            c1: settings.c1,
            c2: settings.c2,
            evals: 0,
            max_evals: settings.max_line_evals,
            offset: evaluations,
        };
        let accepted = ls.run(alpha0);
        evaluations += ls.evals;
        let Some(t) = accepted else {
            if history.is_empty() || fell_back {
                return finish(x, f, gnorm, iter, evaluations, Status::LineSearchFailed, log);
            }
            // one steepest-descent retry with a fresh history
            history.clear();
            fell_back = true;
            continue;
        };
        fell_back = false;
        let s: Vec<f64> = t.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == settings.history {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        let step_length = t.alpha * dot(&p, &p).sqrt();
        x = t.x;
        g = t.grad;
        f = t.value;
        gnorm = rms(&g);
        log.push(IterationLog {
            iteration: iter + 1,
            evaluation: t.eval,
            value: f,
            grad_norm: gnorm,
            step_length,
        });
    }
    let status = if gnorm <= settings.tolerance {
        Status::Converged
    } else {
        Status::MaxIterations
    };
    finish(x, f, gnorm, settings.max_iterations, evaluations, status, log)
}
