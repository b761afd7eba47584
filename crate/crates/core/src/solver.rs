//! L-BFGS with a weak-Wolfe bisection line search that tolerates kinks.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the infinity norm of the gradient falls to this value.
    pub grad_tolerance: f64,
    /// Stop when an accepted step changes the cost by at most this
    /// fraction of its previous value.
    pub rel_cost_tolerance: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_line_search_steps: usize,
    /// When the line search fails, gradients of recent iterates within this
    /// distance (infinity norm) of the current point are pooled; a short
    /// vector in their convex hull counts as stationarity at a kink.
    pub stationarity_radius: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            memory: 8,
            max_iterations: 10_000,
            grad_tolerance: 1e-6,
            rel_cost_tolerance: 1e-8,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_steps: 64,
            stationarity_radius: 1e-6,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.memory >= 1
            && self.max_line_search_steps >= 1
            && 0.0 < self.wolfe_c1
            && self.wolfe_c1 < self.wolfe_c2
            && self.wolfe_c2 < 1.0
            && self.grad_tolerance >= 0.0
            && self.stationarity_radius >= 0.0
            && self.rel_cost_tolerance >= 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("invalid solver parameters: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradTol,
    RelCostTol,
    MaxIter,
    LineSearchFail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub final_cost: f64,
    pub final_grad_norm: f64,
    pub termination: Termination,
    /// Seconds spent inside the objective.
    pub eval_time: f64,
    /// Seconds for the whole run.
    pub total_time: f64,
    /// Cost at `x0` followed by the cost after every accepted step.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Norm of a point of the convex hull of `gs`, from Frank-Wolfe steps.
/// Every iterate lies in the hull, so the result bounds the true minimum
/// norm from above.
fn hull_min_norm(gs: &[&[f64]]) -> f64 {
    let mut v = gs[0].to_vec();
    for _ in 0..200 {
        let (k, _) = gs
            .iter()
            .enumerate()
            .map(|(k, g)| (k, dot(g, &v)))
            .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
        let w: Vec<f64> = gs[k].iter().zip(&v).map(|(a, b)| a - b).collect();
        let ww = dot(&w, &w);
        if ww == 0.0 {
            break;
        }
        let step = (-dot(&v, &w) / ww).clamp(0.0, 1.0);
        if step == 0.0 {
            break;
        }
        v.iter_mut().zip(&w).for_each(|(a, b)| *a += step * b);
    }
    inf_norm(&v)
}

/// `-H g` by the two-loop recursion, with `H0 = γ I`, `γ = sᵀy / yᵀy` from
/// the newest pair.
fn direction(g: &[f64], hist: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alpha = vec![0.0; hist.len()];
    for (k, p) in hist.iter().enumerate().rev() {
        alpha[k] = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= alpha[k] * yi;
        }
    }
    if let Some(p) = hist.back() {
        let gamma = dot(&p.s, &p.y) / dot(&p.y, &p.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (k, p) in hist.iter().enumerate() {
        let beta = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (alpha[k] - beta) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f`, which returns the cost and writes the gradient.
///
/// An infinite cost at a trial point is treated as a failed decrease and
/// the step is shortened; NaN anywhere, or a non-finite cost at `x0`,
/// aborts.
pub fn minimize<F>(f: F, x0: Vec<f64>, params: &SolverParams) -> Result<(Vec<f64>, SolveReport)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    minimize_with(f, x0, params, |_, _, _| {})
}

/// [`minimize`] with a callback invoked after every accepted step as
/// `(iteration, x, cost)`.
pub fn minimize_with<F, C>(mut f: F, x0: Vec<f64>, params: &SolverParams, mut on_step: C) -> Result<(Vec<f64>, SolveReport)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    C: FnMut(usize, &[f64], f64),
{
    params.validate()?;
    let start = Instant::now();
    let n = x0.len();
    let mut eval_time = 0.0;
    let mut evaluations = 0;
    let mut eval = |x: &[f64], g: &mut [f64]| {
        let t = Instant::now();
        let v = f(x, g);
        eval_time += t.elapsed().as_secs_f64();
        evaluations += 1;
        v
    };

    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = eval(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            iteration: 0,
            detail: format!("cost {fx} at the initial point"),
        });
    }
    let mut trace = vec![fx];
    let mut recent: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::with_capacity(params.memory + 1);
    let mut hist: VecDeque<Pair> = VecDeque::with_capacity(params.memory);
    let mut iterations = 0;
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];

    let termination = loop {
        if inf_norm(&g) <= params.grad_tolerance {
            break Termination::GradTol;
        }
        if iterations >= params.max_iterations {
            break Termination::MaxIter;
        }
        let mut d = direction(&g, &hist);
        let mut gd = dot(&g, &d);
        if !(gd < 0.0) {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            gd = dot(&g, &d);
        }
        let mut t = if hist.is_empty() { (1.0 / dot(&g, &g).sqrt()).min(1.0) } else { 1.0 };

        // Bisection / doubling on [lo, hi] until both weak-Wolfe conditions hold.
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut accepted = None;
        let mut best: Option<(f64, f64)> = None;
        for _ in 0..params.max_line_search_steps {
            for i in 0..n {
                xt[i] = x[i] + t * d[i];
            }
            let ft = eval(&xt, &mut gt);
            if ft.is_nan() || (ft.is_finite() && gt.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite {
                    iteration: iterations,
                    detail: format!("cost {ft} at step length {t}"),
                });
            }
            if !(ft <= fx + params.wolfe_c1 * t * gd) {
                hi = t;
            } else {
                if best.map_or(true, |(_, fb)| ft < fb) {
                    best = Some((t, ft));
                }
                if dot(&gt, &d) < params.wolfe_c2 * gd {
                    lo = t;
                } else {
                    accepted = Some(ft);
                    break;
                }
            }
            t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * t };
            if hi.is_finite() && hi - lo <= f64::EPSILON * hi {
                break;
            }
        }

        let ft = match accepted {
            Some(ft) => ft,
            None => {
                // Fall back to the best sufficient-decrease point, if any.
                if let Some((tb, fb)) = best {
                    for i in 0..n {
                        xt[i] = x[i] + tb * d[i];
                    }
                    let _ = eval(&xt, &mut gt);
                    std::mem::swap(&mut x, &mut xt);
                    std::mem::swap(&mut g, &mut gt);
                    fx = fb;
                    iterations += 1;
                    trace.push(fx);
                    on_step(iterations, &x, fx);
                }
                let mut pool: Vec<&[f64]> = vec![&g];
                pool.extend(
                    recent
                        .iter()
                        .filter(|(xr, _)| xr.iter().zip(&x).all(|(a, b)| (a - b).abs() <= params.stationarity_radius))
                        .map(|(_, gr)| gr.as_slice()),
                );
                if pool.len() > 1 && hull_min_norm(&pool) <= params.grad_tolerance {
                    break Termination::GradTol;
                }
                break Termination::LineSearchFail;
            }
        };

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            if hist.len() == params.memory {
                hist.pop_front();
            }
            hist.push_back(Pair { rho: 1.0 / sy, s, y });
        }
        let prev = fx;
        if recent.len() == params.memory + 1 {
            recent.pop_front();
        }
        recent.push_back((x.clone(), g.clone()));
        std::mem::swap(&mut x, &mut xt);
        std::mem::swap(&mut g, &mut gt);
        fx = ft;
        iterations += 1;
        trace.push(fx);
        on_step(iterations, &x, fx);
        if (prev - fx).abs() <= params.rel_cost_tolerance * prev.abs() {
            break Termination::RelCostTol;
        }
    };

    let report = SolveReport {
        iterations,
        evaluations,
        final_cost: fx,
        final_grad_norm: inf_norm(&g),
        termination,
        eval_time,
        total_time: start.elapsed().as_secs_f64(),
        trace,
    };
    Ok((x, report))
}

/// First search direction the solver would take at `x0`.
pub fn first_direction(grad: &[f64]) -> Vec<f64> {
    direction(grad, &VecDeque::new())
}
