//! Smooth unconstrained minimization for the regression fits.
//!
//! A limited-memory BFGS with Armijo backtracking. The regression
//! objectives here (multinomial and proportional-odds log likelihoods with
//! optional ridge terms) are smooth and convex or near-convex in a few
//! dozen parameters, which is squarely inside L-BFGS territory; nothing
//! fancier is warranted.

use crate::error::Error;
use crate::Result;

/// A differentiable objective to minimize.
pub trait Objective {
    /// Number of free parameters.
    fn dim(&self) -> usize;

    /// Returns the objective value at `x` and writes its gradient into
    /// `grad` (which has length `dim`).
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// Optimizer knobs. The defaults fit every regression in this crate.
#[derive(Debug, Clone, Copy)]
pub struct OptimOptions {
    /// Hard iteration cap.
    pub max_iters: usize,
    /// Stop when the gradient max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective improvement falls below this.
    pub f_tol: f64,
    /// Number of curvature pairs kept.
    pub memory: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            f_tol: 1e-10,
            memory: 10,
        }
    }
}

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit or the line search stalled
    /// before any tolerance was met. The returned point is still the best
    /// one seen.
    pub converged: bool,
    /// Objective value at the start and after each accepted step; strictly
    /// decreasing by the Armijo condition.
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes `obj` starting from `x0`.
///
/// Fails if the starting point is outside the objective's domain (the
/// value or gradient is non-finite there) or dimensions disagree.
pub fn minimize(
    obj: &dyn Objective,
    x0: &[f64],
    opts: &OptimOptions,
) -> Result<OptimResult> {
    let n = obj.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "optimizer start",
            expected: n,
            got: x0.len(),
        });
    }

    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut value = obj.eval(&x, &mut grad);
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective at starting point"));
    }

    let mut trace = vec![value];

    // Curvature history for the two-loop recursion.
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let mut direction = vec![0.0; n];
    let mut new_grad = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        if max_norm(&grad) < opts.grad_tol {
            converged = true;
            break;
        }

        // Two-loop recursion: direction = -H * grad.
        direction.copy_from_slice(&grad);
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = rho_hist[i] * dot(&s_hist[i], &direction);
            for (d, y) in direction.iter_mut().zip(&y_hist[i]) {
                *d -= alpha[i] * y;
            }
        }
        if k > 0 {
            let last = k - 1;
            let scale = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            for d in direction.iter_mut() {
                *d *= scale;
            }
        }
        for i in 0..k {
            let beta = rho_hist[i] * dot(&y_hist[i], &direction);
            for (d, s) in direction.iter_mut().zip(&s_hist[i]) {
                *d += (alpha[i] - beta) * s;
            }
        }
        for d in direction.iter_mut() {
            *d = -*d;
        }

        let mut descent = dot(&grad, &direction);
        if !descent.is_finite() || descent >= 0.0 {
            // History produced a bad direction; fall back to steepest descent.
            for (d, g) in direction.iter_mut().zip(&grad) {
                *d = -g;
            }
            descent = -dot(&grad, &grad);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Armijo backtracking. On the very first step no curvature scale is
        // available, so normalize to a unit-length move.
        let mut step = if k == 0 {
            1.0 / max_norm(&direction).max(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        let mut new_x = x.clone();
        let mut new_value = value;
        for _ in 0..50 {
            for (nx, (xi, di)) in new_x.iter_mut().zip(x.iter().zip(&direction)) {
                *nx = xi + step * di;
            }
            new_value = obj.eval(&new_x, &mut new_grad);
            if new_value.is_finite()
                && new_grad.iter().all(|g| g.is_finite())
                && new_value <= value + 1e-4 * step * descent
            {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No productive step exists at f64 resolution; report the best
            // point found without claiming convergence unless the gradient
            // already qualifies.
            converged = max_norm(&grad) < opts.grad_tol;
            break;
        }

        // Store the curvature pair when it is numerically meaningful.
        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * max_norm(&s) * max_norm(&y) && sy > 0.0 {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }

        let improvement = (value - new_value) / value.abs().max(1.0);
        x.copy_from_slice(&new_x);
        grad.copy_from_slice(&new_grad);
        value = new_value;
        trace.push(value);

        if improvement >= 0.0 && improvement < opts.f_tol {
            converged = true;
            break;
        }
    }
    if !converged && max_norm(&grad) < opts.grad_tol {
        converged = true;
    }

    Ok(OptimResult {
        x,
        value,
        iterations,
        converged,
        trace,
    })
}

/// Maximum relative disagreement between the analytic gradient of `obj` at
/// `x` and a central finite-difference estimate.
///
/// A correct gradient implementation lands well below 1e-5 on the smooth
/// objectives in this crate; order-1 values mean a broken derivative.
pub fn check_gradient(obj: &dyn Objective, x: &[f64], eps: f64) -> f64 {
    let n = obj.dim();
    let mut grad = vec![0.0; n];
    obj.eval(x, &mut grad);
    let mut scratch = vec![0.0; n];
    let mut xp = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..n {
        let h = eps * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = obj.eval(&xp, &mut scratch);
        xp[i] = x[i] - h;
        let fm = obj.eval(&xp, &mut scratch);
        xp[i] = x[i];
        let numeric = (fp - fm) / (2.0 * h);
        let denom = numeric.abs().max(grad[i].abs()).max(1.0);
        worst = worst.max((numeric - grad[i]).abs() / denom);
    }
    worst
}
