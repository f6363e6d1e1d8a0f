//! Outlier rejection by graduated non-convexity over a truncated
//! least-squares cost.
//!
//! Each outer step fits the weighted problem with the inner solver, then
//! updates per-keypoint weights in closed form from the squared residuals
//! `‖y_i − R B_i c − p‖²`. The control parameter `μ` starts near the
//! convex surrogate and grows by `mu_update` until every weight is within
//! `weight_tol` of 0 or 1.

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{invalid, Error, Result};
use crate::model::{Estimate, Precomputed, ShapeProblem};
use crate::scalar::{lit, Real};
use crate::scf::ScfInit;
use crate::solver::{solve, Solver, SolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct GncConfig<T: Real> {
    /// Inlier threshold `c̄²` on squared residuals (m²).
    pub cbar2: T,
    pub mu_update: T,
    /// Maximum number of outer iterations.
    pub max_iters: usize,
    /// Weights within this distance of 0 or 1 count as binary.
    pub weight_tol: T,
    pub inner: Solver,
    pub solver: SolverConfig<T>,
}

impl<T: Real> GncConfig<T> {
    pub fn new(cbar2: T) -> Self {
        Self {
            cbar2,
            mu_update: lit(1.4),
            max_iters: 100,
            weight_tol: lit(1e-3),
            inner: Solver::Scf,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cbar2 > T::zero()) || !self.cbar2.is_finite() {
            return Err(invalid("cbar2 must be positive"));
        }
        if !(self.mu_update > T::one()) {
            return Err(invalid("mu_update must exceed 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("gnc max_iters must be at least 1"));
        }
        if !(self.weight_tol > T::zero() && self.weight_tol < lit(0.5)) {
            return Err(invalid("weight_tol must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GncResult<T: Real> {
    pub estimate: Estimate<T>,
    /// Final weight per keypoint, in `[0, 1]`.
    pub weights: Vec<T>,
    /// Number of inner-solver invocations.
    pub iters: usize,
    pub mu: T,
    /// Whether the weights reached binary values within `max_iters`.
    pub converged: bool,
}

impl<T: Real> GncResult<T> {
    /// Indices with weight above one half.
    pub fn inliers(&self) -> Vec<usize> {
        let half = lit::<T>(0.5);
        (0..self.weights.len()).filter(|i| self.weights[*i] > half).collect()
    }
}

/// Squared residuals `‖y_i − R B_i c − p‖²`.
pub fn squared_residuals<T: Real>(
    problem: &ShapeProblem<T>,
    r: &Matrix3<T>,
    p: &Vector3<T>,
    c: &DVector<T>,
) -> Vec<T> {
    problem
        .keypoints()
        .iter()
        .zip(problem.library())
        .map(|(y, b)| (y - r * (b * c) - p).norm_squared())
        .collect()
}

/// Closed-form truncated least-squares weight for control parameter `mu`.
pub fn tls_weight<T: Real>(r2: T, mu: T, cbar2: T) -> T {
    let one = T::one();
    if r2 >= (mu + one) / mu * cbar2 {
        T::zero()
    } else if r2 <= mu / (mu + one) * cbar2 {
        one
    } else {
        ((cbar2 * mu * (mu + one) / r2).sqrt() - mu).max(T::zero()).min(one)
    }
}

/// GNC surrogate `Σ w_i r_i² + μ(1 − w_i)/(μ + w_i) c̄²`. The weight rule
/// minimizes it over each `w_i` for fixed residuals.
pub fn tls_surrogate<T: Real>(r2: &[T], weights: &[T], mu: T, cbar2: T) -> T {
    r2.iter().zip(weights).fold(T::zero(), |acc, (r, w)| {
        acc + *w * *r + mu * (T::one() - *w) / (mu + *w) * cbar2
    })
}

fn inner_solve<T: Real>(
    problem: &ShapeProblem<T>,
    weights: &[T],
    cfg: &SolverConfig<T>,
    inner: Solver,
) -> Result<Estimate<T>> {
    let positive = weights.iter().filter(|w| **w > T::zero()).count();
    if positive < 3 {
        return Err(Error::NoInliers);
    }
    let pre = Precomputed::with_weight_factors(problem, weights)?;
    solve(&pre, inner, cfg)
}

pub fn gnc_solve<T: Real>(problem: &ShapeProblem<T>, cfg: &GncConfig<T>) -> Result<GncResult<T>> {
    gnc_solve_masked(problem, cfg, None)
}

/// GNC with an optional pre-mask: keypoints whose mask entry is `false` are
/// fixed at weight zero throughout (for composing external filters).
pub fn gnc_solve_masked<T: Real>(
    problem: &ShapeProblem<T>,
    cfg: &GncConfig<T>,
    mask: Option<&[bool]>,
) -> Result<GncResult<T>> {
    cfg.validate()?;
    let n = problem.n();
    let active: Vec<bool> = match mask {
        Some(m) if m.len() != n => return Err(invalid("mask needs one entry per keypoint")),
        Some(m) => m.to_vec(),
        None => vec![true; n],
    };
    let mut weights: Vec<T> = active.iter().map(|a| if *a { T::one() } else { T::zero() }).collect();

    let mut solver_cfg = cfg.solver.clone();
    let mut est = inner_solve(problem, &weights, &solver_cfg, cfg.inner)?;
    let mut iters = 1;
    let mut r2 = squared_residuals(problem, est.r.matrix(), &est.p, &est.c);
    let max_r2 = (0..n)
        .filter(|i| active[*i])
        .fold(T::zero(), |m, i| m.max(r2[i]));
    if max_r2 <= cfg.cbar2 {
        return Ok(GncResult {
            estimate: est,
            weights,
            iters,
            mu: T::zero(),
            converged: true,
        });
    }

    let mut mu = cfg.cbar2 / (lit::<T>(2.0) * max_r2 - cfg.cbar2);
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        for i in 0..n {
            if active[i] {
                weights[i] = tls_weight(r2[i], mu, cfg.cbar2);
            }
        }
        // later solves start from the previous rotation
        solver_cfg.scf.init = ScfInit::Quaternion(est.q);
        solver_cfg.scf.multi_start = 1;
        est = inner_solve(problem, &weights, &solver_cfg, cfg.inner)?;
        iters += 1;
        r2 = squared_residuals(problem, est.r.matrix(), &est.p, &est.c);
        let binary = weights
            .iter()
            .all(|w| *w <= cfg.weight_tol || *w >= T::one() - cfg.weight_tol);
        // all-zero weights are binary too, but only mean μ is still small
        let ones = weights.iter().filter(|w| **w >= T::one() - cfg.weight_tol).count();
        if binary && ones >= 3 {
            converged = true;
            break;
        }
        mu *= cfg.mu_update;
    }
    if !converged && weights.iter().filter(|w| **w > lit(0.5)).count() < 3 {
        return Err(Error::NoInliers);
    }
    if !converged {
        est.diagnostic = Some(format!("gnc weights not binary after {} iterations", cfg.max_iters));
    }
    Ok(GncResult {
        estimate: est,
        weights,
        iters,
        mu,
        converged,
    })
}
