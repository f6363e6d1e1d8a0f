//! Gauss–Newton and Levenberg–Marquardt on the rotation-only objective.
//!
//! Residuals are written in the body frame, `r_i = Rᵀȳ_i − B̄_i c⋆(R)`,
//! which has the same norm as the world-frame residual for orthogonal `R`
//! and gives the compact Jacobian `J_i = Rᵀ[ȳ_i]× − B̄_i C₁ T(R)` under the
//! left perturbation `R ← exp(δ̂) R`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{invalid, Result};
use crate::model::{Estimate, Precomputed};
use crate::quat::{exp_so3, hat, RotationMatrix};
use crate::scalar::{lit, Real};
use crate::scf::recover;

#[derive(Clone, Debug, PartialEq)]
pub struct GnConfig<T: Real> {
    pub max_iters: usize,
    /// Convergence threshold on `‖δ‖`.
    pub step_tol: T,
    /// Initial Levenberg–Marquardt damping `λ_LM`; zero selects plain
    /// Gauss–Newton.
    pub lm_damping: T,
    pub damping_up: T,
    pub damping_down: T,
}

impl<T: Real> Default for GnConfig<T> {
    fn default() -> Self {
        Self::gauss_newton()
    }
}

impl<T: Real> GnConfig<T> {
    pub fn gauss_newton() -> Self {
        Self {
            max_iters: 50,
            step_tol: lit(1e-10),
            lm_damping: T::zero(),
            damping_up: lit(10.0),
            damping_down: lit(0.1),
        }
    }

    pub fn levenberg_marquardt() -> Self {
        Self {
            lm_damping: lit(1e-3),
            ..Self::gauss_newton()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.step_tol > T::zero()) {
            return Err(invalid("step_tol must be positive"));
        }
        if !(self.lm_damping >= T::zero()) {
            return Err(invalid("lm_damping must be non-negative"));
        }
        if !(self.damping_up > T::one()) || !(self.damping_down > T::zero() && self.damping_down < T::one()) {
            return Err(invalid("damping factors must satisfy up > 1 and 0 < down < 1"));
        }
        Ok(())
    }
}

/// Keypoint residuals `r_i` and shape-prior residual `r_c = √λ c⋆`.
pub fn residuals<T: Real>(pre: &Precomputed<T>, r: &Matrix3<T>) -> (Vec<Vector3<T>>, DVector<T>) {
    let c = pre.optimal_shape(r);
    let rt = r.transpose();
    let ri = pre
        .ybar_i
        .iter()
        .zip(&pre.bbar_i)
        .map(|(y, b)| rt * y - b * &c)
        .collect();
    (ri, c * pre.lambda.sqrt())
}

/// `T = ∂s/∂δ`, row `k` read off the skew part of `R Z_kᵀ`.
fn shape_sensitivity<T: Real>(pre: &Precomputed<T>, r: &Matrix3<T>) -> DMatrix<T> {
    let k = pre.k();
    let mut t = DMatrix::zeros(k, 3);
    for (row, z) in pre.profile.iter().enumerate() {
        let m = r * z.transpose();
        t[(row, 0)] = m[(1, 2)] - m[(2, 1)];
        t[(row, 1)] = m[(2, 0)] - m[(0, 2)];
        t[(row, 2)] = m[(0, 1)] - m[(1, 0)];
    }
    t
}

/// Jacobians of `r_i` (3×3 each) and `r_c` (K×3) with respect to the left
/// perturbation `δ`.
pub fn jacobians<T: Real>(pre: &Precomputed<T>, r: &Matrix3<T>) -> (Vec<Matrix3<T>>, DMatrix<T>) {
    let dc = &pre.c1 * shape_sensitivity(pre, r);
    let rt = r.transpose();
    let ji = pre
        .ybar_i
        .iter()
        .zip(&pre.bbar_i)
        .map(|(y, b)| {
            let coupled = b * &dc;
            rt * hat(y) - Matrix3::from_column_slice(coupled.as_slice())
        })
        .collect();
    (ji, dc * pre.lambda.sqrt())
}

fn sum_of_squares<T: Real>(ri: &[Vector3<T>], rc: &DVector<T>) -> T {
    ri.iter().fold(rc.norm_squared(), |a, v| a + v.norm_squared())
}

/// Gauss–Newton (`lm_damping = 0`) or Levenberg–Marquardt from `r0`.
pub fn gn_solve<T: Real>(pre: &Precomputed<T>, r0: &RotationMatrix<T>, cfg: &GnConfig<T>) -> Result<Estimate<T>> {
    cfg.validate()?;
    let lm = cfg.lm_damping > T::zero();
    let mut damping = cfg.lm_damping;
    let mut r = *r0.matrix();
    let (mut ri, mut rc) = residuals(pre, &r);
    let mut cost = sum_of_squares(&ri, &rc);
    let mut converged = false;
    let mut diagnostic = None;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let (ji, jc) = jacobians(pre, &r);
        let jc_t = jc.transpose();
        let mut h = Matrix3::from_column_slice((&jc_t * &jc).as_slice());
        let mut g = Vector3::from_column_slice((&jc_t * &rc).as_slice());
        for (j, res) in ji.iter().zip(&ri) {
            h += j.transpose() * j;
            g += j.transpose() * res;
        }
        h += Matrix3::identity() * damping;
        let Some(chol) = h.cholesky() else {
            diagnostic = Some("normal matrix H_gn is singular".to_owned());
            break;
        };
        let delta = -chol.solve(&g);
        if delta.norm() < cfg.step_tol {
            converged = true;
            break;
        }
        let candidate = exp_so3(&delta) * r;
        let (cri, crc) = residuals(pre, &candidate);
        let ccost = sum_of_squares(&cri, &crc);
        if lm && !(ccost < cost) {
            damping *= cfg.damping_up;
            continue;
        }
        if lm {
            damping *= cfg.damping_down;
        }
        r = candidate;
        ri = cri;
        rc = crc;
        cost = ccost;
    }

    let q = RotationMatrix::new_unchecked(r).to_quaternion();
    let mut est = recover(pre, &q);
    est.iterations = iterations;
    est.converged = converged;
    if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("reached max_iters = {}", cfg.max_iters));
    }
    est.diagnostic = diagnostic;
    Ok(est)
}
