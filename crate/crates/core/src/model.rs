//! Shape-and-pose problem data and the closed-form eliminations.
//!
//! Keypoints obey `y_i = R B_i c + p + ε_i` with `ε_i ~ N(0, w_i⁻¹ I)`.
//! Position and shape are eliminated in closed form for a fixed rotation,
//! which leaves a rotation-only objective. [`Precomputed`] caches every
//! rotation-independent quantity needed to evaluate that objective, its
//! quaternion quartic form, and the nonlinear eigenproblem data matrices.
//!
//! Centered measurements carry the square-root weight:
//! `ȳ_i = √w_i (y_i - ȳ)` and `B̄_i = √w_i (B_i - B̄)`, so that
//! `Σ‖ȳ_i - R B̄_i c‖²` is exactly the weighted residual after the optimal
//! translation has been substituted.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix3xX, Matrix4, SMatrix, SymmetricEigen, Vector3};

use crate::error::{invalid, Error, Result};
use crate::quat::{omega1, omega2, product_form, RotationMatrix, UnitQuaternion};
use crate::scalar::{lit, to_f64, Real};

/// Largest accepted condition number of `H = B̂² + λI`.
pub const MAX_CONDITION: f64 = 1e12;

/// Keypoint measurements together with the active shape library.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeProblem<T: Real> {
    keypoints: Vec<Vector3<T>>,
    library: Vec<Matrix3xX<T>>,
    weights: Vec<T>,
    lambda: T,
}

impl<T: Real> ShapeProblem<T> {
    /// Builds and validates a problem.
    ///
    /// `library[i]` is the 3×K matrix whose column `k` is keypoint `i` on
    /// library shape `k`. Weights default to one. Rejects fewer than three
    /// keypoints, colinear keypoints, and `N < K` without regularization.
    pub fn new(
        keypoints: Vec<Vector3<T>>,
        library: Vec<Matrix3xX<T>>,
        weights: Option<Vec<T>>,
        lambda: T,
    ) -> Result<Self> {
        let problem = Self::new_unvalidated(keypoints, library, weights, lambda)?;
        let (n, k) = (problem.n(), problem.k());
        if n < 3 {
            return Err(invalid(format!("need at least 3 keypoints, got {n}")));
        }
        if problem.lambda == T::zero() && n < k {
            return Err(invalid(format!(
                "N = {n} < K = {k} requires lambda > 0 to regularize the shape"
            )));
        }
        if keypoints_colinear(&problem.keypoints) {
            return Err(invalid("keypoints are colinear; rotation is not observable"));
        }
        Ok(problem)
    }

    /// Builds a problem with only structural checks (matching sizes, finite
    /// values, positive weights, non-negative `lambda`). Degenerate keypoint
    /// geometry is accepted; conditioning of `H` is still enforced by
    /// [`Precomputed::new`].
    pub fn new_unvalidated(
        keypoints: Vec<Vector3<T>>,
        library: Vec<Matrix3xX<T>>,
        weights: Option<Vec<T>>,
        lambda: T,
    ) -> Result<Self> {
        let n = keypoints.len();
        if n == 0 {
            return Err(invalid("problem has no keypoints"));
        }
        if library.len() != n {
            return Err(invalid(format!(
                "library has {} entries for {n} keypoints",
                library.len()
            )));
        }
        let k = library[0].ncols();
        if k == 0 {
            return Err(invalid("shape library must have at least one shape"));
        }
        if library.iter().any(|b| b.ncols() != k) {
            return Err(invalid("every library matrix must have the same number of columns"));
        }
        let weights = weights.unwrap_or_else(|| vec![T::one(); n]);
        if weights.len() != n {
            return Err(invalid(format!("{} weights for {n} keypoints", weights.len())));
        }
        if weights.iter().any(|w| !(*w > T::zero()) || !w.is_finite()) {
            return Err(invalid("weights must be positive and finite"));
        }
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(invalid("lambda must be non-negative and finite"));
        }
        let finite = keypoints.iter().all(|y| y.iter().all(|v| v.is_finite()))
            && library.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(invalid("keypoints and library must be finite"));
        }
        Ok(Self {
            keypoints,
            library,
            weights,
            lambda,
        })
    }

    pub fn n(&self) -> usize {
        self.keypoints.len()
    }

    pub fn k(&self) -> usize {
        self.library[0].ncols()
    }

    pub fn keypoints(&self) -> &[Vector3<T>] {
        &self.keypoints
    }

    pub fn library(&self) -> &[Matrix3xX<T>] {
        &self.library
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Copy of the problem with every keypoint moved by `rotation · y + offset`.
    pub fn transformed(&self, rotation: &Matrix3<T>, offset: &Vector3<T>) -> Self {
        let mut out = self.clone();
        for y in &mut out.keypoints {
            *y = rotation * *y + offset;
        }
        out
    }
}

fn keypoints_colinear<T: Real>(keypoints: &[Vector3<T>]) -> bool {
    let n = lit::<T>(keypoints.len() as f64);
    let mean = keypoints.iter().fold(Vector3::zeros(), |acc, y| acc + y) / n;
    let scatter = keypoints.iter().fold(Matrix3::zeros(), |acc, y| {
        let d = y - mean;
        acc + d * d.transpose()
    });
    let mut sv: Vec<T> = SymmetricEigen::new(scatter)
        .eigenvalues
        .iter()
        .map(|e| e.max(T::zero()).sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    !(sv[1] > sv[0] * lit(1e-9))
}

/// Rotation-independent quantities derived from a [`ShapeProblem`].
#[derive(Clone, Debug)]
pub struct Precomputed<T: Real> {
    problem: ShapeProblem<T>,
    /// Effective per-keypoint weights (problem weights times any extra factors).
    pub weights: Vec<T>,
    pub lambda: T,
    pub ybar: Vector3<T>,
    pub bbar: Matrix3xX<T>,
    pub ybar_i: Vec<Vector3<T>>,
    pub bbar_i: Vec<Matrix3xX<T>>,
    pub bhat2: DMatrix<T>,
    pub h: DMatrix<T>,
    pub c1: DMatrix<T>,
    pub c2: DVector<T>,
    /// `I - C₁B̂² - λC₁`, a K×K matrix.
    pub cdelta: DMatrix<T>,
    pub d: Matrix4<T>,
    pub const_term: T,
    /// `Z_k = Σ_i ȳ_i (B̄_i e_k)ᵀ`, so that `s_k(R) = ⟨R, Z_k⟩`.
    pub profile: Vec<Matrix3<T>>,
    /// `(I + C_δ) C₁`, the shape coupling inside `A(qqᵀ)`.
    pub a_coeff: DMatrix<T>,
    /// Linear map `vec(R) ↦ vec(Σ_k ((I + C_δ)C₁ s(R))_k Z_k)`.
    quad_map: SMatrix<T, 9, 9>,
}

impl<T: Real> Precomputed<T> {
    pub fn new(problem: &ShapeProblem<T>) -> Result<Self> {
        Self::build(problem, problem.weights.clone())
    }

    /// Precomputes with the problem weights multiplied by `factors`
    /// (non-negative). Used by robust reweighting; zero factors remove a
    /// keypoint from the fit.
    pub fn with_weight_factors(problem: &ShapeProblem<T>, factors: &[T]) -> Result<Self> {
        if factors.len() != problem.n() {
            return Err(invalid("one weight factor per keypoint required"));
        }
        if factors.iter().any(|f| !(*f >= T::zero()) || !f.is_finite()) {
            return Err(invalid("weight factors must be non-negative and finite"));
        }
        let weights = problem
            .weights
            .iter()
            .zip(factors)
            .map(|(w, f)| *w * *f)
            .collect();
        Self::build(problem, weights)
    }

    fn build(problem: &ShapeProblem<T>, weights: Vec<T>) -> Result<Self> {
        let n = problem.n();
        let k = problem.k();
        let lambda = problem.lambda;
        let wsum = weights.iter().fold(T::zero(), |a, w| a + *w);
        if !(wsum > T::zero()) {
            return Err(Error::NoInliers);
        }

        let mut ybar = Vector3::zeros();
        let mut bbar = Matrix3xX::zeros(k);
        for ((y, b), w) in problem.keypoints.iter().zip(&problem.library).zip(&weights) {
            ybar += y * *w;
            bbar += b * *w;
        }
        ybar /= wsum;
        bbar /= wsum;

        let mut ybar_i = Vec::with_capacity(n);
        let mut bbar_i = Vec::with_capacity(n);
        for ((y, b), w) in problem.keypoints.iter().zip(&problem.library).zip(&weights) {
            let sw = w.sqrt();
            ybar_i.push((y - ybar) * sw);
            bbar_i.push((b - &bbar) * sw);
        }

        let mut bhat2 = DMatrix::zeros(k, k);
        for b in &bbar_i {
            bhat2 += b.transpose() * b;
        }
        symmetrize(&mut bhat2);
        let h = &bhat2 + DMatrix::identity(k, k) * lambda;

        let eig = SymmetricEigen::new(h.clone()).eigenvalues;
        let emin = eig.min();
        let emax = eig.max();
        let condition = if emin > T::zero() {
            to_f64(emax / emin)
        } else {
            f64::INFINITY
        };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        let hinv = h
            .clone()
            .cholesky()
            .ok_or(Error::IllConditioned { condition })?
            .inverse();

        let ones = DVector::from_element(k, T::one());
        let hinv1 = &hinv * &ones;
        let denom = ones.dot(&hinv1);
        let c2 = &hinv1 / denom;
        let mut c1 = &hinv - &hinv1 * hinv1.transpose() / denom;
        symmetrize(&mut c1);

        let eye = DMatrix::<T>::identity(k, k);
        let cdelta = &eye - &c1 * &bhat2 - &c1 * lambda;
        let shape_offset = &cdelta * &c2;

        let mut d = Matrix4::zeros();
        for i in 0..n {
            let u: Vector3<T> = &bbar_i[i] * &shape_offset;
            d += omega1(&ybar_i[i]) * omega2(&u);
        }
        d = (d + d.transpose()) * lit::<T>(0.5);

        let const_term = ybar_i.iter().fold(T::zero(), |a, y| a + y.norm_squared())
            + c2.dot(&(&bhat2 * &c2))
            + c2.norm_squared() * lambda;

        let profile: Vec<Matrix3<T>> = (0..k)
            .map(|col| {
                let mut z = Matrix3::zeros();
                for i in 0..n {
                    let b: Vector3<T> = bbar_i[i].column(col).into_owned();
                    z += ybar_i[i] * b.transpose();
                }
                z
            })
            .collect();

        let a_coeff = (&eye + &cdelta) * &c1;
        let mut quad_map = SMatrix::<T, 9, 9>::zeros();
        for l in 0..k {
            let mut w = Matrix3::zeros();
            for kk in 0..k {
                w += profile[kk] * a_coeff[(kk, l)];
            }
            let wv = SMatrix::<T, 9, 1>::from_column_slice(w.as_slice());
            let zv = SMatrix::<T, 9, 1>::from_column_slice(profile[l].as_slice());
            quad_map += wv * zv.transpose();
        }

        Ok(Self {
            problem: ShapeProblem {
                weights: weights.clone(),
                ..problem.clone()
            },
            weights,
            lambda,
            ybar,
            bbar,
            ybar_i,
            bbar_i,
            bhat2,
            h,
            c1,
            c2,
            cdelta,
            d,
            const_term,
            profile,
            a_coeff,
            quad_map,
        })
    }

    /// The source problem carrying the effective weights.
    pub fn problem(&self) -> &ShapeProblem<T> {
        &self.problem
    }

    pub fn n(&self) -> usize {
        self.ybar_i.len()
    }

    pub fn k(&self) -> usize {
        self.c2.len()
    }

    /// `s(R) = Σ_j B̄_jᵀ Rᵀ ȳ_j`. Any 3×3 matrix is accepted, so reflections
    /// can be evaluated as well.
    pub fn s_vector(&self, r: &Matrix3<T>) -> DVector<T> {
        DVector::from_iterator(self.profile.len(), self.profile.iter().map(|z| z.dot(r)))
    }

    /// `c⋆(R) = C₁ s(R) + c₂`.
    pub fn optimal_shape(&self, r: &Matrix3<T>) -> DVector<T> {
        &self.c1 * self.s_vector(r) + &self.c2
    }

    /// `p⋆(R, c) = ȳ - R B̄ c`.
    pub fn optimal_position(&self, r: &Matrix3<T>, c: &DVector<T>) -> Vector3<T> {
        self.ybar - r * (&self.bbar * c)
    }

    /// Shape-coupled quartic part `A(qqᵀ)` of the data matrix.
    pub fn a_matrix(&self, q: &UnitQuaternion<T>) -> Matrix4<T> {
        self.a_matrix_rot(q.to_rotation_matrix().matrix())
    }

    pub(crate) fn a_matrix_rot(&self, r: &Matrix3<T>) -> Matrix4<T> {
        let rv = SMatrix::<T, 9, 1>::from_column_slice(r.as_slice());
        let zv = self.quad_map * rv;
        product_form(&Matrix3::from_column_slice(zv.as_slice()))
    }

    /// `A(qqᵀ) + D`, whose minimum eigenpair drives the fixed-point update.
    pub fn data_matrix(&self, q: &UnitQuaternion<T>) -> Matrix4<T> {
        self.a_matrix(q) + self.d
    }

    /// Rotation-only objective `Σ‖ȳ_i - R B̄_i c⋆‖² + λ‖c⋆‖²`.
    pub fn objective_rot(&self, r: &Matrix3<T>) -> T {
        let c = self.optimal_shape(r);
        let mut total = c.norm_squared() * self.lambda;
        for (y, b) in self.ybar_i.iter().zip(&self.bbar_i) {
            total += (y - r * (b * &c)).norm_squared();
        }
        total
    }

    /// `qᵀ(2D + A(qqᵀ))q`; equals `objective_rot(R(q)) - const_term`.
    pub fn objective_quartic(&self, q: &UnitQuaternion<T>) -> T {
        let m = self.a_matrix(q) + self.d * lit::<T>(2.0);
        let v = q.coords();
        v.dot(&(m * v))
    }
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = lit::<T>(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Shape, pose, and solver diagnostics for one solve.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate<T: Real> {
    pub q: UnitQuaternion<T>,
    pub r: RotationMatrix<T>,
    pub p: Vector3<T>,
    pub c: DVector<T>,
    pub objective: T,
    /// Minimum eigenvalue of the data matrix at the returned iterate
    /// (zero for solvers that do not compute it).
    pub mu: T,
    pub iterations: usize,
    pub converged: bool,
    pub certified: Option<bool>,
    pub diagnostic: Option<String>,
}

impl<T: Real> Estimate<T> {
    /// Whether the recovered shape lies in `[0, 1]^K` (the box constraint is
    /// dropped during solving).
    pub fn shape_in_box(&self) -> bool {
        let eps = lit::<T>(1e-9);
        self.c.iter().all(|v| *v >= -eps && *v <= T::one() + eps)
    }
}

/// Weighted MAP objective `Σ w_i ‖y_i - R B_i c - p‖² + λ‖c‖²`.
pub fn objective_full<T: Real>(
    problem: &ShapeProblem<T>,
    r: &Matrix3<T>,
    p: &Vector3<T>,
    c: &DVector<T>,
) -> T {
    let mut total = c.norm_squared() * problem.lambda;
    for ((y, b), w) in problem
        .keypoints
        .iter()
        .zip(&problem.library)
        .zip(&problem.weights)
    {
        total += (y - r * (b * c) - p).norm_squared() * *w;
    }
    total
}

pub fn precompute<T: Real>(problem: &ShapeProblem<T>) -> Result<Precomputed<T>> {
    Precomputed::new(problem)
}

pub fn optimal_position<T: Real>(pre: &Precomputed<T>, r: &Matrix3<T>, c: &DVector<T>) -> Vector3<T> {
    pre.optimal_position(r, c)
}

pub fn optimal_shape<T: Real>(pre: &Precomputed<T>, r: &Matrix3<T>) -> DVector<T> {
    pre.optimal_shape(r)
}

pub fn s_vector<T: Real>(pre: &Precomputed<T>, r: &Matrix3<T>) -> DVector<T> {
    pre.s_vector(r)
}

pub fn a_matrix<T: Real>(pre: &Precomputed<T>, q: &UnitQuaternion<T>) -> Matrix4<T> {
    pre.a_matrix(q)
}

pub fn objective_rot<T: Real>(pre: &Precomputed<T>, r: &Matrix3<T>) -> T {
    pre.objective_rot(r)
}

pub fn objective_quartic<T: Real>(pre: &Precomputed<T>, q: &UnitQuaternion<T>) -> T {
    pre.objective_quartic(q)
}
