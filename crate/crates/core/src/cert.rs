//! Global optimality certificates through the orthogonal-matrix relaxation.
//!
//! The rotation-only objective is quadratic in `vec(R)`. Relaxing
//! `R ∈ SO(3)` to `R ∈ O(3)` gives a QCQP in the homogeneous variable
//! `x = [vec(R); 1]` with seven quadratic constraints. A stationary `x`
//! is certified globally optimal when the dual matrix
//! `S = C - Σ λ_i A_i`, with multipliers from the stationarity system
//! `Σ λ_i A_i x = C x`, is positive semidefinite.
//!
//! The homogeneous coordinate is stored **last** (index 9). The constraint
//! triplets below use one-based indices with the homogeneous coordinate at
//! index 1 and consecutive blocks of three addressing the columns (or, in
//! [`ConstraintForm::Rows`], the rows) of `R`; they are remapped on
//! construction.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::Precomputed;
use crate::quat::orthogonality_error;
use crate::scalar::{lit, Real};

pub type Mat10<T> = SMatrix<T, 10, 10>;
pub type Vec10<T> = SVector<T, 10>;

/// Position of the homogeneous coordinate inside `x`.
pub const HOMOGENEOUS_INDEX: usize = 9;
/// Human-readable statement of the `x` layout, included in reports.
pub const X_CONVENTION: &str = "x = [vec(R) column-major; 1], homogeneous coordinate last";

/// Default PSD tolerance on the dual matrix.
pub const DEFAULT_PSD_TOL: f64 = 1e-4;

// (row, col, value), one-based; index 1 is the homogeneous coordinate.
const CONSTRAINT_TRIPLETS: [&[(usize, usize, f64)]; 7] = [
    &[(1, 1, 1.0)],
    &[(2, 2, 1.0), (3, 3, 1.0), (4, 4, 1.0), (1, 1, -1.0)],
    &[(5, 5, 1.0), (6, 6, 1.0), (7, 7, 1.0), (1, 1, -1.0)],
    &[(8, 8, 1.0), (9, 9, 1.0), (10, 10, 1.0), (1, 1, -1.0)],
    &[(2, 5, 1.0), (3, 6, 1.0), (4, 7, 1.0)],
    &[(2, 8, 1.0), (3, 9, 1.0), (4, 10, 1.0)],
    &[(5, 8, 1.0), (6, 9, 1.0), (7, 10, 1.0)],
];
const CONSTRAINT_RHS: [f64; 7] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];

/// Which orthogonality identity the six quadratic constraints encode. Both
/// describe O(3) exactly, but they give different Lagrangian certificates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintForm {
    /// `RᵀR = I`: the triplet blocks address columns of `R` (the published
    /// standard form).
    #[default]
    Columns,
    /// `RRᵀ = I`: the blocks address rows of `R`. Exact for zero-residual
    /// problems, since the body-frame residual `Rᵀȳ_i − B̄_i c` lifts to a
    /// non-negative quadratic that differs from `C` only by `RRᵀ − I` terms.
    Rows,
}

impl ConstraintForm {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintForm::Columns => "columns",
            ConstraintForm::Rows => "rows",
        }
    }
}

impl std::str::FromStr for ConstraintForm {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "columns" | "cols" => Ok(ConstraintForm::Columns),
            "rows" => Ok(ConstraintForm::Rows),
            other => Err(invalid(format!("unknown constraint form '{other}' (expected columns, rows)"))),
        }
    }
}

fn remap(one_based: usize, form: ConstraintForm) -> usize {
    if one_based == 1 {
        return HOMOGENEOUS_INDEX;
    }
    let j = one_based - 2;
    match form {
        ConstraintForm::Columns => j,
        ConstraintForm::Rows => 3 * (j % 3) + j / 3,
    }
}

/// The seven constraint matrices (`x_h = 1` and orthogonality in the given
/// form) and their right-hand sides.
pub fn build_constraints<T: Real>(form: ConstraintForm) -> ([Mat10<T>; 7], [T; 7]) {
    let mats = std::array::from_fn(|i| {
        let mut a = Mat10::zeros();
        for &(j, k, l) in CONSTRAINT_TRIPLETS[i] {
            let (j, k) = (remap(j, form), remap(k, form));
            a[(j, k)] = lit(l);
            a[(k, j)] = lit(l);
        }
        a
    });
    (mats, CONSTRAINT_RHS.map(lit))
}

/// Permutation with `vec(Rᵀ) = P vec(R)`.
pub fn transpose_permutation<T: Real>() -> SMatrix<T, 9, 9> {
    let mut p = SMatrix::zeros();
    for r in 0..3 {
        for c in 0..3 {
            p[(3 * c + r, 3 * r + c)] = T::one();
        }
    }
    p
}

/// `K = Σ_i (ȳ_i ⊗ B̄_i)ᵀ P`, mapping `vec(R)` to `s(R)`.
pub fn kronecker_map<T: Real>(pre: &Precomputed<T>) -> DMatrix<T> {
    let k = pre.k();
    let p = DMatrix::from_column_slice(9, 9, transpose_permutation::<T>().as_slice());
    let mut sum: DMatrix<T> = DMatrix::zeros(9, k);
    for (y, b) in pre.ybar_i.iter().zip(&pre.bbar_i) {
        let y = DMatrix::from_column_slice(3, 1, y.as_slice());
        let b = DMatrix::from_column_slice(3, k, b.as_slice());
        sum += y.kronecker(&b);
    }
    sum.transpose() * p
}

/// Objective matrix `C = [[F, g], [gᵀ, 0]]` with
/// `xᵀ C x = objective_rot(R) - const_term`.
pub fn build_objective<T: Real>(pre: &Precomputed<T>) -> Mat10<T> {
    let kmat = kronecker_map(pre);
    let (c1, c2, b2, lambda) = (&pre.c1, &pre.c2, &pre.bhat2, pre.lambda);
    let two = lit::<T>(2.0);
    let quad = c1 * b2 * c1 - c1 * two + c1 * c1 * lambda;
    let lin: DVector<T> = c1 * (b2 * c2) - c2 + c1 * c2 * lambda;
    let f = kmat.transpose() * quad * &kmat;
    let g = kmat.transpose() * lin;
    let mut c = Mat10::zeros();
    for i in 0..9 {
        for j in 0..9 {
            c[(i, j)] = (f[(i, j)] + f[(j, i)]) * lit(0.5);
        }
        c[(i, HOMOGENEOUS_INDEX)] = g[i];
        c[(HOMOGENEOUS_INDEX, i)] = g[i];
    }
    c
}

/// Homogeneous lift `[vec(R); 1]`.
pub fn lift<T: Real>(r: &Matrix3<T>) -> Vec10<T> {
    let mut x = Vec10::zeros();
    x.fixed_rows_mut::<9>(0).copy_from_slice(r.as_slice());
    x[HOMOGENEOUS_INDEX] = T::one();
    x
}

/// Quadratic program in standard form, built once per problem.
#[derive(Clone, Debug)]
pub struct StandardForm<T: Real> {
    pub form: ConstraintForm,
    pub c: Mat10<T>,
    pub constraints: [Mat10<T>; 7],
    pub b: [T; 7],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Certified,
    NotCertified,
    StationarityFailed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate<T: Real> {
    pub multipliers: [T; 7],
    pub s: Mat10<T>,
    pub min_eig_s: T,
    pub stationarity_residual: T,
    pub verdict: Verdict,
    pub form: ConstraintForm,
}

impl<T: Real> Certificate<T> {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

impl<T: Real> StandardForm<T> {
    pub fn new(pre: &Precomputed<T>) -> Self {
        Self::with_form(pre, ConstraintForm::default())
    }

    pub fn with_form(pre: &Precomputed<T>, form: ConstraintForm) -> Self {
        let (constraints, b) = build_constraints(form);
        Self {
            form,
            c: build_objective(pre),
            constraints,
            b,
        }
    }

    /// Least-squares multipliers for `Σ λ_i A_i x = C x` and the PSD test
    /// `λ_min(S) ≥ -psd_tol · max(1, ‖S‖₂)`.
    pub fn certify(&self, r: &Matrix3<T>, psd_tol: T) -> Result<Certificate<T>> {
        if !(orthogonality_error(r) <= lit(1e-8)) {
            return Err(invalid("certificate requires an orthogonal rotation estimate"));
        }
        let x = lift(r);
        let mut system = SMatrix::<T, 10, 7>::zeros();
        for (i, a) in self.constraints.iter().enumerate() {
            system.set_column(i, &(a * x));
        }
        let cx = self.c * x;
        let qr = system.qr();
        let rhs = qr.q().transpose() * cx;
        let sol = qr
            .r()
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| invalid("constraint gradients are rank deficient"))?;
        let multipliers: [T; 7] = std::array::from_fn(|i| sol[i]);
        let stationarity_residual = (system * sol - cx).norm();

        let mut s = self.c;
        for (a, l) in self.constraints.iter().zip(&multipliers) {
            s -= a * *l;
        }
        let eig = SymmetricEigen::new(s).eigenvalues;
        let min_eig_s = eig.min();
        let s_norm = eig.amax();

        let verdict = if stationarity_residual > lit::<T>(1e-6) * cx.norm().max(T::one()) {
            Verdict::StationarityFailed
        } else if min_eig_s >= -psd_tol * s_norm.max(T::one()) {
            Verdict::Certified
        } else {
            Verdict::NotCertified
        };
        Ok(Certificate {
            multipliers,
            s,
            min_eig_s,
            stationarity_residual,
            verdict,
            form: self.form,
        })
    }
}

/// Builds the default standard form for `pre` and certifies the rotation `r`.
pub fn certify<T: Real>(pre: &Precomputed<T>, r: &Matrix3<T>, psd_tol: T) -> Result<Certificate<T>> {
    StandardForm::new(pre).certify(r, psd_tol)
}

pub fn certify_with<T: Real>(
    pre: &Precomputed<T>,
    r: &Matrix3<T>,
    psd_tol: T,
    form: ConstraintForm,
) -> Result<Certificate<T>> {
    StandardForm::with_form(pre, form).certify(r, psd_tol)
}
