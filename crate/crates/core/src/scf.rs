//! Self-consistent field iteration for the nonlinear eigenproblem
//! `(A(qqᵀ) + D) q = μ q`.
//!
//! Each iterate freezes the data matrix at the current quaternion and
//! replaces the quaternion with the minimum eigenvector of that matrix.
//! Iteration stops when consecutive iterates are within `tol` in sine of
//! angle; the earlier of the two is returned.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::model::{objective_full, Estimate, Precomputed};
use crate::quat::{sin_angle, UnitQuaternion};
use crate::scalar::{lit, Real};

/// Where the iteration starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScfInit<T: Real> {
    Identity,
    Quaternion(UnitQuaternion<T>),
    /// Uniformly random rotation drawn from the config seed.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScfConfig<T: Real> {
    /// Termination threshold on `sin∠(q_t, q_{t+1})`.
    pub tol: T,
    pub max_iters: usize,
    pub init: ScfInit<T>,
    /// Number of independent starts; the lowest objective wins. Starts after
    /// the first are random.
    pub multi_start: usize,
    pub seed: u64,
}

impl<T: Real> Default for ScfConfig<T> {
    fn default() -> Self {
        Self {
            tol: lit(1e-9),
            max_iters: 100,
            init: ScfInit::Identity,
            multi_start: 1,
            seed: 0,
        }
    }
}

impl<T: Real> ScfConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(invalid("scf tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("scf max_iters must be at least 1"));
        }
        if self.multi_start == 0 {
            return Err(invalid("multi_start must be at least 1"));
        }
        Ok(())
    }

    /// Initial quaternions, one per start.
    pub fn starts(&self) -> Vec<UnitQuaternion<T>> {
        (0..self.multi_start)
            .map(|m| match (m, self.init) {
                (0, ScfInit::Identity) => UnitQuaternion::identity(),
                (0, ScfInit::Quaternion(q)) => q,
                _ => random_quaternion(self.seed, m as u64),
            })
            .collect()
    }
}

/// Uniform random unit quaternion from the `(seed, stream)` pair.
pub fn random_quaternion<T: Real>(seed: u64, stream: u64) -> UnitQuaternion<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let v = Vector4::new(lit(v[0]), lit(v[1]), lit(v[2]), lit(v[3]));
        if let Ok(q) = UnitQuaternion::new(v) {
            return q;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScfIterate<T: Real> {
    pub q: UnitQuaternion<T>,
    /// Minimum eigenvalue of `A(q_t q_tᵀ) + D`.
    pub mu: T,
    /// `objective_quartic(q_t)`.
    pub objective: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScfStatus {
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScfTrace<T: Real> {
    pub iterates: Vec<ScfIterate<T>>,
    pub status: ScfStatus,
}

/// Minimum eigenpair of a symmetric 4×4 matrix.
///
/// The eigenvector sign maximizes `⟨v, hint⟩` (hint defaults to `e₁`). When
/// the minimum eigenvalue is repeated, the hint is projected onto the
/// eigenspace so the result is the eigenvector closest to the hint.
pub fn min_eigenpair_4x4<T: Real>(
    m: &Matrix4<T>,
    hint: Option<&Vector4<T>>,
) -> Result<(T, Vector4<T>)> {
    let scale = m.amax();
    if (m - m.transpose()).amax() > scale * lit(1e-10) {
        return Err(invalid("eigen kernel requires a symmetric matrix"));
    }
    Ok(extreme_eigenpair(m, hint, false))
}

/// Maximum eigenpair with the same hint rule as [`min_eigenpair_4x4`].
pub fn max_eigenpair_4x4<T: Real>(
    m: &Matrix4<T>,
    hint: Option<&Vector4<T>>,
) -> Result<(T, Vector4<T>)> {
    let scale = m.amax();
    if (m - m.transpose()).amax() > scale * lit(1e-10) {
        return Err(invalid("eigen kernel requires a symmetric matrix"));
    }
    Ok(extreme_eigenpair(m, hint, true))
}

fn extreme_eigenpair<T: Real>(
    m: &Matrix4<T>,
    hint: Option<&Vector4<T>>,
    largest: bool,
) -> (T, Vector4<T>) {
    let hint = hint.copied().unwrap_or_else(|| Vector4::new(T::one(), T::zero(), T::zero(), T::zero()));
    let fast = if largest {
        min_pair_charpoly(&-m).map(|(mu, v)| (-mu, v))
    } else {
        min_pair_charpoly(m)
    };
    let (mu, v) = fast.unwrap_or_else(|| dense_extreme_pair(m, &hint, largest));
    if v.dot(&hint) < T::zero() {
        (mu, -v)
    } else {
        (mu, v)
    }
}

/// Determinant by Laplace expansion over 2×2 minors of the top and bottom
/// row pairs.
fn det4<T: Real>(m: &Matrix4<T>) -> T {
    let s = |i: usize, j: usize| m[(0, i)] * m[(1, j)] - m[(0, j)] * m[(1, i)];
    let c = |i: usize, j: usize| m[(2, i)] * m[(3, j)] - m[(2, j)] * m[(3, i)];
    s(0, 1) * c(2, 3) - s(0, 2) * c(1, 3) + s(0, 3) * c(1, 2) + s(1, 2) * c(0, 3) - s(1, 3) * c(0, 2)
        + s(2, 3) * c(0, 1)
}

/// 4D cross product: the vector orthogonal to `a`, `b`, `c`.
fn cross4<T: Real>(a: &Vector4<T>, b: &Vector4<T>, c: &Vector4<T>) -> Vector4<T> {
    let minor = |i: usize, j: usize, k: usize| {
        a[i] * (b[j] * c[k] - b[k] * c[j]) - a[j] * (b[i] * c[k] - b[k] * c[i]) + a[k] * (b[i] * c[j] - b[j] * c[i])
    };
    Vector4::new(minor(1, 2, 3), -minor(0, 2, 3), minor(0, 1, 3), -minor(0, 1, 2))
}

/// Minimum eigenpair from the characteristic polynomial.
///
/// The smallest root is found by Newton's method from a lower bound, which
/// converges monotonically because every root is real. The eigenvector is
/// the largest column of `adj(M − μI)`. Returns `None` when the smallest
/// eigenvalue is (nearly) repeated, where the adjugate loses accuracy.
fn min_pair_charpoly<T: Real>(m: &Matrix4<T>) -> Option<(T, Vector4<T>)> {
    let shift = m.trace() * lit(0.25);
    let a = m - Matrix4::identity() * shift;
    let p2 = a.norm_squared();
    if !(p2 > T::zero()) || !p2.is_finite() {
        return None;
    }
    let scale = p2.sqrt();
    let p3 = (a * a).component_mul(&a).sum();
    let e2 = -p2 * lit(0.5);
    let e3 = p3 / lit(3.0);
    let e4 = det4(&a);

    let mut gersh = scale;
    for i in 0..4 {
        let off = (0..4).filter(|j| *j != i).fold(T::zero(), |acc, j| acc + a[(i, j)].abs());
        gersh = gersh.min(a[(i, i)] - off);
    }
    let mut x = gersh.max(-scale * lit(0.8660254037844386));
    let tol = scale * T::default_epsilon();
    for _ in 0..100 {
        let x2 = x * x;
        let f = x2 * x2 + e2 * x2 - e3 * x + e4;
        let df = lit::<T>(4.0) * x2 * x + lit::<T>(2.0) * e2 * x - e3;
        if !(df < T::zero()) {
            break;
        }
        let step = f / df;
        x -= step;
        if step.abs() <= tol {
            break;
        }
    }

    let b = a - Matrix4::identity() * x;
    let rows: [Vector4<T>; 4] = std::array::from_fn(|i| b.row(i).transpose());
    let candidates = [
        cross4(&rows[1], &rows[2], &rows[3]),
        cross4(&rows[0], &rows[2], &rows[3]),
        cross4(&rows[0], &rows[1], &rows[3]),
        cross4(&rows[0], &rows[1], &rows[2]),
    ];
    let mut best = candidates[0];
    for v in &candidates[1..] {
        if v.norm_squared() > best.norm_squared() {
            best = *v;
        }
    }
    let n = best.norm();
    if !(n > scale * scale * scale * lit(1e-6)) {
        return None;
    }
    let v = best / n;
    Some((v.dot(&(m * v)), v))
}

/// Dense fallback. For a repeated extreme eigenvalue the hint is projected
/// onto the eigenspace so the result is the eigenvector closest to the hint.
fn dense_extreme_pair<T: Real>(m: &Matrix4<T>, hint: &Vector4<T>, largest: bool) -> (T, Vector4<T>) {
    let eig = SymmetricEigen::new(*m);
    let sign = if largest { -T::one() } else { T::one() };
    let mut best = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] * sign < eig.eigenvalues[best] * sign {
            best = i;
        }
    }
    let mu = eig.eigenvalues[best];
    let cluster = lit::<T>(1e-12) * m.amax().max(T::one());

    let mut v: Vector4<T> = eig.eigenvectors.column(best).into_owned();
    let repeated = (0..4).any(|i| i != best && (eig.eigenvalues[i] - mu).abs() <= cluster);
    if repeated {
        let mut proj = Vector4::zeros();
        for i in 0..4 {
            if (eig.eigenvalues[i] - mu).abs() <= cluster {
                let u = eig.eigenvectors.column(i);
                proj += u * u.dot(hint);
            }
        }
        let n = proj.norm();
        if n > lit(1e-6) {
            v = proj / n;
        }
    }
    (mu, v / v.norm())
}

/// Core fixed-point loop from a single start.
pub fn scf_iterate<T: Real>(
    pre: &Precomputed<T>,
    q0: UnitQuaternion<T>,
    tol: T,
    max_iters: usize,
) -> ScfTrace<T> {
    let mut iterates = Vec::with_capacity(max_iters.min(32));
    let mut q = q0;
    for _ in 0..max_iters {
        let m = pre.data_matrix(&q);
        let (mu, next) = extreme_eigenpair(&m, Some(q.coords()), false);
        let v = q.coords();
        let objective = v.dot(&((m + pre.d) * v));
        iterates.push(ScfIterate { q, mu, objective });
        let next = UnitQuaternion::new_normalize(next);
        if sin_angle(q.coords(), next.coords()) < tol {
            return ScfTrace {
                iterates,
                status: ScfStatus::Converged,
            };
        }
        q = next;
    }
    ScfTrace {
        iterates,
        status: ScfStatus::MaxIterations,
    }
}

impl<T: Real> ScfTrace<T> {
    /// The iterate reported as the solution: the last one on convergence,
    /// the lowest-objective one otherwise.
    pub fn solution(&self) -> &ScfIterate<T> {
        match self.status {
            ScfStatus::Converged => self.iterates.last().expect("non-empty trace"),
            ScfStatus::MaxIterations => self
                .iterates
                .iter()
                .min_by(|a, b| a.objective.partial_cmp(&b.objective).expect("finite objective"))
                .expect("non-empty trace"),
        }
    }
}

/// Runs SCF from every configured start and returns the lowest objective.
pub fn scf_solve<T: Real>(
    pre: &Precomputed<T>,
    cfg: &ScfConfig<T>,
) -> Result<(Estimate<T>, ScfTrace<T>)> {
    cfg.validate()?;
    let mut best: Option<(Estimate<T>, ScfTrace<T>)> = None;
    for q0 in cfg.starts() {
        let trace = scf_iterate(pre, q0, cfg.tol, cfg.max_iters);
        let sol = *trace.solution();
        let mut est = recover(pre, &sol.q);
        est.mu = sol.mu;
        est.iterations = trace.iterates.len();
        est.converged = trace.status == ScfStatus::Converged;
        if !est.converged {
            est.diagnostic = Some(format!("scf reached max_iters = {}", cfg.max_iters));
        }
        let better = match &best {
            None => true,
            Some((b, _)) => est.objective < b.objective,
        };
        if better {
            best = Some((est, trace));
        }
    }
    Ok(best.expect("at least one start"))
}

/// Full solution `(R, c⋆(R), p⋆(R, c⋆))` for a rotation given as a quaternion.
pub fn recover<T: Real>(pre: &Precomputed<T>, q: &UnitQuaternion<T>) -> Estimate<T> {
    let r = q.to_rotation_matrix();
    let c = pre.optimal_shape(r.matrix());
    let p = pre.optimal_position(r.matrix(), &c);
    let objective = objective_full(pre.problem(), r.matrix(), &p, &c);
    Estimate {
        q: *q,
        r,
        p,
        c,
        objective,
        mu: T::zero(),
        iterations: 0,
        converged: true,
        certified: None,
        diagnostic: None,
    }
}
