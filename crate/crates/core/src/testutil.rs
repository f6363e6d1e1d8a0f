//! Shared helpers for unit tests.

use nalgebra::{DVector, Matrix3, Matrix3xX, Matrix4, Vector3, Vector4};

use crate::model::ShapeProblem;
use crate::quat::UnitQuaternion;

pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn vec3(&mut self) -> Vector3<f64> {
        Vector3::new(self.normal(), self.normal(), self.normal())
    }
}

pub fn random_quat(rng: &mut Lcg) -> UnitQuaternion<f64> {
    UnitQuaternion::new(Vector4::new(rng.normal(), rng.normal(), rng.normal(), rng.normal())).unwrap()
}

pub fn random_rotation(rng: &mut Lcg) -> Matrix3<f64> {
    random_quat(rng).to_rotation_matrix().into_inner()
}

/// Random orthogonal matrix, a reflection half of the time.
pub fn random_orthogonal(rng: &mut Lcg) -> Matrix3<f64> {
    let r = random_rotation(rng);
    if rng.uniform() < 0.5 {
        -r
    } else {
        r
    }
}

pub struct GroundTruth {
    pub r: Matrix3<f64>,
    pub p: Vector3<f64>,
    pub c: DVector<f64>,
}

/// Random well-posed problem in the style of the synthetic benchmark with
/// per-axis noise standard deviation `noise` and unit weights.
pub fn random_problem(
    rng: &mut Lcg,
    n: usize,
    k: usize,
    lambda: f64,
    noise: f64,
) -> (ShapeProblem<f64>, GroundTruth) {
    let mean: Vec<Vector3<f64>> = (0..n).map(|_| rng.vec3()).collect();
    let library: Vec<Matrix3xX<f64>> = mean
        .iter()
        .map(|m| {
            let cols: Vec<Vector3<f64>> = (0..k).map(|_| m + rng.vec3() * 0.2).collect();
            Matrix3xX::from_columns(&cols)
        })
        .collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let c = DVector::from_iterator(k, raw.iter().map(|v| v / total));
    let r = random_rotation(rng);
    let p = rng.vec3() + Vector3::repeat(1.0);
    let keypoints = library.iter().map(|b| r * (b * &c) + p + rng.vec3() * noise).collect();
    let problem = ShapeProblem::new(keypoints, library, None, lambda).unwrap();
    (problem, GroundTruth { r, p, c })
}

pub fn rotation_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let m = a.transpose() * b;
    let sin = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]).norm() / 2.0;
    let cos = (m.trace() - 1.0) / 2.0;
    sin.atan2(cos).to_degrees()
}

/// Eigenvalues of a symmetric 4×4 matrix from its characteristic polynomial
/// (Faddeev-LeVerrier coefficients, Newton from a Gershgorin bound with
/// deflation), sorted ascending.
pub fn quartic_roots_oracle(m: &Matrix4<f64>) -> [f64; 4] {
    let eye = Matrix4::identity();
    let mut coeffs = vec![1.0];
    let mut mk = eye;
    for k in 1..=4 {
        let am = m * mk;
        let c = -am.trace() / k as f64;
        coeffs.push(c);
        mk = am + eye * c;
    }
    let bound = (0..4)
        .map(|i| (0..4).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1.0;
    let eval = |p: &[f64], x: f64| -> (f64, f64) {
        let (mut v, mut d) = (0.0, 0.0);
        for &c in p {
            d = d * x + v;
            v = v * x + c;
        }
        (v, d)
    };
    let mut roots = Vec::new();
    let mut poly = coeffs.clone();
    while poly.len() > 1 {
        let mut x = -bound;
        for _ in 0..500 {
            let (v, d) = eval(&poly, x);
            if d == 0.0 {
                break;
            }
            let step = v / d;
            x -= step;
            if step.abs() < 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        // polish on the full polynomial
        for _ in 0..5 {
            let (v, d) = eval(&coeffs, x);
            if d != 0.0 {
                x -= v / d;
            }
        }
        roots.push(x);
        let mut next = Vec::with_capacity(poly.len() - 1);
        let mut acc = 0.0;
        for &c in &poly[..poly.len() - 1] {
            acc = acc * x + c;
            next.push(acc);
        }
        poly = next;
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    [roots[0], roots[1], roots[2], roots[3]]
}
