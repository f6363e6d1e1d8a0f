//! Quaternion arithmetic for rigid rotations.
//!
//! Quaternions are stored scalar first, `[q1, q2, q3, q4]` with `q1` the
//! scalar part and `(q2, q3, q4)` the vector part. Products follow the
//! Hamilton convention, so `a ∘ b = Ω₁(a) b = Ω₂(b) a`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{invalid, Result};
use crate::scalar::{lit, Real};

/// Anything that can be read as a quaternion. Three-vectors are
/// homogenized with a leading zero scalar part.
pub trait QuatLike<T: Real> {
    fn to_quat4(&self) -> Vector4<T>;
}

impl<T: Real> QuatLike<T> for Vector4<T> {
    fn to_quat4(&self) -> Vector4<T> {
        *self
    }
}

impl<T: Real> QuatLike<T> for Vector3<T> {
    fn to_quat4(&self) -> Vector4<T> {
        Vector4::new(T::zero(), self.x, self.y, self.z)
    }
}

impl<T: Real> QuatLike<T> for UnitQuaternion<T> {
    fn to_quat4(&self) -> Vector4<T> {
        self.0
    }
}

/// Left product matrix: `Ω₁(a) b = a ∘ b`.
pub fn omega1<T: Real>(a: &impl QuatLike<T>) -> Matrix4<T> {
    let a = a.to_quat4();
    let (a1, a2, a3, a4) = (a[0], a[1], a[2], a[3]);
    Matrix4::new(
        a1, -a2, -a3, -a4, //
        a2, a1, -a4, a3, //
        a3, a4, a1, -a2, //
        a4, -a3, a2, a1,
    )
}

/// Right product matrix: `Ω₂(b) a = a ∘ b`.
pub fn omega2<T: Real>(a: &impl QuatLike<T>) -> Matrix4<T> {
    let a = a.to_quat4();
    let (a1, a2, a3, a4) = (a[0], a[1], a[2], a[3]);
    Matrix4::new(
        a1, -a2, -a3, -a4, //
        a2, a1, a4, -a3, //
        a3, -a4, a1, a2, //
        a4, a3, -a2, a1,
    )
}

/// Quaternion product `a ∘ b`.
pub fn qprod<T: Real>(a: &Vector4<T>, b: &Vector4<T>) -> Vector4<T> {
    omega1(a) * b
}

/// Linear extension of `Ω₁(x) Ω₂(y)` to 3×3 matrices: for `Z = Σ x yᵀ`
/// returns `Σ Ω₁(x) Ω₂(y)`, so that `⟨R(q), Z⟩ = -qᵀ product_form(Z) q`.
///
/// The result is symmetric and traceless.
pub fn product_form<T: Real>(z: &Matrix3<T>) -> Matrix4<T> {
    let tr = z.trace();
    let w = Vector3::new(
        z[(1, 2)] - z[(2, 1)],
        z[(2, 0)] - z[(0, 2)],
        z[(0, 1)] - z[(1, 0)],
    );
    let mut lower = Matrix3::identity() * tr - z - z.transpose();
    // Symmetrize exactly; z + zᵀ is already symmetric up to rounding order.
    for i in 0..3 {
        for j in (i + 1)..3 {
            lower[(j, i)] = lower[(i, j)];
        }
    }
    let mut m = Matrix4::zeros();
    m[(0, 0)] = -tr;
    for i in 0..3 {
        m[(0, i + 1)] = w[i];
        m[(i + 1, 0)] = w[i];
        for j in 0..3 {
            m[(i + 1, j + 1)] = lower[(i, j)];
        }
    }
    m
}

/// Skew-symmetric (hat) matrix with `hat(a) b = a × b`.
pub fn hat<T: Real>(a: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -a.z,
        a.y, //
        a.z,
        T::zero(),
        -a.x, //
        -a.y,
        a.x,
        T::zero(),
    )
}

/// Rotation matrix `exp(ω̂)` by the Rodrigues formula; below `‖ω‖ = 1e-8`
/// the second-order series `I + ω̂ + ω̂²/2` is used.
pub fn exp_so3<T: Real>(omega: &Vector3<T>) -> Matrix3<T> {
    let theta = omega.norm();
    let k = hat(omega);
    let k2 = k * k;
    if theta < lit(1e-8) {
        return Matrix3::identity() + k + k2 * lit::<T>(0.5);
    }
    let a = theta.sin() / theta;
    let half = (theta * lit(0.5)).sin() / theta;
    let b = half * half * lit(2.0);
    Matrix3::identity() + k * a + k2 * b
}

/// Scalar-first unit quaternion. `q` and `-q` describe the same rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion<T: Real>(Vector4<T>);

impl<T: Real> UnitQuaternion<T> {
    /// Normalizes `v`; rejects zero or non-finite input.
    pub fn new(v: Vector4<T>) -> Result<Self> {
        let n = v.norm();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(invalid("quaternion must have finite non-zero norm"));
        }
        Ok(Self(v / n))
    }

    pub(crate) fn new_normalize(v: Vector4<T>) -> Self {
        Self(v / v.norm())
    }

    pub fn identity() -> Self {
        Self(Vector4::new(T::one(), T::zero(), T::zero(), T::zero()))
    }

    /// `[cos(θ/2), ω sin(θ/2)]` for a unit axis `ω`.
    pub fn from_axis_angle(axis: &Vector3<T>, theta: T) -> Result<Self> {
        if (axis.norm() - T::one()).abs() > lit(1e-9) {
            return Err(invalid("rotation axis must be a unit vector"));
        }
        let half = theta * lit(0.5);
        let s = half.sin();
        Ok(Self::new_normalize(Vector4::new(
            half.cos(),
            axis.x * s,
            axis.y * s,
            axis.z * s,
        )))
    }

    pub fn coords(&self) -> &Vector4<T> {
        &self.0
    }

    pub fn scalar(&self) -> T {
        self.0[0]
    }

    pub fn vector(&self) -> Vector3<T> {
        Vector3::new(self.0[1], self.0[2], self.0[3])
    }

    /// Inverse rotation: the vector part negated.
    pub fn inverse(&self) -> Self {
        Self(Vector4::new(self.0[0], -self.0[1], -self.0[2], -self.0[3]))
    }

    /// The antipodal representative of the same rotation.
    pub fn negated(&self) -> Self {
        Self(-self.0)
    }

    /// Composition `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new_normalize(qprod(&self.0, &other.0))
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix<T> {
        RotationMatrix(quat_matrix(&self.0))
    }

    /// Rotates `y` through the sandwich product `q ∘ [0; y] ∘ q⁻¹`.
    pub fn rotate(&self, y: &Vector3<T>) -> Vector3<T> {
        let inner = qprod(&self.0, &y.to_quat4());
        let out = qprod(&inner, self.inverse().coords());
        Vector3::new(out[1], out[2], out[3])
    }

    /// Sine of the angle between the two 4-vectors.
    pub fn sin_angle(&self, other: &Self) -> T {
        sin_angle(&self.0, &other.0)
    }
}

/// Sine of the angle between unit 4-vectors, clamped to `[0, 1]`.
///
/// Evaluated through the Lagrange identity `Σ_{i<j} (a_i b_j - a_j b_i)²`
/// rather than `1 - ⟨a,b⟩²`, which loses every digit below ~1e-8.
pub fn sin_angle<T: Real>(a: &Vector4<T>, b: &Vector4<T>) -> T {
    let mut acc = T::zero();
    for i in 0..4 {
        for j in (i + 1)..4 {
            let w = a[i] * b[j] - a[j] * b[i];
            acc += w * w;
        }
    }
    acc.sqrt().min(T::one())
}

fn quat_matrix<T: Real>(q: &Vector4<T>) -> Matrix3<T> {
    let two = lit::<T>(2.0);
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        T::one() - two * (y * y + z * z),
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        T::one() - two * (x * x + z * z),
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        T::one() - two * (x * x + y * y),
    )
}

/// A proper rotation, `RᵀR = I` and `det R = +1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix<T: Real>(Matrix3<T>);

impl<T: Real> RotationMatrix<T> {
    /// Validates orthonormality and determinant to within `1e-6`.
    pub fn new(m: Matrix3<T>) -> Result<Self> {
        let tol = lit::<T>(1e-6);
        if orthogonality_error(&m) > tol {
            return Err(invalid("matrix is not orthonormal"));
        }
        if (m.determinant() - T::one()).abs() > tol {
            return Err(invalid("matrix has determinant != +1"));
        }
        Ok(Self(m))
    }

    pub(crate) fn new_unchecked(m: Matrix3<T>) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<T> {
        self.0
    }

    /// Shepperd's method: branch on the largest of the trace and the diagonal
    /// so the pivot never suffers cancellation near 180°.
    pub fn to_quaternion(&self) -> UnitQuaternion<T> {
        let m = &self.0;
        let quarter = lit::<T>(0.25);
        let two = lit::<T>(2.0);
        let tr = m.trace();
        let (m00, m11, m22) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
        let v = if tr >= m00 && tr >= m11 && tr >= m22 {
            let s = (tr + T::one()).sqrt() * two;
            Vector4::new(
                s * quarter,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m00 >= m11 && m00 >= m22 {
            let s = (T::one() + m00 - m11 - m22).sqrt() * two;
            Vector4::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                s * quarter,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m11 >= m22 {
            let s = (T::one() + m11 - m00 - m22).sqrt() * two;
            Vector4::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                s * quarter,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (T::one() + m22 - m00 - m11).sqrt() * two;
            Vector4::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                s * quarter,
            )
        };
        UnitQuaternion::new_normalize(v)
    }
}

/// Largest entry of `|MᵀM - I|`.
pub fn orthogonality_error<T: Real>(m: &Matrix3<T>) -> T {
    (m.transpose() * m - Matrix3::identity()).amax()
}

pub fn quat_to_rotmat<T: Real>(q: &UnitQuaternion<T>) -> RotationMatrix<T> {
    q.to_rotation_matrix()
}

pub fn rotmat_to_quat<T: Real>(r: &Matrix3<T>) -> Result<UnitQuaternion<T>> {
    Ok(RotationMatrix::new(*r)?.to_quaternion())
}

pub fn rotate<T: Real>(q: &UnitQuaternion<T>, y: &Vector3<T>) -> Vector3<T> {
    q.rotate(y)
}

pub fn from_axis_angle<T: Real>(axis: &Vector3<T>, theta: T) -> Result<UnitQuaternion<T>> {
    UnitQuaternion::from_axis_angle(axis, theta)
}

/// `-qᵀ Ω₁(x) Ω₂(y) q`, which equals `xᵀ R(q) y`.
pub fn bilinear<T: Real>(x: &Vector3<T>, q: &UnitQuaternion<T>, y: &Vector3<T>) -> T {
    let q = q.coords();
    -(q.transpose() * omega1(x) * omega2(y) * q)[(0, 0)]
}

/// Projects a unit quaternion into the closed unit 3-ball as
/// `-sign(q₁) q_v`, with `sign(0) = +1`.
pub fn stereo_project<T: Real>(q: &UnitQuaternion<T>) -> Vector3<T> {
    let sign = if q.scalar() >= T::zero() {
        T::one()
    } else {
        -T::one()
    };
    q.vector() * -sign
}
