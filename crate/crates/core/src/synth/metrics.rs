//! Pose and shape error metrics.

use nalgebra::{DVector, Matrix3, Vector3};

use crate::scalar::{lit, Real};

/// Geodesic distance between rotations in degrees.
///
/// Evaluated as `atan2(‖vee(M − Mᵀ)‖/2, (tr M − 1)/2)` with `M = R_estᵀ R_gt`,
/// which equals `arccos((tr M − 1)/2)` but keeps full precision near 0°
/// and 180°.
pub fn rotation_error<T: Real>(r_est: &Matrix3<T>, r_gt: &Matrix3<T>) -> T {
    let m = r_est.transpose() * r_gt;
    let skew = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let half = lit::<T>(0.5);
    let sin = skew.norm() * half;
    let cos = (m.trace() - T::one()) * half;
    sin.atan2(cos) * lit(180.0 / std::f64::consts::PI)
}

pub fn position_error<T: Real>(p_est: &Vector3<T>, p_gt: &Vector3<T>) -> T {
    (p_est - p_gt).norm()
}

pub fn shape_error<T: Real>(c_est: &DVector<T>, c_gt: &DVector<T>) -> T {
    (c_est - c_gt).norm()
}

/// The "5°, 5 cm" success criterion.
pub fn within_5deg5cm<T: Real>(rotation_error_deg: T, position_error_m: T) -> bool {
    rotation_error_deg <= lit(5.0) && position_error_m <= lit(0.05)
}
