//! Rotation and rigid-transform primitives.
//!
//! Angles are radians and lengths are meters throughout the crate.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3, Vector4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Tolerance used when validating user-provided rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Accepts `m` if it is orthonormal with determinant +1 to within `tol`.
    pub fn try_new(m: Matrix3<f64>, tol: f64) -> Result<Self, String> {
        let orth = (m.transpose() * m - Matrix3::identity()).norm();
        if !orth.is_finite() || orth > tol {
            return Err(format!("||R^T R - I||_F = {orth:e}"));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > tol {
            return Err(format!("det(R) = {det}"));
        }
        Ok(Self(m))
    }

    /// Wraps `m` without validation. Callers guarantee `m` is a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn compose(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    /// Geodesic angle between `self` and `other`.
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        axis_angle_from_rotation(&self.transpose().compose(other)).angle
    }

    /// Row-major rows, the layout used by the file formats.
    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl Deref for RotationMatrix {
    type Target = Matrix3<f64>;

    fn deref(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Builds a 3x3 matrix from row-major rows.
pub fn matrix_from_rows(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::new(
        rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
        rows[2][1], rows[2][2],
    )
}

/// Homogeneous rigid transform `[R t; 0 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl Transform {
    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(RotationMatrix::identity(), Vector3::zeros())
    }

    pub fn from_rotation(rotation: RotationMatrix) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(RotationMatrix::identity(), translation)
    }

    /// `self * other`.
    pub fn compose(&self, other: &Transform) -> Transform {
        compose(self, other)
    }

    pub fn inverse(&self) -> Transform {
        invert(self)
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.0 * p.coords + self.translation)
    }
}

/// The extrinsic calibration between the two sensors.
pub type Extrinsic = Transform;

pub fn compose(a: &Transform, b: &Transform) -> Transform {
    Transform {
        rotation: a.rotation.compose(&b.rotation),
        translation: a.rotation.0 * b.translation + a.translation,
    }
}

pub fn invert(a: &Transform) -> Transform {
    let rt = a.rotation.transpose();
    Transform {
        rotation: rt,
        translation: -(rt.0 * a.translation),
    }
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

impl Serialize for Transform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TransformRepr {
            r: self.rotation.to_rows(),
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Transform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(d)?;
        let rotation = RotationMatrix::try_new(matrix_from_rows(&repr.r), 1e-6)
            .map_err(serde::de::Error::custom)?;
        Ok(Transform::new(rotation, Vector3::from(repr.t)))
    }
}

/// Rotation by `angle` about the unit vector `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vector3<f64>,
    pub angle: f64,
}

impl AxisAngle {
    /// Normalizes `axis`; a zero axis is only allowed together with a zero angle.
    pub fn new(axis: Vector3<f64>, angle: f64) -> Self {
        let norm = axis.norm();
        let axis = if norm > 0.0 { axis / norm } else { Vector3::z() };
        Self { axis, angle }
    }

    /// From a rotation vector `angle * axis`.
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        Self::new(*v, v.norm())
    }

    pub fn rotation_vector(&self) -> Vector3<f64> {
        self.axis * self.angle
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn rotation_from_axis_angle(aa: &AxisAngle) -> RotationMatrix {
    let k = skew(&aa.axis);
    let (s, c) = aa.angle.sin_cos();
    RotationMatrix(Matrix3::identity() + k * s + k * k * (1.0 - c))
}

/// Exponential map on a rotation vector.
pub fn exp_so3(v: &Vector3<f64>) -> RotationMatrix {
    let theta = v.norm();
    if theta < 1e-8 {
        // second-order series; the Rodrigues coefficients lose precision here
        let k = skew(v);
        let m = Matrix3::identity() + k + k * k * 0.5;
        return RotationMatrix(project_unchecked(&m));
    }
    rotation_from_axis_angle(&AxisAngle::new(*v, theta))
}

/// Canonical axis-angle with the angle in `[0, pi]`.
///
/// Near `pi` the axis comes from the symmetric part of `R`, pivoting on its
/// largest diagonal entry; the skew part only fixes the sign.
pub fn axis_angle_from_rotation(r: &RotationMatrix) -> AxisAngle {
    let m = &r.0;
    let skew_part = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    ) * 0.5;
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = skew_part.norm();
    let angle = sin.atan2(cos);

    if angle == 0.0 {
        return AxisAngle {
            axis: Vector3::z(),
            angle: 0.0,
        };
    }
    if cos > -0.5 {
        return AxisAngle {
            axis: skew_part / sin,
            angle,
        };
    }

    // B = u u^T (1 - cos) from the symmetric part
    let b = (m + m.transpose()) * 0.5 - Matrix3::identity() * cos;
    let pivot = (0..3)
        .max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)]))
        .unwrap_or(0);
    let mut axis = b.column(pivot).into_owned();
    axis /= axis.norm();
    let dot = axis.dot(&skew_part);
    if dot < 0.0 || (dot == 0.0 && canonical_sign(&axis) < 0.0) {
        axis = -axis;
    }
    AxisAngle { axis, angle }
}

fn canonical_sign(v: &Vector3<f64>) -> f64 {
    v.iter()
        .find(|c| c.abs() > 1e-12)
        .map(|c| c.signum())
        .unwrap_or(1.0)
}

/// Logarithm map, the inverse of [`exp_so3`].
pub fn log_so3(r: &RotationMatrix) -> Vector3<f64> {
    axis_angle_from_rotation(r).rotation_vector()
}

/// Frobenius-nearest rotation to `m`.
pub fn project_to_so3(m: &Matrix3<f64>) -> Result<RotationMatrix> {
    let svd = m.svd(true, true);
    let smallest = svd.singular_values.min();
    if !(smallest >= 1e-12) {
        return Err(CalibError::SingularInput(smallest));
    }
    Ok(RotationMatrix(polar_rotation(&svd)))
}

fn project_unchecked(m: &Matrix3<f64>) -> Matrix3<f64> {
    polar_rotation(&m.svd(true, true))
}

fn polar_rotation(svd: &nalgebra::SVD<f64, nalgebra::U3, nalgebra::U3>) -> Matrix3<f64> {
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Haar-uniform rotation drawn from `rng`.
pub fn random_rotation_with<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix {
    let q = loop {
        let v = Vector4::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-6 {
            break v / n;
        }
    };
    let uq = UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    RotationMatrix(uq.to_rotation_matrix().into_inner())
}

/// Haar-uniform rotation, deterministic per seed.
pub fn random_rotation(seed: u64) -> RotationMatrix {
    random_rotation_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Uniformly distributed unit vector.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// `count` nearly uniform directions on the unit sphere (golden-angle spiral).
pub fn fibonacci_sphere(count: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// Intrinsic X-Y-Z Euler angles: `Rx(a) * Ry(b) * Rz(c)`.
pub fn rotation_from_euler_xyz(a: f64, b: f64, c: f64) -> RotationMatrix {
    let rx = rotation_from_axis_angle(&AxisAngle::new(Vector3::x(), a));
    let ry = rotation_from_axis_angle(&AxisAngle::new(Vector3::y(), b));
    let rz = rotation_from_axis_angle(&AxisAngle::new(Vector3::z(), c));
    rx.compose(&ry).compose(&rz)
}

/// Rotation error `||A - B||_F` used in reports.
pub fn rotation_distance(a: &RotationMatrix, b: &RotationMatrix) -> f64 {
    (a.0 - b.0).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn orth_err(r: &RotationMatrix) -> f64 {
        (r.transpose().0 * r.0 - Matrix3::identity()).norm()
    }

    #[test]
    fn zero_angle_is_identity() {
        let r = rotation_from_axis_angle(&AxisAngle::new(Vector3::z(), 0.0));
        assert_eq!(r.0, Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rotation_from_axis_angle(&AxisAngle::new(Vector3::z(), PI / 2.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.0 - expected).norm() < 1e-15);
    }

    #[test]
    fn axis_angle_round_trip_at_0_7() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let axis = random_unit_vector(&mut rng);
            let r = rotation_from_axis_angle(&AxisAngle::new(axis, 0.7));
            let aa = axis_angle_from_rotation(&r);
            assert!((aa.angle - 0.7).abs() < 1e-12);
            assert!((aa.axis - axis).norm() < 1e-12);
        }
    }

    #[test]
    fn angle_pi_gives_canonical_unit_axis() {
        let axis = Vector3::new(-1.0, 2.0, 0.5).normalize();
        let r = rotation_from_axis_angle(&AxisAngle::new(axis, PI));
        let aa = axis_angle_from_rotation(&r);
        assert!((aa.angle - PI).abs() < 1e-12);
        assert!((aa.axis.norm() - 1.0).abs() < 1e-12);
        // either sign is the same rotation
        assert!((aa.axis - axis).norm() < 1e-9 || (aa.axis + axis).norm() < 1e-9);
        assert!(rotation_distance(&rotation_from_axis_angle(&aa), &r) < 1e-12);
    }

    #[test]
    fn projection_fixes_rotations() {
        let r = random_rotation(3);
        let p = project_to_so3(&r.0).unwrap();
        assert!(rotation_distance(&p, &r) < 1e-12);
    }

    #[test]
    fn projection_of_reflection_is_identity() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        let p = project_to_so3(&m).unwrap();
        assert!((p.0 - Matrix3::identity()).norm() < 1e-12);
        // brute-force oracle: no sampled rotation is closer than the identity
        let best = (m - Matrix3::identity()).norm();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5000 {
            let r = random_rotation_with(&mut rng);
            assert!((m - r.0).norm() >= best - 1e-12);
        }
    }

    #[test]
    fn projection_removes_uniform_scale() {
        let r = random_rotation(5);
        let p = project_to_so3(&(r.0 * 1.0001)).unwrap();
        assert!(rotation_distance(&p, &r) < 1e-12);
    }

    #[test]
    fn projection_rejects_singular() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(project_to_so3(&m), Err(CalibError::SingularInput(_))));
    }

    #[test]
    fn identity_transform_laws() {
        let x = Transform::new(random_rotation(1), Vector3::new(1.0, -2.0, 0.5));
        let id = Transform::identity();
        assert_eq!(compose(&id, &x), x);
        assert_eq!(invert(&id), id);
    }

    #[test]
    fn random_rotation_is_deterministic() {
        assert_eq!(random_rotation(42), random_rotation(42));
        assert_ne!(random_rotation(42), random_rotation(43));
    }

    #[test]
    fn haar_trace_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let r = random_rotation_with(&mut rng);
            assert!(orth_err(&r) < 1e-9 && r.determinant() > 0.0);
            sum += r.trace();
        }
        assert!((sum / n as f64).abs() < 0.05);
    }

    #[test]
    fn fibonacci_points_are_unit_and_spread() {
        let pts = fibonacci_sphere(100);
        assert_eq!(pts.len(), 100);
        let mean: Vector3<f64> = pts.iter().sum::<Vector3<f64>>() / 100.0;
        assert!(mean.norm() < 0.05);
        assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
    }

    fn arb_transform() -> impl Strategy<Value = Transform> {
        (any::<u64>(), -10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_map(|(s, x, y, z)| Transform::new(random_rotation(s), Vector3::new(x, y, z)))
    }

    proptest! {
        #[test]
        fn round_trip_over_full_range(seed in any::<u64>(), angle in 1e-6..(PI - 1e-6)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let axis = random_unit_vector(&mut rng);
            let aa = AxisAngle::new(axis, angle);
            let r = rotation_from_axis_angle(&aa);
            prop_assert!(orth_err(&r) < 1e-9);
            let back = axis_angle_from_rotation(&r);
            prop_assert!((back.rotation_vector() - aa.rotation_vector()).norm() < 1e-12);
            prop_assert!(rotation_distance(&rotation_from_axis_angle(&back), &r) < 1e-12);
        }

        #[test]
        fn projection_is_idempotent(seed in any::<u64>(), noise in 0.0..0.3f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = random_rotation_with(&mut rng).into_inner();
            m[(0, 1)] += noise;
            m[(2, 0)] -= noise * 0.5;
            let once = project_to_so3(&m).unwrap();
            let twice = project_to_so3(&once).unwrap();
            prop_assert!(rotation_distance(&once, &twice) < 1e-12);
            prop_assert!(once.determinant() > 0.0);
        }

        #[test]
        fn compose_matches_point_action(a in arb_transform(), b in arb_transform(),
                                        p in proptest::array::uniform3(-5.0..5.0f64)) {
            let p = Point3::from(p);
            let lhs = compose(&a, &b).transform_point(&p);
            let rhs = a.transform_point(&b.transform_point(&p));
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn inverse_laws(a in arb_transform(), b in arb_transform()) {
            let left = invert(&compose(&a, &b));
            let right = compose(&invert(&b), &invert(&a));
            prop_assert!((left.rotation.0 - right.rotation.0).norm() < 1e-12);
            prop_assert!((left.translation - right.translation).norm() < 1e-12);
            let id = compose(&a, &invert(&a));
            prop_assert!((id.rotation.0 - Matrix3::identity()).norm() < 1e-12);
            prop_assert!(id.translation.norm() < 1e-12);
        }

        #[test]
        fn exp_log_round_trip(v in proptest::array::uniform3(-1.5..1.5f64)) {
            let v = Vector3::from(v);
            let back = log_so3(&exp_so3(&v));
            prop_assert!((back - v).norm() < 1e-10);
        }
    }
}
