//! Unit-quaternion rotations with azimuth / elevation / roll Euler I/O.
//!
//! Camera frame: +x right, +y down, +z forward. The Euler convention is
//! `R = R_up(azimuth) · R_x(elevation) · R_z(roll)`, where `R_up` turns about
//! the camera-up axis (−y). Elevation is gimbal-locked at ±π/2.

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Quaternions whose norm is within this distance of 1 are taken verbatim on
/// load, so serialized rotations round-trip bit-exactly.
const UNIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

/// Azimuth, elevation and roll in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub azimuth: f64,
    pub elevation: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(azimuth: f64, elevation: f64, roll: f64) -> Self {
        Self {
            azimuth,
            elevation,
            roll,
        }
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from `[w, x, y, z]`. Returns `None` for a zero or
    /// non-finite quaternion.
    pub fn from_wxyz(q: [f64; 4]) -> Option<Self> {
        if q.iter().any(|c| !c.is_finite()) {
            return None;
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if norm < 1e-12 {
            return None;
        }
        if (norm - 1.0).abs() <= UNIT_SLACK {
            Some(Self(UnitQuaternion::new_unchecked(quat)))
        } else {
            Some(Self(UnitQuaternion::new_normalize(quat)))
        }
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Self(UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// Projects an (approximately) orthonormal matrix onto the closest rotation.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_eps(m, 1e-15, 100, nalgebra::Rotation3::identity());
        Self(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn from_euler(angles: EulerAngles) -> Self {
        let up = Vector3::new(0.0, -1.0, 0.0);
        let az = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(up), angles.azimuth);
        let el = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), angles.elevation);
        let roll = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angles.roll);
        Self(az * el * roll)
    }

    /// Inverse of [`Rotation::from_euler`]. Angles are in `(-π, π]` for azimuth
    /// and roll and `[-π/2, π/2]` for elevation.
    pub fn euler(&self) -> EulerAngles {
        let m = self.matrix();
        // With a = -azimuth (rotation about +y):
        //   m02 = sin(a)cos(e), m22 = cos(a)cos(e), m12 = -sin(e),
        //   m10 = cos(e)sin(r), m11 = cos(e)cos(r).
        let elevation = (-m[(1, 2)]).clamp(-1.0, 1.0).asin();
        let (azimuth, roll) = if m[(1, 0)].hypot(m[(1, 1)]) < 1e-12 {
            // Gimbal lock: fold everything into azimuth.
            let a = m[(2, 0)].atan2(m[(0, 0)]);
            (a, 0.0)
        } else {
            let a = m[(0, 2)].atan2(m[(2, 2)]);
            let r = m[(1, 0)].atan2(m[(1, 1)]);
            (-a, r)
        };
        EulerAngles {
            azimuth: wrap_pi(azimuth),
            elevation,
            roll: wrap_pi(roll),
        }
    }

    /// Quaternion product `self ∘ other` (apply `other` first), renormalized.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self(UnitQuaternion::new_normalize(self.0.into_inner() * other.0.into_inner()))
    }

    pub fn inverse(&self) -> Rotation {
        Self(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn inverse_rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.inverse_transform_vector(v)
    }
}

pub(crate) fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a % TAU;
    if w <= -PI {
        w += TAU;
    } else if w > PI {
        w -= TAU;
    }
    w
}

#[derive(Serialize, Deserialize)]
struct RotationDoc {
    quat: [f64; 4],
}

impl Serialize for Rotation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RotationDoc { quat: self.wxyz() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = RotationDoc::deserialize(d)?;
        Rotation::from_wxyz(doc.quat)
            .ok_or_else(|| serde::de::Error::custom("quaternion must be finite and non-zero"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn azimuth_turns_forward_axis_about_up() {
        // +90° azimuth about camera-up (-y) takes the object +z axis to -x.
        let r = Rotation::from_euler(EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        let v = r.rotate(&Vector3::z());
        assert!((v - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12, "{v:?}");
    }

    #[test]
    fn rejects_zero_quaternion() {
        assert!(Rotation::from_wxyz([0.0; 4]).is_none());
        assert!(Rotation::from_wxyz([f64::NAN, 0.0, 0.0, 1.0]).is_none());
    }

    #[test]
    fn normalizes_on_load() {
        let r = Rotation::from_wxyz([2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn compose_applies_right_operand_first() {
        let a = Rotation::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        let b = Rotation::from_axis_angle(&Vector3::x(), FRAC_PI_2);
        let v = Vector3::new(0.0, 1.0, 0.0);
        let lhs = a.compose(&b).rotate(&v);
        let rhs = a.rotate(&b.rotate(&v));
        assert!((lhs - rhs).norm() < 1e-12);
    }

    fn euler_strategy() -> impl Strategy<Value = EulerAngles> {
        (-PI + 1e-6..PI, -FRAC_PI_2 + 1e-3..FRAC_PI_2 - 1e-3, -PI + 1e-6..PI)
            .prop_map(|(a, e, r)| EulerAngles::new(a, e, r))
    }

    proptest! {
        #[test]
        fn euler_round_trip(angles in euler_strategy()) {
            let back = Rotation::from_euler(angles).euler();
            prop_assert!((back.azimuth - angles.azimuth).abs() < 1e-9);
            prop_assert!((back.elevation - angles.elevation).abs() < 1e-9);
            prop_assert!((back.roll - angles.roll).abs() < 1e-9);
        }

        #[test]
        fn matrix_is_proper_orthonormal(angles in euler_strategy()) {
            let r = Rotation::from_euler(angles);
            let q = r.wxyz();
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
            let m = r.matrix();
            prop_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn serde_round_trip_is_bit_exact(angles in euler_strategy()) {
            let r = Rotation::from_euler(angles);
            let json = serde_json::to_string(&r).unwrap();
            let back: Rotation = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(r.wxyz().map(f64::to_bits), back.wxyz().map(f64::to_bits));
        }
    }
}
