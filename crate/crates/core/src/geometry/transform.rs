use std::ops::Mul;

use nalgebra::{Matrix3, Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A rigid motion in SE(3), stored as a unit quaternion plus translation.
///
/// Every pose in the pipeline is one of these: camera-to-reconstruction,
/// object-to-reconstruction and object-in-camera. Applying a transform maps a
/// point as `p' = R p + t`. Composition `a * b` applies `b` first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: renormalize(rotation.into_inner()),
            translation,
        }
    }

    /// Builds a transform from raw quaternion components `[w, x, y, z]`.
    /// The quaternion is normalized; a zero quaternion yields the identity rotation.
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3]) -> Self {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let rotation = if quat.norm() > 0.0 {
            renormalize(quat)
        } else {
            UnitQuaternion::identity()
        };
        Self {
            rotation,
            translation: Vector3::from(t),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    pub fn from_rotation(r: UnitQuaternion<f64>) -> Self {
        Self::new(r, Vector3::zeros())
    }

    /// Projects an arbitrary (near-)rotation matrix onto SO(3).
    pub fn from_matrix(r: &Matrix3<f64>, t: Vector3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_eps(r, 1e-15, 100, nalgebra::Rotation3::identity());
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), t)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Quaternion components in `[w, x, y, z]` order.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: renormalize((self.rotation * other.rotation).into_inner()),
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let inv = self.rotation.inverse();
        RigidTransform {
            rotation: renormalize(inv.into_inner()),
            translation: -(inv * self.translation),
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        quaternion_angle(&self.rotation)
    }
}

/// Geodesic angle of a unit quaternion, robust near zero and π.
pub(crate) fn quaternion_angle(q: &UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    let vec_norm = (q.i * q.i + q.j * q.j + q.k * q.k).sqrt();
    2.0 * vec_norm.atan2(q.w.abs())
}

fn renormalize(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    // Canonical hemisphere keeps serialized poses stable across equivalent inputs.
    let q = if q.w < 0.0 { -q } else { q };
    // Normalizing an already-unit quaternion can move the last bit; leaving
    // it alone makes serialize/deserialize an exact round trip.
    if (q.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_normalize(q)
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

impl Mul<Point3<f64>> for &RigidTransform {
    type Output = Point3<f64>;

    fn mul(self, rhs: Point3<f64>) -> Point3<f64> {
        self.apply(&rhs)
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    q: [f64; 4],
    t: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRecord {
            q: self.wxyz(),
            t: self.xyz(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = PoseRecord::deserialize(d)?;
        if rec.q.iter().chain(rec.t.iter()).any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("pose contains non-finite values"));
        }
        if rec.q.iter().all(|v| *v == 0.0) {
            return Err(serde::de::Error::custom("pose quaternion is zero"));
        }
        Ok(RigidTransform::from_wxyz(rec.q, rec.t))
    }
}
