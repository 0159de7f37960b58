//! Rigid transforms, triangle meshes, ray casting and point indexing.

mod bvh;
mod index;
pub mod io;
mod mesh;

pub use bvh::{intersect_triangle, Bvh, BvhNode, Hit, Ray, WorldTriangle, MAX_DEPTH};
pub use index::PointIndex;
pub use mesh::TriangleMesh;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Axis-aligned bounding box. An empty box has `min > max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn new(min: Vec3, max: Vec3) -> Self {
        Aabb { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let d = self.extent();
        2.0 * (d.x * d.y + d.y * d.z + d.z * d.x)
    }

    pub fn largest_axis(&self) -> usize {
        let d = self.extent();
        if d.x >= d.y && d.x >= d.z {
            0
        } else if d.y >= d.z {
            1
        } else {
            2
        }
    }
}

/// Rigid transform `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

/// Tolerance for the orthonormality and determinant checks.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not proper orthonormal
    /// matrices or that contain non-finite entries.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let pose = Pose { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation about +z by `yaw` radians, followed by translation `t`.
    pub fn from_yaw(yaw: f64, t: Vec3) -> Self {
        Pose {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(),
            translation: t,
        }
    }

    /// Rotation from roll/pitch/yaw (applied x, then y, then z) plus translation.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, t: Vec3) -> Self {
        Pose {
            rotation: *Rotation3::from_euler_angles(roll, pitch, yaw).matrix(),
            translation: t,
        }
    }

    /// Builds a pose from a unit quaternion in (x, y, z, w) order. The
    /// quaternion is renormalized.
    pub fn from_quaternion(q: [f64; 4], t: Vec3) -> Result<Self> {
        let quat = nalgebra::Quaternion::new(q[3], q[0], q[1], q[2]);
        if !quat.coords.iter().all(|c| c.is_finite()) || quat.norm() < 1e-12 {
            return Err(Error::InvalidGeometry(format!("bad quaternion {q:?}")));
        }
        let unit = UnitQuaternion::from_quaternion(quat);
        Pose::new(*unit.to_rotation_matrix().matrix(), t)
    }

    /// Unit quaternion (x, y, z, w) of the rotation, Hamilton convention, with
    /// `w >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let c = q.quaternion().coords;
        let s = if c.w < 0.0 { -1.0 } else { 1.0 };
        [s * c.x, s * c.y, s * c.z, s * c.w]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .rotation
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidGeometry("pose has non-finite entries".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOLERANCE {
            return Err(Error::InvalidGeometry(format!(
                "rotation is not orthonormal (error {ortho_err:e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidGeometry(format!("rotation determinant {det}")));
        }
        Ok(())
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Nearest proper rotation to `rotation`, removing drift accumulated by
    /// long chains of compositions.
    pub fn orthonormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        let mut rotation = u * v_t;
        if rotation.determinant() < 0.0 {
            let mut d = Matrix3::identity();
            d[(2, 2)] = -1.0;
            rotation = u * d * v_t;
        }
        Pose {
            rotation,
            translation: self.translation,
        }
    }

    /// Rotation angle in radians.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Rotation angle (rad) and translation distance of `self⁻¹ ∘ other`.
    pub fn difference(&self, other: &Pose) -> (f64, f64) {
        let d = self.inverse().compose(other);
        (d.rotation_angle(), d.translation.norm())
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            -3.2..3.2f64,
            -1.5..1.5f64,
            -3.2..3.2f64,
            prop::array::uniform3(-50.0..50.0f64),
        )
            .prop_map(|(r, p, y, t)| Pose::from_euler(r, p, y, Vec3::from(t)))
    }

    #[test]
    fn yaw_quarter_turn_maps_x_to_y() {
        let p = Pose::from_yaw(std::f64::consts::FRAC_PI_2, Vec3::zeros());
        let v = p.transform_point(&Vec3::new(1.0, 0.0, 0.0));
        assert!((v - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_reflection_and_nan() {
        let mut m = Matrix3::identity();
        m[(2, 2)] = -1.0;
        assert!(Pose::new(m, Vec3::zeros()).is_err());
        assert!(Pose::new(Matrix3::identity(), Vec3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(Pose::new(Matrix3::identity() * 1.01, Vec3::zeros()).is_err());
    }

    #[test]
    fn quaternion_round_trip() {
        let p = Pose::from_euler(0.3, -0.2, 2.9, Vec3::new(1.0, 2.0, 3.0));
        let q = p.quaternion();
        let back = Pose::from_quaternion(q, p.translation).unwrap();
        let (ang, dist) = p.difference(&back);
        assert!(ang < 1e-9 && dist < 1e-12);
        // 90° about z: (0, 0, sin 45°, cos 45°)
        let q = Pose::from_yaw(std::f64::consts::FRAC_PI_2, Vec3::zeros()).quaternion();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((q[2] - h).abs() < 1e-12 && (q[3] - h).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = (a * b) * c;
            let r = a * (b * c);
            prop_assert!((l.rotation - r.rotation).abs().max() < 1e-12);
            prop_assert!((l.translation - r.translation).norm() < 1e-9);
        }

        #[test]
        fn inverse_cancels(a in arb_pose()) {
            prop_assert!(a.validate().is_ok());
            let id = a.inverse() * a;
            prop_assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
            prop_assert!(id.translation.norm() < 1e-9);
        }
    }
}
