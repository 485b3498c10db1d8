//! Frames, poses and rigid transforms.
//!
//! Orientation is stored as a unit quaternion and renormalized whenever one
//! is constructed, so long simulations do not accumulate drift.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for geometric identities (composition, inversion, fits).
pub const GEOMETRIC_TOL: f64 = 1e-9;
/// Tolerance for exact analytic cases.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("frame mismatch: cannot compose {left_from}<-... with ...->{right_to}")]
    FrameMismatch { left_from: String, right_to: String },
    #[error("interpolation parameter {0} outside [0, 1]")]
    InterpolationRange(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// A point or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Distance ignoring the z component.
    pub fn planar_distance(self, other: Vec3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Vec3, s: f64) -> Vec3 {
        self + (other - self) * s
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, rhs: f64) -> Vec3 {
        Vec3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Unit quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawQuaternion")]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Deserialize)]
struct RawQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl From<RawQuaternion> for Rotation {
    fn from(q: RawQuaternion) -> Self {
        Rotation::new(q.w, q.x, q.y, q.z)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a rotation from raw quaternion components, normalizing them.
    /// A zero quaternion collapses to identity.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        Self { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let a = axis * (1.0 / n);
        let (s, c) = (angle / 2.0).sin_cos();
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::new(0.0, 0.0, 1.0), angle)
    }

    /// Builds from a proper rotation matrix (row-major).
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        let trace = m[0][0] + m[1][1] + m[2][2];
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Self::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Self::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Self::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Self::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        }
    }

    pub fn components(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn inverse(&self) -> Self {
        Self { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Hamilton product `self * other` (apply `other` first).
    pub fn compose(&self, other: &Rotation) -> Self {
        let (a, b) = (self, other);
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + 2w (q x v) + 2 q x (q x v)
        let q = Vec3::new(self.x, self.y, self.z);
        let t = q.cross(v) * 2.0;
        v + t * self.w + q.cross(t)
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Geodesic angle between two orientations, in `[0, pi]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let d = (self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z)
            .abs()
            .min(1.0);
        2.0 * d.acos()
    }

    /// Shortest-arc spherical interpolation.
    pub fn slerp(&self, other: &Rotation, s: f64) -> Rotation {
        let mut b = *other;
        let mut d = self.w * b.w + self.x * b.x + self.y * b.y + self.z * b.z;
        if d < 0.0 {
            b = Rotation { w: -b.w, x: -b.x, y: -b.y, z: -b.z };
            d = -d;
        }
        if d > 1.0 - 1e-12 {
            return Rotation::new(
                self.w + (b.w - self.w) * s,
                self.x + (b.x - self.x) * s,
                self.y + (b.y - self.y) * s,
                self.z + (b.z - self.z) * s,
            );
        }
        let theta = d.acos();
        let sin_theta = theta.sin();
        let ka = ((1.0 - s) * theta).sin() / sin_theta;
        let kb = (s * theta).sin() / sin_theta;
        Rotation::new(
            ka * self.w + kb * b.w,
            ka * self.x + kb * b.x,
            ka * self.y + kb * b.y,
            ka * self.z + kb * b.z,
        )
    }
}

/// Position plus orientation, e.g. a tooltip target in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    #[serde(default)]
    pub orientation: Rotation,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rotation) -> Self {
        Self { position, orientation }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self { position, orientation: Rotation::IDENTITY }
    }

    /// Maps a point expressed in this pose's local frame to the parent frame.
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.orientation.rotate(p) + self.position
    }

    /// `self * local`: the pose `local`, expressed relative to `self`, in the parent frame.
    pub fn compose(&self, local: &Pose) -> Pose {
        Pose {
            position: self.transform_point(local.position),
            orientation: self.orientation.compose(&local.orientation),
        }
    }

    /// `self^-1 * other`: `other` expressed relative to `self`.
    pub fn relative(&self, other: &Pose) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: inv.rotate(other.position - self.position),
            orientation: inv.compose(&other.orientation),
        }
    }
}

/// Linear position blend and shortest-arc orientation slerp.
pub fn interpolate_pose(a: &Pose, b: &Pose, s: f64) -> Result<Pose, GeometryError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(GeometryError::InterpolationRange(s));
    }
    if s == 0.0 {
        return Ok(*a);
    }
    if s == 1.0 {
        return Ok(*b);
    }
    Ok(Pose {
        position: a.position.lerp(b.position, s),
        orientation: a.orientation.slerp(&b.orientation, s),
    })
}

/// Rigid transform mapping points in `from_frame` into `to_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub from_frame: String,
    pub to_frame: String,
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(
        from_frame: impl Into<String>,
        to_frame: impl Into<String>,
        rotation: Rotation,
        translation: Vec3,
    ) -> Self {
        Self {
            from_frame: from_frame.into(),
            to_frame: to_frame.into(),
            rotation,
            translation,
        }
    }

    pub fn identity(frame: impl Into<String>) -> Self {
        let frame = frame.into();
        Self::new(frame.clone(), frame, Rotation::IDENTITY, Vec3::ZERO)
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self {
            from_frame: self.to_frame.clone(),
            to_frame: self.from_frame.clone(),
            rotation: r,
            translation: -r.rotate(self.translation),
        }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn transform_pose(&self, pose: &Pose) -> Pose {
        Pose {
            position: self.transform_point(pose.position),
            orientation: self.rotation.compose(&pose.orientation),
        }
    }

    /// Translation distance and rotation angle to another transform.
    pub fn error_to(&self, other: &RigidTransform) -> (f64, f64) {
        (
            self.translation.distance(other.translation),
            self.rotation.angle_to(&other.rotation),
        )
    }

    /// Row-major homogeneous matrix.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.to_matrix();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

/// `a * b`: applies `b` then `a`. Requires `a.from_frame == b.to_frame`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> Result<RigidTransform, GeometryError> {
    if a.from_frame != b.to_frame {
        return Err(GeometryError::FrameMismatch {
            left_from: a.from_frame.clone(),
            right_to: b.to_frame.clone(),
        });
    }
    Ok(RigidTransform {
        from_frame: b.from_frame.clone(),
        to_frame: a.to_frame.clone(),
        rotation: a.rotation.compose(&b.rotation),
        translation: a.rotation.rotate(b.translation) + a.translation,
    })
}

pub fn transform_point(t: &RigidTransform, p: Vec3) -> Vec3 {
    t.transform_point(p)
}

/// Pinhole intrinsics in pixels. Distortion is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = GeometryError;
    fn try_from(r: RawIntrinsics) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if !(0.0..f64::from(width)).contains(&cx) || !(0.0..f64::from(height)).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }
}
