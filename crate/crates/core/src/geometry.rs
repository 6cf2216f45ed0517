//! Core 3D types and the rotation/pose algebra shared by every other module.
//!
//! Vectors and rotation matrices are plain `nalgebra` types; the pose types
//! below wrap them with the invariants the planner relies on.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Rotation = Matrix3<f64>;

/// Optical axis of the observing frame.
pub const OPTICAL_AXIS: Vec3 = Vector3::new(0.0, 0.0, 1.0);
/// Second column of the robot base rotation.
pub const BASE_Y: Vec3 = Vector3::new(0.0, 1.0, 0.0);

/// Homogeneous rigid transform (rotation + translation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vec3::zeros())
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Rotation::identity(), translation)
    }

    pub fn from_pose(pose: &PoseVector6) -> Self {
        Self::new(axis_angle_to_rotation(&pose.orientation), pose.position)
    }

    /// `self * other` in 4x4 homogeneous semantics.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> RigidTransform {
        RigidTransform {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn to_pose(&self) -> PoseVector6 {
        PoseVector6 {
            position: self.translation,
            orientation: rotation_to_axis_angle(&self.rotation),
        }
    }

    /// Rotation angle (radians) of the rotational part.
    pub fn angle(&self) -> f64 {
        rotation_to_axis_angle(&self.rotation).norm()
    }

    /// Checks `RᵀR = I` and `det R = +1` within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        is_rotation(&self.rotation, tol) && self.translation.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// 6-vector pose: position plus axis-angle orientation `θ·û`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseVector6 {
    pub position: Vec3,
    pub orientation: Vec3,
}

impl PoseVector6 {
    pub fn new(position: Vec3, orientation: Vec3) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn rotation(&self) -> Rotation {
        axis_angle_to_rotation(&self.orientation)
    }

    /// Tool approach axis (third column of the orientation).
    pub fn approach(&self) -> Vec3 {
        self.rotation().column(2).into_owned()
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.position.x,
            self.position.y,
            self.position.z,
            self.orientation.x,
            self.orientation.y,
            self.orientation.z,
        ]
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("camera intrinsics {self:?}")))
        }
    }

    pub fn matrix(&self) -> Rotation {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

pub fn is_rotation(r: &Rotation, tol: f64) -> bool {
    let ortho = (r.transpose() * r - Rotation::identity()).amax();
    ortho <= tol && (r.determinant() - 1.0).abs() <= tol
}

pub fn rot_x(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn skew(v: &Vec3) -> Rotation {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Face frame from the two eye positions, expressed in the observing camera
/// frame. The x-axis runs toward the right eye, y is pinned by the camera's
/// optical axis and z completes the right-handed frame.
pub fn face_pose_from_eyes(left_eye: &Vec3, right_eye: &Vec3) -> Result<RigidTransform> {
    if (right_eye - left_eye).norm() < 1e-6 {
        return Err(Error::DegenerateInput("eye positions coincide".into()));
    }
    let origin = (left_eye + right_eye) * 0.5;
    let alpha = (right_eye - origin).normalize();
    let cross = OPTICAL_AXIS.cross(&alpha);
    if cross.norm() < 1e-9 {
        return Err(Error::DegenerateInput(
            "eye baseline is aligned with the optical axis".into(),
        ));
    }
    let beta = cross.normalize();
    let gamma = alpha.cross(&beta).normalize();
    Ok(RigidTransform::new(
        Matrix3::from_columns(&[alpha, beta, gamma]),
        origin,
    ))
}

/// Orientation whose approach axis (third column) is `eta`.
///
/// Fails with [`Error::DegenerateNormal`] when `eta` is parallel to the base
/// y-axis; see [`rotation_from_normal_or_fallback`].
pub fn rotation_from_normal(eta: &Vec3) -> Result<Rotation> {
    let gamma = eta.normalize();
    let alpha = BASE_Y.cross(&gamma);
    if alpha.norm() < 1e-6 {
        return Err(Error::DegenerateNormal { index: None });
    }
    Ok(frame_from_crossing(&gamma, &alpha))
}

/// Same as [`rotation_from_normal`], but crosses with the base z-axis when the
/// normal is parallel to the base y-axis.
pub fn rotation_from_normal_or_fallback(eta: &Vec3) -> Rotation {
    rotation_from_normal(eta).unwrap_or_else(|_| {
        let gamma = eta.normalize();
        frame_from_crossing(&gamma, &OPTICAL_AXIS.cross(&gamma))
    })
}

fn frame_from_crossing(gamma: &Vec3, alpha: &Vec3) -> Rotation {
    let alpha = alpha.normalize();
    let beta = gamma.cross(&alpha).normalize();
    Matrix3::from_columns(&[alpha, beta, *gamma])
}

/// Axis-angle vector `ν = θ·û` of a rotation matrix, with `θ ∈ [0, π]`.
///
/// The axis comes from the antisymmetric part `u = (R32−R23, R13−R31, R21−R12)`
/// whose norm is `2 sin θ`. Near a half-turn that vector vanishes and the axis
/// is read off the symmetric part instead.
pub fn rotation_to_axis_angle(r: &Rotation) -> Vec3 {
    let u = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let trace = r.trace();
    let u_norm = u.norm();

    if u_norm < 1e-6 && trace < 0.0 {
        // Half-turn: (R + Rᵀ)/2 − cos θ·I = (1 − cos θ)·û ûᵀ.
        let theta = u_norm.atan2(trace - 1.0);
        let cos = theta.cos();
        let sym = (r + r.transpose()) * 0.5 - Rotation::identity() * cos;
        let j = (0..3)
            .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
            .unwrap_or(0);
        let mut axis: Vec3 = sym.column(j).into_owned();
        axis /= axis.norm();
        if u_norm > 0.0 && axis.dot(&u) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    if trace > 3.0 - 1e-12 {
        // sin θ ≈ θ to O(θ³) here.
        return u * 0.5;
    }
    let theta = u_norm.atan2(trace - 1.0);
    u * (theta / u_norm)
}

/// Rodrigues rotation of angle `‖ν‖` about `ν/‖ν‖`.
pub fn axis_angle_to_rotation(nu: &Vec3) -> Rotation {
    let theta = nu.norm();
    if theta < 1e-12 {
        return Rotation::identity();
    }
    let k = skew(&(nu / theta));
    let half = (theta * 0.5).sin();
    Rotation::identity() + k * theta.sin() + k * k * (2.0 * half * half)
}

/// Rotation a fraction `t` of the way from `a` to `b` along the geodesic.
pub fn interpolate_rotation(a: &Rotation, b: &Rotation, t: f64) -> Rotation {
    let delta = rotation_to_axis_angle(&(a.transpose() * b));
    a * axis_angle_to_rotation(&(delta * t))
}

/// Pixel coordinates of `x` under `K [R | t]`. Not clamped to the image.
pub fn project_point(
    x: &Vec3,
    intrinsics: &CameraIntrinsics,
    extrinsics: &RigidTransform,
) -> Result<(f64, f64)> {
    let p = extrinsics.transform_point(x);
    if p.z <= 1e-6 {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok((
        intrinsics.fx * p.x / p.z + intrinsics.cx,
        intrinsics.fy * p.y / p.z + intrinsics.cy,
    ))
}
