//! Synthetic surfaces and landmark layouts used by tests, the acceptance suite
//! and the `fixture` CLI subcommand.

use crate::cloud::{PointCloud, SurfacePoint};
use crate::geometry::{rot_x, CameraIntrinsics, RigidTransform, Vec3};
use crate::segmentation::FaceLandmarks;

/// Quasi-uniform (Fibonacci) sampling of an origin-centred ellipsoid with
/// outward analytic normals.
pub fn ellipsoid_cloud(semi_axes: Vec3, n: usize, frame: &str) -> PointCloud {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let points = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let u = Vec3::new(r * phi.cos(), r * phi.sin(), z);
            let p = u.component_mul(&semi_axes);
            let normal = u.component_div(&semi_axes).normalize();
            SurfacePoint::new(p, normal)
        })
        .collect();
    PointCloud::new(points, frame)
}

/// Regular grid on the plane `z = 0` spanning `[0, width] x [0, height]`,
/// normals pointing toward `-z`.
pub fn planar_patch(width: f64, height: f64, pitch: f64, frame: &str) -> PointCloud {
    let nx = (width / pitch).round() as usize;
    let ny = (height / pitch).round() as usize;
    let mut points = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            points.push(SurfacePoint::new(
                Vec3::new(i as f64 * pitch, j as f64 * pitch, 0.0),
                Vec3::new(0.0, 0.0, -1.0),
            ));
        }
    }
    PointCloud::new(points, frame)
}

/// Planar patch centred on the optical axis at depth `depth`, rotated by
/// `tilt` radians about the camera x-axis. Extents are measured on the surface.
pub fn tilted_patch(width: f64, height: f64, pitch: f64, tilt: f64, depth: f64) -> PointCloud {
    let patch = planar_patch(width, height, pitch, "camera");
    let centre = RigidTransform::from_translation(Vec3::new(-width / 2.0, -height / 2.0, 0.0));
    let place = RigidTransform::new(rot_x(tilt), Vec3::new(0.0, 0.0, depth));
    patch.transformed(&place.compose(&centre))
}

/// Front half (facing a camera at the origin) of an ellipsoidal head centred at
/// `(0, 0, depth)`.
pub fn head_cloud(n: usize, depth: f64) -> PointCloud {
    let full = ellipsoid_cloud(head_semi_axes(), n, "camera");
    let points = full
        .points
        .into_iter()
        .filter(|p| p.position.z < 0.0)
        .map(|mut p| {
            p.position.z += depth;
            p
        })
        .collect();
    PointCloud::new(points, "camera")
}

pub fn head_semi_axes() -> Vec3 {
    Vec3::new(0.075, 0.1, 0.09)
}

pub fn default_camera() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 600.0,
        fy: 600.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    }
}

/// A mirror-symmetric 68-point frontal layout (iBUG ordering) matched to
/// [`head_cloud`] at `depth` under [`default_camera`].
pub fn canonical_landmarks(depth: f64) -> FaceLandmarks {
    let cam = default_camera();
    let near = depth - head_semi_axes().z;
    let half_w = cam.fx * head_semi_axes().x / near;
    let half_h = cam.fy * head_semi_axes().y / near;
    // Normalised face coordinates: X in [-1, 1] across, Y in [-1, 1] top to bottom.
    let mut pts = vec![(0.0, 0.0); 68];
    // Jaw: ear level on the left round the chin to ear level on the right.
    for (i, p) in pts.iter_mut().take(17).enumerate() {
        let a = std::f64::consts::PI * (i as f64 / 16.0);
        *p = (-0.92 * a.cos(), -0.15 + 1.05 * a.sin());
    }
    // Brows.
    for i in 0..5 {
        let x = -0.78 + 0.14 * i as f64;
        let y = -0.42 - 0.08 * (std::f64::consts::PI * i as f64 / 4.0).sin();
        pts[17 + i] = (x, y);
        pts[26 - i] = (-x, y);
    }
    // Nose bridge and base.
    for (k, y) in [-0.3, -0.16, -0.02, 0.12].iter().enumerate() {
        pts[27 + k] = (0.0, *y);
    }
    for (k, x) in [-0.2, -0.1, 0.0, 0.1, 0.2].iter().enumerate() {
        pts[31 + k] = (*x, if k == 2 { 0.24 } else { 0.21 });
    }
    // Eyes: outer corner, two upper, inner corner, two lower.
    let eye = [
        (-0.62, -0.22),
        (-0.52, -0.28),
        (-0.40, -0.28),
        (-0.30, -0.21),
        (-0.40, -0.16),
        (-0.52, -0.16),
    ];
    pts[36..42].copy_from_slice(&eye);
    // Right eye mirrors the left: 42 <- 39, 43 <- 38, 44 <- 37, 45 <- 36, 46 <- 41, 47 <- 40.
    for (dst, src) in [(42, 39), (43, 38), (44, 37), (45, 36), (46, 41), (47, 40)] {
        pts[dst] = (-pts[src].0, pts[src].1);
    }
    // Outer lips 48..59, inner lips 60..67.
    let outer_upper = [(-0.36, 0.48), (-0.22, 0.40), (-0.08, 0.37), (0.0, 0.39)];
    for (k, p) in outer_upper.iter().enumerate() {
        pts[48 + k] = *p;
        pts[54 - k] = (-p.0, p.1);
    }
    let outer_lower = [(0.22, 0.58), (0.1, 0.63), (0.0, 0.64)];
    for (k, p) in outer_lower.iter().enumerate() {
        pts[55 + k] = *p;
        pts[59 - k] = (-p.0, p.1);
    }
    let inner = [(-0.3, 0.48), (-0.12, 0.45), (0.0, 0.46)];
    for (k, p) in inner.iter().enumerate() {
        pts[60 + k] = *p;
        pts[64 - k] = (-p.0, p.1);
    }
    pts[65] = (0.12, 0.52);
    pts[66] = (0.0, 0.53);
    pts[67] = (-0.12, 0.52);

    FaceLandmarks {
        width: cam.width,
        height: cam.height,
        points: pts
            .into_iter()
            .map(|(x, y)| [cam.cx + x * half_w, cam.cy + y * half_h])
            .collect(),
    }
}

/// Straight single-strip scan line along +x of length `length`, one point
/// every `pitch` metres, facing the camera at depth `depth`.
pub fn straight_line(length: f64, pitch: f64, depth: f64) -> PointCloud {
    let n = (length / pitch).round() as usize;
    PointCloud::new(
        (0..=n)
            .map(|i| {
                SurfacePoint::new(
                    Vec3::new(i as f64 * pitch, 0.0, depth),
                    Vec3::new(0.0, 0.0, -1.0),
                )
            })
            .collect(),
        "camera",
    )
}
