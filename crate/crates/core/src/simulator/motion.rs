//! Scripted head motion and re-anchoring of planned paths.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{axis_angle_to_rotation, interpolate_rotation, RigidTransform, Vec3};
use crate::pathplan::SegmentPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t_s: f64,
    pub translation: [f64; 3],
    pub axis_angle: [f64; 3],
}

impl Keyframe {
    pub fn transform(&self) -> RigidTransform {
        RigidTransform::new(
            axis_angle_to_rotation(&Vec3::from(self.axis_angle)),
            Vec3::from(self.translation),
        )
    }
}

/// Piecewise-linear face pose timeline (world frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MotionScript {
    pub keyframes: Vec<Keyframe>,
}

impl MotionScript {
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self> {
        let s = Self { keyframes };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.keyframes.is_empty() {
            return Err(Error::InvalidParam("motion script has no keyframes".into()));
        }
        for w in self.keyframes.windows(2) {
            if !(w[1].t_s > w[0].t_s) {
                return Err(Error::InvalidParam("motion keyframe times must increase".into()));
            }
        }
        let finite = self.keyframes.iter().all(|k| {
            k.t_s.is_finite() && k.translation.iter().chain(&k.axis_angle).all(|v| v.is_finite())
        });
        if !finite {
            return Err(Error::InvalidParam("non-finite motion keyframe".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let s: MotionScript = serde_json::from_reader(std::fs::File::open(path)?)?;
        s.validate()?;
        Ok(s)
    }

    /// Pose at time `t`, held constant before the first and after the last keyframe.
    pub fn pose_at(&self, t: f64) -> RigidTransform {
        let k = &self.keyframes;
        if t <= k[0].t_s {
            return k[0].transform();
        }
        let Some(i) = k.windows(2).position(|w| t < w[1].t_s) else {
            return k[k.len() - 1].transform();
        };
        let (a, b) = (k[i].transform(), k[i + 1].transform());
        let s = (t - k[i].t_s) / (k[i + 1].t_s - k[i].t_s);
        RigidTransform::new(
            interpolate_rotation(&a.rotation, &b.rotation, s),
            a.translation + (b.translation - a.translation) * s,
        )
    }
}

/// Head motion small enough to ignore.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadBand {
    pub translation: f64,
    pub rotation: f64,
}

impl Default for DeadBand {
    fn default() -> Self {
        Self {
            translation: 0.003,
            rotation: 4f64.to_radians(),
        }
    }
}

impl DeadBand {
    pub fn contains(&self, old_pose: &RigidTransform, new_pose: &RigidTransform) -> bool {
        let dt = (new_pose.translation - old_pose.translation).norm();
        let dr = RigidTransform::new(old_pose.rotation.transpose() * new_pose.rotation, Vec3::zeros()).angle();
        dt <= self.translation && dr <= self.rotation
    }
}

/// Re-anchors every path point by `new_pose * old_pose^-1` unless the
/// motion lies inside the dead-band, in which case the paths are returned
/// untouched.
pub fn update_paths_on_motion(
    paths: &[SegmentPath],
    old_pose: &RigidTransform,
    new_pose: &RigidTransform,
    dead_band: &DeadBand,
) -> Vec<SegmentPath> {
    if dead_band.contains(old_pose, new_pose) {
        return paths.to_vec();
    }
    let delta = new_pose.compose(&old_pose.inverse());
    paths
        .iter()
        .map(|p| {
            let mut p = p.clone();
            for q in &mut p.points {
                q.chi = delta.transform_point(&q.chi);
                q.eta = delta.transform_vector(&q.eta);
            }
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::ellipsoid_cloud;
    use crate::geometry::{rot_y, rot_z};
    use crate::pathplan::{plan_segment, PlannerConfig};

    fn paths() -> Vec<SegmentPath> {
        let mut cap = ellipsoid_cloud(Vec3::new(0.05, 0.06, 0.05), 4000, "c");
        cap.points.retain(|p| p.position.z < 0.0);
        vec![plan_segment("cap", &cap, &PlannerConfig::default(), &Vec3::z()).unwrap()]
    }

    fn pairwise(p: &SegmentPath) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                out.push((p.points[i].chi - p.points[j].chi).norm());
            }
        }
        out
    }

    #[test]
    fn small_motion_is_ignored() {
        let ps = paths();
        let old = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.5));
        let new = RigidTransform::new(rot_z(3f64.to_radians()), Vec3::new(0.002, 0.0, 0.5));
        assert_eq!(update_paths_on_motion(&ps, &old, &new, &DeadBand::default()), ps);
    }

    #[test]
    fn translation_shifts_every_point() {
        let ps = paths();
        let old = RigidTransform::identity();
        let new = RigidTransform::from_translation(Vec3::new(0.01, 0.0, 0.0));
        let moved = update_paths_on_motion(&ps, &old, &new, &DeadBand::default());
        for (a, b) in ps[0].points.iter().zip(&moved[0].points) {
            assert!((b.chi - a.chi - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
            assert_eq!(a.eta, b.eta);
        }
    }

    #[test]
    fn rotation_is_an_isometry() {
        let ps = paths();
        let old = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.5));
        let new = RigidTransform::new(rot_y(std::f64::consts::FRAC_PI_2), Vec3::new(0.0, 0.0, 0.5));
        let moved = update_paths_on_motion(&ps, &old, &new, &DeadBand::default());
        for (a, b) in pairwise(&ps[0]).iter().zip(pairwise(&moved[0])) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in ps[0].points.iter().zip(&moved[0].points) {
            assert!((rot_y(std::f64::consts::FRAC_PI_2) * a.eta - b.eta).norm() < 1e-12);
        }
    }

    #[test]
    fn script_interpolates_and_clamps() {
        let s = MotionScript::new(vec![
            Keyframe { t_s: 0.0, translation: [0.0; 3], axis_angle: [0.0; 3] },
            Keyframe { t_s: 2.0, translation: [0.02, 0.0, 0.0], axis_angle: [0.0, 0.0, 0.2] },
        ])
        .unwrap();
        let mid = s.pose_at(1.0);
        assert!((mid.translation - Vec3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
        assert!((mid.angle() - 0.1).abs() < 1e-12);
        assert_eq!(s.pose_at(-1.0), RigidTransform::identity());
        assert!((s.pose_at(5.0).translation.x - 0.02).abs() < 1e-15);
        assert!(MotionScript::new(vec![]).is_err());
        let json = r#"[{"t_s":0,"translation":[0,0,0],"axis_angle":[0,0,0]},{"t_s":1,"translation":[0,0,0.01],"axis_angle":[0,0,0]}]"#;
        let parsed: MotionScript = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.keyframes.len(), 2);
    }
}
