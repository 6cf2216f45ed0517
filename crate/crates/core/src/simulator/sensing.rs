//! Virtual distance sensors around the effector and the repulsive field
//! that keeps it out of the danger zone.

use serde::{Deserialize, Serialize};

use crate::cloud::SurfaceIndex;
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

/// Distances at or below this count as contact.
pub const CONTACT_DISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRig {
    /// Sensor frames relative to the effector; each looks along its own +z.
    pub mounts: Vec<RigidTransform>,
    pub max_range: f64,
    /// Radius of the ray cylinder used against the point-sampled surface.
    pub ray_radius: f64,
    pub l_min: f64,
    pub kappa: f64,
}

impl SensorRig {
    /// `count` sensors on a ring of `radius` around the approach axis, set
    /// back `setback` behind the tool point, all looking along the approach axis.
    pub fn ring(count: usize, radius: f64, setback: f64) -> Vec<RigidTransform> {
        (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                RigidTransform::from_translation(Vec3::new(radius * a.cos(), radius * a.sin(), -setback))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mounts.is_empty() {
            return Err(Error::InvalidParam("sensor rig has no sensors".into()));
        }
        for (name, v) in [
            ("l_min", self.l_min),
            ("kappa", self.kappa),
            ("max_range", self.max_range),
            ("ray_radius", self.ray_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            mounts: Self::ring(3, 0.025, 0.03),
            max_range: 0.2,
            ray_radius: 0.002,
            l_min: 0.02,
            kappa: 5e-5,
        }
    }
}

/// Per-sensor hit used in the fused estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorHit {
    pub sensor: usize,
    /// From the sensor to the surface point.
    pub l: Vec3,
    /// Surface normal at the hit, oriented along the ray.
    pub normal: Vec3,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedReading {
    pub l: Vec3,
    pub hits: Vec<SensorHit>,
}

impl FusedReading {
    pub fn distance(&self) -> f64 {
        self.l.norm()
    }
}

/// Weighted average of the sensor vectors, weights being the cosine between
/// each vector and the inward surface normal at its hit. Misses and grazing
/// hits (zero weight) are left out of both sums.
pub fn fuse(hits: Vec<SensorHit>) -> Result<FusedReading> {
    let wsum: f64 = hits.iter().map(|h| h.weight).sum();
    if hits.is_empty() || wsum <= 0.0 {
        return Err(Error::NoSurfaceInRange);
    }
    let l = hits.iter().map(|h| h.l * h.weight).sum::<Vec3>() / wsum;
    Ok(FusedReading { l, hits })
}

/// Casts every sensor ray from `effector` (world frame) into the surface.
/// `world_to_surface` maps world coordinates into the frame the surface
/// index was built in.
pub fn sensor_fusion(
    rig: &SensorRig,
    effector: &RigidTransform,
    surface: &SurfaceIndex,
    world_to_surface: &RigidTransform,
) -> Result<FusedReading> {
    let surface_to_world = world_to_surface.inverse();
    let mut hits = Vec::new();
    for (k, mount) in rig.mounts.iter().enumerate() {
        let frame = effector.compose(mount);
        let origin = frame.translation;
        let dir = frame.rotation.column(2).into_owned();
        let o_local = world_to_surface.transform_point(&origin);
        let d_local = world_to_surface.transform_vector(&dir);
        let Some(hit) = surface.raycast(&o_local, &d_local, rig.ray_radius, rig.max_range) else {
            continue;
        };
        let point = surface_to_world.transform_point(&hit.point);
        let mut normal = surface_to_world.transform_vector(&hit.normal);
        if normal.dot(&dir) < 0.0 {
            normal = -normal;
        }
        let l = point - origin;
        let (ln, nn) = (l.norm(), normal.norm());
        let weight = if ln > 0.0 && nn > 0.0 { l.dot(&normal) / (ln * nn) } else { 1.0 };
        if weight > 0.0 {
            hits.push(SensorHit {
                sensor: k,
                l,
                normal,
                weight,
            });
        }
    }
    fuse(hits)
}

/// `U = 1/2 (1/D - 1/l_min)^2` inside the danger zone, zero outside.
pub fn repulsive_potential(distance: f64, l_min: f64) -> f64 {
    if distance > l_min {
        0.0
    } else {
        0.5 * (1.0 / distance - 1.0 / l_min).powi(2)
    }
}

/// `kappa * (-grad U)` with respect to the effector position. The distance
/// gradient is `-l/|l|` (moving toward the surface shortens `l`), so the
/// result points away from the surface.
pub fn repulsive_velocity(l: &Vec3, rig: &SensorRig) -> Result<Vec3> {
    let d = l.norm();
    if d <= CONTACT_DISTANCE {
        return Err(Error::Contact { distance: d });
    }
    if d > rig.l_min {
        return Ok(Vec3::zeros());
    }
    let magnitude = rig.kappa * (1.0 / d - 1.0 / rig.l_min) / (d * d);
    Ok(-l / d * magnitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{PointCloud, SurfacePoint};
    use crate::fixtures::planar_patch;
    use crate::geometry::rot_x;

    fn rig() -> SensorRig {
        SensorRig::default()
    }

    #[test]
    fn zero_outside_and_on_boundary() {
        let r = rig();
        assert_eq!(repulsive_velocity(&Vec3::new(0.0, 0.0, 2.0 * r.l_min), &r).unwrap(), Vec3::zeros());
        assert_eq!(repulsive_velocity(&Vec3::new(0.0, 0.0, r.l_min), &r).unwrap(), Vec3::zeros());
        assert!(matches!(repulsive_velocity(&Vec3::new(0.0, 0.0, 1e-7), &r), Err(Error::Contact { .. })));
    }

    #[test]
    fn matches_finite_difference_gradient() {
        let r = rig();
        let surface = Vec3::new(0.003, -0.002, 0.01);
        let u = |p: &Vec3| repulsive_potential((surface - p).norm(), r.l_min);
        for p in [Vec3::zeros(), Vec3::new(0.001, 0.002, -0.003), Vec3::new(0.0, 0.0, 0.004)] {
            let l = surface - p;
            let v = repulsive_velocity(&l, &r).unwrap();
            let h = 1e-9;
            let grad = Vec3::from_fn(|i, _| {
                let mut a = p;
                let mut b = p;
                a[i] += h;
                b[i] -= h;
                (u(&a) - u(&b)) / (2.0 * h)
            });
            let fd = -grad * r.kappa;
            assert!((v - fd).norm() <= 1e-6 * fd.norm(), "{v:?} {fd:?}");
            assert!(v.dot(&l) < 0.0);
        }
        // The closed form at half the threshold.
        let half = r.l_min / 2.0;
        let v = repulsive_velocity(&Vec3::new(0.0, 0.0, half), &r).unwrap();
        let expected = r.kappa * (2.0 / r.l_min - 1.0 / r.l_min) * 4.0 / (r.l_min * r.l_min);
        assert!((v.norm() - expected).abs() <= 1e-12 * expected);
        assert!(v.z < 0.0);
    }

    #[test]
    fn magnitude_grows_as_distance_shrinks() {
        let r = rig();
        let mut last = 0.0;
        for k in 1..100 {
            let d = r.l_min * (1.0 - k as f64 / 100.0);
            let m = repulsive_velocity(&Vec3::new(0.0, d, 0.0), &r).unwrap().norm();
            assert!(m > last);
            last = m;
        }
    }

    fn hit(l: Vec3, normal: Vec3) -> SensorHit {
        SensorHit {
            sensor: 0,
            l,
            normal,
            weight: l.dot(&normal) / (l.norm() * normal.norm()),
        }
    }

    #[test]
    fn fusion_examples() {
        let a = hit(Vec3::new(0.0, 0.0, 0.05), Vec3::z());
        let fused = fuse(vec![a, a]).unwrap();
        assert!((fused.distance() - 0.05).abs() < 1e-15);
        let fused = fuse(vec![a]).unwrap();
        assert_eq!(fused.l, a.l);
        assert!(matches!(fuse(vec![]), Err(Error::NoSurfaceInRange)));
    }

    #[test]
    fn fusion_on_inclined_plane_matches_hand_sum() {
        let tilt = 30f64.to_radians();
        let plane = planar_patch(0.2, 0.2, 0.0005, "w").transformed(&RigidTransform::new(
            rot_x(tilt),
            Vec3::new(-0.1, -0.1 * tilt.cos(), 0.1),
        ));
        let index = SurfaceIndex::new(plane);
        let r = rig();
        let reading = sensor_fusion(&r, &RigidTransform::identity(), &index, &RigidTransform::identity()).unwrap();
        assert_eq!(reading.hits.len(), 3);
        let mut num = Vec3::zeros();
        let mut den = 0.0;
        for h in &reading.hits {
            let w = h.l.dot(&h.normal) / (h.l.norm() * h.normal.norm());
            num += h.l * w;
            den += w;
        }
        assert!((reading.l - num / den).norm() < 1e-9);
        // Rays run along z onto a 30 degree slope; hits sit at most one ray radius off axis.
        for h in &reading.hits {
            assert!((h.weight - tilt.cos()).abs() < 0.05);
        }
    }

    #[test]
    fn misses_are_excluded() {
        let small = PointCloud::new(
            vec![SurfacePoint::new(Vec3::new(0.025, 0.0, 0.02), -Vec3::z())],
            "w",
        );
        let index = SurfaceIndex::new(small);
        let reading = sensor_fusion(&rig(), &RigidTransform::identity(), &index, &RigidTransform::identity()).unwrap();
        assert_eq!(reading.hits.len(), 1);
        assert_eq!(reading.hits[0].sensor, 0);
        assert!((reading.l - Vec3::new(0.0, 0.0, 0.05)).norm() < 1e-12);
    }
}
