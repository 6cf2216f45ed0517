//! Strip binning, patch sweeping and S-shaped coverage paths over a region
//! cloud, plus the conversion of path points into 6-DoF pose commands.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, SurfacePoint};
use crate::error::{Error, Result};
use crate::geometry::{
    rotation_from_normal, rotation_from_normal_or_fallback, rotation_to_axis_angle, PoseVector6,
    Vec3,
};
use crate::segmentation::SegmentedFace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationPolicy {
    #[default]
    Auto,
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StripOrientation {
    /// Strips run along the camera x-axis and are stacked along y.
    Horizontal,
    /// Strips run along the camera y-axis and are stacked along x.
    Vertical,
}

/// How strip width reacts to surface tilt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObliquityCorrection {
    /// Fixed width `d_s = diameter`.
    None,
    /// `d_s = diameter * cos(o)`: rows are one diameter apart on the surface.
    #[default]
    GapFree,
    /// `d_s = diameter / cos(o)`.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub laser_diameter: f64,
    pub pulse_rate: f64,
    pub orientation: OrientationPolicy,
    pub obliquity: ObliquityCorrection,
    /// Upper clamp on strip obliquity, radians.
    pub max_obliquity: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            laser_diameter: 0.004,
            pulse_rate: 4.0,
            orientation: OrientationPolicy::Auto,
            obliquity: ObliquityCorrection::GapFree,
            max_obliquity: 85f64.to_radians(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.laser_diameter > 0.0 && self.laser_diameter.is_finite()) {
            return Err(Error::InvalidParam("laser diameter must be positive".into()));
        }
        if !(self.pulse_rate > 0.0 && self.pulse_rate.is_finite()) {
            return Err(Error::InvalidParam("pulse rate must be positive".into()));
        }
        if !(self.max_obliquity >= 0.0 && self.max_obliquity < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParam("max obliquity must lie in [0, pi/2)".into()));
        }
        Ok(())
    }

    /// Strip width for a strip tilted by `obliquity`.
    pub fn strip_width(&self, obliquity: f64) -> f64 {
        let o = obliquity.clamp(0.0, self.max_obliquity);
        match self.obliquity {
            ObliquityCorrection::None => self.laser_diameter,
            ObliquityCorrection::GapFree => self.laser_diameter * o.cos(),
            ObliquityCorrection::AsPrinted => self.laser_diameter / o.cos(),
        }
    }
}

/// Highest effector speed that still leaves no gap between pulses.
pub fn max_speed(config: &PlannerConfig) -> f64 {
    config.laser_diameter * config.pulse_rate
}

/// Camera basis `(x, y, z)` whose z is the optical axis.
pub fn camera_basis(camera_axis: &Vec3) -> (Vec3, Vec3, Vec3) {
    let r = rotation_from_normal_or_fallback(&camera_axis.normalize());
    (
        r.column(0).into_owned(),
        r.column(1).into_owned(),
        r.column(2).into_owned(),
    )
}

/// Tilt of a strip about the axis orthogonal to `bin_axis` and the camera
/// axis: the angle between the camera axis and the normal's projection onto
/// the plane spanned by `bin_axis` and the camera axis, in `[0, pi/2]`.
///
/// The closed form written `o_x = acos((η − (η·γ)γ)·(γ × η) / ...)` mixes the
/// projection with its own cross-product; this is the geometric reading.
pub fn strip_obliquity(eta_s: &Vec3, gamma_c: &Vec3, bin_axis: &Vec3) -> Result<f64> {
    let a = eta_s.dot(bin_axis).abs();
    let c = eta_s.dot(gamma_c).abs();
    if a.hypot(c) < 1e-9 {
        return Err(Error::DegenerateObliquity);
    }
    Ok(a.atan2(c))
}

/// A band of segment points `[lo, hi)` along the binning axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Strip {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub obliquity: f64,
    /// Indices into the segment cloud.
    pub members: Vec<usize>,
    pub points: Vec<SurfacePoint>,
    /// Normalised mean of member normals.
    pub normal: Vec3,
}

impl Strip {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn mean_normal(points: &[SurfacePoint]) -> Option<Vec3> {
    let s: Vec3 = points.iter().map(|p| p.normal).sum();
    let n = s.norm();
    (n > 1e-12).then(|| s / n)
}

fn axes(orientation: StripOrientation, camera_axis: &Vec3) -> (Vec3, Vec3, Vec3) {
    let (x, y, z) = camera_basis(camera_axis);
    match orientation {
        StripOrientation::Horizontal => (y, x, z),
        StripOrientation::Vertical => (x, y, z),
    }
}

/// Chooses strip orientation from the extents across the camera image.
pub fn choose_orientation(segment: &PointCloud, policy: OrientationPolicy, camera_axis: &Vec3) -> StripOrientation {
    match policy {
        OrientationPolicy::Horizontal => StripOrientation::Horizontal,
        OrientationPolicy::Vertical => StripOrientation::Vertical,
        OrientationPolicy::Auto => {
            let (x, y, _) = camera_basis(camera_axis);
            let extent = |axis: &Vec3| {
                let (lo, hi) = segment
                    .positions()
                    .map(|p| p.dot(axis))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
                hi - lo
            };
            if extent(&x) >= extent(&y) {
                StripOrientation::Horizontal
            } else {
                StripOrientation::Vertical
            }
        }
    }
}

const MAX_REFINE: usize = 8;

/// Adaptive binning: each strip is seeded one diameter wide, its obliquity is
/// taken from the members' mean normal, and it is re-binned at the corrected
/// width. The next strip starts where the previous one ended.
pub fn bin_strips(
    segment: &PointCloud,
    config: &PlannerConfig,
    camera_axis: &Vec3,
    orientation: StripOrientation,
) -> Result<Vec<Strip>> {
    config.validate()?;
    if segment.is_empty() {
        return Err(Error::EmptySegment);
    }
    let (bin_axis, _, gamma) = axes(orientation, camera_axis);
    let mut order: Vec<(f64, usize)> = segment
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.position.dot(&bin_axis), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let collect = |start: usize, hi: f64| -> usize {
        start + order[start..].partition_point(|(c, _)| *c < hi)
    };

    let mut strips = Vec::new();
    let mut lo = order[0].0;
    let mut start = 0;
    while start < order.len() {
        let seed_end = collect(start, lo + config.laser_diameter);
        if seed_end == start {
            lo += config.laser_diameter;
            continue;
        }
        // Tilt from the seed window, then refined on the re-binned window
        // until the width settles.
        let tilt = |end: usize| {
            let pts: Vec<SurfacePoint> = order[start..end].iter().map(|(_, i)| segment.points[*i]).collect();
            mean_normal(&pts)
                .and_then(|n| strip_obliquity(&n, &gamma, &bin_axis).ok())
                .unwrap_or(0.0)
                .min(config.max_obliquity)
        };
        let mut obliquity = tilt(seed_end);
        let mut hi = lo + config.strip_width(obliquity);
        for _ in 0..MAX_REFINE {
            let end = collect(start, hi);
            if end == start {
                break;
            }
            let o = tilt(end);
            let next = lo + config.strip_width(o);
            let settled = (next - hi).abs() <= 1e-6 * config.laser_diameter;
            obliquity = o;
            hi = next;
            if settled {
                break;
            }
        }
        let end = collect(start, hi);
        if end > start {
            let members: Vec<usize> = order[start..end].iter().map(|(_, i)| *i).collect();
            let points: Vec<SurfacePoint> = members.iter().map(|i| segment.points[*i]).collect();
            let normal = mean_normal(&points).unwrap_or(gamma);
            strips.push(Strip {
                index: strips.len(),
                lo,
                hi,
                obliquity,
                members,
                points,
                normal,
            });
        }
        start = end;
        lo = hi;
    }
    Ok(strips)
}

/// One coverage path sample: surface position and laser approach direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub chi: Vec3,
    /// Unit normal pointing into the surface (away from the camera).
    pub eta: Vec3,
    pub strip: usize,
}

fn inward(n: Vec3, gamma: &Vec3) -> Vec3 {
    if n.dot(gamma) < 0.0 {
        -n
    } else {
        n
    }
}

/// Slides a `diameter x d_s` stencil along the strip in steps of one diameter,
/// emitting the mean position and mean normal of each non-empty placement.
/// `direction` +1 sweeps from low to high sweep coordinate, -1 the reverse.
pub fn sweep_patch(
    strip: &Strip,
    config: &PlannerConfig,
    sweep_axis: &Vec3,
    camera_axis: &Vec3,
    direction: i32,
) -> Vec<PathPoint> {
    if strip.points.is_empty() {
        return Vec::new();
    }
    let gamma = camera_axis.normalize();
    let coords: Vec<f64> = strip.points.iter().map(|p| p.position.dot(sweep_axis)).collect();
    let min = coords.iter().copied().fold(f64::INFINITY, f64::min);
    let max = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d = config.laser_diameter;
    let last = ((max - min) / d).floor() as usize;
    let mut sums = vec![(Vec3::zeros(), Vec3::zeros(), 0usize); last + 1];
    for (p, c) in strip.points.iter().zip(&coords) {
        // Nudge so samples lying on a stencil edge land in the later placement.
        let a = (((c - min) / d + 1e-9).floor() as usize).min(last);
        sums[a].0 += p.position;
        sums[a].1 += p.normal;
        sums[a].2 += 1;
    }
    let mut out: Vec<PathPoint> = sums
        .into_iter()
        .filter(|s| s.2 > 0)
        .map(|(ps, ns, n)| {
            let eta = if ns.norm() > 1e-12 { ns.normalize() } else { strip.normal };
            PathPoint {
                chi: ps / n as f64,
                eta: inward(eta, &gamma),
                strip: strip.index,
            }
        })
        .collect();
    if direction < 0 {
        out.reverse();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPath {
    pub label: String,
    pub points: Vec<PathPoint>,
    pub orientation: StripOrientation,
    /// Width `d_s` of every strip, by strip index.
    pub strip_widths: Vec<f64>,
}

impl SegmentPath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn strip_count(&self) -> usize {
        self.strip_widths.len()
    }

    /// Points of each strip, in path order.
    pub fn strips(&self) -> Vec<&[PathPoint]> {
        self.points
            .chunk_by(|a, b| a.strip == b.strip)
            .collect()
    }

    /// Polyline length through all points.
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].chi - w[0].chi).norm()).sum()
    }
}

/// Bins a region into strips and sweeps them back and forth into one S-path.
pub fn plan_segment(
    label: &str,
    segment: &PointCloud,
    config: &PlannerConfig,
    camera_axis: &Vec3,
) -> Result<SegmentPath> {
    if segment.is_empty() {
        return Err(Error::EmptySegment);
    }
    let orientation = choose_orientation(segment, config.orientation, camera_axis);
    let strips = bin_strips(segment, config, camera_axis, orientation)?;
    let (_, sweep_axis, _) = axes(orientation, camera_axis);
    let mut points = Vec::new();
    for (k, strip) in strips.iter().enumerate() {
        let direction = if k % 2 == 0 { 1 } else { -1 };
        points.extend(sweep_patch(strip, config, &sweep_axis, camera_axis, direction));
    }
    Ok(SegmentPath {
        label: label.to_string(),
        points,
        orientation,
        strip_widths: strips.iter().map(Strip::width).collect(),
    })
}

/// Plans every non-empty region concurrently; output follows label order.
pub fn plan_face(face: &SegmentedFace, config: &PlannerConfig, camera_axis: &Vec3) -> Result<Vec<SegmentPath>> {
    face.regions
        .par_iter()
        .filter(|(_, cloud)| !cloud.is_empty())
        .map(|(label, cloud)| plan_segment(label.as_str(), cloud, config, camera_axis))
        .collect()
}

/// Pose commands `[chi; nu]` whose approach axis equals each point's `eta`.
pub fn path_to_poses(path: &SegmentPath) -> Result<Vec<PoseVector6>> {
    path.points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = rotation_from_normal(&p.eta).map_err(|_| Error::DegenerateNormal { index: Some(i) })?;
            Ok(PoseVector6::new(p.chi, rotation_to_axis_angle(&r)))
        })
        .collect()
}

/// As [`path_to_poses`] but crossing with the base z-axis for normals along base y.
pub fn path_to_poses_with_fallback(path: &SegmentPath) -> Vec<PoseVector6> {
    path.points
        .iter()
        .map(|p| PoseVector6::new(p.chi, rotation_to_axis_angle(&rotation_from_normal_or_fallback(&p.eta))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
    pub segment_label: String,
    pub strip_index: usize,
}

pub fn write_paths_json<W: Write>(paths: &[SegmentPath], w: W) -> Result<()> {
    let records: Vec<PathRecord> = paths
        .iter()
        .flat_map(|path| {
            path.points.iter().map(|p| PathRecord {
                x: p.chi.x,
                y: p.chi.y,
                z: p.chi.z,
                nx: p.eta.x,
                ny: p.eta.y,
                nz: p.eta.z,
                segment_label: path.label.clone(),
                strip_index: p.strip,
            })
        })
        .collect();
    serde_json::to_writer_pretty(w, &records)?;
    Ok(())
}

/// Regroups exported records into paths. Orientation is not part of the
/// record format and comes back as horizontal; strip widths are unknown (NaN).
pub fn read_paths_json<R: Read>(r: R) -> Result<Vec<SegmentPath>> {
    let records: Vec<PathRecord> = serde_json::from_reader(r)?;
    let mut paths: Vec<SegmentPath> = Vec::new();
    for rec in records {
        let eta = Vec3::new(rec.nx, rec.ny, rec.nz);
        if (eta.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParam(format!(
                "path normal of `{}` is not unit length",
                rec.segment_label
            )));
        }
        let point = PathPoint {
            chi: Vec3::new(rec.x, rec.y, rec.z),
            eta,
            strip: rec.strip_index,
        };
        match paths.last_mut() {
            Some(p) if p.label == rec.segment_label => p.points.push(point),
            _ => paths.push(SegmentPath {
                label: rec.segment_label,
                points: vec![point],
                orientation: StripOrientation::Horizontal,
                strip_widths: Vec::new(),
            }),
        }
    }
    for p in &mut paths {
        let n = p.points.iter().map(|q| q.strip + 1).max().unwrap_or(0);
        p.strip_widths = vec![f64::NAN; n];
    }
    Ok(paths)
}
