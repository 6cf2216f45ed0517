//! Seven-region face segmentation: landmark polygons on the image plane,
//! perspective projection of every cloud point, even-odd inclusion test.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{project_point, CameraIntrinsics, RigidTransform};

pub const LANDMARK_COUNT: usize = 68;

/// 68 image-plane landmarks in the iBUG/dlib ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceLandmarks {
    pub width: u32,
    pub height: u32,
    pub points: Vec<[f64; 2]>,
}

impl FaceLandmarks {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != LANDMARK_COUNT {
            return Err(Error::MalformedLandmarks(format!(
                "expected {LANDMARK_COUNT} points, got {}",
                self.points.len()
            )));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::MalformedLandmarks("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let lm: FaceLandmarks = serde_json::from_reader(std::fs::File::open(path)?)?;
        lm.validate()?;
        Ok(lm)
    }

    fn p(&self, i: usize) -> [f64; 2] {
        self.points[i]
    }

    /// Reflects about the vertical line `u = axis_u` and re-indexes so the
    /// result is again a valid left-to-right landmark set.
    pub fn mirrored(&self, axis_u: f64) -> FaceLandmarks {
        let points = (0..LANDMARK_COUNT)
            .map(|i| {
                let [u, v] = self.points[mirror_index(i)];
                [2.0 * axis_u - u, v]
            })
            .collect();
        FaceLandmarks {
            width: self.width,
            height: self.height,
            points,
        }
    }
}

/// Landmark index that lands on `i` under a left-right mirror.
pub fn mirror_index(i: usize) -> usize {
    match i {
        0..=16 => 16 - i,
        17..=26 => 43 - i,
        27..=30 => i,
        31..=35 => 66 - i,
        36..=39 => 81 - i,
        40 | 41 => 87 - i,
        42..=45 => 81 - i,
        46 | 47 => 87 - i,
        48..=54 => 102 - i,
        55..=59 => 114 - i,
        60..=64 => 124 - i,
        65..=67 => 132 - i,
        _ => i,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    Forehead,
    Nose,
    UpperLips,
    LeftCheek,
    RightCheek,
    LeftJaw,
    RightJaw,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 7] = [
        RegionLabel::Forehead,
        RegionLabel::Nose,
        RegionLabel::UpperLips,
        RegionLabel::LeftCheek,
        RegionLabel::RightCheek,
        RegionLabel::LeftJaw,
        RegionLabel::RightJaw,
    ];

    /// Classification priority: protruding and small regions claim first.
    pub const MATCH_ORDER: [RegionLabel; 7] = [
        RegionLabel::Nose,
        RegionLabel::UpperLips,
        RegionLabel::Forehead,
        RegionLabel::LeftCheek,
        RegionLabel::RightCheek,
        RegionLabel::LeftJaw,
        RegionLabel::RightJaw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::Forehead => "forehead",
            RegionLabel::Nose => "nose",
            RegionLabel::UpperLips => "upper_lips",
            RegionLabel::LeftCheek => "left_cheek",
            RegionLabel::RightCheek => "right_cheek",
            RegionLabel::LeftJaw => "left_jaw",
            RegionLabel::RightJaw => "right_jaw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }

    /// Left/right counterpart (self for midline regions).
    pub fn mirrored(self) -> Self {
        match self {
            RegionLabel::LeftCheek => RegionLabel::RightCheek,
            RegionLabel::RightCheek => RegionLabel::LeftCheek,
            RegionLabel::LeftJaw => RegionLabel::RightJaw,
            RegionLabel::RightJaw => RegionLabel::LeftJaw,
            other => other,
        }
    }
}

impl std::fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPolygon {
    pub label: RegionLabel,
    pub vertices: Vec<[f64; 2]>,
}

impl RegionPolygon {
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let [x0, y0] = self.vertices[i];
                let [x1, y1] = self.vertices[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum::<f64>()
            * 0.5
    }

    pub fn is_simple(&self) -> bool {
        is_simple(&self.vertices)
    }
}

/// Template tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateConfig {
    /// Forehead height above the brows as a fraction of brow-to-chin height.
    pub forehead_extension: f64,
    /// How far the inner jaw boundary sits from the jaw line toward the nose tip.
    pub jaw_band: f64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            forehead_extension: 0.6,
            jaw_band: 0.25,
        }
    }
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Builds the seven region polygons from fixed landmark-index templates.
/// "Left"/"right" refer to the image side (smaller `u` is left).
pub fn build_region_polygons(landmarks: &FaceLandmarks) -> Result<Vec<RegionPolygon>> {
    build_region_polygons_with(landmarks, &TemplateConfig::default())
}

pub fn build_region_polygons_with(
    landmarks: &FaceLandmarks,
    config: &TemplateConfig,
) -> Result<Vec<RegionPolygon>> {
    landmarks.validate()?;
    let p = |i| landmarks.p(i);

    let brow_v = (17..=26).map(|i| p(i)[1]).sum::<f64>() / 10.0;
    let lift = config.forehead_extension * (p(8)[1] - brow_v);
    let up = |q: [f64; 2]| [q[0], q[1] - lift];
    let nose_tip = p(30);
    let inner = |i: usize| lerp(p(i), nose_tip, config.jaw_band);

    let mut forehead: Vec<[f64; 2]> = (17..=26).map(p).collect();
    forehead.push(up(p(26)));
    forehead.push(up(p(17)));

    let nose = convex_hull((27..=35).map(p).collect());

    let mut upper_lips: Vec<[f64; 2]> = (31..=35).map(p).collect();
    upper_lips.extend((48..=54).rev().map(p));

    let mut left_cheek = vec![p(36), p(41), p(40), p(39), p(31), p(48)];
    left_cheek.extend((0..=5).rev().map(inner));
    let mut right_cheek = vec![p(45), p(46), p(47), p(42), p(35), p(54)];
    right_cheek.extend((11..=16).map(inner));

    let mut left_jaw: Vec<[f64; 2]> = (0..=8).map(p).collect();
    left_jaw.extend((0..=8).rev().map(inner));
    let mut right_jaw: Vec<[f64; 2]> = (8..=16).map(p).collect();
    right_jaw.extend((8..=16).rev().map(inner));

    let polygons = vec![
        RegionPolygon { label: RegionLabel::Forehead, vertices: forehead },
        RegionPolygon { label: RegionLabel::Nose, vertices: nose },
        RegionPolygon { label: RegionLabel::UpperLips, vertices: upper_lips },
        RegionPolygon { label: RegionLabel::LeftCheek, vertices: left_cheek },
        RegionPolygon { label: RegionLabel::RightCheek, vertices: right_cheek },
        RegionPolygon { label: RegionLabel::LeftJaw, vertices: left_jaw },
        RegionPolygon { label: RegionLabel::RightJaw, vertices: right_jaw },
    ];
    for poly in &polygons {
        validate_polygon(poly)?;
    }
    Ok(polygons)
}

fn validate_polygon(poly: &RegionPolygon) -> Result<()> {
    if poly.vertices.len() < 3 || poly.signed_area().abs() < 1e-6 || !poly.is_simple() {
        return Err(Error::MalformedLandmarks(format!(
            "{} polygon is degenerate or self-intersecting",
            poly.label
        )));
    }
    Ok(())
}

/// Replaces template polygons by those in a `{"label": [[u, v], ...]}` file.
pub fn apply_polygon_overrides(
    polygons: &mut [RegionPolygon],
    overrides: &BTreeMap<String, Vec<[f64; 2]>>,
) -> Result<()> {
    for (name, vertices) in overrides {
        let label = RegionLabel::parse(name)
            .ok_or_else(|| Error::InvalidParam(format!("unknown region `{name}`")))?;
        let poly = RegionPolygon {
            label,
            vertices: vertices.clone(),
        };
        validate_polygon(&poly)?;
        if let Some(slot) = polygons.iter_mut().find(|p| p.label == label) {
            *slot = poly;
        }
    }
    Ok(())
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_touch(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// No two edges meet except adjacent edges at their shared vertex.
pub fn is_simple(v: &[[f64; 2]]) -> bool {
    let n = v.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in i + 1..n {
            let (c, d) = (v[j], v[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Adjacent edges may only share their common vertex: reject folding back.
                let (shared, other_a, other_b) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if orient(other_a, shared, other_b) == 0.0 {
                    let u = [other_a[0] - shared[0], other_a[1] - shared[1]];
                    let w = [other_b[0] - shared[0], other_b[1] - shared[1]];
                    if u[0] * w[0] + u[1] * w[1] > 0.0 {
                        return false;
                    }
                }
                continue;
            }
            if segments_touch(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Even-odd ray casting toward +u. Each edge is evaluated with its endpoints
/// in a canonical order and a half-open span in `v`, so a point on an edge
/// shared by two polygons is counted in exactly one of them.
pub fn point_in_polygon(p: [f64; 2], poly: &RegionPolygon) -> bool {
    point_in_ring(p, &poly.vertices)
}

pub fn point_in_ring(p: [f64; 2], v: &[[f64; 2]]) -> bool {
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let (mut a, mut b) = (v[i], v[(i + 1) % n]);
        if (a[1], a[0]) > (b[1], b[0]) {
            std::mem::swap(&mut a, &mut b);
        }
        // a is the lower endpoint: span [a.v, b.v)
        if p[1] >= a[1] && p[1] < b[1] {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Face cloud partitioned into labelled regions plus unclassified residual.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedFace {
    pub regions: BTreeMap<RegionLabel, PointCloud>,
    pub residual: PointCloud,
    /// Per input point: its region, or `None` for residual.
    pub assignment: Vec<Option<RegionLabel>>,
}

impl SegmentedFace {
    pub fn region(&self, label: RegionLabel) -> &PointCloud {
        &self.regions[&label]
    }
}

/// Projects each point into the image and assigns it to the first polygon in
/// [`RegionLabel::MATCH_ORDER`] containing its pixel.
pub fn segment_face(
    cloud: &PointCloud,
    polygons: &[RegionPolygon],
    intrinsics: &CameraIntrinsics,
    extrinsics: &RigidTransform,
) -> Result<SegmentedFace> {
    let pixels: Vec<Option<[f64; 2]>> = cloud
        .points
        .par_iter()
        .map(|p| {
            project_point(&p.position, intrinsics, extrinsics)
                .ok()
                .map(|(u, v)| [u, v])
        })
        .collect();

    // One membership mask per region, computed independently.
    let ordered: Vec<&RegionPolygon> = RegionLabel::MATCH_ORDER
        .iter()
        .filter_map(|l| polygons.iter().find(|p| p.label == *l))
        .collect();
    let masks: Vec<Vec<bool>> = ordered
        .par_iter()
        .map(|poly| {
            pixels
                .iter()
                .map(|px| px.is_some_and(|px| point_in_polygon(px, poly)))
                .collect()
        })
        .collect();

    let assignment: Vec<Option<RegionLabel>> = (0..cloud.len())
        .map(|i| {
            ordered
                .iter()
                .zip(&masks)
                .find(|(_, m)| m[i])
                .map(|(p, _)| p.label)
        })
        .collect();

    let empty = || PointCloud {
        points: Vec::new(),
        frame: cloud.frame.clone(),
        has_normals: cloud.has_normals,
    };
    let mut regions: BTreeMap<RegionLabel, PointCloud> =
        RegionLabel::ALL.iter().map(|l| (*l, empty())).collect();
    let mut residual = empty();
    for (p, label) in cloud.points.iter().zip(&assignment) {
        match label {
            Some(l) => regions.get_mut(l).expect("all labels present").points.push(*p),
            None => residual.points.push(*p),
        }
    }
    Ok(SegmentedFace {
        regions,
        residual,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{canonical_landmarks, default_camera, head_cloud};
    use crate::geometry::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square() -> RegionPolygon {
        RegionPolygon {
            label: RegionLabel::Nose,
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        }
    }

    /// Winding number via signed crossings (independent of the even-odd code).
    fn winding(p: [f64; 2], v: &[[f64; 2]]) -> i32 {
        let mut wn = 0;
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            let is_left = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
            if a[1] <= p[1] {
                if b[1] > p[1] && is_left > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= p[1] && is_left < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    #[test]
    fn unit_square() {
        assert!(point_in_polygon([0.5, 0.5], &square()));
        assert!(!point_in_polygon([1.5, 0.5], &square()));
    }

    #[test]
    fn shared_edge_counted_once() {
        let left = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let right = vec![[1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0]];
        let slanted_a = vec![[0.0, 0.0], [1.0, 0.3], [0.7, 1.0]];
        let slanted_b = vec![[1.0, 0.3], [2.0, 1.0], [0.7, 1.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let t: f64 = rng.gen_range(0.0..1.0);
            let p = [1.0, t];
            assert_eq!(point_in_ring(p, &left) as u8 + point_in_ring(p, &right) as u8, 1);
            let q = [1.0 + (0.7 - 1.0) * t, 0.3 + 0.7 * t];
            let n = point_in_ring(q, &slanted_a) as u8 + point_in_ring(q, &slanted_b) as u8;
            assert!(n <= 1);
        }
    }

    #[test]
    fn concave_polygon_matches_winding_number() {
        let comb = vec![
            [0.0, 0.0], [5.0, 0.0], [5.0, 4.0], [4.0, 4.0], [4.0, 1.0], [3.0, 1.0],
            [3.0, 4.0], [2.0, 4.0], [2.0, 1.0], [1.0, 1.0], [1.0, 4.0], [0.0, 4.0],
        ];
        assert!(is_simple(&comb));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10_000 {
            let p = [rng.gen_range(-1.0..6.0), rng.gen_range(-1.0..5.0)];
            assert_eq!(point_in_ring(p, &comb), winding(p, &comb) != 0, "{p:?}");
        }
    }

    #[test]
    fn canonical_polygons_are_simple() {
        let lm = canonical_landmarks(0.6);
        let polys = build_region_polygons(&lm).unwrap();
        assert_eq!(polys.len(), 7);
        for p in &polys {
            assert!(p.is_simple(), "{}", p.label);
        }
        let nose = polys.iter().find(|p| p.label == RegionLabel::Nose).unwrap();
        assert!(point_in_polygon(lm.points[30], nose));
    }

    #[test]
    fn mirrored_landmarks_swap_sides() {
        let lm = canonical_landmarks(0.6);
        let polys = build_region_polygons(&lm).unwrap();
        let axis = default_camera().cx;
        let mirrored = build_region_polygons(&lm.mirrored(axis)).unwrap();
        for poly in &polys {
            let twin = mirrored.iter().find(|p| p.label == poly.label.mirrored()).unwrap();
            let mut a: Vec<[f64; 2]> = poly.vertices.iter().map(|&[u, v]| [2.0 * axis - u, v]).collect();
            let mut b = twin.vertices.clone();
            let key = |p: &[f64; 2]| ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64);
            a.sort_by_key(key);
            b.sort_by_key(key);
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((x[0] - y[0]).abs() < 1.0 && (x[1] - y[1]).abs() < 1.0);
            }
        }
    }

    #[test]
    fn collinear_landmarks_rejected() {
        let lm = FaceLandmarks {
            width: 640,
            height: 480,
            points: (0..68).map(|i| [i as f64 * 3.0, 100.0]).collect(),
        };
        assert!(matches!(build_region_polygons(&lm), Err(Error::MalformedLandmarks(_))));
        let short = FaceLandmarks { width: 640, height: 480, points: vec![[0.0, 0.0]; 10] };
        assert!(matches!(build_region_polygons(&short), Err(Error::MalformedLandmarks(_))));
    }

    #[test]
    fn mirror_index_is_involution() {
        for i in 0..68 {
            assert_eq!(mirror_index(mirror_index(i)), i);
        }
    }

    #[test]
    fn behind_camera_goes_to_residual() {
        let cloud = head_cloud(2000, -0.6);
        let polys = build_region_polygons(&canonical_landmarks(0.6)).unwrap();
        let seg = segment_face(&cloud, &polys, &default_camera(), &RigidTransform::identity()).unwrap();
        assert_eq!(seg.residual.len(), cloud.len());
        assert!(seg.regions.values().all(|r| r.is_empty()));
    }

    #[test]
    fn head_partition_and_layout() {
        let cloud = head_cloud(20_000, 0.6);
        let polys = build_region_polygons(&canonical_landmarks(0.6)).unwrap();
        let cam = default_camera();
        let seg = segment_face(&cloud, &polys, &cam, &RigidTransform::identity()).unwrap();
        let total: usize = seg.regions.values().map(|r| r.len()).sum::<usize>() + seg.residual.len();
        assert_eq!(total, cloud.len());
        for label in RegionLabel::ALL {
            assert!(!seg.region(label).is_empty(), "{label} empty");
        }
        let v_of = |l: RegionLabel| {
            let c = seg.region(l).centroid().unwrap();
            project_point(&c, &cam, &RigidTransform::identity()).unwrap().1
        };
        assert!(v_of(RegionLabel::Forehead) < v_of(RegionLabel::LeftJaw));
        assert!(v_of(RegionLabel::Forehead) < v_of(RegionLabel::RightJaw));
        let u_of = |l: RegionLabel| seg.region(l).centroid().unwrap().x;
        assert!(u_of(RegionLabel::LeftCheek) < 0.0 && u_of(RegionLabel::RightCheek) > 0.0);
    }

    #[test]
    fn mirrored_cloud_swaps_memberships() {
        let cloud = head_cloud(10_000, 0.6);
        let cam = default_camera();
        let lm = canonical_landmarks(0.6);
        let polys = build_region_polygons(&lm).unwrap();
        let mpolys = build_region_polygons(&lm.mirrored(cam.cx)).unwrap();
        let mut mcloud = cloud.clone();
        for p in &mut mcloud.points {
            p.position = Vec3::new(-p.position.x, p.position.y, p.position.z);
        }
        let a = segment_face(&cloud, &polys, &cam, &RigidTransform::identity()).unwrap();
        let b = segment_face(&mcloud, &mpolys, &cam, &RigidTransform::identity()).unwrap();
        for (x, y) in a.assignment.iter().zip(&b.assignment) {
            assert_eq!(x.map(RegionLabel::mirrored), *y);
        }
    }
}
