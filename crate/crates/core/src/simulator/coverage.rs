//! Shot spacing statistics and area coverage of the union of shot disks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::segmentation::point_in_ring;

use super::ShotEvent;

pub const DEFAULT_SAMPLES: usize = 1_000_000;
const CHUNK: usize = 1 << 15;

/// A planar polygon given in the 2D coordinates of a plane frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarRegion {
    pub origin: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub polygon: Vec<[f64; 2]>,
}

impl PlanarRegion {
    pub fn rectangle(origin: Vec3, u_axis: Vec3, v_axis: Vec3, width: f64, height: f64) -> Self {
        Self {
            origin,
            u_axis: u_axis.normalize(),
            v_axis: v_axis.normalize(),
            polygon: vec![[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]],
        }
    }

    /// The `diameter`-wide band swept by disks centred on the segment `a`-`b`
    /// in the plane with normal `normal`, capped flat at both ends.
    pub fn strip_envelope(a: Vec3, b: Vec3, normal: Vec3, diameter: f64) -> Self {
        let u = (b - a).normalize();
        let v = normal.cross(&u).normalize();
        let r = diameter / 2.0;
        let origin = a - u * r - v * r;
        Self::rectangle(origin, u, v, (b - a).norm() + diameter, diameter)
    }

    /// Smallest rectangle, in the plane through `points` facing `normal` and
    /// aligned with their principal direction, that holds every disk of
    /// `diameter` centred on them.
    pub fn bounding(points: &[Vec3], normal: Vec3, diameter: f64) -> Result<Self> {
        let n = normal.try_normalize(1e-12).ok_or(Error::InvalidParam("zero region normal".into()))?;
        if points.is_empty() {
            return Err(Error::EmptyLog);
        }
        let c = points.iter().sum::<Vec3>() / points.len() as f64;
        let flat = |p: &Vec3| {
            let d = p - c;
            d - n * d.dot(&n)
        };
        let cov = points
            .iter()
            .map(|p| flat(p) * flat(p).transpose())
            .sum::<nalgebra::Matrix3<f64>>();
        let eig = cov.symmetric_eigen();
        let k = eig.eigenvalues.imax();
        let mut u = eig.eigenvectors.column(k).into_owned();
        if u.dot(&n).abs() > 0.5 || eig.eigenvalues[k] <= 0.0 {
            u = crate::pathplan::camera_basis(&n).0;
        }
        let u = (u - n * u.dot(&n)).normalize();
        let v = n.cross(&u);
        let r = diameter / 2.0;
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            let q = [(p - c).dot(&u), (p - c).dot(&v)];
            for k in 0..2 {
                lo[k] = lo[k].min(q[k] - r);
                hi[k] = hi[k].max(q[k] + r);
            }
        }
        Ok(Self::rectangle(c + u * lo[0] + v * lo[1], u, v, hi[0] - lo[0], hi[1] - lo[1]))
    }

    pub fn project(&self, p: &Vec3) -> [f64; 2] {
        let d = p - self.origin;
        [d.dot(&self.u_axis), d.dot(&self.v_axis)]
    }

    pub fn area(&self) -> f64 {
        let v = &self.polygon;
        let n = v.len();
        ((0..n)
            .map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1])
            .sum::<f64>()
            * 0.5)
            .abs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.polygon.len() < 3 || self.area() <= 0.0 {
            return Err(Error::InvalidParam("operable region polygon is degenerate".into()));
        }
        if self.u_axis.norm() < 1e-12 || self.v_axis.norm() < 1e-12 {
            return Err(Error::InvalidParam("operable region axes must be non-zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperableRegion {
    Planar(PlanarRegion),
    /// Surface samples; coverage is the fraction of samples under a disk.
    Cloud(PointCloud),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_shots: usize,
    pub path_length_m: f64,
    pub mean_spacing_m: f64,
    pub spacing_variance_m2: f64,
    pub coverage: f64,
    pub operable_area_m2: f64,
}

/// Distances between consecutive shots of the same strip of the same segment.
pub fn same_strip_spacings(shots: &[ShotEvent]) -> Vec<f64> {
    shots
        .windows(2)
        .filter(|w| w[0].strip == w[1].strip && w[0].segment == w[1].segment)
        .map(|w| (w[1].psi.position - w[0].psi.position).norm())
        .collect()
}

/// Mean and population variance; zeros for an empty slice.
pub fn mean_variance(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Uniform grid over disk centres for constant-time "inside any disk" tests.
struct DiskGrid {
    cell: f64,
    r2: f64,
    cells: HashMap<(i64, i64), Vec<[f64; 2]>>,
}

impl DiskGrid {
    fn new(centres: &[[f64; 2]], diameter: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<[f64; 2]>> = HashMap::new();
        for c in centres {
            cells
                .entry(((c[0] / diameter).floor() as i64, (c[1] / diameter).floor() as i64))
                .or_default()
                .push(*c);
        }
        Self {
            cell: diameter,
            r2: diameter * diameter / 4.0,
            cells,
        }
    }

    fn covers(&self, p: [f64; 2]) -> bool {
        let (i, j) = ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64);
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(cs) = self.cells.get(&(i + di, j + dj)) {
                    if cs.iter().any(|c| (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) <= self.r2) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Monte Carlo estimate of the covered fraction of a planar region. Samples
/// are drawn in fixed-size chunks, each from its own ChaCha stream, so the
/// estimate does not depend on the number of worker threads.
pub fn planar_coverage(
    region: &PlanarRegion,
    centres: &[Vec3],
    diameter: f64,
    samples: usize,
    seed: u64,
) -> f64 {
    let poly = &region.polygon;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in poly {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let grid = DiskGrid::new(&centres.iter().map(|c| region.project(c)).collect::<Vec<_>>(), diameter);
    let chunks = samples.div_ceil(CHUNK);
    let (inside, covered) = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let n = CHUNK.min(samples - k * CHUNK);
            let (mut inside, mut covered) = (0u64, 0u64);
            for _ in 0..n {
                let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
                if point_in_ring(p, poly) {
                    inside += 1;
                    covered += grid.covers(p) as u64;
                }
            }
            (inside, covered)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if inside == 0 {
        0.0
    } else {
        covered as f64 / inside as f64
    }
}

/// Fraction of cloud samples within half a diameter of some shot centre.
pub fn cloud_coverage(cloud: &PointCloud, centres: &[Vec3], diameter: f64) -> f64 {
    if cloud.is_empty() || centres.is_empty() {
        return 0.0;
    }
    let tree = crate::kdtree::KdTree::new(centres.iter());
    let r2 = diameter * diameter / 4.0;
    let covered = cloud
        .points
        .par_iter()
        .filter(|p| tree.nearest(&p.position).is_some_and(|(_, d2)| d2 <= r2))
        .count();
    covered as f64 / cloud.len() as f64
}

/// Area of a surface sample set, estimated by projecting it onto its best-fit
/// plane and counting occupied `cell`-sized squares.
pub fn cloud_area(cloud: &PointCloud, cell: f64) -> f64 {
    let Some(c) = cloud.centroid() else {
        return 0.0;
    };
    let cov = cloud
        .positions()
        .map(|p| (p - c) * (p - c).transpose())
        .sum::<nalgebra::Matrix3<f64>>();
    let eig = cov.symmetric_eigen();
    let mut idx = [0, 1, 2];
    idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let u = eig.eigenvectors.column(idx[0]).into_owned();
    let v = eig.eigenvectors.column(idx[1]).into_owned();
    let cells: std::collections::HashSet<(i64, i64)> = cloud
        .positions()
        .map(|p| {
            let d = p - c;
            ((d.dot(&u) / cell).floor() as i64, (d.dot(&v) / cell).floor() as i64)
        })
        .collect();
    cells.len() as f64 * cell * cell
}

/// Spacing statistics and coverage of a shot log over an operable region.
pub fn coverage_metrics(
    shots: &[ShotEvent],
    region: &OperableRegion,
    diameter: f64,
    path_length: f64,
    samples: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if shots.is_empty() {
        return Err(Error::EmptyLog);
    }
    let (mean, var) = mean_variance(&same_strip_spacings(shots));
    let centres: Vec<Vec3> = shots.iter().map(|s| s.psi.position).collect();
    let (coverage, area) = match region {
        OperableRegion::Planar(r) => {
            r.validate()?;
            (planar_coverage(r, &centres, diameter, samples, seed), r.area())
        }
        OperableRegion::Cloud(c) => (cloud_coverage(c, &centres, diameter), cloud_area(c, diameter / 4.0)),
    };
    Ok(CoverageReport {
        n_shots: shots.len(),
        path_length_m: path_length,
        mean_spacing_m: mean,
        spacing_variance_m2: var,
        coverage,
        operable_area_m2: area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PoseVector6;

    fn shot(i: usize, p: Vec3, strip: usize) -> ShotEvent {
        ShotEvent {
            index: i,
            time: i as f64,
            psi: PoseVector6::new(p, Vec3::zeros()),
            strip,
            segment: "s".into(),
        }
    }

    #[test]
    fn inscribed_disk_covers_quarter_pi() {
        let d = 0.004;
        let sq = PlanarRegion::rectangle(Vec3::zeros(), Vec3::x(), Vec3::y(), d, d);
        let phi = planar_coverage(&sq, &[Vec3::new(d / 2.0, d / 2.0, 0.0)], d, DEFAULT_SAMPLES, 7);
        assert!((phi - std::f64::consts::FRAC_PI_4).abs() < 0.003, "{phi}");
        let twice = planar_coverage(
            &sq,
            &[Vec3::new(d / 2.0, d / 2.0, 0.0), Vec3::new(d / 2.0, d / 2.0, 0.0)],
            d,
            DEFAULT_SAMPLES,
            7,
        );
        assert_eq!(phi, twice);
    }

    #[test]
    fn exact_strip_is_quarter_pi() {
        let d = 0.005;
        let centres: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64 * d, 0.0, 0.3)).collect();
        let env = PlanarRegion::strip_envelope(centres[0], centres[9], Vec3::z(), d);
        assert!((env.area() - 10.0 * d * d).abs() < 1e-15);
        let phi = planar_coverage(&env, &centres, d, DEFAULT_SAMPLES, 1);
        assert!((phi - std::f64::consts::FRAC_PI_4).abs() < 0.003, "{phi}");
    }

    #[test]
    fn result_independent_of_thread_count() {
        let d = 0.004;
        let sq = PlanarRegion::rectangle(Vec3::zeros(), Vec3::x(), Vec3::y(), 0.02, 0.02);
        let centres: Vec<Vec3> = (0..5).map(|i| Vec3::new(0.002 + i as f64 * 0.004, 0.01, 0.0)).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| planar_coverage(&sq, &centres, d, 200_000, 3))
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn bounding_rectangle_of_a_line_is_its_envelope() {
        let d = 0.004;
        let pts: Vec<Vec3> = (0..6).map(|i| Vec3::new(0.01 + i as f64 * d, 0.02, 0.5)).collect();
        let b = PlanarRegion::bounding(&pts, Vec3::z(), d).unwrap();
        assert!((b.area() - 6.0 * d * d).abs() < 1e-12);
        let e = PlanarRegion::strip_envelope(pts[0], pts[5], Vec3::z(), d);
        let a = planar_coverage(&b, &pts, d, 200_000, 2);
        let c = planar_coverage(&e, &pts, d, 200_000, 2);
        assert!((a - c).abs() < 0.01);
    }

    #[test]
    fn spacing_statistics() {
        let shots = vec![
            shot(0, Vec3::zeros(), 0),
            shot(1, Vec3::new(0.01, 0.0, 0.0), 0),
            shot(2, Vec3::new(0.03, 0.0, 0.0), 0),
            shot(3, Vec3::new(0.03, 0.05, 0.0), 1),
        ];
        let s = same_strip_spacings(&shots);
        assert_eq!(s.len(), 2);
        let (m, v) = mean_variance(&s);
        assert!((m - 0.015).abs() < 1e-15);
        assert!((v - 0.000025).abs() < 1e-15);
        let region = OperableRegion::Planar(PlanarRegion::rectangle(Vec3::zeros(), Vec3::x(), Vec3::y(), 0.1, 0.1));
        assert!(matches!(coverage_metrics(&[], &region, 0.004, 0.0, 1000, 0), Err(Error::EmptyLog)));
        let r = coverage_metrics(&shots, &region, 0.004, 0.03, 1000, 0).unwrap();
        assert_eq!(r.n_shots, 4);
        assert!((0.0..=1.0).contains(&r.coverage));
    }

    #[test]
    fn cloud_region_coverage() {
        let cloud = crate::fixtures::planar_patch(0.01, 0.01, 0.0002, "c");
        let full = cloud_coverage(&cloud, &[Vec3::new(0.005, 0.005, 0.0)], 0.1);
        assert_eq!(full, 1.0);
        let area = cloud_area(&cloud, 0.0005);
        assert!((area - 1e-4).abs() < 0.15e-4, "{area}");
    }
}
