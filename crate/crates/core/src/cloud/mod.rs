//! Point clouds: container, voxel downsampling, normal estimation and
//! ray-surface queries.

mod ply;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};
use crate::kdtree::KdTree;

pub use ply::{load_ply, read_ply, save_ply, write_ply, PlyEncoding};

/// One sample of the surface: position, unit normal and colour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub normal: Vec3,
    pub color: [u8; 3],
}

impl SurfacePoint {
    pub fn new(position: Vec3, normal: Vec3) -> Self {
        Self {
            position,
            normal,
            color: [200, 200, 200],
        }
    }
}

/// Unorganised point cloud in a named coordinate frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<SurfacePoint>,
    pub frame: String,
    /// False when normals were not supplied and still need estimating.
    pub has_normals: bool,
}

impl PointCloud {
    pub fn new(points: Vec<SurfacePoint>, frame: impl Into<String>) -> Self {
        Self {
            points,
            frame: frame.into(),
            has_normals: true,
        }
    }

    pub fn from_positions(positions: impl IntoIterator<Item = Vec3>, frame: &str) -> Self {
        Self {
            points: positions
                .into_iter()
                .map(|p| SurfacePoint::new(p, Vec3::zeros()))
                .collect(),
            frame: frame.into(),
            has_normals: false,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = &Vec3> {
        self.points.iter().map(|p| &p.position)
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.positions().sum::<Vec3>() / self.len() as f64)
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let mut it = self.positions();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    /// Rigidly moves positions and normals.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| SurfacePoint {
                    position: t.transform_point(&p.position),
                    normal: t.transform_vector(&p.normal),
                    color: p.color,
                })
                .collect(),
            frame: self.frame.clone(),
            has_normals: self.has_normals,
        }
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
        self.has_normals &= other.has_normals;
    }

    pub fn kdtree(&self) -> KdTree {
        KdTree::new(self.positions())
    }
}

/// Integer voxel coordinates of `p` on the lattice containing the cloud's min corner.
fn voxel_key(p: &Vec3, anchor: &Vec3, leaf: f64) -> [i64; 3] {
    [
        ((p.x - anchor.x) / leaf).floor() as i64,
        ((p.y - anchor.y) / leaf).floor() as i64,
        ((p.z - anchor.z) / leaf).floor() as i64,
    ]
}

/// Lattice anchor: the corner of the `leaf`-grid voxel holding the min corner.
fn voxel_anchor(min: &Vec3, leaf: f64) -> Vec3 {
    min.map(|v| (v / leaf).floor() * leaf)
}

/// Replaces the points of each occupied voxel by their centroid, averaged
/// (renormalised) normal and averaged colour. Output is ordered by voxel index.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud> {
    if !(leaf > 0.0) {
        return Err(Error::InvalidParam(format!("voxel leaf {leaf}")));
    }
    let (min, _) = cloud.bounds().ok_or(Error::EmptyCloud)?;
    let anchor = voxel_anchor(&min, leaf);

    struct Acc {
        pos: Vec3,
        normal: Vec3,
        color: [u32; 3],
        first_normal: Vec3,
        n: usize,
    }
    let mut cells: BTreeMap<[i64; 3], Acc> = BTreeMap::new();
    for p in &cloud.points {
        let acc = cells
            .entry(voxel_key(&p.position, &anchor, leaf))
            .or_insert(Acc {
                pos: Vec3::zeros(),
                normal: Vec3::zeros(),
                color: [0; 3],
                first_normal: p.normal,
                n: 0,
            });
        acc.pos += p.position;
        acc.normal += p.normal;
        for c in 0..3 {
            acc.color[c] += p.color[c] as u32;
        }
        acc.n += 1;
    }
    let points = cells
        .into_values()
        .map(|acc| {
            let n = acc.n as f64;
            let normal = if acc.normal.norm() > 1e-12 {
                acc.normal.normalize()
            } else {
                acc.first_normal
            };
            SurfacePoint {
                position: acc.pos / n,
                normal,
                color: acc
                    .color
                    .map(|c| ((c as f64 / n).round() as u32).min(255) as u8),
            }
        })
        .collect();
    Ok(PointCloud {
        points,
        frame: cloud.frame.clone(),
        has_normals: cloud.has_normals,
    })
}

/// Voxel keys for each point of `cloud` on the same lattice `voxel_downsample` uses.
pub fn voxel_keys(cloud: &PointCloud, leaf: f64) -> Vec<[i64; 3]> {
    let Some((min, _)) = cloud.bounds() else {
        return Vec::new();
    };
    let anchor = voxel_anchor(&min, leaf);
    cloud
        .positions()
        .map(|p| voxel_key(p, &anchor, leaf))
        .collect()
}

/// Normals from the smallest eigenvector of each point's k-NN covariance,
/// oriented toward `viewpoint`.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Vec3) -> Result<PointCloud> {
    if k < 3 || cloud.len() <= k {
        return Err(Error::TooFewPoints {
            needed: k.max(3),
            got: cloud.len(),
        });
    }
    let tree = cloud.kdtree();
    let normals: Vec<Vec3> = cloud
        .points
        .par_iter()
        .map(|p| {
            let nbrs = tree.knn(&p.position, k);
            let mean = nbrs
                .iter()
                .map(|&(i, _)| cloud.points[i].position)
                .sum::<Vec3>()
                / nbrs.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(i, _) in &nbrs {
                let d = cloud.points[i].position - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let j = eig.eigenvalues.imin();
            let mut n: Vec3 = eig.eigenvectors.column(j).into_owned().normalize();
            if n.dot(&(viewpoint - p.position)) < 0.0 {
                n = -n;
            }
            n
        })
        .collect();
    let mut out = cloud.clone();
    for (p, n) in out.points.iter_mut().zip(normals) {
        p.normal = n;
    }
    out.has_normals = true;
    Ok(out)
}

/// Result of a ray-surface query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub point: Vec3,
    pub normal: Vec3,
    pub distance: f64,
    pub index: usize,
}

/// A cloud with its spatial index, for repeated ray and neighbour queries.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    pub cloud: PointCloud,
    tree: KdTree,
}

impl SurfaceIndex {
    pub fn new(cloud: PointCloud) -> Self {
        let tree = cloud.kdtree();
        Self { cloud, tree }
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    /// Nearest cloud point along the ray whose perpendicular distance to the
    /// ray is within `radius`, up to `max_range` along the ray.
    pub fn raycast(
        &self,
        origin: &Vec3,
        direction: &Vec3,
        radius: f64,
        max_range: f64,
    ) -> Option<RayHit> {
        let (index, _) = self.tree.ray_first(origin, direction, radius, max_range)?;
        let p = &self.cloud.points[index];
        Some(RayHit {
            point: p.position,
            normal: p.normal,
            distance: (p.position - origin).norm(),
            index,
        })
    }
}

/// One-off ray query; builds an index each call.
pub fn raycast(cloud: &PointCloud, origin: &Vec3, direction: &Vec3, radius: f64) -> Option<RayHit> {
    SurfaceIndex::new(cloud.clone()).raycast(origin, direction, radius, f64::INFINITY)
}
