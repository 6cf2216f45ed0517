//! Viewpoint generation around a detected face and multi-view alignment with
//! linearised point-to-plane ICP.

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{estimate_normals, voxel_downsample, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{axis_angle_to_rotation, rot_x, rot_y, RigidTransform, Vec3};
use crate::kdtree::KdTree;

/// How the longitudinal arc's depth is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewpointArcModel {
    /// Longitudinal depth fixed at `-d_min`.
    AsPrinted,
    /// Both arcs on the circle of radius `d_min`: depth `-d_min·cos φ`.
    #[default]
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arc {
    Frontal,
    Longitudinal,
    Latitudinal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub arc: Arc,
    pub phi: f64,
    /// Pose relative to the face frame.
    pub in_face: RigidTransform,
    /// Pose in the base frame.
    pub in_base: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointSet {
    pub views: Vec<Viewpoint>,
    pub phi_step: f64,
    pub d_min: f64,
    pub n_per_side: usize,
}

impl ViewpointSet {
    pub fn poses(&self) -> Vec<RigidTransform> {
        self.views.iter().map(|v| v.in_base).collect()
    }
}

fn face_local(arc: Arc, phi: f64, d_min: f64, model: ViewpointArcModel) -> RigidTransform {
    match arc {
        Arc::Frontal => RigidTransform::from_translation(Vec3::new(0.0, 0.0, -d_min)),
        Arc::Longitudinal => {
            let z = match model {
                ViewpointArcModel::AsPrinted => -d_min,
                ViewpointArcModel::Circular => -d_min * phi.cos(),
            };
            RigidTransform::new(rot_y(phi), Vec3::new(-d_min * phi.sin(), 0.0, z))
        }
        Arc::Latitudinal => RigidTransform::new(
            rot_x(phi),
            Vec3::new(0.0, d_min * phi.sin(), -d_min * phi.cos()),
        ),
    }
}

/// Frontal view plus `n_per_side` views either side of it on both arcs,
/// `4·n_per_side + 1` poses in total.
pub fn estimate_viewpoints(
    face_pose: &RigidTransform,
    d_min: f64,
    phi_step: f64,
    n_per_side: usize,
    model: ViewpointArcModel,
) -> Result<ViewpointSet> {
    if !(d_min > 0.0) || !(phi_step > 0.0 && phi_step < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParam(format!(
            "d_min {d_min}, phi_step {phi_step}"
        )));
    }
    let mut views = Vec::with_capacity(4 * n_per_side + 1);
    let mut push = |arc, phi: f64| {
        let in_face = face_local(arc, phi, d_min, model);
        views.push(Viewpoint {
            arc,
            phi,
            in_face,
            in_base: face_pose.compose(&in_face),
        });
    };
    push(Arc::Frontal, 0.0);
    for arc in [Arc::Longitudinal, Arc::Latitudinal] {
        for k in 1..=n_per_side {
            let phi = k as f64 * phi_step;
            push(arc, phi);
            push(arc, -phi);
        }
    }
    Ok(ViewpointSet {
        views,
        phi_step,
        d_min,
        n_per_side,
    })
}

/// `inv(a) · b`: pose of `b` expressed in `a`.
pub fn relative_viewpoint_transform(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.inverse().compose(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Relative change of the objective below which iteration stops.
    pub tolerance: f64,
    /// Correspondences further apart than this are ignored.
    pub gate: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-6,
            gate: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Point-to-plane RMS residual at `transform`.
    pub rmse: f64,
    pub initial_rmse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective (mean squared point-to-plane residual) after every accepted step,
    /// starting with the initial guess.
    pub history: Vec<f64>,
}

struct Linearisation {
    objective: f64,
    pairs: usize,
    ata: Matrix6<f64>,
    atb: Vector6<f64>,
}

fn linearise(
    source: &PointCloud,
    target: &PointCloud,
    tree: &KdTree,
    t: &RigidTransform,
    gate: f64,
) -> Linearisation {
    let gate2 = gate * gate;
    let terms: Vec<Option<(Vector6<f64>, f64)>> = source
        .points
        .par_iter()
        .map(|s| {
            let p = t.transform_point(&s.position);
            let (j, d2) = tree.nearest(&p)?;
            if d2 > gate2 {
                return None;
            }
            let q = &target.points[j];
            let n = q.normal;
            let r = (p - q.position).dot(&n);
            let c = p.cross(&n);
            Some((Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z), r))
        })
        .collect();
    let mut out = Linearisation {
        objective: 0.0,
        pairs: 0,
        ata: Matrix6::zeros(),
        atb: Vector6::zeros(),
    };
    for (jac, r) in terms.into_iter().flatten() {
        out.ata += jac * jac.transpose();
        out.atb += jac * r;
        out.objective += r * r;
        out.pairs += 1;
    }
    if out.pairs > 0 {
        out.objective /= out.pairs as f64;
    }
    out
}

/// Solves the symmetric 6x6 system, switching to a pseudo-inverse when the
/// condition number exceeds 1e12.
fn solve6(a: &Matrix6<f64>, b: &Vector6<f64>) -> Vector6<f64> {
    let eig = SymmetricEigen::new(*a);
    let max = eig.eigenvalues.amax();
    if max <= 0.0 {
        return Vector6::zeros();
    }
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min > 0.0 && max / min <= 1e12 {
        if let Some(ch) = a.cholesky() {
            return ch.solve(b);
        }
    }
    let cutoff = max * 1e-12;
    let mut x = Vector6::zeros();
    for k in 0..6 {
        let lambda = eig.eigenvalues[k];
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(k);
            x += v * (v.dot(b) / lambda);
        }
    }
    x
}

fn increment(x: &Vector6<f64>, scale: f64) -> RigidTransform {
    let w = Vec3::new(x[0], x[1], x[2]) * scale;
    let t = Vec3::new(x[3], x[4], x[5]) * scale;
    RigidTransform::new(axis_angle_to_rotation(&w), t)
}

/// Point-to-plane ICP: finds the rigid transform mapping `source` onto
/// `target` (which must carry normals). Steps that would raise the objective
/// are halved; if no halving helps, iteration stops.
pub fn icp_point_to_plane(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    config: &IcpConfig,
) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !target.has_normals {
        return Err(Error::InvalidParam("ICP target has no normals".into()));
    }
    let tree = target.kdtree();
    let mut current = *init;
    let mut lin = linearise(source, target, &tree, &current, config.gate);
    if lin.pairs == 0 {
        return Err(Error::NoCorrespondences);
    }
    let initial = lin.objective;
    let mut history = vec![lin.objective];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        if lin.objective < 1e-30 {
            converged = true;
            break;
        }
        iterations += 1;
        let x = solve6(&lin.ata, &(-lin.atb));
        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..12 {
            let candidate = increment(&x, scale).compose(&current);
            let next = linearise(source, target, &tree, &candidate, config.gate);
            if next.pairs > 0 && next.objective <= lin.objective {
                accepted = Some((candidate, next));
                break;
            }
            scale *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            converged = true;
            break;
        };
        let change = (lin.objective - next.objective) / lin.objective.max(1e-300);
        current = candidate;
        lin = next;
        history.push(lin.objective);
        if change < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        rmse: lin.objective.sqrt(),
        initial_rmse: initial.sqrt(),
        iterations,
        converged,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewAlignment {
    pub view: usize,
    pub rmse_before: f64,
    pub rmse_after: f64,
    pub iterations: usize,
    /// Pose of the view in the first view's frame after refinement.
    pub transform: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeResult {
    pub cloud: PointCloud,
    pub alignments: Vec<ViewAlignment>,
}

/// Brings every view into the first view's frame using the known viewpoint
/// poses, refines each against the accumulated model with ICP, concatenates
/// and voxel-downsamples the result.
pub fn merge_views(
    clouds: &[PointCloud],
    poses: &[RigidTransform],
    leaf: f64,
    icp: &IcpConfig,
) -> Result<MergeResult> {
    if clouds.len() != poses.len() {
        return Err(Error::InvalidParam(format!(
            "{} clouds but {} poses",
            clouds.len(),
            poses.len()
        )));
    }
    if clouds.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let with_normals = |c: &PointCloud| -> Result<PointCloud> {
        if c.has_normals {
            Ok(c.clone())
        } else {
            // Each view's sensor sits at its own origin.
            estimate_normals(c, 10, &Vec3::zeros())
        }
    };
    let mut model = with_normals(&clouds[0])?;
    let mut alignments = vec![ViewAlignment {
        view: 0,
        rmse_before: 0.0,
        rmse_after: 0.0,
        iterations: 0,
        transform: RigidTransform::identity(),
    }];
    for (i, (cloud, pose)) in clouds.iter().zip(poses).enumerate().skip(1) {
        let prior = relative_viewpoint_transform(&poses[0], pose);
        let view = with_normals(cloud)?;
        let result = icp_point_to_plane(&view, &model, &prior, icp)?;
        model.extend(&view.transformed(&result.transform));
        alignments.push(ViewAlignment {
            view: i,
            rmse_before: result.initial_rmse,
            rmse_after: result.rmse,
            iterations: result.iterations,
            transform: result.transform,
        });
    }
    model.frame = clouds[0].frame.clone();
    Ok(MergeResult {
        cloud: voxel_downsample(&model, leaf)?,
        alignments,
    })
}
