//! C ABI over the facecover planner and simulator.
//!
//! Objects are opaque handles created by `fc_*_new`/`fc_*_load` style
//! functions and released with the matching `fc_*_free`. Every fallible call
//! returns an [`FcStatus`]; on failure `fc_last_error` describes the cause
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use facecover::cloud::{load_ply, PointCloud, SurfaceIndex, SurfacePoint};
use facecover::geometry::{axis_angle_to_rotation, rotation_to_axis_angle, Rotation, Vec3};
use facecover::pathplan::{plan_segment, read_paths_json, write_paths_json, ObliquityCorrection, PlannerConfig, SegmentPath};
use facecover::simulator::{
    coverage_metrics, run_path, OperableRegion, PlanarRegion, Scene, SensorRig, SimConfig, SimOutput,
};
use facecover::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidParam = 2,
    Io = 3,
    Parse = 4,
    Empty = 5,
    Degenerate = 6,
    Safety = 7,
    OutOfRange = 8,
    Internal = 99,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> FcStatus {
    match e {
        Error::InvalidParam(_) | Error::MissingField(_) | Error::MalformedLandmarks(_) => FcStatus::InvalidParam,
        Error::Io(_) => FcStatus::Io,
        Error::Parse { .. } | Error::Json(_) => FcStatus::Parse,
        Error::EmptyCloud | Error::EmptySegment | Error::EmptyLog | Error::TooFewPoints { .. } => FcStatus::Empty,
        Error::DegenerateInput(_)
        | Error::DegenerateNormal { .. }
        | Error::DegenerateObliquity
        | Error::NoCorrespondences
        | Error::BehindCamera { .. } => FcStatus::Degenerate,
        Error::Contact { .. } | Error::AbortedOnSafety { .. } | Error::NoSurfaceInRange => FcStatus::Safety,
    }
}

/// Runs `f`, turning errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), FcStatus>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            FcStatus::Internal
        }
    }
}

fn fail(e: Error) -> FcStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> FcStatus {
    set_error(format!("`{what}` is null"));
    FcStatus::NullArgument
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, FcStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("`{what}` is not UTF-8"));
        FcStatus::InvalidParam
    })
}

unsafe fn vec3_arg(p: *const f64, what: &str) -> Result<Vec3, FcStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vec3::new(s[0], s[1], s[2]))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), FcStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn fc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Opaque point cloud.
pub struct FcCloud(PointCloud);

/// Opaque set of planned segment paths.
pub struct FcPaths(Vec<SegmentPath>);

/// Opaque simulation result.
pub struct FcSimulation(SimOutput);

/// Reads a PLY file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fc_cloud_load_ply(path: *const c_char, out: *mut *mut FcCloud) -> FcStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let cloud = load_ply(path).map_err(fail)?;
        put(out, FcCloud(cloud))
    })
}

/// Builds a cloud from `n` xyz triples; `normals` may be null.
///
/// # Safety
/// `positions` (and `normals` when given) must hold `3 * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_cloud_from_arrays(
    positions: *const f64,
    normals: *const f64,
    n: usize,
    out: *mut *mut FcCloud,
) -> FcStatus {
    guard(|| {
        if positions.is_null() {
            return Err(null("positions"));
        }
        let p = std::slice::from_raw_parts(positions, 3 * n);
        let cloud = if normals.is_null() {
            PointCloud::from_positions(p.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])), "camera")
        } else {
            let q = std::slice::from_raw_parts(normals, 3 * n);
            PointCloud::new(
                p.chunks_exact(3)
                    .zip(q.chunks_exact(3))
                    .map(|(a, b)| SurfacePoint::new(Vec3::new(a[0], a[1], a[2]), Vec3::new(b[0], b[1], b[2])))
                    .collect(),
                "camera",
            )
        };
        put(out, FcCloud(cloud))
    })
}

/// Number of points; 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fc_cloud_len(cloud: *const FcCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.0.len())
}

/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_cloud_free(cloud: *mut FcCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Planner settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FcPlannerConfig {
    pub laser_diameter_m: f64,
    pub pulse_rate_hz: f64,
    /// 0 none, 1 gap-free, 2 as printed.
    pub obliquity_correction: i32,
    pub camera_axis: [f64; 3],
}

/// Default planner settings.
#[no_mangle]
pub extern "C" fn fc_planner_config_default() -> FcPlannerConfig {
    let d = PlannerConfig::default();
    FcPlannerConfig {
        laser_diameter_m: d.laser_diameter,
        pulse_rate_hz: d.pulse_rate,
        obliquity_correction: 1,
        camera_axis: [0.0, 0.0, 1.0],
    }
}

/// Plans one segment path over `cloud` and appends it to a new path set.
///
/// # Safety
/// Pointers must be valid; `label` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fc_plan_segment(
    cloud: *const FcCloud,
    label: *const c_char,
    config: *const FcPlannerConfig,
    out: *mut *mut FcPaths,
) -> FcStatus {
    guard(|| {
        let cloud = cloud.as_ref().ok_or_else(|| null("cloud"))?;
        let label = path_arg(label, "label")?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let obliquity = match c.obliquity_correction {
            0 => ObliquityCorrection::None,
            1 => ObliquityCorrection::GapFree,
            2 => ObliquityCorrection::AsPrinted,
            k => return Err(fail(Error::InvalidParam(format!("obliquity_correction {k}")))),
        };
        let planner = PlannerConfig {
            laser_diameter: c.laser_diameter_m,
            pulse_rate: c.pulse_rate_hz,
            obliquity,
            ..PlannerConfig::default()
        };
        let axis = Vec3::from(c.camera_axis);
        let path = plan_segment(label, &cloud.0, &planner, &axis).map_err(fail)?;
        put(out, FcPaths(vec![path]))
    })
}

/// Reads the path export JSON.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_paths_load_json(path: *const c_char, out: *mut *mut FcPaths) -> FcStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let f = File::open(path).map_err(|e| fail(e.into()))?;
        let paths = read_paths_json(BufReader::new(f)).map_err(fail)?;
        put(out, FcPaths(paths))
    })
}

/// Writes the path export JSON.
///
/// # Safety
/// `paths` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fc_paths_save_json(paths: *const FcPaths, path: *const c_char) -> FcStatus {
    guard(|| {
        let paths = paths.as_ref().ok_or_else(|| null("paths"))?;
        let path = path_arg(path, "path")?;
        let f = File::create(path).map_err(|e| fail(e.into()))?;
        write_paths_json(&paths.0, BufWriter::new(f)).map_err(fail)
    })
}

/// Total path points over all segments; 0 for a null handle.
///
/// # Safety
/// `paths` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn fc_paths_point_count(paths: *const FcPaths) -> usize {
    paths.as_ref().map_or(0, |p| p.0.iter().map(|s| s.len()).sum())
}

/// One path point: position, inward normal and strip index.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FcPathPoint {
    pub position: [f64; 3],
    pub normal: [f64; 3],
    pub strip: u32,
}

/// Point `index` counting through all segments in order.
///
/// # Safety
/// `paths` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_paths_get_point(paths: *const FcPaths, index: usize, out: *mut FcPathPoint) -> FcStatus {
    guard(|| {
        let paths = paths.as_ref().ok_or_else(|| null("paths"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = paths.0.iter().flat_map(|s| s.points.iter()).nth(index).ok_or_else(|| {
            set_error(format!("path point {index} out of range"));
            FcStatus::OutOfRange
        })?;
        *out = FcPathPoint {
            position: p.chi.into(),
            normal: p.eta.into(),
            strip: p.strip as u32,
        };
        Ok(())
    })
}

/// # Safety
/// `paths` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_paths_free(paths: *mut FcPaths) {
    if !paths.is_null() {
        drop(Box::from_raw(paths));
    }
}

/// Simulator settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FcSimConfig {
    pub laser_diameter_m: f64,
    pub pulse_rate_hz: f64,
    pub control_rate_hz: f64,
    pub sample_jitter: f64,
    pub seed: u64,
    pub l_min_m: f64,
    pub kappa: f64,
}

/// Default simulator settings.
#[no_mangle]
pub extern "C" fn fc_sim_config_default() -> FcSimConfig {
    let s = SimConfig::default();
    let r = SensorRig::default();
    FcSimConfig {
        laser_diameter_m: s.laser_diameter,
        pulse_rate_hz: s.pulse_rate,
        control_rate_hz: s.control_rate,
        sample_jitter: s.sample_jitter,
        seed: s.seed,
        l_min_m: r.l_min,
        kappa: r.kappa,
    }
}

/// Executes `paths`. `face` may be null, which disables proximity sensing.
///
/// # Safety
/// `paths` and `config` must be live; `face` null or live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulate(
    paths: *const FcPaths,
    face: *const FcCloud,
    config: *const FcSimConfig,
    out: *mut *mut FcSimulation,
) -> FcStatus {
    guard(|| {
        let paths = paths.as_ref().ok_or_else(|| null("paths"))?;
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        let sim = SimConfig {
            laser_diameter: c.laser_diameter_m,
            pulse_rate: c.pulse_rate_hz,
            control_rate: c.control_rate_hz,
            sample_jitter: c.sample_jitter,
            seed: c.seed,
            ..SimConfig::default()
        };
        let rig = SensorRig {
            l_min: c.l_min_m,
            kappa: c.kappa,
            ..SensorRig::default()
        };
        let scene = Scene {
            rig,
            surface: face.as_ref().map(|f| SurfaceIndex::new(f.0.clone())),
            motion: None,
        };
        let result = run_path(&paths.0, &sim, &scene).map_err(fail)?;
        put(out, FcSimulation(result))
    })
}

/// Number of shots fired; 0 for a null handle.
///
/// # Safety
/// `sim` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_shot_count(sim: *const FcSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.0.shots.len())
}

/// A fired shot: pose `[x, y, z, nu_x, nu_y, nu_z]`, time and strip.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FcShot {
    pub pose: [f64; 6],
    pub time_s: f64,
    pub strip: u32,
}

/// # Safety
/// `sim` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_get_shot(sim: *const FcSimulation, index: usize, out: *mut FcShot) -> FcStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = sim.0.shots.get(index).ok_or_else(|| {
            set_error(format!("shot {index} out of range"));
            FcStatus::OutOfRange
        })?;
        *out = FcShot {
            pose: s.psi.as_array(),
            time_s: s.time,
            strip: s.strip as u32,
        };
        Ok(())
    })
}

/// Spacing and coverage statistics of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FcCoverage {
    pub n_shots: usize,
    pub path_length_m: f64,
    pub mean_spacing_m: f64,
    pub spacing_variance_m2: f64,
    pub coverage: f64,
    pub operable_area_m2: f64,
}

/// Coverage over the `width x height` rectangle spanned from `origin` along
/// the unit axes `u` and `v`.
///
/// # Safety
/// `sim` must be live; vectors hold 3 doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_coverage(
    sim: *const FcSimulation,
    laser_diameter_m: f64,
    origin: *const f64,
    u: *const f64,
    v: *const f64,
    width: f64,
    height: f64,
    samples: usize,
    seed: u64,
    out: *mut FcCoverage,
) -> FcStatus {
    guard(|| {
        let sim = sim.as_ref().ok_or_else(|| null("sim"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let region = PlanarRegion::rectangle(vec3_arg(origin, "origin")?, vec3_arg(u, "u")?, vec3_arg(v, "v")?, width, height);
        let r = coverage_metrics(
            &sim.0.shots,
            &OperableRegion::Planar(region),
            laser_diameter_m,
            sim.0.path_length,
            samples,
            seed,
        )
        .map_err(fail)?;
        *out = FcCoverage {
            n_shots: r.n_shots,
            path_length_m: r.path_length_m,
            mean_spacing_m: r.mean_spacing_m,
            spacing_variance_m2: r.spacing_variance_m2,
            coverage: r.coverage,
            operable_area_m2: r.operable_area_m2,
        };
        Ok(())
    })
}

/// # Safety
/// `sim` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fc_simulation_free(sim: *mut FcSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Rodrigues: axis-angle `nu` to a row-major 3x3 rotation.
///
/// # Safety
/// `nu` holds 3 doubles, `out` 9.
#[no_mangle]
pub unsafe extern "C" fn fc_axis_angle_to_rotation(nu: *const f64, out: *mut f64) -> FcStatus {
    guard(|| {
        let r = axis_angle_to_rotation(&vec3_arg(nu, "nu")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let o = std::slice::from_raw_parts_mut(out, 9);
        for i in 0..3 {
            for j in 0..3 {
                o[3 * i + j] = r[(i, j)];
            }
        }
        Ok(())
    })
}

/// Inverse of [`fc_axis_angle_to_rotation`].
///
/// # Safety
/// `rotation` holds 9 doubles, `out` 3.
#[no_mangle]
pub unsafe extern "C" fn fc_rotation_to_axis_angle(rotation: *const f64, out: *mut f64) -> FcStatus {
    guard(|| {
        if rotation.is_null() {
            return Err(null("rotation"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let m = std::slice::from_raw_parts(rotation, 9);
        let r = Rotation::from_row_slice(m);
        let nu = rotation_to_axis_angle(&r);
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(nu.as_slice());
        Ok(())
    })
}
