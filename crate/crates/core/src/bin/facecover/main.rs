#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use facecover::cloud::{load_ply, save_ply, PlyEncoding, PointCloud};
use facecover::config::RunConfig;
use facecover::fixtures;
use facecover::geometry::{axis_angle_to_rotation, CameraIntrinsics, RigidTransform, Vec3};
use facecover::pathplan::{plan_segment, read_paths_json, write_paths_json, SegmentPath};
use facecover::registration::{estimate_viewpoints, merge_views};
use facecover::segmentation::{
    apply_polygon_overrides, build_region_polygons, segment_face, FaceLandmarks, RegionLabel,
};
use facecover::simulator::{
    coverage_metrics, run_path, write_shots_csv, write_trajectory_csv, CoverageReport, MotionScript,
    OperableRegion, PlanarRegion, Scene,
};
use facecover::svg;

#[derive(Parser)]
#[command(name = "facecover", version, about = "Laser coverage path planning and simulation on facial point clouds")]
struct Cli {
    /// Flat JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    laser_diameter_m: Option<f64>,
    #[arg(long, global = true)]
    pulse_rate_hz: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Merge multi-view scans into one cloud.
    Register(RegisterArgs),
    /// Split a face cloud into the seven treatment regions.
    Segment(SegmentArgs),
    /// Plan coverage paths over region clouds.
    Plan(PlanArgs),
    /// Execute paths and measure shot spacing and coverage.
    Simulate(SimulateArgs),
    /// Tabulate coverage reports.
    Report(ReportArgs),
    /// Write synthetic inputs.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct RegisterArgs {
    /// View clouds, each in its own sensor frame.
    #[arg(required = true)]
    views: Vec<PathBuf>,
    /// JSON list of `{translation, axis_angle}` view poses; estimated from
    /// the viewpoint arcs when absent.
    #[arg(long)]
    poses: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    cloud: PathBuf,
    #[arg(long)]
    landmarks: PathBuf,
    /// `{fx, fy, cx, cy, width, height}` in pixels.
    #[arg(long)]
    camera: PathBuf,
    /// `{translation, axis_angle}` mapping cloud coordinates into the camera frame.
    #[arg(long)]
    camera_pose: Option<PathBuf>,
    /// `{"label": [[u, v], ...]}` polygon replacements.
    #[arg(long)]
    polygons: Option<PathBuf>,
    /// Keep only points inside `xmin,ymin,zmin,xmax,ymax,zmax`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    crop_box: Option<Vec<f64>>,
}

#[derive(Args)]
struct PlanArgs {
    /// Region clouds; each file stem becomes the segment label.
    #[arg(required = true)]
    regions: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0,1", allow_hyphen_values = true)]
    camera_axis: Vec<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    paths: PathBuf,
    /// Face surface for the proximity sensors.
    #[arg(long)]
    face: Option<PathBuf>,
    #[arg(long)]
    motion: Option<PathBuf>,
    /// Planar operable region JSON; defaults to the face cloud, or to the
    /// rectangle bounding all path disks.
    #[arg(long)]
    operable: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// `coverage.json` files written by `simulate`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    /// Head-shaped cloud with matching landmarks and camera.
    Head,
    /// 47 mm square patch with its operable region.
    Patch,
    /// 100 mm square wall facing the camera at 0.5 m.
    Wall,
}

#[derive(Args)]
struct FixtureArgs {
    kind: FixtureKind,
    #[arg(long, default_value_t = 20_000)]
    points: usize,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn existing(path: &Path) -> Result<&Path, Failure> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(usage(format!("input file `{}` does not exist", path.display())))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRecord {
    translation: [f64; 3],
    axis_angle: [f64; 3],
}

impl PoseRecord {
    fn transform(&self) -> RigidTransform {
        RigidTransform::new(
            axis_angle_to_rotation(&Vec3::from(self.axis_angle)),
            Vec3::from(self.translation),
        )
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn save_cloud(cloud: &PointCloud, path: &Path) -> anyhow::Result<()> {
    save_ply(cloud, path, PlyEncoding::BinaryLittleEndian).with_context(|| format!("writing {}", path.display()))
}

fn load_cloud(path: &Path) -> Result<PointCloud, Failure> {
    Ok(load_ply(existing(path)?).with_context(|| format!("reading {}", path.display()))?)
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(existing(p)?).with_context(|| format!("config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(d) = cli.laser_diameter_m {
        c.laser_diameter_m = d;
    }
    if let Some(r) = cli.pulse_rate_hz {
        c.pulse_rate_hz = r;
    }
    c.validate()?;
    Ok(c)
}

#[derive(Serialize)]
struct AlignmentRecord {
    view: usize,
    rmse_before_m: f64,
    rmse_after_m: f64,
    iterations: usize,
}

fn cmd_register(args: &RegisterArgs, cfg: &RunConfig, out: &Path) -> CmdResult {
    let clouds = args.views.iter().map(|p| load_cloud(p)).collect::<Result<Vec<_>, _>>()?;
    let poses: Vec<RigidTransform> = match &args.poses {
        Some(p) => read_json::<Vec<PoseRecord>>(existing(p)?)?.iter().map(PoseRecord::transform).collect(),
        None if clouds.len() == 1 => vec![RigidTransform::identity()],
        None => estimate_viewpoints(
            &RigidTransform::identity(),
            cfg.d_min_m,
            cfg.phi_step_rad,
            cfg.n_per_side,
            cfg.viewpoint_arc_model,
        )?
        .poses(),
    };
    if poses.len() != clouds.len() {
        return Err(usage(format!("{} views but {} poses", clouds.len(), poses.len())));
    }
    let merged = merge_views(&clouds, &poses, cfg.voxel_leaf_m, &cfg.icp())?;
    save_cloud(&merged.cloud, &out.join("merged.ply"))?;
    let report: Vec<AlignmentRecord> = merged
        .alignments
        .iter()
        .map(|a| AlignmentRecord {
            view: a.view,
            rmse_before_m: a.rmse_before,
            rmse_after_m: a.rmse_after,
            iterations: a.iterations,
        })
        .collect();
    write_json(&out.join("registration_report.json"), &report)?;
    println!("merged {} views into {} points", clouds.len(), merged.cloud.len());
    Ok(())
}

#[derive(Serialize)]
struct SegmentReport {
    input_points: usize,
    regions: BTreeMap<String, usize>,
    empty_regions: Vec<String>,
    residual: usize,
    disjoint: bool,
    complete: bool,
}

fn cmd_segment(args: &SegmentArgs, out: &Path) -> CmdResult {
    let landmarks: FaceLandmarks = read_json(existing(&args.landmarks)?)?;
    landmarks.validate()?;
    let camera: CameraIntrinsics = read_json(existing(&args.camera)?)?;
    camera.validate()?;
    let extrinsics = match &args.camera_pose {
        Some(p) => read_json::<PoseRecord>(existing(p)?)?.transform(),
        None => RigidTransform::identity(),
    };
    let mut cloud = load_cloud(&args.cloud)?;
    if let Some(b) = &args.crop_box {
        if b.len() != 6 {
            return Err(usage("--crop-box takes xmin,ymin,zmin,xmax,ymax,zmax"));
        }
        let (lo, hi) = (Vec3::new(b[0], b[1], b[2]), Vec3::new(b[3], b[4], b[5]));
        cloud
            .points
            .retain(|p| (0..3).all(|k| p.position[k] >= lo[k] && p.position[k] <= hi[k]));
    }
    let mut polygons = build_region_polygons(&landmarks)?;
    if let Some(p) = &args.polygons {
        let overrides: BTreeMap<String, Vec<[f64; 2]>> = read_json(existing(p)?)?;
        apply_polygon_overrides(&mut polygons, &overrides)?;
    }
    let face = segment_face(&cloud, &polygons, &camera, &extrinsics)?;
    let dir = out.join("regions");
    fs::create_dir_all(&dir)?;
    let mut regions = BTreeMap::new();
    let mut empty = Vec::new();
    for label in RegionLabel::ALL {
        let r = face.region(label);
        save_cloud(r, &dir.join(format!("{}.ply", label.as_str())))?;
        regions.insert(label.as_str().to_string(), r.len());
        if r.is_empty() {
            empty.push(label.as_str().to_string());
        }
    }
    save_cloud(&face.residual, &out.join("residual.ply"))?;
    let assigned = face.assignment.iter().filter(|a| a.is_some()).count();
    let total: usize = regions.values().sum();
    let report = SegmentReport {
        input_points: cloud.len(),
        disjoint: total == assigned,
        complete: total + face.residual.len() == cloud.len(),
        regions,
        empty_regions: empty,
        residual: face.residual.len(),
    };
    write_json(&out.join("segment_report.json"), &report)?;
    for e in &report.empty_regions {
        eprintln!("note: region `{e}` is empty");
    }
    println!("segmented {} points, {} residual", report.input_points, report.residual);
    Ok(())
}

fn cmd_plan(args: &PlanArgs, cfg: &RunConfig, out: &Path) -> CmdResult {
    if args.camera_axis.len() != 3 {
        return Err(usage("--camera-axis takes x,y,z"));
    }
    let axis = Vec3::new(args.camera_axis[0], args.camera_axis[1], args.camera_axis[2]);
    if !(axis.norm() > 0.0) {
        return Err(usage("--camera-axis must be non-zero"));
    }
    let mut paths: Vec<SegmentPath> = Vec::new();
    for file in &args.regions {
        let cloud = load_cloud(file)?;
        let label = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| usage(format!("bad region file name `{}`", file.display())))?;
        if cloud.is_empty() {
            eprintln!("note: region `{label}` is empty, skipped");
            continue;
        }
        paths.push(plan_segment(label, &cloud, &cfg.planner(), &axis)?);
    }
    let mut w = BufWriter::new(File::create(out.join("paths.json"))?);
    write_paths_json(&paths, &mut w)?;
    w.write_all(b"\n")?;
    w.flush()?;
    write_text(&out.join("paths.svg"), &svg::paths_svg(&paths))?;
    for p in &paths {
        println!("{}: {} points in {} strips, {:.4} m", p.label, p.len(), p.strip_count(), p.length());
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SimulationSummary {
    #[serde(flatten)]
    coverage: CoverageReport,
    missed_waypoints: usize,
    min_sensor_distance_m: Option<f64>,
    repulsing_samples: usize,
    duration_s: f64,
}

fn cmd_simulate(args: &SimulateArgs, cfg: &RunConfig, out: &Path) -> CmdResult {
    let paths = read_paths_json(BufReader::new(File::open(existing(&args.paths)?)?))?;
    if paths.is_empty() {
        return Err(Failure::Runtime(anyhow!("path file holds no points")));
    }
    let face = args.face.as_deref().map(load_cloud).transpose()?;
    let motion = match &args.motion {
        Some(p) => {
            let m: MotionScript = read_json(existing(p)?)?;
            m.validate()?;
            Some(m)
        }
        None => None,
    };
    let scene = Scene {
        rig: cfg.rig(),
        surface: face.clone().map(facecover::cloud::SurfaceIndex::new),
        motion,
    };
    let sim = run_path(&paths, &cfg.sim(), &scene)?;
    let region = match (&args.operable, &face) {
        (Some(p), _) => OperableRegion::Planar(read_json::<PlanarRegion>(existing(p)?)?),
        (None, Some(f)) => OperableRegion::Cloud(f.clone()),
        (None, None) => {
            let pts: Vec<Vec3> = paths.iter().flat_map(|p| p.points.iter().map(|q| q.chi)).collect();
            let n: Vec3 = paths.iter().flat_map(|p| p.points.iter().map(|q| q.eta)).sum();
            OperableRegion::Planar(PlanarRegion::bounding(&pts, n, cfg.laser_diameter_m)?)
        }
    };
    let report = coverage_metrics(&sim.shots, &region, cfg.laser_diameter_m, sim.path_length, cfg.coverage_samples, cfg.seed)?;
    let mut w = BufWriter::new(File::create(out.join("shots.csv"))?);
    write_shots_csv(&sim.shots, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(out.join("trajectory.csv"))?);
    write_trajectory_csv(&sim.trajectory, &mut w)?;
    w.flush()?;
    write_text(
        &out.join("shots.svg"),
        &svg::shots_svg(&sim.trajectory, &sim.shots, cfg.laser_diameter_m),
    )?;
    let summary = SimulationSummary {
        coverage: report,
        missed_waypoints: sim.missed_waypoints,
        min_sensor_distance_m: sim.min_distance(),
        repulsing_samples: sim.trajectory.iter().filter(|s| s.repulsing).count(),
        duration_s: sim.final_state.time,
    };
    write_json(&out.join("coverage.json"), &summary)?;
    println!(
        "N_t {} d {:.4} m mu {:.6} m sigma2 {:.3e} m2 phi {:.4}",
        report.n_shots, report.path_length_m, report.mean_spacing_m, report.spacing_variance_m2, report.coverage
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs, out: &Path) -> CmdResult {
    let mut text = String::from("| run | N_t | d (m) | mu (m) | sigma^2 (m^2) | Phi (%) | U (m^2) |\n");
    text.push_str("|---|---|---|---|---|---|---|\n");
    for p in &args.reports {
        let s: SimulationSummary = read_json(existing(p)?)?;
        let c = s.coverage;
        let name = p
            .parent()
            .and_then(|d| d.file_name())
            .or_else(|| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        text.push_str(&format!(
            "| {name} | {} | {:.4} | {:.6} | {:.3e} | {:.2} | {:.4e} |\n",
            c.n_shots,
            c.path_length_m,
            c.mean_spacing_m,
            c.spacing_variance_m2,
            c.coverage * 100.0,
            c.operable_area_m2
        ));
    }
    write_text(&out.join("report.md"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_fixture(args: &FixtureArgs, out: &Path) -> CmdResult {
    match args.kind {
        FixtureKind::Head => {
            let depth = 0.5;
            save_cloud(&fixtures::head_cloud(args.points, depth), &out.join("head.ply"))?;
            write_json(&out.join("landmarks.json"), &fixtures::canonical_landmarks(depth))?;
            write_json(&out.join("camera.json"), &fixtures::default_camera())?;
        }
        FixtureKind::Patch => {
            let origin = Vec3::new(0.0, 0.0, 0.5);
            let patch = fixtures::planar_patch(0.047, 0.047, 0.0005, "camera")
                .transformed(&RigidTransform::from_translation(origin));
            save_cloud(&patch, &out.join("patch.ply"))?;
            let region = PlanarRegion::rectangle(origin, Vec3::x(), Vec3::y(), 0.047, 0.047);
            write_json(&out.join("operable.json"), &region)?;
        }
        FixtureKind::Wall => {
            let wall = fixtures::planar_patch(0.1, 0.1, 0.001, "camera")
                .transformed(&RigidTransform::from_translation(Vec3::new(-0.05, -0.05, 0.5)));
            save_cloud(&wall, &out.join("wall.ply"))?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Register(a) => cmd_register(a, &load_config(cli)?, out),
        Command::Segment(a) => {
            load_config(cli)?;
            cmd_segment(a, out)
        }
        Command::Plan(a) => cmd_plan(a, &load_config(cli)?, out),
        Command::Simulate(a) => cmd_simulate(a, &load_config(cli)?, out),
        Command::Report(a) => cmd_report(a, out),
        Command::Fixture(a) => cmd_fixture(a, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
