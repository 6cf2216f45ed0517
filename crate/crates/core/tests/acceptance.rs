//! One pass/fail line per acceptance criterion. The test fails if any does.

use std::f64::consts::{FRAC_PI_4, PI};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use facecover::cloud::{write_ply, PlyEncoding};
use facecover::fixtures::{
    canonical_landmarks, default_camera, ellipsoid_cloud, head_cloud, planar_patch, tilted_patch,
};
use facecover::geometry::{
    axis_angle_to_rotation, rotation_from_normal, rotation_to_axis_angle, rot_y, RigidTransform, Vec3,
};
use facecover::pathplan::{
    plan_face, plan_segment, write_paths_json, ObliquityCorrection, OrientationPolicy, PathPoint, PlannerConfig,
    SegmentPath, StripOrientation,
};
use facecover::registration::{icp_point_to_plane, merge_views, IcpConfig};
use facecover::segmentation::{build_region_polygons, point_in_polygon, segment_face, RegionLabel};
use facecover::simulator::coverage::{mean_variance, planar_coverage, same_strip_spacings, DEFAULT_SAMPLES};
use facecover::simulator::{
    coverage_metrics, repulsive_velocity, run_path, straight_path, update_paths_on_motion, write_shots_csv,
    write_trajectory_csv, DeadBand, Keyframe, MotionScript, OperableRegion, PlanarRegion, Scene, SensorRig,
    SimConfig,
};

type Outcome = (bool, String);

fn table_config(d: f64) -> SimConfig {
    SimConfig {
        laser_diameter: d,
        pulse_rate: 0.016 / d,
        control_rate: 125.0,
        ..SimConfig::default()
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let ref_var = [2.09e-9, 2.11e-9, 4.05e-9];
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, (d, len, n_ref, mu_ref)) in
        [(0.01, 0.111, 11, 0.01009), (0.005, 0.131, 26, 0.00505), (0.002, 0.146, 71, 0.00205)]
            .into_iter()
            .enumerate()
    {
        let out = run_path(&[straight_path("line", len, 0.5)], &table_config(d), &Scene::default()).unwrap();
        let (mu, var) = mean_variance(&same_strip_spacings(&out.shots));
        let n = out.shots.len() as i64;
        let row_ok = (n - n_ref).abs() <= 1
            && (mu - mu_ref).abs() <= 0.02 * mu_ref
            && (var / ref_var[k]).log10().abs() <= 1.0;
        ok &= row_ok;
        notes.push(format!("SDT{} N_t {n} mu {mu:.5} var {var:.2e}", k + 1));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 5.0;
    (ok, format!("{} ({secs:.2} s)", notes.join(", ")))
}

fn criterion_2() -> Outcome {
    let d = 0.004;
    let square = PlanarRegion::rectangle(Vec3::zeros(), Vec3::x(), Vec3::y(), d, d);
    let one = planar_coverage(&square, &[Vec3::new(d / 2.0, d / 2.0, 0.0)], d, DEFAULT_SAMPLES, 11);
    let centres: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * d, 0.0, 0.0)).collect();
    let env = PlanarRegion::strip_envelope(centres[0], centres[19], Vec3::z(), d);
    let strip = planar_coverage(&env, &centres, d, DEFAULT_SAMPLES, 12);
    let ok = (one - FRAC_PI_4).abs() <= 0.005 && (strip - 0.785).abs() <= 0.01;
    (ok, format!("inscribed {one:.4}, strip {strip:.4}"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let d = 0.004;
    let origin = Vec3::new(0.0, 0.0, 0.5);
    let patch = planar_patch(0.047, 0.047, 0.0005, "camera").transformed(&RigidTransform::from_translation(origin));
    let planner = PlannerConfig {
        laser_diameter: d,
        pulse_rate: 5.0,
        ..PlannerConfig::default()
    };
    let path = plan_segment("patch", &patch, &planner, &Vec3::z()).unwrap();
    let sim = SimConfig {
        laser_diameter: d,
        pulse_rate: 5.0,
        ..SimConfig::default()
    };
    let out = run_path(&[path], &sim, &Scene::with_face(SensorRig::default(), patch)).unwrap();
    let region = OperableRegion::Planar(PlanarRegion::rectangle(origin, Vec3::x(), Vec3::y(), 0.047, 0.047));
    let report = coverage_metrics(&out.shots, &region, d, out.path_length, DEFAULT_SAMPLES, 3).unwrap();
    let overlaps = same_strip_spacings(&out.shots).iter().filter(|s| **s < d).count();
    let secs = start.elapsed().as_secs_f64();
    let ok = report.coverage >= 0.65 && overlaps == 0 && secs < 30.0;
    (
        ok,
        format!(
            "phi {:.4} over {} shots, {overlaps} overlapping same-strip pairs ({secs:.2} s)",
            report.coverage, report.n_shots
        ),
    )
}

/// Mean distance between centroids of consecutive full strips.
fn row_pitch(path: &SegmentPath) -> f64 {
    let strips = path.strips();
    let centres: Vec<Vec3> = strips[..strips.len() - 1]
        .iter()
        .map(|s| s.iter().map(|p| p.chi).sum::<Vec3>() / s.len() as f64)
        .collect();
    let gaps: Vec<f64> = centres.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    gaps.iter().sum::<f64>() / gaps.len() as f64
}

fn criterion_4() -> Outcome {
    let d = 0.004;
    let mut ok = true;
    let mut worst = (0.0f64, 0.0f64);
    for deg in [0.0, 20.0, 45.0, 60.0, 70.0] {
        let tilt = f64::to_radians(deg);
        let plane = tilted_patch(0.047, 0.06, 0.0002, tilt, 0.5);
        let mut cfg = PlannerConfig {
            laser_diameter: d,
            orientation: OrientationPolicy::Horizontal,
            ..PlannerConfig::default()
        };
        let gap_free = row_pitch(&plan_segment("p", &plane, &cfg, &Vec3::z()).unwrap()) / d - 1.0;
        cfg.obliquity = ObliquityCorrection::None;
        let inflated = row_pitch(&plan_segment("p", &plane, &cfg, &Vec3::z()).unwrap()) * tilt.cos() / d - 1.0;
        ok &= gap_free.abs() <= 0.02 && inflated.abs() <= 0.02;
        worst = (worst.0.max(gap_free.abs()), worst.1.max(inflated.abs()));
    }
    (
        ok,
        format!(
            "0-70 deg: worst gap-free pitch error {:.2} %, worst uncorrected vs d/cos(o) {:.2} %",
            worst.0 * 100.0,
            worst.1 * 100.0
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let source = ellipsoid_cloud(Vec3::new(0.08, 0.1, 0.06), 5000, "model");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = IcpConfig {
        gate: 0.05,
        ..IcpConfig::default()
    };
    let mut ok = true;
    let (mut worst_deg, mut worst_mm) = (0.0f64, 0.0f64);
    for _ in 0..3 {
        let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let truth = RigidTransform::new(axis_angle_to_rotation(&(axis * 10f64.to_radians())), dir * 0.01);
        let target = source.transformed(&truth);
        let r = icp_point_to_plane(&source, &target, &RigidTransform::identity(), &cfg).unwrap();
        let err = r.transform.inverse().compose(&truth);
        worst_deg = worst_deg.max(err.angle().to_degrees());
        worst_mm = worst_mm.max(err.translation.norm() * 1e3);
        ok &= r.history.windows(2).all(|w| w[1] <= w[0]);
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= worst_deg <= 0.5 && worst_mm <= 1.0 && secs < 10.0;
    (ok, format!("10 deg / 10 mm: worst error {worst_deg:.4} deg, {worst_mm:.4} mm ({secs:.2} s)"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let theta = match i % 4 {
            0 => rng.gen_range(0.0..1e-6),
            1 => PI - rng.gen_range(0.0..1e-6),
            _ => rng.gen_range(0.0..PI),
        };
        let r = axis_angle_to_rotation(&(axis * theta));
        let back = axis_angle_to_rotation(&rotation_to_axis_angle(&r));
        worst = worst.max((back - r).abs().max());
    }
    let mut normal_err = 0.0f64;
    for eta in [Vec3::z(), Vec3::new(0.3, -0.2, 0.9).normalize(), Vec3::new(-0.7, 0.1, 0.7).normalize()] {
        let r = rotation_from_normal(&eta).unwrap();
        normal_err = normal_err.max((r * Vec3::z() - eta).norm());
    }
    let ok = worst <= 1e-9 && normal_err <= 1e-9;
    (ok, format!("worst round-trip {worst:.1e}, R*z vs eta {normal_err:.1e}"))
}

fn winding_number(p: [f64; 2], v: &[[f64; 2]]) -> i32 {
    let mut w = 0;
    for i in 0..v.len() {
        let (a, b) = (v[i], v[(i + 1) % v.len()]);
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= p[1] {
            if b[1] > p[1] && cross > 0.0 {
                w += 1;
            }
        } else if b[1] <= p[1] && cross < 0.0 {
            w -= 1;
        }
    }
    w
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    let mut fixtures = 0;
    for (depth, n) in [(0.45, 8000), (0.5, 12000), (0.6, 6000)] {
        let cloud = head_cloud(n, depth);
        let polys = build_region_polygons(&canonical_landmarks(depth)).unwrap();
        let face = segment_face(&cloud, &polys, &default_camera(), &RigidTransform::identity()).unwrap();
        let total: usize = face.regions.values().map(|c| c.len()).sum();
        let assigned = face.assignment.iter().filter(|a| a.is_some()).count();
        ok &= total == assigned && total + face.residual.len() == cloud.len();
        ok &= RegionLabel::ALL.iter().all(|l| face.region(*l).len() == face.assignment.iter().filter(|a| **a == Some(*l)).count());
        fixtures += 1;
    }
    let polys = build_region_polygons(&canonical_landmarks(0.5)).unwrap();
    let cam = default_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut disagreements = 0;
    for i in 0..100_000 {
        let poly = &polys[i % polys.len()];
        let p = [rng.gen_range(0.0..cam.width as f64), rng.gen_range(0.0..cam.height as f64)];
        if point_in_polygon(p, poly) != (winding_number(p, &poly.vertices) != 0) {
            disagreements += 1;
        }
    }
    ok &= disagreements == 0;
    (ok, format!("{fixtures} fixtures partitioned exactly, {disagreements} winding disagreements in 1e5"))
}

fn criterion_8() -> Outcome {
    let rig = SensorRig::default();
    let wall = planar_patch(0.1, 0.1, 0.001, "camera")
        .transformed(&RigidTransform::from_translation(Vec3::new(-0.05, -0.05, 0.5)));
    // Three dives that command the tool point 25 mm behind the surface.
    let mut points = Vec::new();
    for strip in 0..3 {
        for z in [0.44, 0.525] {
            points.push(PathPoint {
                chi: Vec3::new(0.01 * strip as f64, 0.0, z),
                eta: Vec3::z(),
                strip,
            });
        }
    }
    let path = SegmentPath {
        label: "intrusion".into(),
        points,
        orientation: StripOrientation::Horizontal,
        strip_widths: vec![f64::NAN; 3],
    };
    let out = match run_path(&[path], &SimConfig::default(), &Scene::with_face(rig.clone(), wall)) {
        Ok(o) => o,
        Err(e) => return (false, format!("run aborted: {e}")),
    };
    let min = out.min_distance().unwrap_or(f64::NAN);
    let epochs = out.trajectory.windows(2).filter(|w| w[1].repulsing && !w[0].repulsing).count();
    let flags_consistent = out
        .trajectory
        .iter()
        .all(|s| !(s.repulsing && s.dist_l.is_some_and(|d| d > rig.l_min)));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let zero_outside = (0..10_000).all(|_| {
        let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
        let d = rig.l_min * (1.0 + rng.gen_range(1e-12..2.0));
        repulsive_velocity(&(dir * d), &rig).unwrap() == Vec3::zeros()
    });
    let ok = min >= 0.98 * rig.l_min && epochs >= 3 && flags_consistent && zero_outside;
    (
        ok,
        format!(
            "min fused distance {:.3} mm vs floor {:.3} mm with {epochs} repulsion onsets, zero force outside l_min: {zero_outside}",
            min * 1e3,
            0.98 * rig.l_min * 1e3
        ),
    )
}

fn pairwise(paths: &[SegmentPath]) -> Vec<f64> {
    let pts: Vec<Vec3> = paths.iter().flat_map(|p| p.points.iter().map(|q| q.chi)).collect();
    let mut out = Vec::new();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            out.push((pts[i] - pts[j]).norm());
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let mut cap = ellipsoid_cloud(Vec3::new(0.05, 0.06, 0.05), 3000, "c");
    cap.points.retain(|p| p.position.z < 0.0);
    let cap = cap.transformed(&RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.5)));
    let paths = vec![plan_segment("cap", &cap, &PlannerConfig::default(), &Vec3::z()).unwrap()];
    let band = DeadBand::default();
    let old = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.5));
    let axis = Vec3::new(0.2, 1.0, -0.3).normalize();
    let small = RigidTransform::new(axis_angle_to_rotation(&(axis * 3f64.to_radians())), old.translation + Vec3::new(0.002, 0.0, 0.0));
    let large = RigidTransform::new(axis_angle_to_rotation(&(axis * 10f64.to_radians())), old.translation + Vec3::new(0.0, 0.01, 0.0));
    let unchanged = update_paths_on_motion(&paths, &old, &small, &band) == paths;
    let moved = update_paths_on_motion(&paths, &old, &large, &band);
    let worst = pairwise(&paths)
        .iter()
        .zip(pairwise(&moved))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let displaced = moved[0].points.iter().zip(&paths[0].points).all(|(a, b)| a.chi != b.chi);
    let ok = unchanged && displaced && worst <= 1e-9;
    (ok, format!("2 mm/3 deg bit-identical: {unchanged}; 10 mm/10 deg pairwise drift {worst:.1e} m"))
}

/// Register two views, segment, plan, simulate with head motion, and return
/// every output serialised.
fn pipeline(seed: u64) -> Vec<u8> {
    let depth = 0.5;
    let head = head_cloud(12_000, depth);
    let side = RigidTransform::new(rot_y(0.2), Vec3::new(0.01, 0.0, 0.0));
    let views = [head.clone(), head.transformed(&side.inverse())];
    let merged = merge_views(&views, &[RigidTransform::identity(), side], 0.002, &IcpConfig::default()).unwrap();
    let polys = build_region_polygons(&canonical_landmarks(depth)).unwrap();
    let face = segment_face(&merged.cloud, &polys, &default_camera(), &RigidTransform::identity()).unwrap();
    let mut paths = plan_face(&face, &PlannerConfig::default(), &Vec3::z()).unwrap();
    paths.retain(|p| p.label == "nose" || p.label == "upper_lips");
    let motion = MotionScript::new(vec![
        Keyframe { t_s: 0.0, translation: [0.0; 3], axis_angle: [0.0; 3] },
        Keyframe { t_s: 3.0, translation: [0.0, 0.006, 0.0], axis_angle: [0.0, 0.0, 0.1] },
    ])
    .unwrap();
    let scene = Scene {
        rig: SensorRig::default(),
        surface: Some(facecover::cloud::SurfaceIndex::new(merged.cloud.clone())),
        motion: Some(motion),
    };
    let sim = SimConfig { seed, ..SimConfig::default() };
    let out = run_path(&paths, &sim, &scene).unwrap();
    let region = OperableRegion::Cloud(merged.cloud.clone());
    let report = coverage_metrics(&out.shots, &region, sim.laser_diameter, out.path_length, 200_000, seed).unwrap();
    let mut bytes = Vec::new();
    write_ply(&merged.cloud, &mut bytes, PlyEncoding::BinaryLittleEndian).unwrap();
    for label in RegionLabel::ALL {
        write_ply(face.region(label), &mut bytes, PlyEncoding::Ascii).unwrap();
    }
    write_paths_json(&paths, &mut bytes).unwrap();
    write_shots_csv(&out.shots, &mut bytes).unwrap();
    write_trajectory_csv(&out.trajectory, &mut bytes).unwrap();
    bytes.extend(serde_json::to_vec(&report).unwrap());
    bytes
}

fn criterion_10() -> Outcome {
    let a = pipeline(42);
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| pipeline(42));
    let c = pipeline(43);
    let ok = a == b && a != c;
    (ok, format!("{} output bytes identical across reruns and thread counts: {}", a.len(), a == b))
}

type Criterion = (&'static str, fn() -> Outcome);

// Runs without the libtest harness so the lines are never captured.
fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let criteria: [Criterion; 10] = [
        ("SDT shot spacing", criterion_1),
        ("packing bound", criterion_2),
        ("patch coverage", criterion_3),
        ("obliquity pitch", criterion_4),
        ("ICP oracle", criterion_5),
        ("rotation round-trips", criterion_6),
        ("segmentation partition", criterion_7),
        ("collision safety", criterion_8),
        ("dead-band", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = f();
        println!("criterion {:>2} {:<24} {}  {detail}", i + 1, name, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
