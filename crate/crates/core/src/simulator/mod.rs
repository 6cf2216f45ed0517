//! Discrete-time execution of coverage paths: effector following, the
//! distance-impulse laser trigger, head-motion re-anchoring and proximity
//! repulsion.

pub mod coverage;
pub mod motion;
pub mod sensing;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{PointCloud, SurfaceIndex};
use crate::error::{Error, Result};
use crate::geometry::{
    interpolate_rotation, rotation_from_normal_or_fallback, rotation_to_axis_angle, PoseVector6, RigidTransform,
    Rotation, Vec3,
};
use crate::pathplan::SegmentPath;

pub use coverage::{coverage_metrics, CoverageReport, OperableRegion, PlanarRegion};
pub use motion::{update_paths_on_motion, DeadBand, Keyframe, MotionScript};
pub use sensing::{fuse, repulsive_potential, repulsive_velocity, sensor_fusion, FusedReading, SensorRig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub laser_diameter: f64,
    pub pulse_rate: f64,
    /// Control loop rate in Hz.
    pub control_rate: f64,
    /// Relative half-width of the uniform jitter applied to every control period.
    pub sample_jitter: f64,
    pub seed: u64,
    /// Extra time allowed per waypoint on top of twice its nominal travel time.
    pub waypoint_slack: f64,
    pub dead_band: DeadBand,
    /// Effector pose at t = 0; the first waypoint when absent.
    pub start: Option<PoseVector6>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            laser_diameter: 0.004,
            pulse_rate: 4.0,
            control_rate: 125.0,
            sample_jitter: 0.1,
            seed: 0,
            waypoint_slack: 1.0,
            dead_band: DeadBand::default(),
            start: None,
        }
    }
}

impl SimConfig {
    pub fn max_speed(&self) -> f64 {
        self.laser_diameter * self.pulse_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("laser_diameter", self.laser_diameter),
            ("pulse_rate", self.pulse_rate),
            ("control_rate", self.control_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.sample_jitter) {
            return Err(Error::InvalidParam("sample_jitter must be in [0, 1)".into()));
        }
        if !(self.waypoint_slack >= 0.0) {
            return Err(Error::InvalidParam("waypoint_slack must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectorState {
    pub pose: PoseVector6,
    pub speed: f64,
    pub time: f64,
    pub delta_d: f64,
    pub laser_armed: bool,
}

impl EffectorState {
    pub fn at(pose: PoseVector6) -> Self {
        Self {
            pose,
            speed: 0.0,
            time: 0.0,
            delta_d: 0.0,
            laser_armed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotEvent {
    pub index: usize,
    pub time: f64,
    pub psi: PoseVector6,
    pub strip: usize,
    pub segment: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    pub position: Vec3,
    pub delta_d: f64,
    /// Fused sensor distance, absent when no sensor sees the surface.
    pub dist_l: Option<f64>,
    pub repulsing: bool,
}

/// Moves toward `target` by at most `speed * dt`, snapping onto it when it
/// is within reach.
pub fn step(state: &EffectorState, target: &PoseVector6, dt: f64, speed: f64) -> EffectorState {
    let mut next = *state;
    next.time += dt;
    let remaining = target.position - state.pose.position;
    let dist = remaining.norm();
    let reach = speed * dt;
    let moved = if dist <= reach * (1.0 + 1e-9) {
        next.pose = *target;
        dist
    } else {
        let f = reach / dist;
        let r = interpolate_rotation(&state.pose.rotation(), &target.rotation(), f);
        next.pose = PoseVector6::new(state.pose.position + remaining * f, rotation_to_axis_angle(&r));
        reach
    };
    next.delta_d += moved;
    next.speed = moved / dt;
    next
}

/// Fires when armed and at least one diameter has been covered since the
/// last shot; the distance counter restarts from zero.
pub fn laser_trigger(state: &EffectorState, laser_diameter: f64) -> (bool, EffectorState) {
    if state.laser_armed && state.delta_d >= laser_diameter {
        let mut next = *state;
        next.delta_d = 0.0;
        (true, next)
    } else {
        (false, *state)
    }
}

/// Everything the effector can run into during a simulation.
#[derive(Debug, Clone, Default)]
pub struct Scene {
    pub rig: SensorRig,
    /// Face surface as it sits at t = 0; repulsion is off when absent.
    pub surface: Option<SurfaceIndex>,
    /// Face pose over time; the face is static when absent.
    pub motion: Option<MotionScript>,
}

impl Scene {
    pub fn with_face(rig: SensorRig, face: PointCloud) -> Self {
        Self {
            rig,
            surface: Some(SurfaceIndex::new(face)),
            motion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub shots: Vec<ShotEvent>,
    pub trajectory: Vec<TrajectorySample>,
    /// Distance travelled with the laser armed.
    pub path_length: f64,
    /// Waypoints abandoned after their time budget ran out.
    pub missed_waypoints: usize,
    pub final_state: EffectorState,
}

impl SimOutput {
    pub fn min_distance(&self) -> Option<f64> {
        self.trajectory.iter().filter_map(|s| s.dist_l).min_by(f64::total_cmp)
    }
}

struct Runner<'a> {
    config: &'a SimConfig,
    scene: &'a Scene,
    rng: ChaCha8Rng,
    state: EffectorState,
    face0: RigidTransform,
    anchor: RigidTransform,
    out: SimOutput,
}

impl Runner<'_> {
    fn face_pose(&self, t: f64) -> RigidTransform {
        self.scene.motion.as_ref().map_or(self.face0, |m| m.pose_at(t))
    }

    fn next_dt(&mut self) -> f64 {
        let j = self.config.sample_jitter;
        let u: f64 = if j > 0.0 { self.rng.gen_range(-1.0..1.0) } else { 0.0 };
        self.config.dt() * (1.0 + j * u)
    }

    /// Target pose for a path point under the current re-anchoring.
    fn target(&self, chi: &Vec3, eta: &Vec3) -> PoseVector6 {
        let a = self.anchor.compose(&self.face0.inverse());
        let r: Rotation = a.rotation * rotation_from_normal_or_fallback(eta);
        PoseVector6::new(a.transform_point(chi), rotation_to_axis_angle(&r))
    }

    fn sense(&self, pose: &PoseVector6, t: f64) -> Option<FusedReading> {
        let surface = self.scene.surface.as_ref()?;
        let world_to_surface = self.face0.compose(&self.face_pose(t).inverse());
        sensor_fusion(&self.scene.rig, &RigidTransform::from_pose(pose), surface, &world_to_surface).ok()
    }

    fn fire(&mut self, strip: usize, segment: &str) {
        let (fired, next) = laser_trigger(&self.state, self.config.laser_diameter);
        self.state = next;
        if fired {
            self.out.shots.push(ShotEvent {
                index: self.out.shots.len(),
                time: self.state.time,
                psi: self.state.pose,
                strip,
                segment: segment.to_string(),
            });
        }
    }

    /// Drives toward one waypoint until it is reached or its time budget is spent.
    fn go_to(&mut self, chi: &Vec3, eta: &Vec3, strip: usize, segment: &str) -> Result<()> {
        let speed = self.config.max_speed();
        let start = self.state.time;
        let budget = 2.0 * (self.target(chi, eta).position - self.state.pose.position).norm() / speed
            + self.config.waypoint_slack;
        loop {
            let target = self.target(chi, eta);
            if self.state.pose == target {
                return Ok(());
            }
            if self.state.time - start > budget {
                self.out.missed_waypoints += 1;
                return Ok(());
            }
            let dt = self.next_dt();
            let reading = self.sense(&self.state.pose, self.state.time);
            let push = match &reading {
                Some(r) => repulsive_velocity(&r.l, &self.scene.rig).map_err(|e| Error::AbortedOnSafety {
                    time: self.state.time,
                    reason: e.to_string(),
                })?,
                None => Vec3::zeros(),
            };
            let repulsing = push != Vec3::zeros();
            let before = self.state;
            if repulsing {
                let to = target.position - before.pose.position;
                let dist = to.norm();
                let follow = if dist > 0.0 { to / dist * speed.min(dist / dt) } else { Vec3::zeros() };
                let mut v = follow + push;
                if v.norm() > speed {
                    v *= speed / v.norm();
                }
                let moved = v * dt;
                let f = if dist > 0.0 { (moved.norm() / dist).min(1.0) } else { 1.0 };
                let r = interpolate_rotation(&before.pose.rotation(), &target.rotation(), f);
                self.state.pose = PoseVector6::new(before.pose.position + moved, rotation_to_axis_angle(&r));
                self.state.time += dt;
                self.state.speed = v.norm();
            } else {
                self.state = step(&before, &target, dt, speed);
                if self.state.laser_armed {
                    self.out.path_length += self.state.delta_d - before.delta_d;
                } else {
                    self.state.delta_d = before.delta_d;
                }
            }
            self.out.trajectory.push(TrajectorySample {
                time: self.state.time,
                position: self.state.pose.position,
                delta_d: self.state.delta_d,
                dist_l: reading.map(|r| r.distance()),
                repulsing,
            });
            if !repulsing {
                self.fire(strip, segment);
            }
            self.update_anchor();
        }
    }

    fn update_anchor(&mut self) {
        let now = self.face_pose(self.state.time);
        if !self.config.dead_band.contains(&self.anchor, &now) {
            self.anchor = now;
        }
    }
}

/// Executes every path in order at `laser_diameter * pulse_rate`. Strips are
/// followed with the laser armed; moves between strips are made with it off.
pub fn run_path(paths: &[SegmentPath], config: &SimConfig, scene: &Scene) -> Result<SimOutput> {
    config.validate()?;
    if scene.surface.is_some() {
        scene.rig.validate()?;
    }
    if let Some(m) = &scene.motion {
        m.validate()?;
    }
    let face0 = scene.motion.as_ref().map_or(RigidTransform::identity(), |m| m.pose_at(0.0));
    let first = paths.iter().flat_map(|p| p.points.first()).next();
    let start = match (config.start, first) {
        (Some(s), _) => s,
        (None, Some(p)) => PoseVector6::new(p.chi, rotation_to_axis_angle(&rotation_from_normal_or_fallback(&p.eta))),
        (None, None) => PoseVector6::default(),
    };
    let state = EffectorState::at(start);
    let mut runner = Runner {
        config,
        scene,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        state,
        face0,
        anchor: face0,
        out: SimOutput {
            shots: Vec::new(),
            trajectory: Vec::new(),
            path_length: 0.0,
            missed_waypoints: 0,
            final_state: state,
        },
    };
    for path in paths {
        for strip in path.strips() {
            let (head, rest) = strip.split_first().expect("strips are non-empty");
            runner.state.laser_armed = false;
            runner.go_to(&head.chi, &head.eta, head.strip, &path.label)?;
            runner.state.laser_armed = true;
            runner.state.delta_d = config.laser_diameter;
            runner.fire(head.strip, &path.label);
            for p in rest {
                runner.go_to(&p.chi, &p.eta, p.strip, &path.label)?;
            }
            runner.state.laser_armed = false;
        }
    }
    runner.out.final_state = runner.state;
    Ok(runner.out)
}

pub fn write_shots_csv<W: Write>(shots: &[ShotEvent], mut w: W) -> Result<()> {
    writeln!(w, "index,time_s,x,y,z,nu_x,nu_y,nu_z,strip,segment")?;
    for s in shots {
        let [x, y, z, a, b, c] = s.psi.as_array();
        writeln!(w, "{},{},{x},{y},{z},{a},{b},{c},{},{}", s.index, s.time, s.strip, s.segment)?;
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(samples: &[TrajectorySample], mut w: W) -> Result<()> {
    writeln!(w, "time_s,x,y,z,delta_d,dist_l,repulsing_flag")?;
    for s in samples {
        let dist = s.dist_l.map(|d| d.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{dist},{}",
            s.time, s.position.x, s.position.y, s.position.z, s.delta_d, s.repulsing as u8
        )?;
    }
    Ok(())
}

/// Two-point path along +x at depth `z`, approached along +z.
pub fn straight_path(label: &str, length: f64, z: f64) -> SegmentPath {
    use crate::pathplan::{PathPoint, StripOrientation};
    let point = |x| PathPoint {
        chi: Vec3::new(x, 0.0, z),
        eta: Vec3::z(),
        strip: 0,
    };
    SegmentPath {
        label: label.to_string(),
        points: vec![point(0.0), point(length)],
        orientation: StripOrientation::Horizontal,
        strip_widths: vec![f64::NAN],
    }
}
