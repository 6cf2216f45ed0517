//! Flat run configuration shared by every CLI subcommand. Keys carry their
//! units; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathplan::{ObliquityCorrection, OrientationPolicy, PlannerConfig};
use crate::registration::{IcpConfig, ViewpointArcModel};
use crate::simulator::{DeadBand, SensorRig, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub laser_diameter_m: f64,
    pub pulse_rate_hz: f64,
    pub d_min_m: f64,
    pub l_min_m: f64,
    pub kappa: f64,
    pub voxel_leaf_m: f64,
    pub phi_step_rad: f64,
    pub n_per_side: usize,
    pub seed: u64,
    pub viewpoint_arc_model: ViewpointArcModel,
    pub icp_gate_m: f64,
    pub icp_max_iterations: usize,
    pub strip_orientation: OrientationPolicy,
    pub obliquity_correction: ObliquityCorrection,
    pub max_obliquity_rad: f64,
    pub control_rate_hz: f64,
    pub sample_jitter: f64,
    pub waypoint_slack_s: f64,
    pub dead_band_translation_m: f64,
    pub dead_band_rotation_rad: f64,
    pub sensor_count: usize,
    pub sensor_ring_radius_m: f64,
    pub sensor_setback_m: f64,
    pub sensor_max_range_m: f64,
    pub sensor_ray_radius_m: f64,
    pub coverage_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let planner = PlannerConfig::default();
        let sim = SimConfig::default();
        let icp = IcpConfig::default();
        Self {
            laser_diameter_m: planner.laser_diameter,
            pulse_rate_hz: planner.pulse_rate,
            d_min_m: 0.25,
            l_min_m: 0.02,
            kappa: 5e-5,
            voxel_leaf_m: 0.002,
            phi_step_rad: 15f64.to_radians(),
            n_per_side: 2,
            seed: 0,
            viewpoint_arc_model: ViewpointArcModel::default(),
            icp_gate_m: icp.gate,
            icp_max_iterations: icp.max_iterations,
            strip_orientation: planner.orientation,
            obliquity_correction: planner.obliquity,
            max_obliquity_rad: planner.max_obliquity,
            control_rate_hz: sim.control_rate,
            sample_jitter: sim.sample_jitter,
            waypoint_slack_s: sim.waypoint_slack,
            dead_band_translation_m: sim.dead_band.translation,
            dead_band_rotation_rad: sim.dead_band.rotation,
            sensor_count: 3,
            sensor_ring_radius_m: 0.025,
            sensor_setback_m: 0.03,
            sensor_max_range_m: 0.2,
            sensor_ray_radius_m: 0.002,
            coverage_samples: crate::simulator::coverage::DEFAULT_SAMPLES,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: RunConfig = serde_json::from_str(&text)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("laser_diameter_m", self.laser_diameter_m),
            ("pulse_rate_hz", self.pulse_rate_hz),
            ("d_min_m", self.d_min_m),
            ("l_min_m", self.l_min_m),
            ("kappa", self.kappa),
            ("voxel_leaf_m", self.voxel_leaf_m),
            ("phi_step_rad", self.phi_step_rad),
            ("icp_gate_m", self.icp_gate_m),
            ("control_rate_hz", self.control_rate_hz),
            ("sensor_max_range_m", self.sensor_max_range_m),
            ("sensor_ray_radius_m", self.sensor_ray_radius_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("sample_jitter", self.sample_jitter),
            ("waypoint_slack_s", self.waypoint_slack_s),
            ("dead_band_translation_m", self.dead_band_translation_m),
            ("dead_band_rotation_rad", self.dead_band_rotation_rad),
            ("sensor_ring_radius_m", self.sensor_ring_radius_m),
            ("sensor_setback_m", self.sensor_setback_m),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.sensor_count == 0 || self.coverage_samples == 0 || self.icp_max_iterations == 0 {
            return Err(Error::InvalidParam(
                "sensor_count, coverage_samples and icp_max_iterations must be at least 1".into(),
            ));
        }
        self.planner().validate()?;
        self.sim().validate()
    }

    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            laser_diameter: self.laser_diameter_m,
            pulse_rate: self.pulse_rate_hz,
            orientation: self.strip_orientation,
            obliquity: self.obliquity_correction,
            max_obliquity: self.max_obliquity_rad,
        }
    }

    pub fn icp(&self) -> IcpConfig {
        IcpConfig {
            gate: self.icp_gate_m,
            max_iterations: self.icp_max_iterations,
            ..IcpConfig::default()
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            laser_diameter: self.laser_diameter_m,
            pulse_rate: self.pulse_rate_hz,
            control_rate: self.control_rate_hz,
            sample_jitter: self.sample_jitter,
            seed: self.seed,
            waypoint_slack: self.waypoint_slack_s,
            dead_band: DeadBand {
                translation: self.dead_band_translation_m,
                rotation: self.dead_band_rotation_rad,
            },
            start: None,
        }
    }

    pub fn rig(&self) -> SensorRig {
        SensorRig {
            mounts: SensorRig::ring(self.sensor_count, self.sensor_ring_radius_m, self.sensor_setback_m),
            max_range: self.sensor_max_range_m,
            ray_radius: self.sensor_ray_radius_m,
            l_min: self.l_min_m,
            kappa: self.kappa,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
        assert_eq!(c.rig(), SensorRig::default());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"laser_diameter_m": 0.01, "obliquity_correction": "none"}"#).unwrap();
        assert_eq!(c.laser_diameter_m, 0.01);
        assert_eq!(c.obliquity_correction, ObliquityCorrection::None);
        assert_eq!(c.pulse_rate_hz, RunConfig::default().pulse_rate_hz);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"laser_diameter": 0.01}"#).is_err());
        let c = RunConfig {
            laser_diameter_m: 0.0,
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::InvalidParam(_))));
        let c = RunConfig {
            sample_jitter: -0.1,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
