//! Scenario configuration: layout, rig, trajectory, noise, sampling,
//! processing and solver settings, plus the shipped presets.
//!
//! Files are TOML. Field strengths are written in microtesla and angles of
//! waypoints in degrees; everything is converted to SI on load.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{Conductor, ConductorLayout, SensorRig, SENSOR_COUNT};
use crate::signal_proc::SignConfig;
use crate::simulator::{FieldGenerator, Interpolation, MotorNoise, NoiseModel, Sampling, Trajectory, Waypoint};

const UT: f64 = 1e-6;

pub const PRESET_NAMES: [&str; 3] = ["lab-2wire", "lab-3wire", "noisy-motor"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Analytic,
    /// Numeric solver with the two-conductor template.
    Numeric2,
    /// Numeric solver with the full layout as template.
    Numeric3,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Analytic => "analytic",
            SolverKind::Numeric2 => "numeric2",
            SolverKind::Numeric3 => "numeric3",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(SolverKind::Analytic),
            "numeric2" => Ok(SolverKind::Numeric2),
            "numeric3" => Ok(SolverKind::Numeric3),
            other => Err(Error::Config(format!(
                "unknown solver {other:?} (expected analytic, numeric2 or numeric3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Processing {
    /// Samples per fit window.
    pub window: usize,
    /// Samples between window starts.
    pub hop: usize,
    pub signs: SignConfig,
}

impl Default for Processing {
    fn default() -> Self {
        Processing {
            window: 100,
            hop: 50,
            signs: SignConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub layout: ConductorLayout,
    pub rig: SensorRig,
    pub trajectory: Trajectory,
    pub noise: NoiseModel,
    pub sampling: Sampling,
    pub processing: Processing,
    pub solver: SolverKind,
    /// Jump-penalty weight shared by both solvers, 1/m.
    pub smoothing: f64,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        file.into_scenario()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("scenario {}: {e}", path.display())))?;
        Scenario::from_toml_str(&text)
    }

    /// A preset name, or else a path to a scenario file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match preset(name_or_path) {
            Some(s) => Ok(s),
            None => Scenario::load(Path::new(name_or_path)),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ScenarioFile::from(self)).expect("scenario serializes")
    }

    /// Layout handed to the given solver: the first two conductors for the
    /// two-wire solvers, everything for `numeric3`.
    pub fn template(&self, kind: SolverKind) -> Result<ConductorLayout> {
        let wires = self.layout.conductors();
        match kind {
            SolverKind::Numeric3 => Ok(self.layout.clone()),
            _ if wires.len() >= 2 => ConductorLayout::new(wires[..2].to_vec()),
            _ => Err(Error::Config("layout needs at least two conductors".into())),
        }
    }
}

/// Every shipped preset, in [`PRESET_NAMES`] order.
pub fn scenario_presets() -> Vec<Scenario> {
    PRESET_NAMES.iter().filter_map(|n| preset(n)).collect()
}

/// Representative sweep: lateral passes, a vertical approach and yaw swings.
fn lab_trajectory() -> Trajectory {
    let points = [
        (0.0, -1.2, -1.4, 0.0, 0.0),
        (10.0, -0.4, -0.9, 15.0, 5.0),
        (20.0, 0.6, -0.8, 35.0, -5.0),
        (30.0, 1.3, -1.3, 0.0, 8.0),
        (40.0, 0.5, -1.8, -40.0, 0.0),
        (50.0, -0.3, -1.1, -20.0, -6.0),
        (60.0, -1.0, -0.7, 10.0, 3.0),
    ];
    let waypoints = points
        .iter()
        .map(|&(t, y, z, yaw, pitch): &(f64, f64, f64, f64, f64)| Waypoint {
            t,
            y,
            z,
            yaw: yaw.to_radians(),
            pitch: pitch.to_radians(),
            roll: 0.0,
        })
        .collect();
    Trajectory::new(waypoints, Interpolation::Linear).expect("preset trajectory is valid")
}

pub fn preset(name: &str) -> Option<Scenario> {
    let base = Scenario {
        name: name.to_string(),
        layout: ConductorLayout::two_wire(0.2, 31.0).expect("valid"),
        rig: SensorRig::default(),
        trajectory: lab_trajectory(),
        noise: NoiseModel {
            axis_sigma: 0.3 * UT,
            seed: 7,
            ..NoiseModel::default()
        },
        sampling: Sampling::default(),
        processing: Processing::default(),
        solver: SolverKind::Analytic,
        smoothing: 1.0,
    };
    match name {
        "lab-2wire" => Some(base),
        "lab-3wire" => Some(Scenario {
            layout: ConductorLayout::with_return(0.2, 31.0, 5.0, -1.5, -62.0).expect("valid"),
            solver: SolverKind::Numeric3,
            ..base
        }),
        "noisy-motor" => Some(Scenario {
            noise: NoiseModel {
                motor: Some(MotorNoise {
                    sensor: 1,
                    sigma: 20.0 * base.noise.axis_sigma,
                }),
                ..base.noise.clone()
            },
            ..base
        }),
        _ => None,
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    solver: SolverBlock,
    conductors: Vec<Conductor>,
    #[serde(default)]
    rig: RigBlock,
    trajectory: TrajectoryBlock,
    #[serde(default)]
    noise: NoiseBlock,
    #[serde(default)]
    sampling: SamplingBlock,
    #[serde(default)]
    processing: ProcessingBlock,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SolverBlock {
    kind: SolverKind,
    smoothing: f64,
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock {
            kind: SolverKind::Analytic,
            smoothing: 1.0,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigBlock {
    /// Sensor offsets in the vehicle frame, m.
    positions: [[f64; 3]; SENSOR_COUNT],
}

impl Default for RigBlock {
    fn default() -> Self {
        RigBlock {
            positions: SensorRig::default().into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryBlock {
    #[serde(default)]
    interpolation: Interpolation,
    waypoints: Vec<WaypointEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaypointEntry {
    t: f64,
    y: f64,
    z: f64,
    #[serde(default)]
    yaw_deg: f64,
    #[serde(default)]
    pitch_deg: f64,
    #[serde(default)]
    roll_deg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NoiseBlock {
    axis_sigma_ut: f64,
    gain_sigma: f64,
    earth_field_ut: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    motor_sensor: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    motor_sigma_ut: Option<f64>,
    seed: u64,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        NoiseBlock::from(&NoiseModel::default())
    }
}

impl From<&NoiseModel> for NoiseBlock {
    fn from(n: &NoiseModel) -> Self {
        NoiseBlock {
            axis_sigma_ut: n.axis_sigma / UT,
            gain_sigma: n.gain_sigma,
            earth_field_ut: (n.earth_field / UT).into(),
            motor_sensor: n.motor.map(|m| m.sensor),
            motor_sigma_ut: n.motor.map(|m| m.sigma / UT),
            seed: n.seed,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SamplingBlock {
    frequency_hz: f64,
    rate_hz: f64,
    phase_rad: f64,
    /// Integrate finite segments of this half-length instead of using the
    /// infinite-line closed form, m.
    #[serde(skip_serializing_if = "Option::is_none")]
    finite_half_length_m: Option<f64>,
}

impl Default for SamplingBlock {
    fn default() -> Self {
        SamplingBlock::from(&Sampling::default())
    }
}

impl From<&Sampling> for SamplingBlock {
    fn from(s: &Sampling) -> Self {
        SamplingBlock {
            frequency_hz: s.frequency,
            rate_hz: s.rate,
            phase_rad: s.phase,
            finite_half_length_m: match s.generator {
                FieldGenerator::Infinite => None,
                FieldGenerator::Finite { half_length } => Some(half_length),
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ProcessingBlock {
    window: usize,
    hop: usize,
    noise_floor_ut: f64,
    guard_band_rad: f64,
}

impl Default for ProcessingBlock {
    fn default() -> Self {
        ProcessingBlock::from(&Processing::default())
    }
}

impl From<&Processing> for ProcessingBlock {
    fn from(p: &Processing) -> Self {
        ProcessingBlock {
            window: p.window,
            hop: p.hop,
            noise_floor_ut: p.signs.noise_floor / UT,
            guard_band_rad: p.signs.guard_band,
        }
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let motor = match (self.noise.motor_sensor, self.noise.motor_sigma_ut) {
            (Some(sensor), Some(sigma)) => Some(MotorNoise { sensor, sigma: sigma * UT }),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "noise.motor_sensor and noise.motor_sigma_ut must be given together".into(),
                ))
            }
        };
        let noise = NoiseModel {
            axis_sigma: self.noise.axis_sigma_ut * UT,
            gain_sigma: self.noise.gain_sigma,
            earth_field: Vector3::from(self.noise.earth_field_ut) * UT,
            motor,
            seed: self.noise.seed,
        };
        noise.validate()?;
        let p = &self.processing;
        if p.window < 3 || p.hop == 0 {
            return Err(Error::Config(format!("window {} / hop {} out of range", p.window, p.hop)));
        }
        if !(p.noise_floor_ut >= 0.0 && p.guard_band_rad >= 0.0) {
            return Err(Error::Config("noise floor and guard band must be non-negative".into()));
        }
        if !(self.solver.smoothing >= 0.0) {
            return Err(Error::Config("solver.smoothing must be non-negative".into()));
        }
        let s = &self.sampling;
        let waypoints = self
            .trajectory
            .waypoints
            .iter()
            .map(|w| Waypoint {
                t: w.t,
                y: w.y,
                z: w.z,
                yaw: w.yaw_deg.to_radians(),
                pitch: w.pitch_deg.to_radians(),
                roll: w.roll_deg.to_radians(),
            })
            .collect();
        Ok(Scenario {
            name: self.name,
            layout: ConductorLayout::new(self.conductors)?,
            rig: SensorRig::try_from(self.rig.positions)?,
            trajectory: Trajectory::new(waypoints, self.trajectory.interpolation)?,
            noise,
            sampling: Sampling {
                frequency: s.frequency_hz,
                rate: s.rate_hz,
                phase: s.phase_rad,
                generator: match s.finite_half_length_m {
                    Some(half_length) => FieldGenerator::Finite { half_length },
                    None => FieldGenerator::Infinite,
                },
            },
            processing: Processing {
                window: p.window,
                hop: p.hop,
                signs: SignConfig {
                    noise_floor: p.noise_floor_ut * UT,
                    guard_band: p.guard_band_rad,
                },
            },
            solver: self.solver.kind,
            smoothing: self.solver.smoothing,
        })
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            name: s.name.clone(),
            solver: SolverBlock {
                kind: s.solver,
                smoothing: s.smoothing,
            },
            conductors: s.layout.conductors().to_vec(),
            rig: RigBlock {
                positions: s.rig.clone().into(),
            },
            trajectory: TrajectoryBlock {
                interpolation: s.trajectory.interpolation(),
                waypoints: s
                    .trajectory
                    .waypoints()
                    .iter()
                    .map(|w| WaypointEntry {
                        t: w.t,
                        y: w.y,
                        z: w.z,
                        yaw_deg: w.yaw.to_degrees(),
                        pitch_deg: w.pitch.to_degrees(),
                        roll_deg: w.roll.to_degrees(),
                    })
                    .collect(),
            },
            noise: NoiseBlock::from(&s.noise),
            sampling: SamplingBlock::from(&s.sampling),
            processing: ProcessingBlock::from(&s.processing),
        }
    }
}
