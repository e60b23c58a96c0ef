//! Synthetic raw magnetometer logs with ground truth.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{biot_savart_segments, Attitude, ConductorLayout, FieldVector, SensorRig, SENSOR_COUNT};
use crate::signal_proc::{RawSample, AXES, CHANNELS};

/// Rig pose at one instant. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Waypoint {
    pub fn attitude(&self) -> Attitude {
        Attitude::new(self.yaw, self.pitch, self.roll)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    Linear,
    /// Hold each waypoint until the next one.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
    interpolation: Interpolation,
}

#[derive(Deserialize)]
struct RawTrajectory {
    waypoints: Vec<Waypoint>,
    #[serde(default)]
    interpolation: Interpolation,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = Error;

    fn try_from(raw: RawTrajectory) -> Result<Self> {
        Trajectory::new(raw.waypoints, raw.interpolation)
    }
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>, interpolation: Interpolation) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::Config("trajectory has no waypoints".into()));
        }
        for w in &waypoints {
            if ![w.t, w.y, w.z, w.yaw, w.pitch, w.roll].iter().all(|v| v.is_finite()) {
                return Err(Error::Config(format!("waypoint at t = {} is not finite", w.t)));
            }
        }
        if let Some(pair) = waypoints.windows(2).find(|p| p[1].t <= p[0].t) {
            return Err(Error::Config(format!(
                "waypoint times must increase strictly ({} then {})",
                pair[0].t, pair[1].t
            )));
        }
        Ok(Trajectory {
            waypoints,
            interpolation,
        })
    }

    /// A single pose held for `duration` seconds.
    pub fn stationary(pose: Waypoint, duration: f64) -> Result<Self> {
        let mut end = pose;
        end.t = pose.t + duration;
        Trajectory::new(vec![pose, end], Interpolation::Hold)
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn start(&self) -> f64 {
        self.waypoints[0].t
    }

    pub fn end(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].t
    }

    /// Pose at time `t`, clamped to the first and last waypoints.
    pub fn sample(&self, t: f64) -> Waypoint {
        let w = &self.waypoints;
        let k = w.partition_point(|p| p.t <= t);
        if k == 0 {
            return Waypoint { t, ..w[0] };
        }
        if k == w.len() {
            return Waypoint { t, ..w[k - 1] };
        }
        let (a, b) = (&w[k - 1], &w[k]);
        match self.interpolation {
            Interpolation::Hold => Waypoint { t, ..*a },
            Interpolation::Linear => {
                let u = (t - a.t) / (b.t - a.t);
                let lerp = |p: f64, q: f64| p + u * (q - p);
                Waypoint {
                    t,
                    y: lerp(a.y, b.y),
                    z: lerp(a.z, b.z),
                    yaw: lerp(a.yaw, b.yaw),
                    pitch: lerp(a.pitch, b.pitch),
                    roll: lerp(a.roll, b.roll),
                }
            }
        }
    }
}

/// Broadband noise added on top of the base noise for one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorNoise {
    pub sensor: usize,
    /// Per-axis σ for that sensor, T. Replaces the base σ.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Per-axis Gaussian σ on every raw sample, T.
    pub axis_sigma: f64,
    /// Relative σ of a fixed per-axis gain error, drawn once per run.
    pub gain_sigma: f64,
    /// DC field in the wire frame, T.
    pub earth_field: Vector3<f64>,
    pub motor: Option<MotorNoise>,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            axis_sigma: 0.0,
            gain_sigma: 0.0,
            earth_field: Vector3::new(20.0e-6, 0.0, -43.0e-6),
            motor: None,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let motor_ok = self
            .motor
            .is_none_or(|m| m.sensor < SENSOR_COUNT && m.sigma >= 0.0 && m.sigma.is_finite());
        if self.axis_sigma >= 0.0
            && self.axis_sigma.is_finite()
            && self.gain_sigma >= 0.0
            && self.gain_sigma.is_finite()
            && self.earth_field.iter().all(|v| v.is_finite())
            && motor_ok
        {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid noise model: {self:?}")))
        }
    }

    fn sigma(&self, sensor: usize) -> f64 {
        match self.motor {
            Some(m) if m.sensor == sensor => m.sigma,
            _ => self.axis_sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FieldGenerator {
    /// Closed-form infinite lines.
    #[default]
    Infinite,
    /// Numerically integrated straight segments of the given half-length.
    Finite { half_length: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    /// AC frequency, Hz.
    pub frequency: f64,
    /// Sample rate, Hz.
    pub rate: f64,
    /// Common AC phase, rad.
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub generator: FieldGenerator,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            frequency: 50.0,
            rate: 500.0,
            phase: 0.0,
            generator: FieldGenerator::Infinite,
        }
    }
}

/// Ground-truth rig pose at one raw sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub raw: Vec<RawSample>,
    pub truth: Vec<TruthSample>,
}

/// AC amplitude vector of every sensor in the vehicle frame for a rig pose.
pub fn sensor_amplitudes(
    pose: &Waypoint,
    rig: &SensorRig,
    layout: &ConductorLayout,
    generator: FieldGenerator,
) -> Result<[FieldVector; SENSOR_COUNT]> {
    let rot = pose.attitude().rotation();
    let mut out = [FieldVector::zeros(); SENSOR_COUNT];
    for (i, p) in rig.positions().iter().enumerate() {
        let d = rot * p;
        let global = match generator {
            FieldGenerator::Infinite => layout.field(pose.y + d.y, pose.z + d.z)?,
            FieldGenerator::Finite { half_length } => {
                biot_savart_segments(&Vector3::new(d.x, pose.y + d.y, pose.z + d.z), layout, half_length)?
            }
        };
        out[i] = rot.transpose() * global;
    }
    Ok(out)
}

/// Sample the trajectory at `sampling.rate` from its first to its last
/// waypoint and synthesize every magnetometer axis as
/// `earth + gain·amplitude·cos(2πft + φ₀) + noise`.
pub fn simulate(
    trajectory: &Trajectory,
    rig: &SensorRig,
    layout: &ConductorLayout,
    noise: &NoiseModel,
    sampling: &Sampling,
) -> Result<SimulationOutput> {
    if !(sampling.frequency > 0.0 && sampling.rate > 2.0 * sampling.frequency) {
        return Err(Error::Nyquist {
            rate: sampling.rate,
            freq: sampling.frequency,
        });
    }
    if let FieldGenerator::Finite { half_length } = sampling.generator {
        if !(half_length > 0.0) {
            return Err(Error::Config("finite generator needs a positive half-length".into()));
        }
    }
    noise.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let gains: [f64; CHANNELS] = std::array::from_fn(|_| 1.0 + noise.gain_sigma * unit.sample(&mut rng));

    let dt = 1.0 / sampling.rate;
    let count = ((trajectory.end() - trajectory.start()) * sampling.rate + 1e-9).floor() as usize + 1;
    let omega = 2.0 * PI * sampling.frequency;
    let mut raw = Vec::with_capacity(count);
    let mut truth = Vec::with_capacity(count);
    for k in 0..count {
        let t = trajectory.start() + k as f64 * dt;
        let pose = trajectory.sample(t);
        let amps = sensor_amplitudes(&pose, rig, layout, sampling.generator)?;
        let earth = pose.attitude().rotation().transpose() * noise.earth_field;
        let carrier = (omega * t + sampling.phase).cos();
        let mut values = [0.0; CHANNELS];
        for (s, amp) in amps.iter().enumerate() {
            let sigma = noise.sigma(s);
            for a in 0..AXES {
                let ch = s * AXES + a;
                let n = if sigma > 0.0 { sigma * unit.sample(&mut rng) } else { 0.0 };
                values[ch] = earth[a] + gains[ch] * amp[a] * carrier + n;
            }
        }
        raw.push(RawSample { t, values });
        truth.push(TruthSample {
            t,
            y: pose.y,
            z: pose.z,
            yaw: pose.yaw,
            pitch: pose.pitch,
            roll: pose.roll,
        });
    }
    Ok(SimulationOutput { raw, truth })
}
