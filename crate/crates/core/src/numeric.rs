//! Conductor localization by direct minimization of the measurement
//! mismatch.
//!
//! The lines are hypothesized in the vehicle frame. Their common direction
//! comes from the cross products of the readings; the first conductor's
//! anchor is `s1·ẑ + s2·v_perp`, and every other conductor sits at a fixed
//! offset taken from the layout template. Only `(s1, s2)` is searched.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::analytic::{AttitudeEstimate, PoseEstimate};
use crate::error::{Error, Result};
use crate::field_model::{wrap_angle, Attitude, ConductorLayout, FieldVector, SensorRig, SENSOR_COUNT, SINGULAR_RADIUS};
use crate::optimizer::{multi_start, OptimizerConfig};

/// Criterion value used in place of a singular trial, T.
const SINGULAR_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NumericConfig {
    /// Weight of the jump penalty, 1/m. Zero disables smoothing.
    pub smoothing: f64,
    /// Start offsets around the previous `(s1, s2)`, applied on both axes.
    pub grid: Vec<f64>,
    /// Minimum `|B_i × B_j| / (|B_i| |B_j|)` for a pair to contribute.
    pub pair_threshold: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig {
            smoothing: 1.0,
            grid: vec![-2.0, 0.0, 2.0],
            pair_threshold: 1e-3,
            optimizer: OptimizerConfig {
                max_iterations: 2000,
                x_tolerance: 1e-9,
                f_tolerance: 1e-14,
                initial_simplex_scale: vec![0.05],
                ..OptimizerConfig::default()
            },
        }
    }
}

/// Search state carried from one timestep to the next.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverState {
    /// `(s1, s2)` of the previous step, m.
    pub previous: Option<[f64; 2]>,
    /// Criterion value of the previous step, T.
    pub residual: f64,
}

/// Orthonormal frame attached to the hypothesized lines, in vehicle
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFrame {
    pub direction: Vector3<f64>,
    /// Horizontal unit vector `v × ẑ / |v × ẑ|`.
    pub perpendicular: Vector3<f64>,
    /// `perpendicular × direction`; points up in the wire frame.
    pub up: Vector3<f64>,
}

impl LineFrame {
    pub fn new(direction: Vector3<f64>) -> Result<Self> {
        let direction = direction.normalize();
        let perpendicular = perpendicular(&direction)?;
        Ok(LineFrame {
            direction,
            perpendicular,
            up: perpendicular.cross(&direction),
        })
    }

    /// Vehicle-frame offset of a layout point `(y, z)` relative to `(y_ref, z_ref)`.
    fn layout_offset(&self, dy: f64, dz: f64) -> Vector3<f64> {
        -self.perpendicular * dy + self.up * dz
    }
}

/// Hypothesized conductor lines in the vehicle frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LinePair {
    /// One anchor per template conductor, same order as the layout.
    pub anchors: Vec<Vector3<f64>>,
    pub direction: Vector3<f64>,
    pub perpendicular: Vector3<f64>,
    /// Distance between the first two conductors, m.
    pub separation: f64,
}

impl LinePair {
    fn from_params(s1: f64, s2: f64, frame: &LineFrame, template: &ConductorLayout) -> Self {
        let wires = template.conductors();
        let first = Vector3::z() * s1 + frame.perpendicular * s2;
        let anchors = wires
            .iter()
            .map(|w| first + frame.layout_offset(w.offset_y - wires[0].offset_y, w.offset_z - wires[0].offset_z))
            .collect();
        let separation = match wires {
            [a, b, ..] => (b.offset_y - a.offset_y).hypot(b.offset_z - a.offset_z),
            _ => 0.0,
        };
        LinePair {
            anchors,
            direction: frame.direction,
            perpendicular: frame.perpendicular,
            separation,
        }
    }

    /// Field of the template currents flowing along these lines at `point`.
    pub fn field(&self, point: &Vector3<f64>, template: &ConductorLayout) -> Result<FieldVector> {
        let mut b = FieldVector::zeros();
        for (anchor, wire) in self.anchors.iter().zip(template.conductors()) {
            let r = point - anchor;
            let r_perp = r - self.direction * r.dot(&self.direction);
            let d2 = r_perp.norm_squared();
            if d2 < SINGULAR_RADIUS * SINGULAR_RADIUS {
                return Err(Error::Singular {
                    distance: d2.sqrt(),
                    min: SINGULAR_RADIUS,
                });
            }
            b += self.direction.cross(&r_perp) * (wire.prefactor() / d2);
        }
        Ok(b)
    }
}

/// Line direction in the vehicle frame from the sign-aligned sum of all
/// pairwise reading cross products.
pub fn estimate_direction(readings: &[FieldVector], threshold: f64) -> Result<Vector3<f64>> {
    if readings.len() < 2 {
        return Err(Error::InvalidInput("need at least two readings".into()));
    }
    let mut reference: Option<Vector3<f64>> = None;
    let mut sum = Vector3::zeros();
    for i in 0..readings.len() {
        for j in i + 1..readings.len() {
            let c = readings[i].cross(&readings[j]);
            let scale = readings[i].norm() * readings[j].norm();
            if scale == 0.0 || c.norm() < threshold * scale {
                continue;
            }
            let r = *reference.get_or_insert(c);
            sum += if c.dot(&r) < 0.0 { -c } else { c };
        }
    }
    if reference.is_none() || sum.norm() == 0.0 {
        return Err(Error::DegenerateGeometry);
    }
    Ok(sum.normalize())
}

/// `normalize(v × ẑ)`.
pub fn perpendicular(direction: &Vector3<f64>) -> Result<Vector3<f64>> {
    let c = direction.cross(&Vector3::z());
    if c.norm() < 1e-6 {
        return Err(Error::VerticalDirection);
    }
    Ok(c.normalize())
}

/// Mismatch `min_± Σ|±B_mi − B(p_i)|` for the lines at `(s1, s2)`, inflated
/// by `1 + q(|Δs1| + |Δs2|)` when a previous step exists.
#[allow(clippy::too_many_arguments)]
pub fn criterion(
    s1: f64,
    s2: f64,
    readings: &[FieldVector; SENSOR_COUNT],
    rig: &SensorRig,
    frame: &LineFrame,
    template: &ConductorLayout,
    state: &SolverState,
    smoothing: f64,
) -> Result<f64> {
    let lines = LinePair::from_params(s1, s2, frame, template);
    let (mut plus, mut minus) = (0.0, 0.0);
    for (reading, p) in readings.iter().zip(rig.positions()) {
        let model = lines.field(p, template)?;
        plus += (reading - model).norm();
        minus += (reading + model).norm();
    }
    let raw = plus.min(minus);
    Ok(match state.previous {
        Some([p1, p2]) => raw * (1.0 + smoothing * ((s1 - p1).abs() + (s2 - p2).abs())),
        None => raw,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericSolution {
    pub lines: LinePair,
    pub state: SolverState,
    pub pose: PoseEstimate,
    pub converged: bool,
}

/// Locate the template lines relative to the rig and convert the result to
/// a rig pose in the wire frame.
///
/// `attitude` only orients the line direction (its x axis picks the sign of
/// `v`); roll is taken as zero, so the horizontal wire-frame axis is
/// perpendicular to the vehicle's vertical.
pub fn solve(
    timestamp: f64,
    readings: &[FieldVector; SENSOR_COUNT],
    rig: &SensorRig,
    attitude: &Attitude,
    template: &ConductorLayout,
    state: &SolverState,
    config: &NumericConfig,
) -> Result<NumericSolution> {
    if template.len() < 2 {
        return Err(Error::Config("numeric solver needs at least two conductors".into()));
    }
    let mut direction = estimate_direction(readings, config.pair_threshold)?;
    let hint = attitude.rotation().transpose() * Vector3::x();
    if direction.dot(&hint) < 0.0 {
        direction = -direction;
    }
    let frame = LineFrame::new(direction)?;

    let scale = template.conductors()[0].prefactor().abs();
    let objective = |x: &[f64]| {
        criterion(x[0], x[1], readings, rig, &frame, template, state, config.smoothing)
            .map_or(SINGULAR_PENALTY, |j| j)
            / scale
    };
    let [c1, c2] = state.previous.unwrap_or([0.0, 0.0]);
    let starts: Vec<Vec<f64>> = config
        .grid
        .iter()
        .flat_map(|&a| config.grid.iter().map(move |&b| vec![c1 + a, c2 + b]))
        .collect();
    let best = multi_start(objective, &starts, &config.optimizer)?;
    let (s1, s2) = (best.x_min[0], best.x_min[1]);
    let residual = best.f_min * scale;
    let lines = LinePair::from_params(s1, s2, &frame, template);

    // The wire frame's y axis is -perpendicular and its z axis is `up`; the
    // first anchor's projection gives the rig origin relative to conductor 0.
    let y_axis = -frame.perpendicular;
    let first = template.conductors()[0];
    let origin_y = first.offset_y - lines.anchors[0].dot(&y_axis);
    let origin_z = first.offset_z - lines.anchors[0].dot(&frame.up);
    let yaw = direction.y.atan2(direction.x);
    let pitch = (-direction.z).clamp(-1.0, 1.0).asin();

    let pose = PoseEstimate {
        timestamp,
        y: origin_y,
        z: origin_z,
        attitude: AttitudeEstimate {
            yaw: wrap_angle(yaw),
            pitch,
            roll: 0.0,
            consistency: 0.0,
        },
        sensor_positions: std::array::from_fn(|i| {
            let p = rig.position(i);
            [origin_y + p.dot(&y_axis), origin_z + p.dot(&frame.up)]
        }),
        residual,
        polarity: 1.0,
    };
    Ok(NumericSolution {
        lines,
        state: SolverState {
            previous: Some([s1, s2]),
            residual,
        },
        pose,
        converged: best.converged,
    })
}
