//! Closed-form attitude and position recovery for the symmetric two-wire
//! layout.
//!
//! Yaw is reported in (-π/2, π/2]. The phasor sign is only known up to a
//! global flip, and under that flip a 180° turn about the vertical maps the
//! symmetric pair onto itself, so `yaw` and `yaw + π` cannot be told apart.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{field_two_wire, Attitude, ConductorLayout, FieldVector, SensorRig, MU0, SENSOR_COUNT};
use crate::signal_proc::PhasorReading;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticConfig {
    /// Minimum `|B_l × B_n| / (|B_l| |B_n|)` for a usable sensor pair.
    pub pair_threshold: f64,
    /// Minimum pitch denominator, T.
    pub denominator_threshold: f64,
    /// Candidate combinations whose implied rig origins spread further
    /// than this are dropped before scoring, m.
    pub prune_tolerance: f64,
    /// Poses closer than this count as the same solution, m.
    pub distinct_tolerance: f64,
    /// Relative score margin below which two poses are ambiguous.
    pub ambiguity_ratio: f64,
    /// Weight of the jump penalty against the previous pose, 1/m.
    pub smoothing: f64,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        AnalyticConfig {
            pair_threshold: 1e-3,
            denominator_threshold: 1e-12,
            prune_tolerance: 0.5,
            distinct_tolerance: 0.05,
            ambiguity_ratio: 0.01,
            smoothing: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttitudeEstimate {
    pub yaw: f64,
    pub pitch: f64,
    /// Always zero; roll is not observable from this field.
    pub roll: f64,
    /// Pitch disagreement between the two sensors of the pair, rad.
    pub consistency: f64,
}

impl AttitudeEstimate {
    pub fn attitude(&self) -> Attitude {
        Attitude::new(self.yaw, self.pitch, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// One of the up-to-four sensor locations consistent with a reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionCandidate {
    pub y: f64,
    pub z: f64,
    /// Which y root (0 or 1).
    pub root: usize,
    /// Branch of the z² expression that was admissible for this root.
    pub branch: Sign,
    pub z_sign: Sign,
    /// Whether the candidate also reproduces the sign of `B_y`; its z mirror
    /// reproduces `-B_y`.
    pub matches_by_sign: bool,
}

/// Rig pose in the wire frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub timestamp: f64,
    /// Rig-origin position, m.
    pub y: f64,
    pub z: f64,
    pub attitude: AttitudeEstimate,
    /// `(y, z)` of every magnetometer, m.
    pub sensor_positions: [[f64; 2]; SENSOR_COUNT],
    /// Criterion value of the selected solution.
    pub residual: f64,
    /// Global sign applied to the readings (+1 or -1).
    pub polarity: f64,
}

fn fold_half_turn(angle: f64) -> f64 {
    if angle > FRAC_PI_2 {
        angle - PI
    } else if angle <= -FRAC_PI_2 {
        angle + PI
    } else {
        angle
    }
}

fn pair_conditioning(a: &FieldVector, b: &FieldVector) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        a.cross(b).norm() / denom
    }
}

/// Yaw from two vehicle-frame readings: `atan2(w·e_y, w·e_x)` with
/// `w = B_l × B_n`, folded into (-π/2, π/2].
pub fn estimate_yaw(b_l: &FieldVector, b_n: &FieldVector, threshold: f64) -> Result<f64> {
    let norm = pair_conditioning(b_l, b_n);
    if norm < threshold {
        return Err(Error::DegeneratePair { norm });
    }
    let w = b_l.cross(b_n);
    Ok(fold_half_turn(w.y.atan2(w.x)))
}

/// Pitch from one reading and the yaw:
/// `atan((B_x + B_y·A) / (B_z·√(A²+1)))`, `A = tan α`.
pub fn estimate_pitch(b: &FieldVector, yaw: f64, threshold: f64) -> Result<f64> {
    let a = yaw.tan();
    let num = b.x + b.y * a;
    let den = b.z * (a * a + 1.0).sqrt();
    if !(den.abs() >= threshold) {
        return Err(Error::DegenerateDenominator { value: den });
    }
    Ok((num / den).atan())
}

/// Yaw from the best-conditioned sensor pair and pitch averaged over that
/// pair. Zero readings are skipped.
pub fn estimate_attitude(readings: &[FieldVector], config: &AnalyticConfig) -> Result<AttitudeEstimate> {
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..readings.len() {
        for j in i + 1..readings.len() {
            let c = pair_conditioning(&readings[i], &readings[j]);
            if best.is_none_or(|(b, _, _)| c > b) {
                best = Some((c, i, j));
            }
        }
    }
    let (_, l, n) = best.ok_or_else(|| Error::InvalidInput("need at least two readings".into()))?;
    let yaw = estimate_yaw(&readings[l], &readings[n], config.pair_threshold)?;
    let pitches: Vec<f64> = [l, n]
        .iter()
        .filter_map(|&k| estimate_pitch(&readings[k], yaw, config.denominator_threshold).ok())
        .collect();
    let (pitch, consistency) = match pitches.as_slice() {
        [p] => (*p, 0.0),
        [p, q] => (0.5 * (p + q), (p - q).abs()),
        _ => {
            return Err(Error::DegenerateDenominator {
                value: readings[l].z.abs().max(readings[n].z.abs()),
            })
        }
    };
    Ok(AttitudeEstimate {
        yaw,
        pitch,
        roll: 0.0,
        consistency,
    })
}

/// `z²(y, P) = ±2√(y²y0² − C²y0²/P² + C⁴/P⁴) − y0² − y² + 2C²/P²`.
pub fn z_squared(y: f64, p: f64, branch: Sign, y0: f64, c: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidInput("field magnitude must be positive".into()));
    }
    let k = c / p;
    let radicand = y * y * y0 * y0 - k * k * y0 * y0 + k.powi(4);
    if radicand < 0.0 {
        return Err(Error::NegativeRadicand { value: radicand });
    }
    Ok(branch.value() * 2.0 * radicand.sqrt() - y0 * y0 - y * y + 2.0 * k * k)
}

/// The two real roots `y = (±√r·cos(φ/2) + C·B_z) / P²` of the quartic in
/// y, with `r = √(a² + b²)`, `φ = atan2(b, a)`,
/// `a = P⁴y0² + (2B_z² − P²)C²`, `b = 2C²B_z√(P² − B_z²)`.
///
/// Evaluated with everything divided by `P⁴` so the intermediate values stay
/// near unit scale.
pub fn y_candidates(bz: f64, p: f64, y0: f64, c: f64) -> Result<[f64; 2]> {
    if !(p > 0.0) {
        return Err(Error::InvalidInput("field magnitude must be positive".into()));
    }
    let excess = p * p - bz * bz;
    if excess < -1e-12 * p * p {
        return Err(Error::InvalidEnergy { value: excess });
    }
    let u = (bz / p).clamp(-1.0, 1.0);
    let k = c / p;
    let a = y0 * y0 + (2.0 * u * u - 1.0) * k * k;
    let b = 2.0 * k * k * u * (1.0 - u * u).max(0.0).sqrt();
    let r = a.hypot(b);
    let phi = b.atan2(a);
    let root = r.sqrt() * (0.5 * phi).cos();
    Ok([root + k * u, -root + k * u])
}

/// All sensor positions in the y-z plane consistent with a wire-frame
/// reading `b` (its x component is ignored).
pub fn enumerate_candidates(b: &FieldVector, y0: f64, c: f64) -> Result<Vec<PositionCandidate>> {
    let p = b.y.hypot(b.z);
    if !(p > 0.0) {
        return Err(Error::NoCandidate { sensor: 0 });
    }
    let current = c * 2.0 * PI / MU0;
    let tol = 1e-6 * p;
    let mut out: Vec<PositionCandidate> = Vec::with_capacity(4);
    for (root, y) in y_candidates(b.z, p, y0, c)?.into_iter().enumerate() {
        for branch in [Sign::Plus, Sign::Minus] {
            let Ok(z2) = z_squared(y, p, branch, y0, c) else { continue };
            if z2 < 0.0 {
                continue;
            }
            let z = z2.sqrt();
            let Ok(model) = field_two_wire(y, z, y0, current) else { continue };
            if (model.z - b.z).abs() > tol {
                continue;
            }
            for z_sign in [Sign::Plus, Sign::Minus] {
                let zc = z_sign.value() * z;
                if out.iter().any(|o| (o.y - y).abs() < 1e-9 && (o.z - zc).abs() < 1e-9) {
                    continue;
                }
                out.push(PositionCandidate {
                    y,
                    z: zc,
                    root,
                    branch,
                    z_sign,
                    matches_by_sign: (z_sign.value() * model.y - b.y).abs() <= tol,
                });
            }
        }
    }
    if out.is_empty() {
        Err(Error::NoCandidate { sensor: 0 })
    } else {
        Ok(out)
    }
}

/// Eq. 12 style mismatch `Σ|s·B_mi − R⁻¹B(p_i)|` for a rig origin.
fn pose_mismatch(
    origin: Vector2<f64>,
    offsets: &[Vector2<f64>; SENSOR_COUNT],
    readings: &[FieldVector; SENSOR_COUNT],
    used: &[usize],
    attitude: &Attitude,
    layout: &ConductorLayout,
    polarity: f64,
) -> Result<f64> {
    let rt = attitude.rotation().transpose();
    let mut total = 0.0;
    for &i in used {
        let q = origin + offsets[i];
        let model = rt * layout.field(q.x, q.y)?;
        total += (readings[i] * polarity - model).norm();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    origin: Vector2<f64>,
    polarity: f64,
    score: f64,
    raw: f64,
}

/// Pick the best-scoring pose; fail if a pose farther than
/// `distinct_tolerance` scores within `ambiguity_ratio` of it.
fn select(mut scored: Vec<Scored>, config: &AnalyticConfig) -> Result<Scored> {
    scored.sort_by(|a, b| a.score.total_cmp(&b.score));
    let best = *scored.first().ok_or(Error::NoCandidate { sensor: 0 })?;
    if let Some(rival) = scored
        .iter()
        .skip(1)
        .find(|s| (s.origin - best.origin).norm() > config.distinct_tolerance)
    {
        if rival.score <= best.score * (1.0 + config.ambiguity_ratio) {
            return Err(Error::AmbiguousPose {
                best: best.score,
                second: rival.score,
            });
        }
    }
    Ok(best)
}

/// Full analytic pose solve for one reading set.
///
/// Attitude comes from [`estimate_attitude`], every reading is rotated into
/// the wire frame, candidates are enumerated per sensor for both global
/// polarities, and the rigidly consistent combination with the lowest
/// (optionally jump-penalized) mismatch wins. The rig origin is the mean of
/// the origins implied by the chosen candidates.
pub fn solve_pose(
    reading: &PhasorReading,
    rig: &SensorRig,
    layout: &ConductorLayout,
    previous: Option<&PoseEstimate>,
    config: &AnalyticConfig,
) -> Result<PoseEstimate> {
    let (y0, current) = layout
        .canonical_two_wire()
        .ok_or_else(|| Error::Config("analytic solver needs the symmetric two-wire layout".into()))?;
    let c = current * MU0 / (2.0 * PI);

    let used: Vec<usize> = (0..SENSOR_COUNT).filter(|&i| reading.sensors[i].norm() > 0.0).collect();
    if used.len() < 2 {
        return Err(Error::InvalidInput(format!("{} usable sensor readings, need 2", used.len())));
    }
    let usable: Vec<FieldVector> = used.iter().map(|&i| reading.sensors[i]).collect();
    let estimate = estimate_attitude(&usable, config)?;
    let attitude = estimate.attitude();
    let rot = attitude.rotation();
    let offsets: [Vector2<f64>; SENSOR_COUNT] = std::array::from_fn(|i| {
        let d = rot * rig.position(i);
        Vector2::new(d.y, d.z)
    });

    let penalty = |origin: Vector2<f64>| match previous {
        Some(p) => 1.0 + config.smoothing * ((origin.x - p.y).abs() + (origin.y - p.z).abs()),
        None => 1.0,
    };

    let mut scored = Vec::new();
    for polarity in [1.0, -1.0] {
        let mut implied: Vec<Vec<Vector2<f64>>> = Vec::with_capacity(used.len());
        for &i in &used {
            let g = rot * reading.sensors[i] * polarity;
            let cands = enumerate_candidates(&g, y0, c).map_err(|_| Error::NoCandidate { sensor: i })?;
            implied.push(cands.iter().map(|k| Vector2::new(k.y, k.z) - offsets[i]).collect());
        }
        let mut origins = Vec::new();
        combine(&implied, config.prune_tolerance, &mut Vec::new(), &mut origins);
        if origins.is_empty() {
            combine(&implied, f64::INFINITY, &mut Vec::new(), &mut origins);
        }
        for origin in origins {
            let Ok(raw) = pose_mismatch(origin, &offsets, &reading.sensors, &used, &attitude, layout, polarity) else {
                continue;
            };
            scored.push(Scored {
                origin,
                polarity,
                score: raw * penalty(origin),
                raw,
            });
        }
    }
    let best = select(scored, config)?;
    let _ = best.raw;

    Ok(PoseEstimate {
        timestamp: reading.timestamp,
        y: best.origin.x,
        z: best.origin.y,
        attitude: estimate,
        sensor_positions: std::array::from_fn(|i| {
            let q = best.origin + offsets[i];
            [q.x, q.y]
        }),
        residual: best.score,
        polarity: best.polarity,
    })
}

/// Depth-first walk over one candidate per sensor, dropping branches whose
/// implied origins disagree by more than `tolerance`.
fn combine(
    implied: &[Vec<Vector2<f64>>],
    tolerance: f64,
    chosen: &mut Vec<Vector2<f64>>,
    out: &mut Vec<Vector2<f64>>,
) {
    let depth = chosen.len();
    if depth == implied.len() {
        let mean = chosen.iter().sum::<Vector2<f64>>() / depth as f64;
        out.push(mean);
        return;
    }
    for o in &implied[depth] {
        if chosen.iter().all(|c| (c - o).norm() <= tolerance) {
            chosen.push(*o);
            combine(implied, tolerance, chosen, out);
            chosen.pop();
        }
    }
}

/// Wire-frame readings of a rig at `(y, z)` with the given attitude, in the
/// vehicle frame; the forward model the solvers invert.
pub fn forward_readings(
    y: f64,
    z: f64,
    attitude: &Attitude,
    rig: &SensorRig,
    layout: &ConductorLayout,
) -> Result<[FieldVector; SENSOR_COUNT]> {
    let rot = attitude.rotation();
    let mut out = [Vector3::zeros(); SENSOR_COUNT];
    for (i, p) in rig.positions().iter().enumerate() {
        let d = rot * p;
        out[i] = rot.transpose() * layout.field(y + d.y, z + d.z)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const Y0: f64 = 0.2;
    const I: f64 = 31.0;

    fn c() -> f64 {
        I * MU0 / (2.0 * PI)
    }

    fn layout() -> ConductorLayout {
        ConductorLayout::two_wire(Y0, I).unwrap()
    }

    #[test]
    fn yaw_zero_at_identity() {
        let b = forward_readings(0.6, -1.0, &Attitude::default(), &SensorRig::default(), &layout()).unwrap();
        let yaw = estimate_yaw(&b[0], &b[2], 1e-3).unwrap();
        assert!(yaw.abs() < 1e-9);
        let pitch = estimate_pitch(&b[0], yaw, 1e-12).unwrap();
        assert!(pitch.abs() < 1e-9);
    }

    #[test]
    fn yaw_and_pitch_recovered() {
        let att = Attitude::level(20f64.to_radians(), 10f64.to_radians());
        let b = forward_readings(0.6, -1.0, &att, &SensorRig::default(), &layout()).unwrap();
        let yaw = estimate_yaw(&b[0], &b[2], 1e-3).unwrap();
        assert_relative_eq!(yaw, 20f64.to_radians(), epsilon = 1e-9);
        let pitch = estimate_pitch(&b[1], yaw, 1e-12).unwrap();
        assert_relative_eq!(pitch, 10f64.to_radians(), epsilon = 1e-9);

        let att = Attitude::level(30f64.to_radians(), 0.0);
        let b = forward_readings(-0.4, -1.3, &att, &SensorRig::default(), &layout()).unwrap();
        assert_relative_eq!(estimate_yaw(&b[1], &b[3], 1e-3).unwrap(), 30f64.to_radians(), epsilon = 1e-9);
    }

    #[test]
    fn parallel_pair_is_degenerate() {
        let v = FieldVector::new(1.0, 2.0, 3.0);
        assert!(matches!(estimate_yaw(&v, &(v * 2.0), 1e-3), Err(Error::DegeneratePair { .. })));
    }

    #[test]
    fn zero_bz_pitch_is_degenerate() {
        let v = FieldVector::new(1.0e-6, 2.0e-6, 0.0);
        assert!(matches!(estimate_pitch(&v, 0.1, 1e-12), Err(Error::DegenerateDenominator { .. })));
    }

    #[test]
    fn z_squared_forward_case() {
        let b = field_two_wire(0.5, -1.2, Y0, I).unwrap();
        let p = b.norm();
        let hits: Vec<f64> = [Sign::Plus, Sign::Minus]
            .iter()
            .filter_map(|&s| z_squared(0.5, p, s, Y0, c()).ok())
            .filter(|z2| (z2 - 1.44).abs() < 1e-9)
            .collect();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn z_squared_even_in_y() {
        let p = 3.0e-6;
        for s in [Sign::Plus, Sign::Minus] {
            assert_eq!(z_squared(0.7, p, s, Y0, c()).unwrap(), z_squared(-0.7, p, s, Y0, c()).unwrap());
        }
    }

    #[test]
    fn z_squared_negative_radicand() {
        // Large P near a conductor with y = 0: C⁴/P⁴ < C²y0²/P².
        let p = 10.0 * c() / Y0;
        assert!(matches!(z_squared(0.0, p, Sign::Plus, Y0, c()), Err(Error::NegativeRadicand { .. })));
    }

    #[test]
    fn y_root_contains_truth() {
        let b = field_two_wire(0.5, -1.2, Y0, I).unwrap();
        let roots = y_candidates(b.z, b.norm(), Y0, c()).unwrap();
        assert!(roots.iter().any(|y| (y - 0.5).abs() < 1e-9), "{roots:?}");
    }

    #[test]
    fn y_roots_symmetric_on_plane() {
        let roots = y_candidates(0.0, 4.0e-6, Y0, c()).unwrap();
        assert_relative_eq!(roots[0], -roots[1], epsilon = 1e-15);
    }

    #[test]
    fn y_roots_reject_excess_bz() {
        assert!(matches!(y_candidates(2.0e-6, 1.0e-6, Y0, c()), Err(Error::InvalidEnergy { .. })));
    }

    #[test]
    fn candidates_include_truth() {
        let b = field_two_wire(0.5, -1.2, Y0, I).unwrap();
        let cands = enumerate_candidates(&b, Y0, c()).unwrap();
        assert_eq!(cands.len(), 4);
        assert!(cands.iter().any(|k| (k.y - 0.5).abs() < 1e-9 && (k.z + 1.2).abs() < 1e-9));
        assert_eq!(cands.iter().filter(|k| k.matches_by_sign).count(), 2);
    }

    #[test]
    fn candidates_on_symmetry_plane() {
        let b = field_two_wire(0.0, -1.0, Y0, I).unwrap();
        let cands = enumerate_candidates(&b, Y0, c()).unwrap();
        assert!(cands.iter().any(|k| k.y.abs() < 1e-9 && (k.z + 1.0).abs() < 1e-9));
        assert!(cands.iter().any(|k| k.y.abs() < 1e-9 && (k.z - 1.0).abs() < 1e-9));
    }

    #[test]
    fn solve_pose_round_trip() {
        let rig = SensorRig::default();
        let att = Attitude::level(15f64.to_radians(), 5f64.to_radians());
        let sensors = forward_readings(0.6, -1.0, &att, &rig, &layout()).unwrap();
        let pose = solve_pose(&PhasorReading::new(0.0, sensors), &rig, &layout(), None, &AnalyticConfig::default()).unwrap();
        assert!((pose.y - 0.6).abs() < 1e-6 && (pose.z + 1.0).abs() < 1e-6, "{pose:?}");
        assert!((pose.attitude.yaw - att.yaw).abs() < 1e-6);
        assert!((pose.attitude.pitch - att.pitch).abs() < 1e-6);
        assert_eq!(pose.polarity, 1.0);

        // Flipped phasor polarity gives the same pose.
        let flipped = sensors.map(|v| -v);
        let pose = solve_pose(&PhasorReading::new(0.0, flipped), &rig, &layout(), None, &AnalyticConfig::default()).unwrap();
        assert!((pose.y - 0.6).abs() < 1e-6 && (pose.z + 1.0).abs() < 1e-6, "{pose:?}");
        assert_eq!(pose.polarity, -1.0);
    }

    #[test]
    fn symmetric_rig_on_symmetry_plane_is_unique() {
        let rig = SensorRig::new([
            Vector3::new(0.2, 0.3, 0.1),
            Vector3::new(0.2, -0.3, 0.1),
            Vector3::new(-0.2, 0.25, -0.05),
            Vector3::new(-0.25, -0.25, -0.1),
        ])
        .unwrap();
        let sensors = forward_readings(0.0, -1.0, &Attitude::default(), &rig, &layout()).unwrap();
        let pose = solve_pose(&PhasorReading::new(0.0, sensors), &rig, &layout(), None, &AnalyticConfig::default()).unwrap();
        assert!(pose.y.abs() < 1e-9 && (pose.z + 1.0).abs() < 1e-9);
    }

    #[test]
    fn tied_poses_are_ambiguous() {
        let s = |y: f64, score: f64| Scored {
            origin: Vector2::new(y, -1.0),
            polarity: 1.0,
            score,
            raw: score,
        };
        let cfg = AnalyticConfig::default();
        assert!(matches!(select(vec![s(0.3, 1.0), s(-0.3, 1.0)], &cfg), Err(Error::AmbiguousPose { .. })));
        assert!(matches!(select(vec![s(0.3, 1.0), s(-0.3, 1.005)], &cfg), Err(Error::AmbiguousPose { .. })));
        // Near-duplicates of the same pose do not count as rivals.
        let best = select(vec![s(0.3, 1.0), s(0.31, 1.0), s(-0.3, 2.0)], &cfg).unwrap();
        assert_eq!(best.origin.x, 0.3);
    }

    #[test]
    fn non_canonical_layout_rejected() {
        let three = ConductorLayout::with_return(Y0, I, 5.0, -1.5, -62.0).unwrap();
        let rig = SensorRig::default();
        let sensors = forward_readings(0.6, -1.0, &Attitude::default(), &rig, &three).unwrap();
        assert!(matches!(
            solve_pose(&PhasorReading::new(0.0, sensors), &rig, &three, None, &AnalyticConfig::default()),
            Err(Error::Config(_))
        ));
    }
}
