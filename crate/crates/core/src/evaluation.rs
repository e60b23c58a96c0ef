//! Comparison of pose estimates against ground truth.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::PoseRow;
use crate::simulator::TruthSample;

/// An estimate paired with the nearest truth sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedRow {
    pub t: f64,
    pub est_y: f64,
    pub true_y: f64,
    pub est_z: f64,
    pub true_z: f64,
    pub est_yaw: f64,
    pub true_yaw: f64,
    pub est_pitch: f64,
    pub true_pitch: f64,
}

impl AlignedRow {
    pub fn position_error(&self) -> f64 {
        (self.est_y - self.true_y).hypot(self.est_z - self.true_z)
    }

    pub fn yaw_error(&self) -> f64 {
        half_turn_difference(self.est_yaw, self.true_yaw)
    }
}

/// `|a - b|` modulo π, in [0, π/2]. Yaw is only defined up to a half turn.
pub fn half_turn_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub median_abs: f64,
    pub max_abs: f64,
}

impl ErrorStats {
    pub fn from_abs(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return ErrorStats::default();
        }
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
        ErrorStats {
            rmse,
            median_abs: median(errors),
            max_abs: errors.iter().copied().fold(0.0, f64::max),
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualStats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub solver: String,
    pub estimates: usize,
    pub gaps: usize,
    /// Estimates that found a truth sample within the alignment tolerance.
    pub matched: usize,
    pub y: ErrorStats,
    pub z: ErrorStats,
    pub position: ErrorStats,
    pub yaw: ErrorStats,
    pub pitch: ErrorStats,
    pub residual: ResidualStats,
}

/// Wall-clock statistics of the per-window solves, ms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    pub fn from_seconds(durations: &[f64]) -> Self {
        if durations.is_empty() {
            return TimingStats::default();
        }
        let mut ms: Vec<f64> = durations.iter().map(|d| d * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let p95 = ms[((ms.len() as f64 * 0.95).ceil() as usize).clamp(1, ms.len()) - 1];
        TimingStats {
            count: ms.len(),
            mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
            median_ms: median(&ms),
            p95_ms: p95,
            max_ms: ms[ms.len() - 1],
        }
    }
}

/// Pair every non-gap estimate with the truth sample nearest in time,
/// keeping pairs closer than `tolerance` seconds.
pub fn align(poses: &[PoseRow], truth: &[TruthSample], tolerance: f64) -> Result<Vec<AlignedRow>> {
    let valid: Vec<&PoseRow> = poses.iter().filter(|p| !p.is_gap()).collect();
    if valid.is_empty() || truth.is_empty() {
        return Ok(Vec::new());
    }
    let (t0, t1) = (truth[0].t, truth[truth.len() - 1].t);
    let (p0, p1) = (valid[0].t, valid[valid.len() - 1].t);
    if p1 < t0 - tolerance || p0 > t1 + tolerance {
        return Err(Error::DisjointTime);
    }
    let mut out = Vec::with_capacity(valid.len());
    for p in valid {
        let k = truth.partition_point(|s| s.t < p.t);
        let nearest = [k.checked_sub(1), (k < truth.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (truth[a].t - p.t).abs().total_cmp(&(truth[b].t - p.t).abs()))
            .expect("truth is non-empty");
        let s = &truth[nearest];
        if (s.t - p.t).abs() > tolerance {
            continue;
        }
        out.push(AlignedRow {
            t: p.t,
            est_y: p.y,
            true_y: s.y,
            est_z: p.z,
            true_z: s.z,
            est_yaw: p.yaw,
            true_yaw: s.yaw,
            est_pitch: p.pitch,
            true_pitch: s.pitch,
        });
    }
    Ok(out)
}

/// Align and summarize. Returns the report and the aligned table.
pub fn evaluate(poses: &[PoseRow], truth: &[TruthSample], tolerance: f64) -> Result<(EvaluationReport, Vec<AlignedRow>)> {
    let table = align(poses, truth, tolerance)?;
    let abs = |f: &dyn Fn(&AlignedRow) -> f64| table.iter().map(f).collect::<Vec<f64>>();
    let residuals: Vec<f64> = poses.iter().filter(|p| !p.is_gap()).map(|p| p.residual).collect();
    let residual = if residuals.is_empty() {
        ResidualStats::default()
    } else {
        ResidualStats {
            mean: residuals.iter().sum::<f64>() / residuals.len() as f64,
            median: median(&residuals),
            max: residuals.iter().copied().fold(0.0, f64::max),
        }
    };
    let report = EvaluationReport {
        solver: poses.first().map_or_else(String::new, |p| p.solver.to_string()),
        estimates: poses.len(),
        gaps: poses.iter().filter(|p| p.is_gap()).count(),
        matched: table.len(),
        y: ErrorStats::from_abs(&abs(&|r| (r.est_y - r.true_y).abs())),
        z: ErrorStats::from_abs(&abs(&|r| (r.est_z - r.true_z).abs())),
        position: ErrorStats::from_abs(&abs(&AlignedRow::position_error)),
        yaw: ErrorStats::from_abs(&abs(&AlignedRow::yaw_error)),
        pitch: ErrorStats::from_abs(&abs(&|r| (r.est_pitch - r.true_pitch).abs())),
        residual,
    };
    Ok((report, table))
}
