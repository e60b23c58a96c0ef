//! Extraction of the power-line-frequency component from raw magnetometer
//! samples, and resolution of the signed phasor vectors.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_model::{wrap_angle, SENSOR_COUNT};
use crate::optimizer::{nelder_mead, OptimizerConfig};

pub const AXES: usize = 3;
pub const CHANNELS: usize = SENSOR_COUNT * AXES;

/// One magnetometer axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub sensor: usize,
    pub axis: usize,
}

impl Channel {
    pub fn from_index(index: usize) -> Self {
        Channel {
            sensor: index / AXES,
            axis: index % AXES,
        }
    }

    pub fn index(&self) -> usize {
        self.sensor * AXES + self.axis
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    pub samples: Vec<f64>,
    pub sample_interval: f64,
    /// Time of the first sample, seconds.
    pub start_time: f64,
    pub channel: Channel,
}

impl SampleWindow {
    pub fn new(samples: Vec<f64>, sample_interval: f64, start_time: f64, channel: Channel) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidInput(format!("window has {} samples, need at least 3", samples.len())));
        }
        if !(sample_interval > 0.0) {
            return Err(Error::InvalidInput("sample interval must be positive".into()));
        }
        Ok(SampleWindow {
            samples,
            sample_interval,
            start_time,
            channel,
        })
    }

    pub fn span(&self) -> f64 {
        self.samples.len() as f64 * self.sample_interval
    }

    pub fn center_time(&self) -> f64 {
        self.start_time + 0.5 * (self.samples.len() - 1) as f64 * self.sample_interval
    }

    /// Sample `k` is taken at `start_time + k·sample_interval`.
    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.sample_interval
    }
}

/// `D + A·cos(2πft + φ)` fit of one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcFit {
    pub amplitude: f64,
    pub dc: f64,
    pub phase: f64,
    /// Sum of squared residuals, T².
    pub residual: f64,
    pub frequency: f64,
}

impl AcFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.dc + self.amplitude * (2.0 * PI * self.frequency * t + self.phase).cos()
    }
}

/// Fit with the default optimizer settings for three-parameter sinusoids.
pub fn fit_sinusoid(window: &SampleWindow, frequency: f64) -> Result<AcFit> {
    fit_sinusoid_with(window, frequency, &fit_optimizer_config())
}

pub fn fit_optimizer_config() -> OptimizerConfig {
    OptimizerConfig {
        max_iterations: 4000,
        x_tolerance: 1e-11,
        f_tolerance: 1e-20,
        ..OptimizerConfig::default()
    }
}

/// Least-squares fit of `D + A·cos(2πft + φ)` by Nelder-Mead, run from
/// `φ₀ = 0` and `φ₀ = π` with `A₀ = σ·√2` and `D₀ = mean`.
///
/// The samples are centred and scaled to unit peak deviation before the
/// search; the simplex steps are 10 % of the scaled data range for A and D
/// and 10 % of a full turn for φ. `config.initial_simplex_scale` is ignored.
pub fn fit_sinusoid_with(window: &SampleWindow, frequency: f64, config: &OptimizerConfig) -> Result<AcFit> {
    if !(frequency > 0.0) {
        return Err(Error::InvalidInput("frequency must be positive".into()));
    }
    let period = 1.0 / frequency;
    if window.span() < period {
        return Err(Error::WindowTooShort {
            span: window.span(),
            period,
        });
    }
    let n = window.samples.len() as f64;
    let mean = window.samples.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return Err(Error::InvalidInput("window contains non-finite samples".into()));
    }
    let first = window.samples[0];
    if window.samples.iter().all(|&m| m == first) {
        return Ok(AcFit {
            amplitude: 0.0,
            dc: first,
            phase: 0.0,
            residual: 0.0,
            frequency,
        });
    }

    let scale = window.samples.iter().map(|m| (m - mean).abs()).fold(0.0, f64::max);
    let omega = 2.0 * PI * frequency;
    let basis: Vec<(f64, f64, f64)> = window
        .samples
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let (s, c) = (omega * window.time(k)).sin_cos();
            ((m - mean) / scale, c, s)
        })
        .collect();
    let objective = |p: &[f64]| -> f64 {
        let (a, d) = (p[0], p[1]);
        let (sp, cp) = p[2].sin_cos();
        basis
            .iter()
            .map(|&(y, c, s)| {
                let r = y - d - a * (c * cp - s * sp);
                r * r
            })
            .sum()
    };

    let variance = basis.iter().map(|b| b.0 * b.0).sum::<f64>() / n;
    let a0 = variance.sqrt() * 2f64.sqrt();
    let range = basis.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max)
        - basis.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let cfg = OptimizerConfig {
        initial_simplex_scale: vec![0.1 * range, 0.1 * range, 0.2 * PI],
        ..config.clone()
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for phi0 in [0.0, PI] {
        let r = nelder_mead(objective, &[a0, 0.0, phi0], &cfg)?;
        if best.as_ref().is_none_or(|(f, _)| r.f_min < *f) {
            best = Some((r.f_min, r.x_min));
        }
    }
    let (f_min, p) = best.expect("two starts ran");
    let (mut amplitude, mut phase) = (p[0] * scale, p[2]);
    if amplitude < 0.0 {
        amplitude = -amplitude;
        phase += PI;
    }
    Ok(AcFit {
        amplitude,
        dc: mean + p[1] * scale,
        phase: wrap_angle(phase),
        residual: f_min * scale * scale,
        frequency,
    })
}

/// Signed 50/60 Hz amplitude vectors of every sensor for one window, T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorReading {
    pub timestamp: f64,
    pub sensors: [Vector3<f64>; SENSOR_COUNT],
}

impl PhasorReading {
    pub fn new(timestamp: f64, sensors: [Vector3<f64>; SENSOR_COUNT]) -> Self {
        PhasorReading { timestamp, sensors }
    }

    pub fn to_row(&self) -> [f64; CHANNELS] {
        let mut row = [0.0; CHANNELS];
        for (s, v) in self.sensors.iter().enumerate() {
            for a in 0..AXES {
                row[s * AXES + a] = v[a];
            }
        }
        row
    }

    pub fn from_row(timestamp: f64, row: &[f64; CHANNELS]) -> Self {
        let sensors = std::array::from_fn(|s| Vector3::new(row[s * AXES], row[s * AXES + 1], row[s * AXES + 2]));
        PhasorReading { timestamp, sensors }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignConfig {
    /// Components with a fitted amplitude below this are emitted as zero, T.
    pub noise_floor: f64,
    /// Half-width of the rejection band around ±π/2, rad.
    pub guard_band: f64,
}

impl Default for SignConfig {
    fn default() -> Self {
        SignConfig {
            noise_floor: 0.3e-6,
            guard_band: 0.2,
        }
    }
}

/// The channel with the largest fitted amplitude (lowest index on ties).
pub fn largest_amplitude_channel(fits: &[[AcFit; AXES]; SENSOR_COUNT]) -> Channel {
    let mut best = Channel { sensor: 0, axis: 0 };
    for s in 0..SENSOR_COUNT {
        for a in 0..AXES {
            if fits[s][a].amplitude > fits[best.sensor][best.axis].amplitude {
                best = Channel { sensor: s, axis: a };
            }
        }
    }
    best
}

/// Attach signs to the fitted amplitudes relative to `reference`.
///
/// A component is positive when its phase is within π/2 of the reference
/// phase. When the reference itself is below the noise floor every
/// component is, so the reading is all zeros.
pub fn resolve_signs(
    fits: &[[AcFit; AXES]; SENSOR_COUNT],
    reference: Channel,
    timestamp: f64,
    config: &SignConfig,
) -> Result<PhasorReading> {
    let r = fits[reference.sensor][reference.axis];
    let mut sensors = [Vector3::zeros(); SENSOR_COUNT];
    if r.amplitude < config.noise_floor {
        return Ok(PhasorReading { timestamp, sensors });
    }
    for s in 0..SENSOR_COUNT {
        for a in 0..AXES {
            let fit = fits[s][a];
            if fit.amplitude < config.noise_floor {
                continue;
            }
            let delta = wrap_angle(fit.phase - r.phase);
            if (delta.abs() - PI / 2.0).abs() < config.guard_band {
                return Err(Error::AmbiguousPhase { sensor: s, axis: a, delta });
            }
            sensors[s][a] = if delta.abs() < PI / 2.0 { fit.amplitude } else { -fit.amplitude };
        }
    }
    Ok(PhasorReading { timestamp, sensors })
}

/// One synchronized row of the raw log: time and 12 field samples, T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub t: f64,
    pub values: [f64; CHANNELS],
}

/// Aligned windows of all 12 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub windows: Vec<SampleWindow>,
}

impl WindowSet {
    pub fn start_time(&self) -> f64 {
        self.windows[0].start_time
    }

    pub fn center_time(&self) -> f64 {
        self.windows[0].center_time()
    }

    pub fn len(&self) -> usize {
        self.windows[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Median spacing of the timestamps, the nominal sample interval.
pub fn nominal_interval(samples: &[RawSample]) -> Option<f64> {
    let mut diffs: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).filter(|d| *d > 0.0).collect();
    if diffs.is_empty() {
        return None;
    }
    diffs.sort_by(f64::total_cmp);
    Some(diffs[diffs.len() / 2])
}

/// Sliding windows over a raw log.
///
/// Windows are laid on a nominal time grid anchored at the first sample of
/// each contiguous segment, so timestamp jitter does not shift the phase
/// reference. A jump larger than three nominal intervals yields one
/// [`Error::Gap`] and windowing restarts at the sample after the gap.
pub struct WindowStream<'a> {
    log: &'a [RawSample],
    window: usize,
    hop: usize,
    interval: f64,
    next: usize,
    anchor: usize,
}

pub fn stream_windows(log: &[RawSample], window: usize, hop: usize, interval: Option<f64>) -> Result<WindowStream<'_>> {
    if window < 3 || hop == 0 {
        return Err(Error::Config(format!("invalid window {window} / hop {hop}")));
    }
    let interval = match interval.or_else(|| nominal_interval(log)) {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::Config(format!("invalid sample interval {dt}"))),
        // Fewer than two samples: nothing to window.
        None => 1.0,
    };
    Ok(WindowStream {
        log,
        window,
        hop,
        interval,
        next: 0,
        anchor: 0,
    })
}

impl WindowStream<'_> {
    pub fn interval(&self) -> f64 {
        self.interval
    }
}

impl Iterator for WindowStream<'_> {
    type Item = Result<WindowSet>;

    fn next(&mut self) -> Option<Self::Item> {
        let start = self.next;
        let end = start + self.window;
        if end > self.log.len() {
            return None;
        }
        for i in start + 1..end {
            let dt = self.log[i].t - self.log[i - 1].t;
            if dt <= 0.0 || !dt.is_finite() {
                self.next = i;
                self.anchor = i;
                return Some(Err(Error::NonMonotonic { at: self.log[i].t }));
            }
            if dt > 3.0 * self.interval {
                self.next = i;
                self.anchor = i;
                return Some(Err(Error::Gap {
                    at: self.log[i - 1].t,
                    jump: dt,
                }));
            }
        }
        let start_time = self.log[self.anchor].t + (start - self.anchor) as f64 * self.interval;
        let rows = &self.log[start..end];
        let windows = (0..CHANNELS)
            .map(|c| SampleWindow {
                samples: rows.iter().map(|r| r.values[c]).collect(),
                sample_interval: self.interval,
                start_time,
                channel: Channel::from_index(c),
            })
            .collect();
        self.next += self.hop;
        Some(Ok(WindowSet { windows }))
    }
}

/// Fit all 12 channels of a window set (concurrently) and resolve signs
/// against the largest-amplitude channel.
pub fn extract_phasor(set: &WindowSet, frequency: f64, signs: &SignConfig) -> Result<PhasorReading> {
    let fits: Vec<AcFit> = set
        .windows
        .par_iter()
        .map(|w| fit_sinusoid(w, frequency))
        .collect::<Result<_>>()?;
    let mut grid = [[fits[0]; AXES]; SENSOR_COUNT];
    for (w, fit) in set.windows.iter().zip(fits) {
        grid[w.channel.sensor][w.channel.axis] = fit;
    }
    let reference = largest_amplitude_channel(&grid);
    resolve_signs(&grid, reference, set.center_time(), signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const UT: f64 = 1e-6;

    fn synth(d: f64, a: f64, phi: f64, f: f64, dt: f64, n: usize) -> SampleWindow {
        let samples = (0..n).map(|k| d + a * (2.0 * PI * f * k as f64 * dt + phi).cos()).collect();
        SampleWindow::new(samples, dt, 0.0, Channel { sensor: 0, axis: 0 }).unwrap()
    }

    fn fit_with_phase(phase: f64, amplitude: f64) -> AcFit {
        AcFit {
            amplitude,
            dc: 0.0,
            phase,
            residual: 0.0,
            frequency: 50.0,
        }
    }

    #[test]
    fn constant_window_has_zero_amplitude() {
        let w = SampleWindow::new(vec![40.0 * UT; 100], 1.0 / 500.0, 0.0, Channel { sensor: 0, axis: 0 }).unwrap();
        let fit = fit_sinusoid(&w, 50.0).unwrap();
        assert!(fit.amplitude.abs() < 1e-9 * UT);
        assert_relative_eq!(fit.dc, 40.0 * UT, max_relative = 1e-12);
    }

    #[test]
    fn noise_free_parameters_recovered() {
        let w = synth(40.0 * UT, 12.0 * UT, 0.7, 50.0, 1.0 / 500.0, 100);
        let fit = fit_sinusoid(&w, 50.0).unwrap();
        assert!((fit.amplitude / UT - 12.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.dc / UT - 40.0).abs() < 1e-6);
        assert!((fit.phase - 0.7).abs() < 1e-6);
        assert!(fit.residual < 1e-18);
    }

    #[test]
    fn negative_amplitude_normalized() {
        // A phase near π from the first start's side still yields A ≥ 0.
        let w = synth(0.0, 5.0 * UT, -2.9, 50.0, 1.0 / 500.0, 100);
        let fit = fit_sinusoid(&w, 50.0).unwrap();
        assert!(fit.amplitude > 0.0);
        assert!((fit.phase + 2.9).abs() < 1e-6, "{fit:?}");
        assert!(fit.phase > -PI && fit.phase <= PI);
    }

    #[test]
    fn short_window_rejected() {
        let w = synth(0.0, 1.0, 0.0, 50.0, 1.0 / 500.0, 9);
        assert!(matches!(fit_sinusoid(&w, 50.0), Err(Error::WindowTooShort { .. })));
        assert!(SampleWindow::new(vec![1.0, 2.0], 0.1, 0.0, Channel { sensor: 0, axis: 0 }).is_err());
    }

    #[test]
    fn in_phase_components_positive() {
        let fits = [[fit_with_phase(0.4, 2.0 * UT); AXES]; SENSOR_COUNT];
        let r = resolve_signs(&fits, Channel { sensor: 0, axis: 0 }, 0.0, &SignConfig::default()).unwrap();
        assert!(r.sensors.iter().all(|v| v.iter().all(|c| *c == 2.0 * UT)));
    }

    #[test]
    fn anti_phase_component_negative() {
        let mut fits = [[fit_with_phase(0.4, 2.0 * UT); AXES]; SENSOR_COUNT];
        fits[2][1].phase = wrap_angle(0.4 + PI);
        let r = resolve_signs(&fits, Channel { sensor: 0, axis: 0 }, 0.0, &SignConfig::default()).unwrap();
        assert_eq!(r.sensors[2][1], -2.0 * UT);
        assert_eq!(r.sensors[2][0], 2.0 * UT);
    }

    #[test]
    fn quadrature_component_is_ambiguous() {
        let mut fits = [[fit_with_phase(0.0, 2.0 * UT); AXES]; SENSOR_COUNT];
        fits[1][2].phase = PI / 2.0 + 0.1;
        let r = resolve_signs(&fits, Channel { sensor: 0, axis: 0 }, 0.0, &SignConfig::default());
        assert!(matches!(r, Err(Error::AmbiguousPhase { sensor: 1, axis: 2, .. })));
        // Below the floor the phase is ignored.
        fits[1][2].amplitude = 0.1 * UT;
        let r = resolve_signs(&fits, Channel { sensor: 0, axis: 0 }, 0.0, &SignConfig::default()).unwrap();
        assert_eq!(r.sensors[1][2], 0.0);
    }

    #[test]
    fn largest_channel_selected() {
        let mut fits = [[fit_with_phase(0.0, 1.0); AXES]; SENSOR_COUNT];
        fits[3][1].amplitude = 4.0;
        assert_eq!(largest_amplitude_channel(&fits), Channel { sensor: 3, axis: 1 });
    }

    fn raw_log(times: &[f64]) -> Vec<RawSample> {
        times.iter().map(|&t| RawSample { t, values: [t; CHANNELS] }).collect()
    }

    #[test]
    fn window_count_arithmetic() {
        let times: Vec<f64> = (0..500).map(|k| k as f64 / 500.0).collect();
        let log = raw_log(&times);
        let sets: Vec<_> = stream_windows(&log, 100, 50, None).unwrap().collect();
        assert_eq!(sets.len(), 9);
        assert!(sets.iter().all(|s| s.is_ok()));
        let first = sets[1].as_ref().unwrap();
        assert_eq!(first.windows.len(), CHANNELS);
        assert_relative_eq!(first.start_time(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn gap_reported_then_resumes() {
        let mut times: Vec<f64> = (0..250).map(|k| k as f64 / 500.0).collect();
        times.extend((0..250).map(|k| 0.55 + k as f64 / 500.0));
        let log = raw_log(&times);
        let items: Vec<_> = stream_windows(&log, 100, 50, None).unwrap().collect();
        let gaps = items.iter().filter(|r| matches!(r, Err(Error::Gap { .. }))).count();
        assert_eq!(gaps, 1);
        let after: Vec<_> = items.iter().skip_while(|r| r.is_ok()).skip(1).collect();
        assert_eq!(after.len(), 4);
        let resumed = after[0].as_ref().unwrap();
        assert_relative_eq!(resumed.start_time(), 0.55, epsilon = 1e-12);
    }

    #[test]
    fn non_monotonic_timestamps_rejected() {
        let mut times: Vec<f64> = (0..200).map(|k| k as f64 / 500.0).collect();
        times[120] = times[119];
        let log = raw_log(&times);
        let items: Vec<_> = stream_windows(&log, 100, 50, None).unwrap().collect();
        assert!(items.iter().any(|r| matches!(r, Err(Error::NonMonotonic { .. }))));
    }

    #[test]
    fn empty_log_yields_nothing() {
        assert_eq!(stream_windows(&[], 100, 50, None).unwrap().count(), 0);
        assert!(stream_windows(&[], 2, 50, None).is_err());
    }
}
