//! End-to-end stages: simulate, extract, localize, evaluate.

use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::analytic::{estimate_attitude, solve_pose, AnalyticConfig, PoseEstimate};
use crate::error::Result;
use crate::evaluation::{evaluate, AlignedRow, EvaluationReport, TimingStats};
use crate::io::{self, PoseRow};
use crate::numeric::{self, NumericConfig, SolverState};
use crate::scenario::{Processing, Scenario, SolverKind};
use crate::signal_proc::{extract_phasor, stream_windows, PhasorReading, RawSample};
use crate::simulator::{simulate, SimulationOutput};

pub fn simulate_scenario(scenario: &Scenario) -> Result<SimulationOutput> {
    simulate(
        &scenario.trajectory,
        &scenario.rig,
        &scenario.layout,
        &scenario.noise,
        &scenario.sampling,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub phasors: Vec<PhasorReading>,
    /// Windows that were skipped, with the reason.
    pub warnings: Vec<String>,
}

/// Fit every window of a raw log. Gaps and sign ambiguities skip the
/// affected window and are reported as warnings.
pub fn extract(raw: &[RawSample], frequency: f64, processing: &Processing) -> Result<Extraction> {
    let mut phasors = Vec::new();
    let mut warnings = Vec::new();
    for set in stream_windows(raw, processing.window, processing.hop, None)? {
        match set.and_then(|s| extract_phasor(&s, frequency, &processing.signs)) {
            Ok(p) => phasors.push(p),
            Err(e) => warnings.push(e.to_string()),
        }
    }
    Ok(Extraction { phasors, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub rows: Vec<PoseRow>,
    /// Wall-clock seconds per solve, one entry per phasor.
    pub durations: Vec<f64>,
    /// Windows that produced a gap row, with the reason.
    pub warnings: Vec<String>,
}

impl Localization {
    pub fn timing(&self) -> TimingStats {
        TimingStats::from_seconds(&self.durations)
    }
}

/// Solve every phasor in order, chaining the solver state. A failed window
/// becomes a gap row and does not reset the chain.
pub fn localize(phasors: &[PhasorReading], scenario: &Scenario, kind: SolverKind) -> Result<Localization> {
    let template = scenario.template(kind)?;
    let analytic = AnalyticConfig {
        smoothing: scenario.smoothing,
        ..AnalyticConfig::default()
    };
    let numeric_cfg = NumericConfig {
        smoothing: scenario.smoothing,
        ..NumericConfig::default()
    };

    let mut rows = Vec::with_capacity(phasors.len());
    let mut durations = Vec::with_capacity(phasors.len());
    let mut warnings = Vec::new();
    let mut previous: Option<PoseEstimate> = None;
    let mut state = SolverState::default();

    for reading in phasors {
        let started = Instant::now();
        let solved = match kind {
            SolverKind::Analytic => solve_pose(reading, &scenario.rig, &template, previous.as_ref(), &analytic),
            SolverKind::Numeric2 | SolverKind::Numeric3 => estimate_attitude(&reading.sensors, &analytic)
                .and_then(|att| {
                    numeric::solve(
                        reading.timestamp,
                        &reading.sensors,
                        &scenario.rig,
                        &att.attitude(),
                        &template,
                        &state,
                        &numeric_cfg,
                    )
                })
                .map(|sol| {
                    state = sol.state;
                    sol.pose
                }),
        };
        durations.push(started.elapsed().as_secs_f64());
        match solved {
            Ok(pose) => {
                rows.push(PoseRow {
                    t: reading.timestamp,
                    y: pose.y,
                    z: pose.z,
                    yaw: pose.attitude.yaw,
                    pitch: pose.attitude.pitch,
                    residual: pose.residual,
                    solver: kind,
                });
                previous = Some(pose);
            }
            Err(e) => {
                warnings.push(format!("t = {}: {e}", reading.timestamp));
                rows.push(PoseRow::gap(reading.timestamp, kind));
            }
        }
    }
    Ok(Localization {
        rows,
        durations,
        warnings,
    })
}

/// Half a hop, the time-alignment tolerance between estimates and truth.
pub fn alignment_tolerance(scenario: &Scenario) -> f64 {
    0.5 * scenario.processing.hop as f64 / scenario.sampling.rate
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub simulation: SimulationOutput,
    pub extraction: Extraction,
    pub localization: Localization,
    pub report: EvaluationReport,
    pub table: Vec<AlignedRow>,
}

/// The whole chain in memory.
pub fn run(scenario: &Scenario, kind: SolverKind) -> Result<RunOutput> {
    let simulation = simulate_scenario(scenario)?;
    let extraction = extract(&simulation.raw, scenario.sampling.frequency, &scenario.processing)?;
    let localization = localize(&extraction.phasors, scenario, kind)?;
    let (report, table) = evaluate(&localization.rows, &simulation.truth, alignment_tolerance(scenario))?;
    Ok(RunOutput {
        simulation,
        extraction,
        localization,
        report,
        table,
    })
}

pub const RAW_FILE: &str = "raw.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const PHASOR_FILE: &str = "phasors.csv";
pub const POSE_FILE: &str = "poses.csv";
pub const COMPONENTS_FILE: &str = "components.csv";
pub const PATH_FILE: &str = "path.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TIMING_FILE: &str = "timing.json";

pub fn write_simulation(dir: &Path, sim: &SimulationOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::write_raw(io::create(&dir.join(RAW_FILE))?, &sim.raw)?;
    io::write_truth(io::create(&dir.join(TRUTH_FILE))?, &sim.truth)
}

pub fn write_evaluation(dir: &Path, report: &EvaluationReport, table: &[AlignedRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::write_components(io::create(&dir.join(COMPONENTS_FILE))?, table)?;
    io::write_path(io::create(&dir.join(PATH_FILE))?, table)?;
    fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

pub fn write_timing(dir: &Path, timing: &TimingStats) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TIMING_FILE), serde_json::to_string_pretty(timing)? + "\n")?;
    Ok(())
}

/// Write every artifact of a run to `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    write_simulation(dir, &out.simulation)?;
    io::write_phasors(io::create(&dir.join(PHASOR_FILE))?, &out.extraction.phasors)?;
    io::write_poses(io::create(&dir.join(POSE_FILE))?, &out.localization.rows)?;
    write_evaluation(dir, &out.report, &out.table)?;
    write_timing(dir, &out.localization.timing())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset;
    use crate::simulator::{Interpolation, Trajectory, Waypoint};

    fn short(mut s: Scenario, seconds: f64) -> Scenario {
        let w = s.trajectory.waypoints()[0];
        let end = Waypoint {
            t: w.t + seconds,
            y: w.y + 0.2,
            z: w.z + 0.1,
            ..w
        };
        s.trajectory = Trajectory::new(vec![w, end], Interpolation::Linear).unwrap();
        s
    }

    #[test]
    fn clean_chain_matches_truth() {
        let mut s = short(preset("lab-2wire").unwrap(), 2.0);
        s.noise.axis_sigma = 0.0;
        let out = run(&s, SolverKind::Analytic).unwrap();
        assert!(out.extraction.warnings.is_empty());
        assert_eq!(out.report.gaps, 0);
        assert!(out.report.position.max_abs < 2e-3, "{:?}", out.report);
    }

    #[test]
    fn empty_log_extracts_nothing() {
        let e = extract(&[], 50.0, &Processing::default()).unwrap();
        assert!(e.phasors.is_empty());
    }

    #[test]
    fn constant_log_gives_zero_phasors() {
        let raw: Vec<RawSample> = (0..200)
            .map(|k| RawSample {
                t: k as f64 / 500.0,
                values: [1e-5; 12],
            })
            .collect();
        let e = extract(&raw, 50.0, &Processing::default()).unwrap();
        assert_eq!(e.phasors.len(), 3);
        assert!(e.phasors.iter().all(|p| p.sensors.iter().all(|v| v.norm() == 0.0)));
        let loc = localize(&e.phasors, &preset("lab-2wire").unwrap(), SolverKind::Analytic).unwrap();
        assert!(loc.rows.iter().all(PoseRow::is_gap));
    }

    #[test]
    fn run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let s = short(preset("lab-3wire").unwrap(), 1.0);
        let out = run(&s, SolverKind::Numeric3).unwrap();
        write_run(dir.path(), &out).unwrap();
        for f in [RAW_FILE, TRUTH_FILE, PHASOR_FILE, POSE_FILE, COMPONENTS_FILE, PATH_FILE, REPORT_FILE, TIMING_FILE] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let poses = io::read_poses(io::open(&dir.path().join(POSE_FILE)).unwrap()).unwrap();
        assert_eq!(poses, out.localization.rows);
    }
}
