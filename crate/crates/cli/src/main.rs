//! `magloc`: simulate, extract, localize and evaluate from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use magloc_core::error::{Error, ErrorClass, Result};
use magloc_core::evaluation::{evaluate, EvaluationReport};
use magloc_core::io;
use magloc_core::pipeline::{self, alignment_tolerance};
use magloc_core::{Scenario, SolverKind};

#[derive(Parser, Debug)]
#[command(name = "magloc", version, about = "Localize a magnetometer rig relative to AC power lines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a raw magnetometer log and ground truth from a scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Sample rate override, Hz.
        #[arg(long, env = "MAGLOC_RATE")]
        rate: Option<f64>,
    },
    /// Fit every window of a raw log and write signed phasors.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Raw log to read [default: <out>/raw.csv].
        #[arg(long, env = "MAGLOC_INPUT")]
        input: Option<PathBuf>,
    },
    /// Solve every phasor for a rig pose.
    Localize {
        #[command(flatten)]
        common: Common,
        /// Phasor log to read [default: <out>/phasors.csv].
        #[arg(long, env = "MAGLOC_INPUT")]
        input: Option<PathBuf>,
    },
    /// Compare a pose log with ground truth and write plot data.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Pose log [default: <out>/poses.csv].
        #[arg(long, env = "MAGLOC_POSES")]
        poses: Option<PathBuf>,
        /// Ground-truth log [default: <out>/truth.csv].
        #[arg(long, env = "MAGLOC_TRUTH")]
        truth: Option<PathBuf>,
    },
    /// Run the whole chain.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Preset name (lab-2wire, lab-3wire, noisy-motor) or scenario file.
    #[arg(long, env = "MAGLOC_SCENARIO", default_value = "lab-2wire")]
    scenario: String,
    /// analytic, numeric2 or numeric3 [default: from the scenario].
    #[arg(long, env = "MAGLOC_SOLVER")]
    solver: Option<SolverKind>,
    /// Noise seed override.
    #[arg(long, env = "MAGLOC_SEED")]
    seed: Option<u64>,
    /// Samples per fit window.
    #[arg(long, env = "MAGLOC_WINDOW")]
    window: Option<usize>,
    /// Samples between windows.
    #[arg(long, env = "MAGLOC_HOP")]
    hop: Option<usize>,
    /// Output directory.
    #[arg(long, env = "MAGLOC_OUT", default_value = "out")]
    out: PathBuf,
    /// AC frequency, Hz.
    #[arg(long, env = "MAGLOC_FREQ")]
    freq: Option<f64>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = Scenario::resolve(&self.scenario)?;
        if let Some(seed) = self.seed {
            s.noise.seed = seed;
        }
        if let Some(w) = self.window {
            s.processing.window = w;
        }
        if let Some(h) = self.hop {
            s.processing.hop = h;
        }
        if let Some(f) = self.freq {
            if f.is_nan() || f <= 0.0 {
                return Err(Error::Config(format!("frequency must be positive, got {f}")));
            }
            s.sampling.frequency = f;
        }
        if s.processing.window < 3 || s.processing.hop == 0 {
            return Err(Error::Config(format!(
                "window {} / hop {} out of range",
                s.processing.window, s.processing.hop
            )));
        }
        if let Some(kind) = self.solver {
            s.solver = kind;
        }
        Ok(s)
    }

    fn file(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out.join(default))
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn summarize(report: &EvaluationReport) {
    println!(
        "{}: {} estimates, {} gaps, {} matched",
        report.solver, report.estimates, report.gaps, report.matched
    );
    println!(
        "  y rmse {:.2} cm, z rmse {:.2} cm, position median {:.2} cm",
        report.y.rmse * 100.0,
        report.z.rmse * 100.0,
        report.position.median_abs * 100.0
    );
    println!(
        "  yaw rmse {:.3} deg, pitch rmse {:.3} deg",
        report.yaw.rmse.to_degrees(),
        report.pitch.rmse.to_degrees()
    );
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, rate } => {
            let mut s = common.scenario()?;
            if let Some(r) = rate {
                s.sampling.rate = r;
            }
            let sim = pipeline::simulate_scenario(&s)?;
            pipeline::write_simulation(&common.out, &sim)?;
            println!(
                "simulated {} samples ({}) into {}",
                sim.raw.len(),
                s.name,
                common.out.display()
            );
        }
        Command::Extract { common, input } => {
            let s = common.scenario()?;
            let raw = io::read_raw(io::open(&common.file(&input, pipeline::RAW_FILE))?)?;
            if raw.is_empty() {
                eprintln!("warning: raw log is empty");
            }
            let e = pipeline::extract(&raw, s.sampling.frequency, &s.processing)?;
            warn_all(&e.warnings);
            ensure_dir(&common.out)?;
            io::write_phasors(io::create(&common.out.join(pipeline::PHASOR_FILE))?, &e.phasors)?;
            println!("extracted {} phasor readings", e.phasors.len());
        }
        Command::Localize { common, input } => {
            let s = common.scenario()?;
            let phasors = io::read_phasors(io::open(&common.file(&input, pipeline::PHASOR_FILE))?)?;
            let loc = pipeline::localize(&phasors, &s, s.solver)?;
            warn_all(&loc.warnings);
            ensure_dir(&common.out)?;
            io::write_poses(io::create(&common.out.join(pipeline::POSE_FILE))?, &loc.rows)?;
            let timing = loc.timing();
            pipeline::write_timing(&common.out, &timing)?;
            println!(
                "{}: {} poses, {} gaps, solve median {:.3} ms, max {:.3} ms",
                s.solver,
                loc.rows.len(),
                loc.warnings.len(),
                timing.median_ms,
                timing.max_ms
            );
        }
        Command::Evaluate { common, poses, truth } => {
            let s = common.scenario()?;
            let poses = io::read_poses(io::open(&common.file(&poses, pipeline::POSE_FILE))?)?;
            let truth = io::read_truth(io::open(&common.file(&truth, pipeline::TRUTH_FILE))?)?;
            let (report, table) = evaluate(&poses, &truth, alignment_tolerance(&s))?;
            pipeline::write_evaluation(&common.out, &report, &table)?;
            summarize(&report);
        }
        Command::Run { common } => {
            let s = common.scenario()?;
            let out = pipeline::run(&s, s.solver)?;
            warn_all(&out.extraction.warnings);
            warn_all(&out.localization.warnings);
            pipeline::write_run(&common.out, &out)?;
            summarize(&out.report);
        }
    }
    Ok(())
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Io => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
