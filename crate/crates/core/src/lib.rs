//! Localization of a magnetometer rig near parallel AC conductors.
//!
//! The crate covers the forward field model, sinusoid fitting of raw
//! magnetometer windows, a closed-form pose solver for the symmetric two-wire
//! case, a general numeric solver, and a simulator that produces synthetic
//! logs with ground truth. [`pipeline`] chains the stages.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod evaluation;
pub mod field_model;
pub mod io;
pub mod numeric;
pub mod optimizer;
pub mod pipeline;
pub mod scenario;
pub mod signal_proc;
pub mod simulator;

pub use analytic::{AnalyticConfig, AttitudeEstimate, PoseEstimate, PositionCandidate};
pub use error::{Error, ErrorClass, Result};
pub use evaluation::{AlignedRow, EvaluationReport, TimingStats};
pub use field_model::{Attitude, Conductor, ConductorLayout, FieldVector, SensorRig};
pub use io::PoseRow;
pub use numeric::{LinePair, NumericConfig, NumericSolution, SolverState};
pub use optimizer::{OptimizationResult, OptimizerConfig};
pub use scenario::{Processing, Scenario, SolverKind};
pub use signal_proc::{AcFit, PhasorReading, RawSample, SampleWindow, SignConfig};
pub use simulator::{NoiseModel, Sampling, Trajectory, TruthSample, Waypoint};
