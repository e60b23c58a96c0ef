use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("evaluation point is {distance:.3e} m from a conductor (minimum {min:.1e} m)")]
    Singular { distance: f64, min: f64 },

    #[error("window spans {span:.4} s, shorter than one period ({period:.4} s)")]
    WindowTooShort { span: f64, period: f64 },

    #[error("phase of sensor {sensor} axis {axis} is {delta:.3} rad from the reference, inside the ±π/2 guard band")]
    AmbiguousPhase { sensor: usize, axis: usize, delta: f64 },

    #[error("timestamp gap of {jump:.4} s at t = {at:.4} s")]
    Gap { at: f64, jump: f64 },

    #[error("timestamps are not increasing at t = {at:.6} s")]
    NonMonotonic { at: f64 },

    #[error("objective returned a non-finite value")]
    NonFiniteObjective,

    #[error("measurement pair is degenerate (normalized cross product {norm:.3e})")]
    DegeneratePair { norm: f64 },

    #[error("pitch denominator {value:.3e} T is below the degeneracy threshold")]
    DegenerateDenominator { value: f64 },

    #[error("negative radicand {value:.3e} in the z² expression")]
    NegativeRadicand { value: f64 },

    #[error("|B_z| exceeds the field magnitude (P² - B_z² = {value:.3e})")]
    InvalidEnergy { value: f64 },

    #[error("no admissible position candidate for sensor {sensor}")]
    NoCandidate { sensor: usize },

    #[error("ambiguous pose: best residual {best:.4e}, runner-up {second:.4e}")]
    AmbiguousPose { best: f64, second: f64 },

    #[error("all pairwise cross products are degenerate")]
    DegenerateGeometry,

    #[error("line direction is vertical")]
    VerticalDirection,

    #[error("sampling rate {rate} Hz does not exceed twice the line frequency {freq} Hz")]
    Nyquist { rate: f64, freq: f64 },

    #[error("estimate and truth time ranges do not overlap")]
    DisjointTime,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Toml(_) | Error::InvalidInput(_) | Error::Nyquist { .. } => {
                ErrorClass::Config
            }
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorClass::Io,
            _ => ErrorClass::Numerical,
        }
    }
}
