use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("defect site {site} outside site range [{lo}, {hi}]")]
    DefectOutOfRange { site: i64, lo: i64, hi: i64 },

    #[error("duplicate defect site {0}")]
    DuplicateDefect(i64),

    #[error("site {site} outside site range [{lo}, {hi}]")]
    SiteOutOfRange { site: i64, lo: i64, hi: i64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time step {dt} exceeds stability limit {limit} (0.05 / max |H_ij|)")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("sample interval {sample_dt} is not an integer multiple of dt {dt}")]
    SampleNotMultiple { sample_dt: f64, dt: f64 },

    #[error("gain runaway at t = {time}: max |c_n| = {magnitude:e}")]
    GainRunaway { time: f64, magnitude: f64 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("too few samples in window: {found} < {required}")]
    TooFewSamples { found: usize, required: usize },

    #[error("time {time} outside trajectory span [{start}, {end}]")]
    TimeOutOfRange { time: f64, start: f64, end: f64 },

    #[error("region [{lo}, {hi}] is empty or outside the site range")]
    InvalidRegion { lo: i64, hi: i64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Failures of the numerics themselves (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::GainRunaway { .. })
    }
}
