use thiserror::Error;

use crate::types::SensorId;

/// Errors produced by the filter, injector, simulator and config layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown sensor id {0}")]
    UnknownSensor(String),

    #[error("unknown measurement dimension `{0}`")]
    UnknownDimension(String),

    #[error("{sensor} measurement must have {expected} values, got {got}")]
    LayoutMismatch {
        sensor: SensorId,
        expected: usize,
        got: usize,
    },

    /// A measurement carried NaN or infinite values. This is a data error,
    /// not a fault detection.
    #[error("non-finite value in {sensor} measurement at t={timestamp}")]
    NonFiniteMeasurement { sensor: SensorId, timestamp: f64 },

    #[error("update called with an unavailable {0} measurement")]
    Unavailable(SensorId),

    #[error("anomaly targets {expected} but measurement is from {got}")]
    SensorMismatch { expected: SensorId, got: SensorId },

    #[error("drift injection at tick {0} needs the previous clean and hacked measurements")]
    MissingDriftHistory(u64),

    #[error("innovation covariance for {0} is not positive definite")]
    SingularInnovation(SensorId),

    #[error("time {t} outside scenario range [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("invalid value at `{path}`: {reason}")]
    InvalidConfig { path: String, reason: String },

    #[error("{0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
