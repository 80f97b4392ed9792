use thiserror::Error;

/// Errors raised while building or running a simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{source_name}: {location}: {message}")]
    Parse {
        source_name: String,
        location: String,
        message: String,
    },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("network is not strongly connected; orphan components (node ids): {components:?}")]
    DisconnectedNetwork { components: Vec<Vec<u64>> },

    #[error("unknown node id {0}")]
    UnknownNode(u64),

    #[error("no path from node {from} to node {to}")]
    NoPath { from: u64, to: u64 },

    #[error("demand calibration failed after {iterations} iterations: target {target_km:.3} km/day, best {achieved_km:.3} km/day")]
    CalibrationFailed {
        target_km: f64,
        achieved_km: f64,
        iterations: u32,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] evcap_core::Error),
}

impl Error {
    /// True when the error comes from the analytic model's validity domain.
    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Model(e) if e.is_domain())
    }

    /// True for failures that only show up while running (as opposed to bad
    /// input files or parameters).
    pub fn is_runtime(&self) -> bool {
        matches!(self, Error::CalibrationFailed { .. } | Error::NoPath { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}
