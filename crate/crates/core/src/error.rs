use thiserror::Error;

/// Errors raised by the analytic model, the cost model and the optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("utilization rate xi = {xi} is outside [0, 1); the expected number of station attempts diverges as xi approaches 1")]
    UtilizationBound { xi: f64 },

    #[error("charging demand exceeds infrastructure capacity (utilization ratio {ratio:.4} >= 1)")]
    OversubscribedInfrastructure { ratio: f64 },

    #[error("battery of {battery_kwh} kWh is infeasible: usable charge per event must exceed {min_usable_kwh:.6} kWh needed to reach a station")]
    InfeasibleBattery {
        battery_kwh: f64,
        min_usable_kwh: f64,
    },

    #[error("unknown parameter name `{0}`")]
    UnknownParameter(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("degenerate design: {distinct} distinct battery capacities, at least {required} required")]
    DegenerateDesign { distinct: usize, required: usize },

    #[error("price data line {line}: {message}")]
    PriceData { line: u64, message: String },

    #[error("no feasible battery capacity in [{lo}, {hi}] kWh")]
    AllInfeasible { lo: f64, hi: f64 },
}

impl Error {
    /// True for errors that describe an infeasible point of the model domain
    /// rather than a malformed input.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::UtilizationBound { .. }
                | Error::OversubscribedInfrastructure { .. }
                | Error::InfeasibleBattery { .. }
                | Error::AllInfeasible { .. }
        )
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

pub(crate) fn ensure_nonnegative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and >= 0",
        })
    }
}
