//! Battery sizing for electric vehicles that depend on public charging.
//!
//! The [`analytic`] module estimates the time a driver loses to charging,
//! [`cost`] turns battery capacity into an annualized purchase cost, and
//! [`optimizer`] finds the capacity minimizing their sum.

pub mod analytic;
pub mod cost;
pub mod error;
pub mod optimizer;
pub mod stats;

pub use analytic::{ChargingEnvironment, DriverProfile, Horizon, InconvenienceBreakdown};
pub use cost::{CostParams, PolicySchedule, PriceModel, PriceRecord};
pub use error::{Error, Result};
