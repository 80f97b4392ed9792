//! Closed-form model inputs measured from a run without charging.

use evcap_core::analytic::{inconvenience_closed_form, utilization, ChargingEnvironment, DriverProfile, Horizon};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SimMetrics;
use crate::network::RoadNetwork;
use crate::stations::ChargingStation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticInputs {
    /// kWh/km.
    pub eta: f64,
    pub speed_kmh: f64,
    /// Mean distance per vehicle over the horizon, km.
    pub distance_km: f64,
    /// Stations per km².
    pub rho: f64,
    pub xi: f64,
    pub power_kw: f64,
    pub horizon_h: f64,
}

impl AnalyticInputs {
    pub fn driver(&self, sigma: f64) -> Result<DriverProfile> {
        Ok(DriverProfile::new(self.distance_km, self.eta, sigma, self.speed_kmh)?)
    }

    pub fn environment(&self) -> Result<ChargingEnvironment> {
        Ok(ChargingEnvironment::new(self.rho, self.xi, self.power_kw)?)
    }

    /// Closed-form inconvenience over the measured horizon, hours.
    pub fn tau_e(&self, battery_kwh: f64, sigma: f64) -> Result<f64> {
        Ok(inconvenience_closed_form(battery_kwh, &self.driver(sigma)?, &self.environment()?)?)
    }
}

/// Derives (η, v, d, ρ, ξ) from a baseline run. The station power is the mean
/// over stations; utilization counts plugs, which equals the station count
/// for single-plug stations.
pub fn extract_analytic_inputs(
    baseline: &SimMetrics,
    net: &RoadNetwork,
    stations: &[ChargingStation],
    n_ev: u32,
    horizon: Horizon,
) -> Result<AnalyticInputs> {
    let f = &baseline.fleet;
    let eta = f.measured_eta_kwh_per_km.ok_or(Error::InvalidParameter {
        name: "eta",
        value: f64::NAN,
        reason: "undefined: baseline vehicles drove no distance",
    })?;
    let speed_kmh = f.measured_speed_kmh.ok_or(Error::InvalidParameter {
        name: "speed_kmh",
        value: f64::NAN,
        reason: "undefined: baseline vehicles drove no distance",
    })?;
    if stations.is_empty() {
        return Err(Error::Config("analytic inputs need at least one station".into()));
    }
    let distance_km = f.mean_distance_km;
    let rho = stations.len() as f64 / net.area_km2();
    let power_kw = stations.iter().map(|s| s.power_kw).sum::<f64>() / stations.len() as f64;
    let plugs: u32 = stations.iter().map(|s| s.plugs).sum();
    // sigma does not enter the utilization rate
    let profile = DriverProfile::new(distance_km, eta, 1.0, speed_kmh)?;
    let xi = utilization(n_ev, plugs, &profile, power_kw, horizon)?;
    Ok(AnalyticInputs {
        eta,
        speed_kmh,
        distance_km,
        rho,
        xi,
        power_kw,
        horizon_h: horizon.as_hours(),
    })
}
