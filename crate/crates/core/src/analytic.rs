//! Closed-form model of charging inconvenience.
//!
//! A driver covering `d` km must recharge `eta * d` kWh at public stations.
//! Each charging event adds a detour to the nearest free station; the detour
//! length follows from the station density (nearest neighbour of a Poisson
//! field) and the number of attempts needed to find a free plug (geometric in
//! the utilization rate). The detours themselves consume energy, which feeds
//! back into the number of charging events; solving that fixed point gives the
//! total detour distance and from it the three time components.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};

/// Public charging infrastructure seen by a driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargingEnvironment {
    /// Station density, stations per km².
    pub rho: f64,
    /// Utilization rate in [0, 1).
    pub xi: f64,
    /// Charger output, kW.
    pub power_kw: f64,
}

impl ChargingEnvironment {
    pub fn new(rho: f64, xi: f64, power_kw: f64) -> Result<Self> {
        let env = Self { rho, xi, power_kw };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("rho", self.rho)?;
        ensure_positive("power_kw", self.power_kw)?;
        if !self.xi.is_finite() || self.xi < 0.0 {
            return Err(Error::InvalidParameter {
                name: "xi",
                value: self.xi,
                reason: "must be finite and >= 0",
            });
        }
        if self.xi >= 1.0 {
            return Err(Error::UtilizationBound { xi: self.xi });
        }
        Ok(())
    }
}

/// Travel behaviour of a single driver over some horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverProfile {
    /// Planned travel distance over the horizon, km (excludes charging detours).
    pub distance_km: f64,
    /// Consumption, kWh/km.
    pub eta: f64,
    /// Mean fraction of capacity replenished per charging event.
    pub sigma: f64,
    /// Average speed while detouring to stations, km/h.
    pub speed_kmh: f64,
}

impl DriverProfile {
    pub fn new(distance_km: f64, eta: f64, sigma: f64, speed_kmh: f64) -> Result<Self> {
        let p = Self {
            distance_km,
            eta,
            sigma,
            speed_kmh,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_nonnegative("distance_km", self.distance_km)?;
        ensure_positive("eta", self.eta)?;
        ensure_positive("speed_kmh", self.speed_kmh)?;
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }
}

/// Observation period in hours.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Horizon(f64);

impl Horizon {
    pub const HOURS_PER_YEAR: f64 = 8760.0;

    pub fn hours(hours: f64) -> Result<Self> {
        ensure_positive("horizon_hours", hours)?;
        Ok(Self(hours))
    }

    pub fn days(days: f64) -> Result<Self> {
        Self::hours(days * 24.0)
    }

    pub fn year() -> Self {
        Self(Self::HOURS_PER_YEAR)
    }

    pub fn as_hours(self) -> f64 {
        self.0
    }
}

/// Decomposition of the inconvenience time. All times in hours, distances in km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InconvenienceBreakdown {
    /// Charging time for the planned distance.
    pub tau_po: f64,
    /// Charging time for energy spent on detours.
    pub tau_ps: f64,
    /// Time spent driving detours.
    pub tau_s: f64,
    pub tau_e: f64,
    pub d_s: f64,
    pub n_c: f64,
    pub d_sk: f64,
}

/// Ratio of fleet charging demand to the energy the stations can deliver over
/// `horizon`. Ratios at or above one are rejected instead of clamped.
pub fn utilization(
    n_ev: u32,
    n_cs: u32,
    profile: &DriverProfile,
    power_kw: f64,
    horizon: Horizon,
) -> Result<f64> {
    if n_cs == 0 {
        return Err(Error::InvalidParameter {
            name: "n_cs",
            value: 0.0,
            reason: "at least one charging station is required",
        });
    }
    ensure_positive("power_kw", power_kw)?;
    ensure_nonnegative("distance_km", profile.distance_km)?;
    ensure_positive("eta", profile.eta)?;
    let demand = f64::from(n_ev) * profile.distance_km * profile.eta;
    let supply = f64::from(n_cs) * horizon.as_hours() * power_kw;
    let ratio = demand / supply;
    if ratio >= 1.0 {
        return Err(Error::OversubscribedInfrastructure { ratio });
    }
    Ok(ratio)
}

/// Expected detour per charging event: nearest-station distance `1/(2√ρ)`
/// times the expected number of attempts `1/(1-ξ)`.
pub fn expected_detour_distance(env: &ChargingEnvironment) -> Result<f64> {
    env.validate()?;
    Ok(1.0 / ((1.0 - env.xi) * 2.0 * env.rho.sqrt()))
}

/// Smallest usable charge per event (`σB`) that still covers the average
/// detour. Batteries at or below this are outside the model's domain.
pub fn min_usable_charge(profile: &DriverProfile, env: &ChargingEnvironment) -> Result<f64> {
    Ok(profile.eta * expected_detour_distance(env)?)
}

/// Total detour distance over the horizon, solving `d_s = n_c(d_s) * d_sk`.
pub fn total_detour_distance(
    battery_kwh: f64,
    profile: &DriverProfile,
    env: &ChargingEnvironment,
) -> Result<f64> {
    ensure_positive("battery_kwh", battery_kwh)?;
    profile.validate()?;
    let d_sk = expected_detour_distance(env)?;
    let detour_energy = profile.eta * d_sk;
    let usable = profile.sigma * battery_kwh;
    if usable <= detour_energy {
        return Err(Error::InfeasibleBattery {
            battery_kwh,
            min_usable_kwh: detour_energy,
        });
    }
    Ok(profile.eta * profile.distance_km * d_sk / (usable - detour_energy))
}

/// Number of charging events (real-valued) needed to cover `d + d_s`.
pub fn charging_event_count(battery_kwh: f64, profile: &DriverProfile, d_s: f64) -> Result<f64> {
    ensure_positive("battery_kwh", battery_kwh)?;
    ensure_nonnegative("d_s", d_s)?;
    profile.validate()?;
    Ok(profile.eta * (profile.distance_km + d_s) / (profile.sigma * battery_kwh))
}

/// Inconvenience time assembled from its three components.
pub fn inconvenience_components(
    battery_kwh: f64,
    profile: &DriverProfile,
    env: &ChargingEnvironment,
) -> Result<InconvenienceBreakdown> {
    let d_sk = expected_detour_distance(env)?;
    let d_s = total_detour_distance(battery_kwh, profile, env)?;
    let n_c = charging_event_count(battery_kwh, profile, d_s)?;
    let tau_po = profile.eta * profile.distance_km / env.power_kw;
    let tau_ps = profile.eta * d_s / env.power_kw;
    let tau_s = d_s / profile.speed_kmh;
    Ok(InconvenienceBreakdown {
        tau_po,
        tau_ps,
        tau_s,
        tau_e: tau_po + tau_ps + tau_s,
        d_s,
        n_c,
        d_sk,
    })
}

/// Inconvenience time from the expanded single-fraction expression.
pub fn inconvenience_closed_form(
    battery_kwh: f64,
    profile: &DriverProfile,
    env: &ChargingEnvironment,
) -> Result<f64> {
    ensure_positive("battery_kwh", battery_kwh)?;
    profile.validate()?;
    env.validate()?;
    let DriverProfile {
        distance_km: d,
        eta,
        sigma,
        speed_kmh: v,
    } = *profile;
    let p = env.power_kw;
    let k = battery_kwh * env.rho.sqrt() * sigma * (1.0 - env.xi);
    let denom = p * v * (k - 0.5 * eta);
    if denom <= 0.0 {
        return Err(Error::InfeasibleBattery {
            battery_kwh,
            min_usable_kwh: min_usable_charge(profile, env)?,
        });
    }
    Ok(d * eta * (0.5 * p + v * k) / denom)
}

/// Monetary value of inconvenience time.
pub fn inconvenience_cost(tau_e_hours: f64, mu_eur_per_hour: f64) -> f64 {
    mu_eur_per_hour * tau_e_hours
}

/// Inputs of the sensitivity analysis. `Default` reproduces the reference
/// constants (η=0.2, v=10, σ=0.6, d=10 000, B=20, ξ=0.1, ρ=1, P=50).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityBase {
    pub battery_kwh: f64,
    pub profile: DriverProfile,
    pub env: ChargingEnvironment,
}

impl Default for SensitivityBase {
    fn default() -> Self {
        Self {
            battery_kwh: 20.0,
            profile: DriverProfile {
                distance_km: 10_000.0,
                eta: 0.2,
                sigma: 0.6,
                speed_kmh: 10.0,
            },
            env: ChargingEnvironment {
                rho: 1.0,
                xi: 0.1,
                power_kw: 50.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Battery,
    Distance,
    Eta,
    Sigma,
    Speed,
    Rho,
    Xi,
    Power,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 8] = [
        SweepParameter::Battery,
        SweepParameter::Distance,
        SweepParameter::Eta,
        SweepParameter::Sigma,
        SweepParameter::Speed,
        SweepParameter::Rho,
        SweepParameter::Xi,
        SweepParameter::Power,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Battery => "battery",
            SweepParameter::Distance => "distance",
            SweepParameter::Eta => "eta",
            SweepParameter::Sigma => "sigma",
            SweepParameter::Speed => "speed",
            SweepParameter::Rho => "rho",
            SweepParameter::Xi => "xi",
            SweepParameter::Power => "power",
        }
    }

    /// Range used for the reference sensitivity plots.
    pub fn default_range(self) -> (f64, f64) {
        match self {
            SweepParameter::Battery => (5.0, 150.0),
            SweepParameter::Distance => (1_000.0, 50_000.0),
            SweepParameter::Eta => (0.1, 1.0),
            SweepParameter::Sigma => (0.1, 1.0),
            SweepParameter::Speed => (1.0, 50.0),
            SweepParameter::Rho => (0.1, 5.0),
            SweepParameter::Xi => (0.1, 0.9),
            SweepParameter::Power => (3.0, 150.0),
        }
    }

    fn apply(self, base: &SensitivityBase, value: f64) -> SensitivityBase {
        let mut b = *base;
        match self {
            SweepParameter::Battery => b.battery_kwh = value,
            SweepParameter::Distance => b.profile.distance_km = value,
            SweepParameter::Eta => b.profile.eta = value,
            SweepParameter::Sigma => b.profile.sigma = value,
            SweepParameter::Speed => b.profile.speed_kmh = value,
            SweepParameter::Rho => b.env.rho = value,
            SweepParameter::Xi => b.env.xi = value,
            SweepParameter::Power => b.env.power_kw = value,
        }
        b
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s.to_ascii_lowercase().as_str() {
            "battery" | "battery_kwh" | "b" => SweepParameter::Battery,
            "distance" | "distance_km" | "d" => SweepParameter::Distance,
            "eta" => SweepParameter::Eta,
            "sigma" => SweepParameter::Sigma,
            "speed" | "speed_kmh" | "v" => SweepParameter::Speed,
            "rho" => SweepParameter::Rho,
            "xi" => SweepParameter::Xi,
            "power" | "power_kw" | "p" => SweepParameter::Power,
            _ => return Err(Error::UnknownParameter(s.to_string())),
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// `None` when the point lies outside the model's validity domain.
    pub tau_e_h: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    StrictlyIncreasing,
    StrictlyDecreasing,
    Constant,
    NonMonotone,
    /// Fewer than two feasible points.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
    pub trend: Trend,
}

/// Evaluates the inconvenience time while one parameter moves linearly over
/// `[lo, hi]` in `steps` points. Points outside the validity domain stay in
/// the table with a flag.
pub fn sensitivity_sweep(
    base: &SensitivityBase,
    parameter: &str,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<SweepTable> {
    let parameter: SweepParameter = parameter.parse()?;
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            value: 0.0,
            reason: "at least one point is required",
        });
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidParameter {
            name: "range",
            value: lo,
            reason: "bounds must be finite with lo <= hi",
        });
    }
    let points = (0..steps)
        .map(|i| {
            let value = if steps == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (steps - 1) as f64
            };
            let b = parameter.apply(base, value);
            match inconvenience_closed_form(b.battery_kwh, &b.profile, &b.env) {
                Ok(t) => SweepPoint {
                    value,
                    tau_e_h: Some(t),
                    flag: None,
                },
                Err(e) => SweepPoint {
                    value,
                    tau_e_h: None,
                    flag: Some(e.to_string()),
                },
            }
        })
        .collect::<Vec<_>>();
    let trend = classify_trend(points.iter().filter_map(|p| p.tau_e_h));
    Ok(SweepTable {
        parameter,
        points,
        trend,
    })
}

fn classify_trend(values: impl Iterator<Item = f64>) -> Trend {
    let values: Vec<f64> = values.collect();
    if values.len() < 2 {
        return Trend::Undetermined;
    }
    let diffs = values.windows(2).map(|w| w[1] - w[0]);
    let (mut up, mut down, mut flat) = (true, true, true);
    for d in diffs {
        up &= d > 0.0;
        down &= d < 0.0;
        flat &= d == 0.0;
    }
    match (up, down, flat) {
        (true, _, _) => Trend::StrictlyIncreasing,
        (_, true, _) => Trend::StrictlyDecreasing,
        (_, _, true) => Trend::Constant,
        _ => Trend::NonMonotone,
    }
}
