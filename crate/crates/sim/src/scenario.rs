//! Configured experiments: a single run or a sweep over capacity, station
//! count, or station placement, each with a closed-form overlay.

use std::fs::File;
use std::path::{Path, PathBuf};

use evcap_core::analytic::Horizon;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{extract_analytic_inputs, AnalyticInputs};
use crate::demand::{calibrate_demand, generate_demand, read_trips_csv, AgentPlan, DemandProfile};
use crate::engine::{run_simulation, InitialSoc, SimConfig, ThresholdModel};
use crate::error::{ensure_positive, Error, Result};
use crate::metrics::{FleetSummary, SimMetrics};
use crate::network::{generate_grid_network, load_network, RoadNetwork, DEFAULT_SPEED_KMH};
use crate::rng::{self, derive_seed};
use crate::stations::{place_stations, read_stations_csv, ChargingStation, Placement, DEFAULT_POWER_KW};

fn default_speed() -> f64 {
    DEFAULT_SPEED_KMH
}

fn default_power() -> f64 {
    DEFAULT_POWER_KW
}

fn one() -> u32 {
    1
}

fn uniform() -> Placement {
    Placement::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    Grid {
        blocks_per_side: u32,
        area_km2: f64,
        #[serde(default = "default_speed")]
        speed_kmh: f64,
    },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StationSpec {
    Generated {
        count: u32,
        #[serde(default = "uniform")]
        placement: Placement,
        #[serde(default = "default_power")]
        power_kw: f64,
        #[serde(default = "one")]
        plugs: u32,
    },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Single,
    CapacitySweep,
    DensitySweep,
    PlacementCompare,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Single => "single",
            ScenarioKind::CapacitySweep => "capacity_sweep",
            ScenarioKind::DensitySweep => "density_sweep",
            ScenarioKind::PlacementCompare => "placement_compare",
        }
    }
}

/// Everything needed to reproduce a simulation experiment, apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub network: NetworkSpec,
    pub stations: StationSpec,
    pub n_ev: u32,
    pub demand: DemandProfile,
    /// Calibrate the errand rate to this fleet mean, km per vehicle and day.
    pub target_daily_km: Option<f64>,
    /// Fixed trips instead of generated demand.
    pub trips_file: Option<PathBuf>,
    pub battery_kwh: f64,
    pub eta_kwh_per_km: f64,
    pub redirect_probability: f64,
    pub thresholds: ThresholdModel,
    pub initial_soc: InitialSoc,
    /// Charge fraction for the closed-form overlay; defaults to the mean of
    /// the threshold model.
    pub sigma: Option<f64>,
    /// Independent repetitions averaged into every table row.
    pub replications: u32,
    pub scenario: ScenarioKind,
    pub capacities_kwh: Vec<f64>,
    pub station_counts: Vec<u32>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            network: NetworkSpec::Grid {
                blocks_per_side: 10,
                area_km2: 400.0,
                speed_kmh: DEFAULT_SPEED_KMH,
            },
            stations: StationSpec::Generated {
                count: 10,
                placement: Placement::Uniform,
                power_kw: DEFAULT_POWER_KW,
                plugs: 1,
            },
            n_ev: 50,
            demand: DemandProfile::default(),
            target_daily_km: None,
            trips_file: None,
            battery_kwh: 40.0,
            eta_kwh_per_km: 0.085,
            redirect_probability: 0.7,
            thresholds: ThresholdModel::default(),
            initial_soc: InitialSoc::Stationary,
            sigma: None,
            replications: 1,
            scenario: ScenarioKind::Single,
            capacities_kwh: vec![10.0, 20.0, 40.0, 60.0, 100.0],
            station_counts: vec![1, 2, 5, 10, 25, 50],
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ev == 0 && self.trips_file.is_none() {
            return Err(Error::InvalidParameter {
                name: "n_ev",
                value: 0.0,
                reason: "must be >= 1",
            });
        }
        if self.replications == 0 {
            return Err(Error::InvalidParameter {
                name: "replications",
                value: 0.0,
                reason: "must be >= 1",
            });
        }
        self.demand.validate()?;
        if let Some(t) = self.target_daily_km {
            ensure_positive("target_daily_km", t)?;
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::InvalidParameter {
                    name: "sigma",
                    value: s,
                    reason: "must lie in (0, 1]",
                });
            }
        }
        for &b in &self.capacities_kwh {
            ensure_positive("capacities_kwh", b)?;
        }
        if self.scenario == ScenarioKind::CapacitySweep && self.capacities_kwh.is_empty() {
            return Err(Error::Config("capacity_sweep needs at least one entry in capacities_kwh".into()));
        }
        if self.scenario == ScenarioKind::DensitySweep
            && (self.station_counts.is_empty() || self.station_counts.contains(&0))
        {
            return Err(Error::Config("density_sweep needs positive station_counts".into()));
        }
        self.sim_config(0, self.battery_kwh).validate()
    }

    pub fn sim_config(&self, seed: u64, battery_kwh: f64) -> SimConfig {
        SimConfig {
            seed,
            horizon_days: f64::from(self.demand.days),
            battery_kwh,
            eta_kwh_per_km: self.eta_kwh_per_km,
            redirect_probability: self.redirect_probability,
            thresholds: self.thresholds.clone(),
            initial_soc: self.initial_soc.clone(),
            charging_enabled: true,
            ..SimConfig::default()
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or_else(|| self.thresholds.mean_charge_fraction())
    }

    pub fn horizon(&self) -> Result<Horizon> {
        Ok(Horizon::days(f64::from(self.demand.days))?)
    }

    /// Rewrites relative file paths as relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let NetworkSpec::File { path } = &mut self.network {
            fix(path);
        }
        if let StationSpec::File { path } = &mut self.stations {
            fix(path);
        }
        if let Some(p) = self.trips_file.as_mut() {
            fix(p);
        }
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Network, stations and demand resolved from a configuration.
#[derive(Debug, Clone)]
pub struct World {
    pub net: RoadNetwork,
    /// Stations in placement order; prefixes give smaller layouts.
    pub stations: Vec<ChargingStation>,
    pub profile: DemandProfile,
    fixed_plans: Option<Vec<AgentPlan>>,
}

impl World {
    pub fn build(config: &SimulationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let net = match &config.network {
            NetworkSpec::Grid {
                blocks_per_side,
                area_km2,
                speed_kmh,
            } => generate_grid_network(*blocks_per_side, *area_km2, *speed_kmh)?,
            NetworkSpec::File { path } => load_network(path)?,
        };
        let stations = match &config.stations {
            StationSpec::Generated {
                count,
                placement,
                power_kw,
                plugs,
            } => place_stations(&net, *count, *placement, *power_kw, *plugs, seed)?,
            StationSpec::File { path } => read_stations_csv(open(path)?, &net, &path.display().to_string())?,
        };
        let fixed_plans = match &config.trips_file {
            Some(path) => Some(read_trips_csv(open(path)?, &net, &path.display().to_string())?),
            None => None,
        };
        let profile = match (config.target_daily_km, &fixed_plans) {
            (Some(target), None) => {
                let p = calibrate_demand(&net, config.n_ev, &config.demand, target, seed)?;
                info!(
                    "calibrated demand: errand rate {:.4}/day, commute radius {:?}",
                    p.errand_rate_per_day, p.commute_radius_km
                );
                p
            }
            _ => config.demand.clone(),
        };
        Ok(Self {
            net,
            stations,
            profile,
            fixed_plans,
        })
    }

    pub fn n_ev(&self, config: &SimulationConfig) -> u32 {
        match &self.fixed_plans {
            Some(p) => p.len() as u32,
            None => config.n_ev,
        }
    }

    pub fn plans(&self, config: &SimulationConfig, seed: u64) -> Result<Vec<AgentPlan>> {
        match &self.fixed_plans {
            Some(p) => Ok(p.clone()),
            None => generate_demand(&self.net, config.n_ev, &self.profile, seed),
        }
    }

    /// Same count as the configured layout, but with another placement.
    /// Only generated layouts can be re-placed.
    pub fn relayout(&self, config: &SimulationConfig, placement: Placement, seed: u64) -> Result<Vec<ChargingStation>> {
        match &config.stations {
            StationSpec::Generated {
                count, power_kw, plugs, ..
            } => place_stations(&self.net, *count, placement, *power_kw, *plugs, seed),
            StationSpec::File { .. } => Err(Error::Config(
                "placement_compare needs generated stations (stations.kind = \"generated\")".into(),
            )),
        }
    }

    /// The first `count` stations in placement order. Generated layouts
    /// extend beyond the configured count along the same order.
    pub fn prefix(&self, config: &SimulationConfig, count: u32, seed: u64) -> Result<Vec<ChargingStation>> {
        match &config.stations {
            StationSpec::Generated {
                placement,
                power_kw,
                plugs,
                ..
            } => place_stations(&self.net, count, *placement, *power_kw, *plugs, seed),
            StationSpec::File { .. } => {
                if count as usize > self.stations.len() {
                    return Err(Error::Config(format!(
                        "{count} stations requested but the stations file lists {}",
                        self.stations.len()
                    )));
                }
                Ok(self.stations[..count as usize].to_vec())
            }
        }
    }
}

/// Seed of replication `r`; replication 0 uses the base seed itself.
pub fn replication_seed(seed: u64, r: u32) -> u64 {
    if r == 0 {
        seed
    } else {
        derive_seed(seed, &[rng::REPLICATION, u64::from(r)])
    }
}

/// Runs with charging disabled; battery size and stations do not matter.
pub fn run_baseline(world: &World, config: &SimulationConfig, seed: u64) -> Result<SimMetrics> {
    let plans = world.plans(config, seed)?;
    let mut sc = config.sim_config(seed, config.battery_kwh);
    sc.charging_enabled = false;
    run_simulation(&world.net, &[], &plans, &sc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleRun {
    pub metrics: SimMetrics,
    pub baseline: FleetSummary,
    pub analytic_inputs: Option<AnalyticInputs>,
    pub analytic_tau_e_h: Option<f64>,
    /// Why the overlay is missing, if it is.
    pub analytic_note: Option<String>,
}

pub fn run_single(config: &SimulationConfig, seed: u64) -> Result<SingleRun> {
    let world = World::build(config, seed)?;
    let plans = world.plans(config, seed)?;
    let metrics = run_simulation(&world.net, &world.stations, &plans, &config.sim_config(seed, config.battery_kwh))?;
    let baseline = run_baseline(&world, config, seed)?;
    let n_ev = world.n_ev(config);
    let overlay = extract_analytic_inputs(&baseline, &world.net, &world.stations, n_ev, config.horizon()?)
        .and_then(|inp| Ok((inp, inp.tau_e(config.battery_kwh, config.sigma())?)));
    let (analytic_inputs, analytic_tau_e_h, analytic_note) = match overlay {
        Ok((inp, tau)) => (Some(inp), Some(tau), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(SingleRun {
        metrics,
        baseline: baseline.fleet,
        analytic_inputs,
        analytic_tau_e_h,
        analytic_note,
    })
}

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x_value: f64,
    pub mean_tau_e_h: f64,
    pub analytic_tau_e_h: Option<f64>,
    pub n_ev: u32,
    pub seed: u64,
}

/// Extra per-row detail kept for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowDetail {
    pub x_value: f64,
    pub label: String,
    pub replications: Vec<FleetSummary>,
    pub analytic_inputs: Option<AnalyticInputs>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutput {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub sigma: f64,
    pub rows: Vec<SweepRow>,
    pub details: Vec<RowDetail>,
}

struct Cell {
    x_value: f64,
    label: String,
    battery_kwh: f64,
    stations: Vec<ChargingStation>,
}

/// Runs a sweep. Rows are ordered as configured; placement rows use
/// x_value 0 for the uniform and 1 for the concentrated layout.
pub fn run_scenario(kind: ScenarioKind, config: &SimulationConfig, seed: u64) -> Result<ScenarioOutput> {
    let world = World::build(config, seed)?;
    let cells: Vec<Cell> = match kind {
        ScenarioKind::Single => vec![Cell {
            x_value: config.battery_kwh,
            label: "single".into(),
            battery_kwh: config.battery_kwh,
            stations: world.stations.clone(),
        }],
        ScenarioKind::CapacitySweep => config
            .capacities_kwh
            .iter()
            .map(|&b| Cell {
                x_value: b,
                label: format!("B={b}"),
                battery_kwh: b,
                stations: world.stations.clone(),
            })
            .collect(),
        ScenarioKind::DensitySweep => config
            .station_counts
            .iter()
            .map(|&k| {
                Ok(Cell {
                    x_value: f64::from(k),
                    label: format!("stations={k}"),
                    battery_kwh: config.battery_kwh,
                    stations: world.prefix(config, k, seed)?,
                })
            })
            .collect::<Result<_>>()?,
        ScenarioKind::PlacementCompare => [(0.0, "uniform", Placement::Uniform), (1.0, "concentrated", Placement::Concentrated)]
            .into_iter()
            .map(|(x, label, p)| {
                Ok(Cell {
                    x_value: x,
                    label: label.into(),
                    battery_kwh: config.battery_kwh,
                    stations: world.relayout(config, p, seed)?,
                })
            })
            .collect::<Result<_>>()?,
    };

    let reps: Vec<u32> = (0..config.replications).collect();
    let plans: Vec<Vec<AgentPlan>> = reps
        .par_iter()
        .map(|&r| world.plans(config, replication_seed(seed, r)))
        .collect::<Result<_>>()?;
    let baselines: Vec<SimMetrics> = reps
        .par_iter()
        .map(|&r| run_baseline(&world, config, replication_seed(seed, r)))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u32)> = (0..cells.len()).flat_map(|c| reps.iter().map(move |&r| (c, r))).collect();
    let runs: Vec<SimMetrics> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let cell = &cells[c];
            let sc = config.sim_config(replication_seed(seed, r), cell.battery_kwh);
            run_simulation(&world.net, &cell.stations, &plans[r as usize], &sc)
        })
        .collect::<Result<_>>()?;

    let horizon = config.horizon()?;
    let n_ev = world.n_ev(config);
    let sigma = config.sigma();
    let mut rows = Vec::with_capacity(cells.len());
    let mut details = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let fleets: Vec<FleetSummary> = reps
            .iter()
            .map(|&r| runs[c * reps.len() + r as usize].fleet.clone())
            .collect();
        let mean_tau_e_h = fleets.iter().map(|f| f.mean_tau_e_h).sum::<f64>() / fleets.len() as f64;
        let inputs: Result<Vec<AnalyticInputs>> = baselines
            .iter()
            .map(|b| extract_analytic_inputs(b, &world.net, &cell.stations, n_ev, horizon))
            .collect();
        let analytic = inputs.as_ref().ok().and_then(|inp| {
            let taus: Result<Vec<f64>> = inp.iter().map(|i| i.tau_e(cell.battery_kwh, sigma)).collect();
            taus.ok().map(|t| t.iter().sum::<f64>() / t.len() as f64)
        });
        rows.push(SweepRow {
            x_value: cell.x_value,
            mean_tau_e_h,
            analytic_tau_e_h: analytic,
            n_ev,
            seed,
        });
        details.push(RowDetail {
            x_value: cell.x_value,
            label: cell.label.clone(),
            replications: fleets,
            analytic_inputs: inputs.ok().and_then(|v| v.into_iter().next()),
        });
    }
    Ok(ScenarioOutput {
        kind,
        seed,
        sigma,
        rows,
        details,
    })
}

/// Rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx * vy).sqrt())
    }
}
