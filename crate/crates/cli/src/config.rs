//! Run configuration files.

use std::path::{Path, PathBuf};

use evcap_core::analytic::{SensitivityBase, SweepParameter};
use evcap_core::optimizer::ObjectiveSpec;
use evcap_core::{ChargingEnvironment, CostParams, DriverProfile, PolicySchedule, PriceModel};
use evcap_sim::SimulationConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

/// Top-level configuration. Each subcommand reads its own block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyze: Option<AnalyzeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whatif: Option<WhatifConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_prices: Option<FitPricesConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Fleet figures from which the utilization rate is derived instead of
/// being given directly. The driver's distance is taken over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetUtilization {
    pub n_ev: u32,
    pub n_cs: u32,
    pub horizon_days: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    /// Defaults to the parameter's reference range.
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    50
}

impl SweepSpec {
    pub fn range(&self) -> (f64, f64) {
        let (lo, hi) = self.parameter.default_range();
        (self.lo.unwrap_or(lo), self.hi.unwrap_or(hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub base: SensitivityBase,
    /// Overrides `base.env.xi`.
    pub fleet: Option<FleetUtilization>,
    pub sweeps: Vec<SweepSpec>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            base: SensitivityBase::default(),
            fleet: None,
            sweeps: SweepParameter::ALL
                .iter()
                .map(|&parameter| SweepSpec {
                    parameter,
                    lo: None,
                    hi: None,
                    steps: default_steps(),
                })
                .collect(),
        }
    }
}

/// One driver's objective. The distance is annual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub driver: DriverProfile,
    pub env: ChargingEnvironment,
    #[serde(default)]
    pub cost: CostParams,
    #[serde(default)]
    pub schedule: PolicySchedule,
    #[serde(default)]
    pub price_model: PriceModel,
    #[serde(default = "default_search_range")]
    pub search_range: (f64, f64),
}

fn default_search_range() -> (f64, f64) {
    (1.0, 150.0)
}

impl SpecConfig {
    pub fn objective(&self) -> ObjectiveSpec {
        ObjectiveSpec {
            cost: self.cost,
            schedule: self.schedule,
            model: self.price_model,
            search_range: self.search_range,
            ..ObjectiveSpec::analytic(self.driver, self.env)
        }
    }
}

/// Per-driver replacements for fields of the base driver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriverOverride {
    pub distance_km: Option<f64>,
    pub eta: Option<f64>,
    pub sigma: Option<f64>,
    pub speed_kmh: Option<f64>,
}

impl DriverOverride {
    pub fn apply(&self, base: &DriverProfile) -> DriverProfile {
        DriverProfile {
            distance_km: self.distance_km.unwrap_or(base.distance_km),
            eta: self.eta.unwrap_or(base.eta),
            sigma: self.sigma.unwrap_or(base.sigma),
            speed_kmh: self.speed_kmh.unwrap_or(base.speed_kmh),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub spec: SpecConfig,
    /// CSV written by `simulate` for a capacity sweep; replaces the analytic
    /// inconvenience time.
    #[serde(default)]
    pub lookup: Option<PathBuf>,
    /// When non-empty, one driver per entry instead of the base driver alone.
    #[serde(default)]
    pub population: Vec<DriverOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatifConfig {
    pub spec: SpecConfig,
    /// Empty axes hold the base value.
    #[serde(default)]
    pub rho: Vec<f64>,
    #[serde(default)]
    pub power_kw: Vec<f64>,
    #[serde(default)]
    pub policies: Vec<PolicySchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitPricesConfig {
    /// `battery_kwh,price_eur` CSV.
    pub path: PathBuf,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "yes")]
    pub remove_outliers: bool,
}

fn default_degree() -> usize {
    2
}

fn yes() -> bool {
    true
}

impl RunConfig {
    /// Reads and parses a configuration file. Relative paths inside it are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(sim) = self.simulate.as_mut() {
            sim.resolve_paths(base);
        }
        if let Some(lookup) = self.optimize.as_mut().and_then(|o| o.lookup.as_mut()) {
            fix(lookup);
        }
        if let Some(fit) = self.fit_prices.as_mut() {
            fix(&mut fit.path);
        }
    }
}

pub(crate) fn block<'a, T>(block: &'a Option<T>, name: &str) -> Result<&'a T> {
    block
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("missing `{name}` block in the configuration")))
}
