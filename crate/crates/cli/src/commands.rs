//! The five subcommands.

use std::fs::File;
use std::path::{Path, PathBuf};

use evcap_core::analytic::{inconvenience_components, sensitivity_sweep, utilization, SweepTable};
use evcap_core::cost::{fit_price_model, iqr_filter, read_price_csv, IqrSplit};
use evcap_core::optimizer::{
    optimize_battery, population_optimize, whatif_sweep, DriverOutcome, InconvenienceLookup, InconvenienceSource,
    OptimizationResult, PopulationResult, WhatIfAxis,
};
use evcap_core::{DriverProfile, Horizon, PolicySchedule};
use evcap_sim::{run_scenario, run_single, EvMetrics, ScenarioKind};
use serde::{Deserialize, Serialize};

use crate::config::{block, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{read_embedded, Writer};

#[derive(Serialize)]
struct AnalyzeRow {
    parameter: &'static str,
    value: f64,
    tau_e_h: Option<f64>,
    flag: Option<String>,
}

pub fn cmd_analyze(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let cfg = block(&config.analyze, "analyze")?;
    let mut base = cfg.base;
    base.profile.validate()?;
    base.env.validate()?;
    if let Some(fleet) = cfg.fleet {
        let horizon = Horizon::days(fleet.horizon_days)?;
        base.env.xi = utilization(fleet.n_ev, fleet.n_cs, &base.profile, base.env.power_kw, horizon)?;
    }
    let breakdown = inconvenience_components(base.battery_kwh, &base.profile, &base.env)?;
    let tables: Vec<SweepTable> = cfg
        .sweeps
        .iter()
        .map(|s| {
            let (lo, hi) = s.range();
            sensitivity_sweep(&base, s.parameter.name(), lo, hi, s.steps)
        })
        .collect::<std::result::Result<_, _>>()?;

    let rows: Vec<AnalyzeRow> = tables
        .iter()
        .flat_map(|t| {
            t.points.iter().map(|p| AnalyzeRow {
                parameter: t.parameter.name(),
                value: p.value,
                tau_e_h: p.tau_e_h,
                flag: p.flag.clone(),
            })
        })
        .collect();
    let mut out = Writer::new(config)?;
    out.table("analyze", &rows)?;
    out.document(
        "analyze",
        "analyze",
        &serde_json::json!({ "base": base, "breakdown": breakdown, "sweeps": tables }),
    )?;
    Ok(out.finish())
}

/// One line of `simulate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRow {
    pub x_value: f64,
    pub label: String,
    pub mean_tau_e_h: f64,
    pub analytic_tau_e_h: Option<f64>,
    pub n_ev: u32,
    pub seed: u64,
}

pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let sim = block(&config.simulate, "simulate")?;
    sim.validate()?;
    let mut out = Writer::new(config)?;
    if sim.scenario == ScenarioKind::Single {
        let run = run_single(sim, config.seed)?;
        if run.analytic_tau_e_h.is_none() {
            log::warn!("no analytic overlay: {}", run.analytic_note.as_deref().unwrap_or("unknown reason"));
        }
        let row = SimulateRow {
            x_value: sim.battery_kwh,
            label: "single".into(),
            mean_tau_e_h: run.metrics.fleet.mean_tau_e_h,
            analytic_tau_e_h: run.analytic_tau_e_h,
            n_ev: run.metrics.fleet.n_ev as u32,
            seed: config.seed,
        };
        out.table("simulate", &[row])?;
        let per_ev: &[EvMetrics] = &run.metrics.per_ev;
        out.table("simulate_ev", per_ev)?;
        out.document("simulate", "simulate", &run)?;
    } else {
        let result = run_scenario(sim.scenario, sim, config.seed)?;
        let rows: Vec<SimulateRow> = result
            .rows
            .iter()
            .zip(&result.details)
            .map(|(r, d)| SimulateRow {
                x_value: r.x_value,
                label: d.label.clone(),
                mean_tau_e_h: r.mean_tau_e_h,
                analytic_tau_e_h: r.analytic_tau_e_h,
                n_ev: r.n_ev,
                seed: r.seed,
            })
            .collect();
        out.table("simulate", &rows)?;
        out.document("simulate", "simulate", &result)?;
    }
    Ok(out.finish())
}

/// Builds an annual inconvenience lookup from a capacity-sweep CSV written by
/// `simulate`. Horizon values are scaled to a year.
pub fn load_lookup(path: &Path) -> Result<InconvenienceLookup> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let (_, run, body) = read_embedded(&text).ok_or_else(|| bad("missing the embedded seed/config header".into()))?;
    let sim = run
        .simulate
        .ok_or_else(|| bad("embedded configuration has no `simulate` block".into()))?;
    if sim.scenario != ScenarioKind::CapacitySweep {
        return Err(bad(format!("expected a capacity_sweep output, found {}", sim.scenario.name())));
    }
    let scale = 365.0 / f64::from(sim.demand.days);
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let mut samples = Vec::new();
    for (i, row) in rdr.deserialize::<SimulateRow>().enumerate() {
        let row = row.map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        samples.push((row.x_value, row.mean_tau_e_h * scale));
    }
    Ok(InconvenienceLookup::new(samples)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct OptimizeRow {
    driver: usize,
    distance_km: f64,
    eta: f64,
    sigma: f64,
    speed_kmh: f64,
    b_opt: Option<f64>,
    total_cost: Option<f64>,
    c_p: Option<f64>,
    c_e: Option<f64>,
    converged: Option<bool>,
    evaluations: Option<usize>,
    error: Option<String>,
}

impl OptimizeRow {
    fn new(driver: usize, p: &DriverProfile, result: Option<OptimizationResult>, error: Option<String>) -> Self {
        Self {
            driver,
            distance_km: p.distance_km,
            eta: p.eta,
            sigma: p.sigma,
            speed_kmh: p.speed_kmh,
            b_opt: result.map(|r| r.b_opt),
            total_cost: result.map(|r| r.total_cost),
            c_p: result.map(|r| r.c_p),
            c_e: result.map(|r| r.c_e),
            converged: result.map(|r| r.converged),
            evaluations: result.map(|r| r.evaluations),
            error,
        }
    }
}

pub fn cmd_optimize(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let cfg = block(&config.optimize, "optimize")?;
    let mut spec = cfg.spec.objective();
    spec.validate()?;
    let source = match &cfg.lookup {
        Some(path) => {
            spec.source = InconvenienceSource::SimulatedLookup(load_lookup(path)?);
            "simulated_lookup"
        }
        None => "analytic",
    };
    let boundary = match spec.source {
        InconvenienceSource::Analytic => spec.feasibility_boundary().ok(),
        InconvenienceSource::SimulatedLookup(_) => None,
    };

    let (rows, population) = if cfg.population.is_empty() {
        let result = optimize_battery(&spec)?;
        let outcome = DriverOutcome {
            index: 0,
            result: Some(result),
            error: None,
        };
        let row = OptimizeRow::new(0, &spec.driver, Some(result), None);
        (vec![row], PopulationResult::from_outcomes(vec![outcome]))
    } else {
        let mut specs = Vec::with_capacity(cfg.population.len());
        for o in &cfg.population {
            let mut s = spec.clone();
            s.driver = o.apply(&spec.driver);
            s.driver.validate()?;
            specs.push(s);
        }
        let population = population_optimize(&specs)?;
        if population.mean_b.is_none() {
            let first = population.per_driver.iter().find_map(|o| o.error.clone()).unwrap_or_default();
            return Err(CliError::Domain(format!("no driver has a feasible capacity ({first})")));
        }
        let rows = population
            .per_driver
            .iter()
            .map(|o| OptimizeRow::new(o.index, &specs[o.index].driver, o.result, o.error.clone()))
            .collect();
        (rows, population)
    };

    let mut out = Writer::new(config)?;
    out.table("optimize", &rows)?;
    out.document(
        "optimize",
        "optimize",
        &serde_json::json!({
            "source": source,
            "feasibility_boundary_kwh": boundary,
            "drivers": rows,
            "mean_b": population.mean_b,
            "iqr_b": population.iqr_b,
            "histogram": population.histogram,
        }),
    )?;
    Ok(out.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct WhatifRow {
    rho: f64,
    power_kw: f64,
    policy: usize,
    b_opt: Option<f64>,
    total_cost: Option<f64>,
    c_p: Option<f64>,
    c_e: Option<f64>,
    converged: Option<bool>,
    error: Option<String>,
}

pub fn cmd_whatif(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let cfg = block(&config.whatif, "whatif")?;
    let spec = cfg.spec.objective();
    spec.validate()?;
    let or_base = |v: &[f64], base: f64| if v.is_empty() { vec![base] } else { v.to_vec() };
    let rhos = or_base(&cfg.rho, spec.env.rho);
    let powers = or_base(&cfg.power_kw, spec.env.power_kw);
    let policies: Vec<PolicySchedule> = if cfg.policies.is_empty() {
        vec![spec.schedule]
    } else {
        cfg.policies.clone()
    };

    let mut rows = Vec::new();
    let mut first_error = None;
    for &rho in &rhos {
        for (pi, policy) in policies.iter().enumerate() {
            let mut s = spec.clone();
            s.env.rho = rho;
            s.schedule = *policy;
            for point in whatif_sweep(&s, &WhatIfAxis::Power(powers.clone())) {
                let (r, error) = match point.result {
                    Ok(r) => (Some(r), None),
                    Err(e) => {
                        let msg = e.to_string();
                        first_error.get_or_insert(e);
                        (None, Some(msg))
                    }
                };
                rows.push(WhatifRow {
                    rho,
                    power_kw: point.value,
                    policy: pi,
                    b_opt: r.map(|r| r.b_opt),
                    total_cost: r.map(|r| r.total_cost),
                    c_p: r.map(|r| r.c_p),
                    c_e: r.map(|r| r.c_e),
                    converged: r.map(|r| r.converged),
                    error,
                });
            }
        }
    }
    if rows.iter().all(|r| r.b_opt.is_none()) {
        return Err(first_error.map_or_else(|| CliError::Domain("empty grid".into()), CliError::Model));
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed", rows.len());
    }

    let mut out = Writer::new(config)?;
    out.table("whatif", &rows)?;
    out.document("whatif", "whatif", &serde_json::json!({ "policies": policies, "cells": rows }))?;
    Ok(out.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct FitRow {
    degree: usize,
    a2: f64,
    a1: f64,
    a0: f64,
    se_a2: f64,
    se_a1: f64,
    se_a0: f64,
    rss: f64,
    kept: usize,
    removed: usize,
    lower_fence: Option<f64>,
    upper_fence: Option<f64>,
}

pub fn cmd_fit_prices(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let cfg = block(&config.fit_prices, "fit_prices")?;
    let path = &cfg.path;
    let in_file = |e: evcap_core::Error| CliError::Config(format!("{}: {e}", path.display()));
    let file = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let records = read_price_csv(file).map_err(in_file)?;
    let split = if cfg.remove_outliers {
        Some(iqr_filter(&records).map_err(in_file)?)
    } else if records.is_empty() {
        return Err(in_file(evcap_core::Error::EmptyDataset));
    } else {
        None
    };
    let kept = split.as_ref().map_or(&records, |s: &IqrSplit| &s.kept);
    let fit = fit_price_model(kept, cfg.degree).map_err(in_file)?;
    let row = FitRow {
        degree: fit.degree,
        a2: fit.model.a2,
        a1: fit.model.a1,
        a0: fit.model.a0,
        se_a2: fit.std_errors[0],
        se_a1: fit.std_errors[1],
        se_a0: fit.std_errors[2],
        rss: fit.rss,
        kept: kept.len(),
        removed: split.as_ref().map_or(0, |s| s.removed.len()),
        lower_fence: split.as_ref().map(|s| s.lower_bound),
        upper_fence: split.as_ref().map(|s| s.upper_bound),
    };

    let mut out = Writer::new(config)?;
    out.table("fit_prices", std::slice::from_ref(&row))?;
    out.document(
        "fit_prices",
        "fit-prices",
        &serde_json::json!({
            "fit": row,
            "removed_records": split.as_ref().map(|s| &s.removed),
        }),
    )?;
    Ok(out.finish())
}
