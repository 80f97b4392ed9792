//! Battery capacity minimizing annualized purchase cost plus inconvenience cost.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{inconvenience_closed_form, ChargingEnvironment, DriverProfile};
use crate::cost::{annualized_purchase_cost, CostParams, PolicySchedule, PriceModel};
use crate::error::{Error, Result};
use crate::stats::{quartiles, Pchip};

/// Largest capacity the optimizer will consider, kWh.
pub const MAX_CAPACITY_KWH: f64 = 200.0;
/// Width of the bins in [`PopulationResult::histogram`], kWh.
pub const HISTOGRAM_BIN_KWH: f64 = 5.0;

const COARSE_STEP_KWH: f64 = 1.0;
const GOLDEN_TOL_KWH: f64 = 0.01;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Annual inconvenience hours sampled from simulations at a set of
/// capacities, interpolated monotonically in between. Capacities above the
/// last sample reuse the last value; capacities below the first are outside
/// the lookup's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct InconvenienceLookup {
    capacities_kwh: Vec<f64>,
    tau_e_hours: Vec<f64>,
    interp: Pchip,
}

impl InconvenienceLookup {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(b, t) in &samples {
            if !(b.is_finite() && b > 0.0 && t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "lookup_sample",
                    value: b,
                    reason: "capacities must be positive and times nonnegative",
                });
            }
        }
        let (capacities_kwh, tau_e_hours): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        let interp = Pchip::new(capacities_kwh.clone(), tau_e_hours.clone()).ok_or(
            Error::InvalidParameter {
                name: "lookup_sample",
                value: capacities_kwh.len() as f64,
                reason: "need at least two samples at distinct capacities",
            },
        )?;
        Ok(Self {
            capacities_kwh,
            tau_e_hours,
            interp,
        })
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.capacities_kwh.iter().copied().zip(self.tau_e_hours.iter().copied())
    }

    /// Annual inconvenience hours at effective capacity `battery_kwh`.
    pub fn tau_e(&self, battery_kwh: f64) -> Result<f64> {
        let (lo, _) = self.interp.domain();
        if battery_kwh < lo {
            return Err(Error::InfeasibleBattery {
                battery_kwh,
                min_usable_kwh: lo,
            });
        }
        Ok(self.interp.eval(battery_kwh))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InconvenienceSource {
    Analytic,
    SimulatedLookup(InconvenienceLookup),
}

/// Everything needed to evaluate the objective for one driver.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    /// `distance_km` is the annual distance.
    pub driver: DriverProfile,
    pub env: ChargingEnvironment,
    pub cost: CostParams,
    pub schedule: PolicySchedule,
    pub model: PriceModel,
    pub search_range: (f64, f64),
    pub source: InconvenienceSource,
}

impl ObjectiveSpec {
    /// Analytic objective with default costs, no policy and the 1–150 kWh range.
    pub fn analytic(driver: DriverProfile, env: ChargingEnvironment) -> Self {
        Self {
            driver,
            env,
            cost: CostParams::default(),
            schedule: PolicySchedule::default(),
            model: PriceModel::default(),
            search_range: (1.0, 150.0),
            source: InconvenienceSource::Analytic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.driver.validate()?;
        self.env.validate()?;
        self.cost.validate()?;
        self.schedule.validate()?;
        let (lo, hi) = self.search_range;
        if !(lo.is_finite() && lo > 0.0) {
            return Err(Error::InvalidParameter {
                name: "search_range",
                value: lo,
                reason: "lower bound must be > 0",
            });
        }
        if !(hi.is_finite() && hi >= lo && hi <= MAX_CAPACITY_KWH) {
            return Err(Error::InvalidParameter {
                name: "search_range",
                value: hi,
                reason: "upper bound must satisfy lower <= upper <= 200",
            });
        }
        Ok(())
    }

    /// Smallest nominal capacity for which the analytic model is defined.
    pub fn feasibility_boundary(&self) -> Result<f64> {
        let min_usable = crate::analytic::min_usable_charge(&self.driver, &self.env)?;
        Ok(min_usable / (self.driver.sigma * self.cost.health_factor))
    }
}

/// Objective value and its two parts, EUR/year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub c_p: f64,
    pub c_e: f64,
}

/// Something the solvers can minimize over a capacity interval.
pub trait Objective {
    fn search_range(&self) -> (f64, f64);
    fn evaluate(&self, battery_kwh: f64) -> Result<CostBreakdown>;
}

impl Objective for ObjectiveSpec {
    fn search_range(&self) -> (f64, f64) {
        self.search_range
    }

    fn evaluate(&self, battery_kwh: f64) -> Result<CostBreakdown> {
        objective_eval(self, battery_kwh)
    }
}

/// Adapts a closure into an [`Objective`].
pub struct FnObjective<F> {
    pub range: (f64, f64),
    pub f: F,
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(f64) -> Result<CostBreakdown>,
{
    fn search_range(&self) -> (f64, f64) {
        self.range
    }

    fn evaluate(&self, battery_kwh: f64) -> Result<CostBreakdown> {
        (self.f)(battery_kwh)
    }
}

/// Purchase cost at nominal capacity plus inconvenience cost at the
/// end-of-life usable capacity `h·B`.
pub fn objective_eval(spec: &ObjectiveSpec, battery_kwh: f64) -> Result<CostBreakdown> {
    let c_p = annualized_purchase_cost(&spec.model, &spec.cost, &spec.schedule, battery_kwh)?;
    let effective = spec.cost.health_factor * battery_kwh;
    let tau_e = match &spec.source {
        InconvenienceSource::Analytic => inconvenience_closed_form(effective, &spec.driver, &spec.env)?,
        InconvenienceSource::SimulatedLookup(lookup) => lookup.tau_e(effective)?,
    };
    let c_e = crate::analytic::inconvenience_cost(tau_e, spec.cost.mu);
    Ok(CostBreakdown {
        total: c_p + c_e,
        c_p,
        c_e,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub b_opt: f64,
    pub total_cost: f64,
    pub c_p: f64,
    pub c_e: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl OptimizationResult {
    fn at(b: f64, cost: CostBreakdown, converged: bool, evaluations: usize) -> Self {
        Self {
            b_opt: b,
            total_cost: cost.total,
            c_p: cost.c_p,
            c_e: cost.c_e,
            converged,
            evaluations,
        }
    }
}

struct Counted<'a, O: ?Sized> {
    objective: &'a O,
    evaluations: usize,
}

impl<O: Objective + ?Sized> Counted<'_, O> {
    fn eval(&mut self, b: f64) -> Option<CostBreakdown> {
        self.evaluations += 1;
        self.objective.evaluate(b).ok().filter(|c| c.total.is_finite())
    }

    fn value(&mut self, b: f64) -> f64 {
        self.eval(b).map_or(f64::INFINITY, |c| c.total)
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(move |k| lo + step * k as f64)
}

fn check_range<O: Objective + ?Sized>(objective: &O) -> Result<(f64, f64)> {
    let (lo, hi) = objective.search_range();
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidParameter {
            name: "search_range",
            value: lo,
            reason: "bounds must be finite with lower <= upper",
        });
    }
    Ok((lo, hi))
}

/// Evaluates the objective on `lo, lo+step, …` up to the upper bound and
/// returns the smallest value, preferring the smaller capacity on ties.
pub fn brute_force_scan<O: Objective + ?Sized>(objective: &O, step: f64) -> Result<OptimizationResult> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidParameter {
            name: "step",
            value: step,
            reason: "must be finite and > 0",
        });
    }
    let (lo, hi) = check_range(objective)?;
    let mut counted = Counted {
        objective,
        evaluations: 0,
    };
    let mut best: Option<(f64, CostBreakdown)> = None;
    for b in grid(lo, hi, step) {
        if let Some(c) = counted.eval(b) {
            if best.is_none_or(|(_, bc)| c.total < bc.total) {
                best = Some((b, c));
            }
        }
    }
    let (b, c) = best.ok_or(Error::AllInfeasible { lo, hi })?;
    Ok(OptimizationResult::at(b, c, true, counted.evaluations))
}

/// Coarse 1-kWh scan to find a bracket, then golden-section search inside it
/// down to a 0.01 kWh interval.
pub fn optimize<O: Objective + ?Sized>(objective: &O) -> Result<OptimizationResult> {
    let (lo, hi) = check_range(objective)?;
    let mut counted = Counted {
        objective,
        evaluations: 0,
    };

    let mut coarse: Vec<f64> = grid(lo, hi, COARSE_STEP_KWH).collect();
    if hi - coarse.last().copied().unwrap_or(lo) > 1e-9 {
        coarse.push(hi);
    }
    let values: Vec<f64> = coarse.iter().map(|&b| counted.value(b)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, &v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((i, v)),
        });
    let Some((i, _)) = best else {
        return Err(Error::AllInfeasible { lo, hi });
    };

    let mut a = coarse[i.saturating_sub(1)];
    let mut b = coarse[(i + 1).min(coarse.len() - 1)];
    let mut candidates = vec![coarse[i]];
    if b - a > GOLDEN_TOL_KWH {
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = counted.value(c);
        let mut fd = counted.value(d);
        while b - a > GOLDEN_TOL_KWH {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = counted.value(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = counted.value(d);
            }
        }
        candidates.extend([a, b, 0.5 * (a + b)]);
    }

    let mut winner: Option<(f64, CostBreakdown)> = None;
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for x in candidates {
        if let Some(c) = counted.eval(x) {
            if winner.is_none_or(|(_, w)| c.total < w.total) {
                winner = Some((x, c));
            }
        }
    }
    let (x, c) = winner.expect("coarse minimum is feasible");
    Ok(OptimizationResult::at(x, c, b - a <= GOLDEN_TOL_KWH + 1e-12, counted.evaluations))
}

/// Optimal capacity for one driver.
pub fn optimize_battery(spec: &ObjectiveSpec) -> Result<OptimizationResult> {
    spec.validate()?;
    optimize(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriverOutcome {
    pub index: usize,
    pub result: Option<OptimizationResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo_kwh: f64,
    pub hi_kwh: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationResult {
    pub per_driver: Vec<DriverOutcome>,
    /// `None` when no driver could be optimized.
    pub mean_b: Option<f64>,
    pub iqr_b: Option<f64>,
    pub histogram: Vec<HistogramBin>,
}

impl PopulationResult {
    pub fn from_outcomes(per_driver: Vec<DriverOutcome>) -> Self {
        let b: Vec<f64> = per_driver
            .iter()
            .filter_map(|o| o.result.map(|r| r.b_opt))
            .collect();
        if b.is_empty() {
            return Self {
                per_driver,
                mean_b: None,
                iqr_b: None,
                histogram: Vec::new(),
            };
        }
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        let (q1, q3) = quartiles(&b);
        Self {
            per_driver,
            mean_b: Some(mean),
            iqr_b: Some(q3 - q1),
            histogram: histogram(&b, HISTOGRAM_BIN_KWH),
        }
    }
}

fn histogram(values: &[f64], width: f64) -> Vec<HistogramBin> {
    let bin = |v: f64| (v / width).floor() as i64;
    let first = values.iter().map(|&v| bin(v)).min().unwrap_or(0);
    let last = values.iter().map(|&v| bin(v)).max().unwrap_or(0);
    let mut bins: Vec<HistogramBin> = (first..=last)
        .map(|k| HistogramBin {
            lo_kwh: k as f64 * width,
            hi_kwh: (k + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        bins[(bin(v) - first) as usize].count += 1;
    }
    bins
}

/// Optimizes each driver independently. Failures are recorded per driver.
pub fn population_optimize(specs: &[ObjectiveSpec]) -> Result<PopulationResult> {
    if specs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let outcomes = specs
        .par_iter()
        .enumerate()
        .map(|(index, spec)| match optimize_battery(spec) {
            Ok(r) => DriverOutcome {
                index,
                result: Some(r),
                error: None,
            },
            Err(e) => DriverOutcome {
                index,
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(PopulationResult::from_outcomes(outcomes))
}

/// Parameter varied by [`whatif_sweep`]. Utilization is held fixed on every axis.
#[derive(Debug, Clone, PartialEq)]
pub enum WhatIfAxis {
    Rho(Vec<f64>),
    Power(Vec<f64>),
    Policy(Vec<PolicySchedule>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhatIfPoint {
    /// Axis value; for the policy axis, the index into the schedule list.
    pub value: f64,
    pub result: Result<OptimizationResult>,
}

pub fn whatif_sweep(spec: &ObjectiveSpec, axis: &WhatIfAxis) -> Vec<WhatIfPoint> {
    let variants: Vec<(f64, ObjectiveSpec)> = match axis {
        WhatIfAxis::Rho(values) => values
            .iter()
            .map(|&rho| {
                let mut s = spec.clone();
                s.env.rho = rho;
                (rho, s)
            })
            .collect(),
        WhatIfAxis::Power(values) => values
            .iter()
            .map(|&p| {
                let mut s = spec.clone();
                s.env.power_kw = p;
                (p, s)
            })
            .collect(),
        WhatIfAxis::Policy(schedules) => schedules
            .iter()
            .enumerate()
            .map(|(i, sched)| {
                let mut s = spec.clone();
                s.schedule = *sched;
                (i as f64, s)
            })
            .collect(),
    };
    variants
        .into_par_iter()
        .map(|(value, s)| WhatIfPoint {
            value,
            result: optimize_battery(&s),
        })
        .collect()
}
