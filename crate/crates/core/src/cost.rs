//! Purchase price as a function of battery capacity, and its annualized cost
//! after taxes or incentives.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::stats::quartiles;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub battery_kwh: f64,
    pub price_eur: f64,
}

/// Quadratic base price `a2·B² + a1·B + a0` in EUR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceModel {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl PriceModel {
    /// Regression of European list prices on battery capacity.
    pub const MARKET_2023: PriceModel = PriceModel {
        a2: 5.113,
        a1: 84.871,
        a0: 26_316.599,
    };

    pub const ZERO: PriceModel = PriceModel {
        a2: 0.0,
        a1: 0.0,
        a0: 0.0,
    };

    /// Checks that the price stays positive on the supported 1–150 kWh range.
    pub fn validate(&self) -> Result<()> {
        for b in [1.0, 150.0] {
            let price = base_price(self, b)?;
            if price.is_nan() || price <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "price_model",
                    value: price,
                    reason: "base price must be positive on 1..=150 kWh",
                });
            }
        }
        // interior extremum of the parabola
        if self.a2 != 0.0 {
            let vertex = -self.a1 / (2.0 * self.a2);
            if (1.0..=150.0).contains(&vertex) && base_price(self, vertex)? <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "price_model",
                    value: vertex,
                    reason: "base price must be positive on 1..=150 kWh",
                });
            }
        }
        Ok(())
    }
}

impl Default for PriceModel {
    fn default() -> Self {
        Self::MARKET_2023
    }
}

/// Economic constants of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostParams {
    /// Residual value at end of life as a fraction of the purchase price.
    pub beta: f64,
    pub lifetime_years: f64,
    /// Value of time, EUR/h.
    pub mu: f64,
    /// Usable fraction of nominal capacity at end of life.
    pub health_factor: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            beta: 0.25,
            lifetime_years: 10.0,
            mu: 16.65,
            health_factor: 0.7,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: self.beta,
                reason: "must lie in [0, 1]",
            });
        }
        ensure_positive("lifetime_years", self.lifetime_years)?;
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: self.mu,
                reason: "must be finite and >= 0",
            });
        }
        if !(self.health_factor > 0.0 && self.health_factor <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "health_factor",
                value: self.health_factor,
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }
}

/// Signed tax (positive) or incentive (negative) added to the purchase price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySchedule {
    Flat {
        value: f64,
    },
    /// Tax above the threshold, subsidy at or below it.
    CapacityThreshold {
        threshold_kwh: f64,
        tax_above: f64,
        subsidy_below: f64,
    },
    /// User-supplied linear cost of capacity-dependent externalities.
    LinearExternality {
        slope: f64,
        intercept: f64,
    },
}

impl Default for PolicySchedule {
    fn default() -> Self {
        PolicySchedule::Flat { value: 0.0 }
    }
}

impl PolicySchedule {
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be finite",
                })
            }
        };
        match *self {
            PolicySchedule::Flat { value } => finite("value", value),
            PolicySchedule::CapacityThreshold {
                threshold_kwh,
                tax_above,
                subsidy_below,
            } => {
                ensure_positive("threshold_kwh", threshold_kwh)?;
                finite("tax_above", tax_above)?;
                finite("subsidy_below", subsidy_below)
            }
            PolicySchedule::LinearExternality { slope, intercept } => {
                finite("slope", slope)?;
                finite("intercept", intercept)
            }
        }
    }
}

pub fn apply_policy(schedule: &PolicySchedule, battery_kwh: f64) -> f64 {
    match *schedule {
        PolicySchedule::Flat { value } => value,
        PolicySchedule::CapacityThreshold {
            threshold_kwh,
            tax_above,
            subsidy_below,
        } => {
            if battery_kwh > threshold_kwh {
                tax_above
            } else {
                -subsidy_below
            }
        }
        PolicySchedule::LinearExternality { slope, intercept } => slope * battery_kwh + intercept,
    }
}

pub fn base_price(model: &PriceModel, battery_kwh: f64) -> Result<f64> {
    ensure_positive("battery_kwh", battery_kwh)?;
    let b = battery_kwh;
    Ok((model.a2 * b + model.a1) * b + model.a0)
}

/// Purchase cost net of residual value, spread evenly over the lifetime.
pub fn annualized_purchase_cost(
    model: &PriceModel,
    params: &CostParams,
    schedule: &PolicySchedule,
    battery_kwh: f64,
) -> Result<f64> {
    let price = base_price(model, battery_kwh)? + apply_policy(schedule, battery_kwh);
    Ok((1.0 - params.beta) * price / params.lifetime_years)
}

/// Result of [`iqr_filter`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IqrSplit {
    pub kept: Vec<PriceRecord>,
    pub removed: Vec<PriceRecord>,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Drops records whose price lies outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
/// Input order is preserved in both halves.
pub fn iqr_filter(records: &[PriceRecord]) -> Result<IqrSplit> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let prices: Vec<f64> = records.iter().map(|r| r.price_eur).collect();
    let (q1, q3) = quartiles(&prices);
    let iqr = q3 - q1;
    let lower_bound = q1 - 1.5 * iqr;
    let upper_bound = q3 + 1.5 * iqr;
    let (kept, removed) = records
        .iter()
        .partition(|r| r.price_eur >= lower_bound && r.price_eur <= upper_bound);
    Ok(IqrSplit {
        kept,
        removed,
        lower_bound,
        upper_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceFit {
    pub degree: usize,
    pub model: PriceModel,
    /// Residual sum of squares, EUR².
    pub rss: f64,
    /// Standard errors of (a2, a1, a0); zero for coefficients not fitted.
    pub std_errors: [f64; 3],
    pub n: usize,
}

/// Ordinary least squares of price on capacity, degree 1 or 2.
pub fn fit_price_model(records: &[PriceRecord], degree: usize) -> Result<PriceFit> {
    if !(1..=2).contains(&degree) {
        return Err(Error::InvalidParameter {
            name: "degree",
            value: degree as f64,
            reason: "must be 1 or 2",
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut distinct: Vec<f64> = records.iter().map(|r| r.battery_kwh).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let required = degree + 1;
    if distinct.len() < required {
        return Err(Error::DegenerateDesign {
            distinct: distinct.len(),
            required,
        });
    }

    let n = records.len();
    let cols = degree + 1;
    // columns: 1, B, B²
    let x = DMatrix::from_fn(n, cols, |i, j| records[i].battery_kwh.powi(j as i32));
    let y = DVector::from_iterator(n, records.iter().map(|r| r.price_eur));
    let svd = x.clone().svd(true, true);
    let coef = svd
        .solve(&y, 1e-12)
        .map_err(|_| Error::DegenerateDesign {
            distinct: distinct.len(),
            required,
        })?;
    let residual = &y - &x * &coef;
    let rss = residual.norm_squared();

    let mut std_errors = [0.0; 3];
    if n > cols {
        let sigma2 = rss / (n - cols) as f64;
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        // (XᵀX)⁻¹ = V Σ⁻² Vᵀ
        for j in 0..cols {
            let var: f64 = (0..cols)
                .map(|k| {
                    let s = svd.singular_values[k];
                    v_t[(k, j)].powi(2) / (s * s)
                })
                .sum();
            std_errors[2 - j] = (sigma2 * var).sqrt();
        }
    }

    let model = PriceModel {
        a0: coef[0],
        a1: coef[1],
        a2: if degree == 2 { coef[2] } else { 0.0 },
    };
    Ok(PriceFit {
        degree,
        model,
        rss,
        std_errors,
        n,
    })
}

/// Reads a `battery_kwh,price_eur` CSV. Line numbers in errors are 1-based and
/// count the header.
pub fn read_price_csv<R: Read>(reader: R) -> Result<Vec<PriceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::PriceData {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.len() != 2 || &headers[0] != "battery_kwh" || &headers[1] != "price_eur" {
        return Err(Error::PriceData {
            line: 1,
            message: format!("expected header `battery_kwh,price_eur`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::PriceData {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = row.get(i).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::PriceData {
                line,
                message: format!("field `{name}`: cannot parse `{raw}` as a number"),
            })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::PriceData {
                    line,
                    message: format!("field `{name}` must be positive, got {v}"),
                });
            }
            Ok(v)
        };
        out.push(PriceRecord {
            battery_kwh: field(0, "battery_kwh")?,
            price_eur: field(1, "price_eur")?,
        });
    }
    Ok(out)
}
