//! Synthetic commute-and-errand travel demand.

use std::collections::BTreeMap;
use std::io::Read;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::network::RoadNetwork;
use crate::rng::{self, stream};
use crate::routing::Router;

const SECONDS_PER_HOUR: f64 = 3600.0;
const SECONDS_PER_DAY: f64 = 86_400.0;
pub const MAX_ERRANDS_PER_DAY: u32 = 12;
const CALIBRATION_TOLERANCE: f64 = 0.05;
const CALIBRATION_AIM: f64 = 0.01;
const MAX_CALIBRATION_STEPS: u32 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandProfile {
    pub days: u32,
    /// Mean departure of the home-to-work trip, hour of day.
    pub morning_depart_h: f64,
    /// Mean departure of the work-to-home trip, hour of day.
    pub evening_depart_h: f64,
    /// Departures are shifted uniformly within ± this many hours.
    pub jitter_h: f64,
    /// Mean number of evening errands per day (Poisson).
    pub errand_rate_per_day: f64,
    pub errand_start_h: f64,
    pub errand_dwell_h: f64,
    /// Errand destinations lie within this straight-line distance of home.
    pub errand_radius_km: f64,
    /// Work lies within this straight-line distance of home; `None` means anywhere.
    pub commute_radius_km: Option<f64>,
}

impl Default for DemandProfile {
    fn default() -> Self {
        Self {
            days: 7,
            morning_depart_h: 8.0,
            evening_depart_h: 17.5,
            jitter_h: 0.5,
            errand_rate_per_day: 0.5,
            errand_start_h: 19.0,
            errand_dwell_h: 0.5,
            errand_radius_km: 4.0,
            commute_radius_km: None,
        }
    }
}

impl DemandProfile {
    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::InvalidParameter {
                name: "days",
                value: 0.0,
                reason: "must be >= 1",
            });
        }
        let nonneg = [
            ("jitter_h", self.jitter_h),
            ("errand_rate_per_day", self.errand_rate_per_day),
            ("errand_dwell_h", self.errand_dwell_h),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be finite and >= 0",
                });
            }
        }
        ensure_positive("errand_radius_km", self.errand_radius_km)?;
        if let Some(r) = self.commute_radius_km {
            ensure_positive("commute_radius_km", r)?;
        }
        let in_day = [
            ("morning_depart_h", self.morning_depart_h),
            ("evening_depart_h", self.evening_depart_h),
            ("errand_start_h", self.errand_start_h),
        ];
        for (name, v) in in_day {
            if !(v - self.jitter_h >= 0.0 && v + self.jitter_h < 24.0) {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "departure window must stay within the day",
                });
            }
        }
        if !(self.morning_depart_h < self.evening_depart_h && self.evening_depart_h < self.errand_start_h) {
            return Err(Error::Config(
                "departures must be ordered morning < evening < errand start".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripPurpose {
    ToWork,
    ToHome,
    Errand,
    /// Trip read from a file.
    Scheduled,
}

/// One origin-destination trip; node fields are external node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub depart_s: f64,
    pub origin: u64,
    pub destination: u64,
    pub purpose: TripPurpose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPlan {
    pub ev_id: u64,
    pub home: Option<u64>,
    pub work: Option<u64>,
    pub trips: Vec<Trip>,
}

/// Checks node references, `origin != destination` and departure order.
pub fn validate_plans(net: &RoadNetwork, plans: &[AgentPlan]) -> Result<()> {
    for plan in plans {
        let mut last = f64::NEG_INFINITY;
        for t in &plan.trips {
            net.index_of(t.origin)?;
            net.index_of(t.destination)?;
            if t.origin == t.destination {
                return Err(Error::Config(format!(
                    "EV {}: trip at {} s has origin equal to destination",
                    plan.ev_id, t.depart_s
                )));
            }
            if !(t.depart_s.is_finite() && t.depart_s >= last) {
                return Err(Error::Config(format!(
                    "EV {}: departure times must be finite and nondecreasing",
                    plan.ev_id
                )));
            }
            last = t.depart_s;
        }
    }
    Ok(())
}

fn pick(candidates: &[usize], u: f64) -> usize {
    candidates[((u * candidates.len() as f64) as usize).min(candidates.len() - 1)]
}

/// Nodes other than `center` within `radius` (straight line); falls back to the
/// nearest other node when the disc holds none.
fn nodes_within(net: &RoadNetwork, center: usize, radius: Option<f64>) -> Vec<usize> {
    let others = (0..net.node_count()).filter(|&j| j != center);
    let Some(r) = radius else {
        return others.collect();
    };
    let inside: Vec<usize> = others.clone().filter(|&j| net.euclidean_km(center, j) <= r).collect();
    if !inside.is_empty() {
        return inside;
    }
    others
        .min_by(|&a, &b| net.euclidean_km(center, a).total_cmp(&net.euclidean_km(center, b)))
        .into_iter()
        .collect()
}

/// Poisson quantile by inversion; nondecreasing in `rate` for fixed `u`.
fn poisson_inverse(rate: f64, u: f64, cap: u32) -> u32 {
    let mut k = 0;
    let mut p = (-rate).exp();
    let mut cdf = p;
    while u > cdf && k < cap {
        k += 1;
        p *= rate / f64::from(k);
        cdf += p;
    }
    k
}

fn jittered(rng: &mut impl Rng, base_h: f64, jitter_h: f64) -> f64 {
    base_h + jitter_h * (2.0 * rng.random::<f64>() - 1.0)
}

fn plan_for(router: &Router, ev: u32, profile: &DemandProfile, seed: u64) -> Result<AgentPlan> {
    let net = router.network();
    if net.node_count() < 2 {
        return Err(Error::Config("demand generation needs at least two nodes".into()));
    }
    let ev64 = u64::from(ev);
    let mut hw = stream(seed, &[rng::HOME_WORK, ev64]);
    let home = (hw.random::<f64>() * net.node_count() as f64) as usize;
    let home = home.min(net.node_count() - 1);
    let work = pick(&nodes_within(net, home, profile.commute_radius_km), hw.random());
    let errand_pool = nodes_within(net, home, Some(profile.errand_radius_km));

    let id = |i: usize| net.node(i).id;
    let mut trips = Vec::new();
    for day in 0..profile.days {
        let day64 = u64::from(day);
        let t0 = f64::from(day) * SECONDS_PER_DAY;
        let mut jr = stream(seed, &[rng::JITTER, ev64, day64]);
        let morning = jittered(&mut jr, profile.morning_depart_h, profile.jitter_h);
        let evening = jittered(&mut jr, profile.evening_depart_h, profile.jitter_h);
        let errands_at = jittered(&mut jr, profile.errand_start_h, profile.jitter_h);
        trips.push(Trip {
            depart_s: t0 + morning * SECONDS_PER_HOUR,
            origin: id(home),
            destination: id(work),
            purpose: TripPurpose::ToWork,
        });
        trips.push(Trip {
            depart_s: t0 + evening * SECONDS_PER_HOUR,
            origin: id(work),
            destination: id(home),
            purpose: TripPurpose::ToHome,
        });

        let u: f64 = stream(seed, &[rng::ERRAND_COUNT, ev64, day64]).random();
        let n = poisson_inverse(profile.errand_rate_per_day, u, MAX_ERRANDS_PER_DAY);
        // the chain must be back home before the next morning window opens
        let latest = t0 + SECONDS_PER_DAY + (profile.morning_depart_h - profile.jitter_h - 1.0) * SECONDS_PER_HOUR;
        let mut at = home;
        let mut clock = t0 + errands_at * SECONDS_PER_HOUR;
        let mut chain = Vec::new();
        for k in 0..n {
            let mut dr = stream(seed, &[rng::ERRAND_DEST, ev64, day64, u64::from(k)]);
            let options: Vec<usize> = errand_pool.iter().copied().filter(|&j| j != at).collect();
            let pool = if options.is_empty() { vec![home] } else { options };
            let next = pick(&pool, dr.random());
            if next == at {
                continue;
            }
            let leg_h = router.cost(at, next, crate::routing::Metric::Time);
            let back_h = router.cost(next, home, crate::routing::Metric::Time);
            let arrive = clock + leg_h * SECONDS_PER_HOUR;
            let depart_back = arrive + profile.errand_dwell_h * SECONDS_PER_HOUR;
            if depart_back + back_h * SECONDS_PER_HOUR > latest {
                break;
            }
            chain.push(Trip {
                depart_s: clock,
                origin: id(at),
                destination: id(next),
                purpose: TripPurpose::Errand,
            });
            at = next;
            clock = depart_back;
        }
        if at != home {
            chain.push(Trip {
                depart_s: clock,
                origin: id(at),
                destination: id(home),
                purpose: TripPurpose::ToHome,
            });
        }
        trips.extend(chain);
    }
    Ok(AgentPlan {
        ev_id: ev64,
        home: Some(id(home)),
        work: Some(id(work)),
        trips,
    })
}

/// Daily schedules for `n_ev` vehicles. Every random choice comes from a
/// stream keyed by (seed, vehicle, day, ...), so schedules are reproducible
/// and raising the errand rate only appends errands.
pub fn generate_demand(net: &RoadNetwork, n_ev: u32, profile: &DemandProfile, seed: u64) -> Result<Vec<AgentPlan>> {
    if n_ev == 0 {
        return Err(Error::InvalidParameter {
            name: "n_ev",
            value: 0.0,
            reason: "must be >= 1",
        });
    }
    profile.validate()?;
    let router = Router::new(net);
    (0..n_ev).map(|ev| plan_for(&router, ev, profile, seed)).collect()
}

/// Fleet mean of the daily distance along shortest-time routes.
pub fn mean_daily_km(net: &RoadNetwork, plans: &[AgentPlan], days: u32) -> Result<f64> {
    if plans.is_empty() || days == 0 {
        return Ok(0.0);
    }
    let router = Router::new(net);
    let mut total = 0.0;
    for plan in plans {
        for t in &plan.trips {
            let (km, _) = router.time_path_length(net.index_of(t.origin)?, net.index_of(t.destination)?)?;
            total += km;
        }
    }
    Ok(total / (plans.len() as f64 * f64::from(days)))
}

fn measure(net: &RoadNetwork, n_ev: u32, profile: &DemandProfile, seed: u64) -> Result<f64> {
    let plans = generate_demand(net, n_ev, profile, seed)?;
    mean_daily_km(net, &plans, profile.days)
}

/// Bisection on `set(profile, x)` over `[lo, hi]`, assuming the distance grows
/// with `x`. Returns the best profile seen and its relative error.
#[allow(clippy::too_many_arguments)]
fn bisect(
    net: &RoadNetwork,
    n_ev: u32,
    base: &DemandProfile,
    target: f64,
    seed: u64,
    (mut lo, mut hi): (f64, f64),
    set: impl Fn(&mut DemandProfile, f64),
    steps: &mut u32,
) -> Result<(DemandProfile, f64)> {
    let mut best = (base.clone(), f64::INFINITY);
    while *steps < MAX_CALIBRATION_STEPS {
        *steps += 1;
        let mid = 0.5 * (lo + hi);
        let mut p = base.clone();
        set(&mut p, mid);
        let km = measure(net, n_ev, &p, seed)?;
        let rel = (km - target) / target;
        if rel.abs() < best.1.abs() {
            best = (p, rel);
        }
        if rel.abs() <= CALIBRATION_AIM || hi - lo < 1e-9 * hi.max(1.0) {
            break;
        }
        if km < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// Adjusts the errand rate (and, when that cannot reach the target, the
/// commute radius) until the fleet mean daily distance is within 5 % of
/// `target_daily_km`. A profile already within tolerance is returned as is.
pub fn calibrate_demand(
    net: &RoadNetwork,
    n_ev: u32,
    profile: &DemandProfile,
    target_daily_km: f64,
    seed: u64,
) -> Result<DemandProfile> {
    ensure_positive("target_daily_km", target_daily_km)?;
    let target = target_daily_km;
    let current = measure(net, n_ev, profile, seed)?;
    if ((current - target) / target).abs() <= CALIBRATION_TOLERANCE {
        return Ok(profile.clone());
    }
    let fail = |achieved_km: f64, iterations: u32| Error::CalibrationFailed {
        target_km: target,
        achieved_km,
        iterations,
    };
    let mut steps = 0;
    let mut commute_only = profile.clone();
    commute_only.errand_rate_per_day = 0.0;
    let floor = measure(net, n_ev, &commute_only, seed)?;

    let (best, rel) = if target < floor {
        // shorter commutes, no errands
        let span = diagonal(net);
        bisect(net, n_ev, &commute_only, target, seed, (0.0, span), |p, r| p.commute_radius_km = Some(r.max(1e-9)), &mut steps)?
    } else {
        let rate_cap = f64::from(MAX_ERRANDS_PER_DAY);
        let mut base = profile.clone();
        let mut at_cap = base.clone();
        at_cap.errand_rate_per_day = rate_cap;
        if measure(net, n_ev, &at_cap, seed)? < target {
            // widen the errand radius and free the commute before giving up
            base.errand_radius_km = diagonal(net);
            base.commute_radius_km = None;
            at_cap = base.clone();
            at_cap.errand_rate_per_day = rate_cap;
            let most = measure(net, n_ev, &at_cap, seed)?;
            if most < target {
                return Err(fail(most, steps));
            }
        }
        bisect(net, n_ev, &base, target, seed, (0.0, rate_cap), |p, r| p.errand_rate_per_day = r, &mut steps)?
    };
    if rel.abs() <= CALIBRATION_TOLERANCE {
        Ok(best)
    } else {
        Err(fail(target * (1.0 + rel), steps))
    }
}

fn diagonal(net: &RoadNetwork) -> f64 {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for n in net.nodes() {
        x0 = x0.min(n.x_km);
        x1 = x1.max(n.x_km);
        y0 = y0.min(n.y_km);
        y1 = y1.max(n.y_km);
    }
    (x1 - x0).hypot(y1 - y0).max(1e-6)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TripRow {
    ev_id: u64,
    depart_s: f64,
    origin: u64,
    destination: u64,
}

/// Reads `ev_id,depart_s,origin,destination` rows into per-vehicle plans,
/// ordered by vehicle id. Rows of one vehicle must be in departure order.
pub fn read_trips_csv<R: Read>(reader: R, net: &RoadNetwork, source_name: &str) -> Result<Vec<AgentPlan>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let err = |line: u64, message: String| Error::Parse {
        source_name: source_name.to_string(),
        location: format!("line {line}"),
        message,
    };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let want = ["ev_id", "depart_s", "origin", "destination"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(err(1, format!("expected header `{}`", want.join(","))));
    }
    let mut by_ev: BTreeMap<u64, Vec<Trip>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: TripRow = rec.deserialize(Some(&headers)).map_err(|e| err(line, e.to_string()))?;
        for (field, node) in [("origin", row.origin), ("destination", row.destination)] {
            net.index_of(node).map_err(|_| err(line, format!("{field} references unknown node id {node}")))?;
        }
        if row.origin == row.destination {
            return Err(err(line, "origin equals destination".into()));
        }
        let trips = by_ev.entry(row.ev_id).or_default();
        if !row.depart_s.is_finite() || trips.last().is_some_and(|t| t.depart_s > row.depart_s) {
            return Err(err(line, format!("departures of EV {} are not nondecreasing", row.ev_id)));
        }
        trips.push(Trip {
            depart_s: row.depart_s,
            origin: row.origin,
            destination: row.destination,
            purpose: TripPurpose::Scheduled,
        });
    }
    if by_ev.is_empty() {
        return Err(err(1, "no trips".into()));
    }
    Ok(by_ev
        .into_iter()
        .map(|(ev_id, trips)| AgentPlan {
            ev_id,
            home: None,
            work: None,
            trips,
        })
        .collect())
}
