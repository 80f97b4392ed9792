//! Discrete-event execution of a fleet over a road network.
//!
//! Vehicles move edge by edge along shortest-time routes. Energy for an edge
//! is drawn when the edge is entered. At trip start and at every intermediate
//! node a vehicle whose state of charge has fallen under its trigger threshold
//! turns towards the nearest station it does not know to be busy. Stations are
//! only observed on arrival; a busy station either sends the driver on to the
//! next one or makes them give up for now and lower the trigger.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::demand::{validate_plans, AgentPlan, Trip};
use crate::error::{ensure_positive, Error, Result};
use crate::metrics::{EvMetrics, SimMetrics};
use crate::network::RoadNetwork;
use crate::routing::{Metric, Router};
use crate::rng::{self, stream};
use crate::stations::{validate_stations, ChargingStation};

const SECONDS_PER_HOUR: f64 = 3600.0;

/// How charging trigger (C_s) and target (C_d) levels are drawn, in percent
/// of capacity. Both are redrawn after every completed charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdModel {
    /// Gamma(shape, scale) draws; the trigger is clamped to [1, 95] and the
    /// target capped at 100.
    Gamma {
        trigger_shape: f64,
        trigger_scale: f64,
        target_shape: f64,
        target_scale: f64,
    },
    Fixed { trigger_pct: f64, target_pct: f64 },
}

impl Default for ThresholdModel {
    fn default() -> Self {
        ThresholdModel::Gamma {
            trigger_shape: 4.0,
            trigger_scale: 5.0,
            target_shape: 85.0,
            target_scale: 1.0,
        }
    }
}

impl ThresholdModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdModel::Gamma {
                trigger_shape,
                trigger_scale,
                target_shape,
                target_scale,
            } => {
                ensure_positive("trigger_shape", trigger_shape)?;
                ensure_positive("trigger_scale", trigger_scale)?;
                ensure_positive("target_shape", target_shape)?;
                ensure_positive("target_scale", target_scale)
            }
            ThresholdModel::Fixed { trigger_pct, target_pct } => {
                if !(trigger_pct > 0.0 && trigger_pct < target_pct && target_pct <= 100.0) {
                    return Err(Error::Config(format!(
                        "fixed thresholds need 0 < trigger ({trigger_pct}) < target ({target_pct}) <= 100"
                    )));
                }
                Ok(())
            }
        }
    }

    /// (trigger, target) in percent, trigger strictly below target.
    pub fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        match *self {
            ThresholdModel::Gamma {
                trigger_shape,
                trigger_scale,
                target_shape,
                target_scale,
            } => {
                let trig = Gamma::new(trigger_shape, trigger_scale).expect("validated").sample(rng);
                let targ = Gamma::new(target_shape, target_scale).expect("validated").sample(rng);
                let targ = targ.clamp(2.0, 100.0);
                let trig = trig.clamp(1.0, 95.0).min(targ - 1.0);
                (trig, targ)
            }
            ThresholdModel::Fixed { trigger_pct, target_pct } => (trigger_pct, target_pct),
        }
    }

    /// Mean replenished fraction per charge, ignoring the clamps.
    pub fn mean_charge_fraction(&self) -> f64 {
        match *self {
            ThresholdModel::Gamma {
                trigger_shape,
                trigger_scale,
                target_shape,
                target_scale,
            } => ((target_shape * target_scale).min(100.0) - trigger_shape * trigger_scale) / 100.0,
            ThresholdModel::Fixed { trigger_pct, target_pct } => (target_pct - trigger_pct) / 100.0,
        }
    }
}

/// State of charge at time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSoc {
    /// Each vehicle starts at a point of its charge cycle between trigger and
    /// target; the points are stratified over the fleet.
    Stationary,
    Full,
    Fixed { pct: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon_days: f64,
    pub battery_kwh: f64,
    pub eta_kwh_per_km: f64,
    pub redirect_probability: f64,
    pub thresholds: ThresholdModel,
    pub initial_soc: InitialSoc,
    /// When false, batteries never run down and nobody charges; used to
    /// measure travel behaviour alone.
    pub charging_enabled: bool,
    pub defer_step_pct: f64,
    pub defer_floor_pct: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon_days: 7.0,
            battery_kwh: 40.0,
            eta_kwh_per_km: 0.173,
            redirect_probability: 0.7,
            thresholds: ThresholdModel::default(),
            initial_soc: InitialSoc::Stationary,
            charging_enabled: true,
            defer_step_pct: 5.0,
            defer_floor_pct: 2.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("horizon_days", self.horizon_days)?;
        ensure_positive("battery_kwh", self.battery_kwh)?;
        ensure_positive("eta_kwh_per_km", self.eta_kwh_per_km)?;
        if !(0.0..=1.0).contains(&self.redirect_probability) {
            return Err(Error::InvalidParameter {
                name: "redirect_probability",
                value: self.redirect_probability,
                reason: "must lie in [0, 1]",
            });
        }
        if let InitialSoc::Fixed { pct } = self.initial_soc {
            if !(0.0..=100.0).contains(&pct) {
                return Err(Error::InvalidParameter {
                    name: "initial_soc.pct",
                    value: pct,
                    reason: "must lie in [0, 100]",
                });
            }
        }
        if !(self.defer_step_pct >= 0.0 && self.defer_floor_pct >= 0.0 && self.defer_floor_pct < 100.0) {
            return Err(Error::Config("defer_step_pct and defer_floor_pct must be in [0, 100)".into()));
        }
        self.thresholds.validate()
    }

    pub fn horizon_s(&self) -> f64 {
        self.horizon_days * 24.0 * SECONDS_PER_HOUR
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentState {
    Driving,
    Detouring,
    Charging,
    Parked,
}

/// A vehicle as it enters the simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvAgent {
    pub id: u64,
    pub battery_kwh: f64,
    pub soc_kwh: f64,
    pub eta: f64,
    pub schedule: Vec<Trip>,
    pub threshold_pct: f64,
    pub target_pct: f64,
    pub state: AgentState,
}

/// Builds the fleet with its first thresholds and initial charge. Uses the
/// same random streams as [`run_simulation`].
pub fn spawn_agents(plans: &[AgentPlan], config: &SimConfig) -> Result<Vec<EvAgent>> {
    Ok(spawn(plans, config)?.into_iter().map(|(a, _)| a).collect())
}

fn spawn(plans: &[AgentPlan], config: &SimConfig) -> Result<Vec<(EvAgent, ChaCha8Rng)>> {
    config.validate()?;
    let n = plans.len();
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut stream(config.seed, &[rng::PHASE]));
    plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            let mut r = stream(config.seed, &[rng::AGENT, plan.ev_id]);
            let (trig, targ) = config.thresholds.sample(&mut r);
            let pct = match config.initial_soc {
                InitialSoc::Stationary => {
                    let phase = (slots[i] as f64 + r.random::<f64>()) / n as f64;
                    trig + phase * (targ - trig)
                }
                InitialSoc::Full => 100.0,
                InitialSoc::Fixed { pct } => pct,
            };
            let agent = EvAgent {
                id: plan.ev_id,
                battery_kwh: config.battery_kwh,
                soc_kwh: config.battery_kwh * pct / 100.0,
                eta: config.eta_kwh_per_km,
                schedule: plan.trips.clone(),
                threshold_pct: trig,
                target_pct: targ,
                state: AgentState::Parked,
            };
            Ok((agent, r))
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    TripStart,
    EdgeArrive,
    ChargeDone(usize),
}

#[derive(Debug)]
struct Event {
    time_s: f64,
    seq: u64,
    agent: usize,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.time_s.total_cmp(&self.time_s).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy)]
struct Leg {
    destination: usize,
    target: usize,
    station: Option<usize>,
}

/// Open charging detour, measured from the node where the vehicle left its route.
#[derive(Debug, Clone, Copy)]
struct Episode {
    start_s: f64,
    plugged_s: f64,
    direct_s: f64,
    direct_km: f64,
    driven_km: f64,
}

struct Runtime {
    agent: EvAgent,
    rng: ChaCha8Rng,
    node: usize,
    next_trip: usize,
    leg: Option<Leg>,
    episode: Option<Episode>,
    active_trigger_pct: f64,
    known_busy: Vec<usize>,
    tried: Vec<usize>,
    m: EvMetrics,
}

impl Runtime {
    fn soc_pct(&self) -> f64 {
        100.0 * self.agent.soc_kwh / self.agent.battery_kwh
    }
}

struct StationRt {
    node: usize,
    id: u64,
    power_kw: f64,
    plugs: u32,
    occupied: u32,
    /// Vehicles too depleted to leave, in arrival order.
    waiting: VecDeque<usize>,
}

struct Sim<'a> {
    net: &'a RoadNetwork,
    router: Router<'a>,
    config: &'a SimConfig,
    stations: Vec<StationRt>,
    agents: Vec<Runtime>,
    queue: BinaryHeap<Event>,
    seq: u64,
    horizon_s: f64,
    plug_violations: u64,
}

/// Runs the fleet described by `plans` until the horizon.
pub fn run_simulation(
    net: &RoadNetwork,
    stations: &[ChargingStation],
    plans: &[AgentPlan],
    config: &SimConfig,
) -> Result<SimMetrics> {
    config.validate()?;
    validate_stations(net, stations)?;
    validate_plans(net, plans)?;
    if config.charging_enabled && stations.is_empty() {
        return Err(Error::Config("charging is enabled but there are no stations".into()));
    }
    let mut ids: Vec<u64> = plans.iter().map(|p| p.ev_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("duplicate EV id in plans".into()));
    }

    let mut agents = Vec::with_capacity(plans.len());
    for (agent, rng) in spawn(plans, config)? {
        let node = match agent.schedule.first() {
            Some(t) => net.index_of(t.origin)?,
            None => 0,
        };
        let m = EvMetrics {
            ev_id: agent.id,
            soc_start_kwh: agent.soc_kwh,
            min_soc_kwh: agent.soc_kwh,
            max_soc_kwh: agent.soc_kwh,
            ..EvMetrics::default()
        };
        agents.push(Runtime {
            active_trigger_pct: agent.threshold_pct,
            agent,
            rng,
            node,
            next_trip: 0,
            leg: None,
            episode: None,
            known_busy: Vec::new(),
            tried: Vec::new(),
            m,
        });
    }
    let stations_rt = stations
        .iter()
        .map(|s| {
            Ok(StationRt {
                node: net.index_of(s.node)?,
                id: s.id,
                power_kw: s.power_kw,
                plugs: s.plugs,
                occupied: s.occupied,
                waiting: VecDeque::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sim = Sim {
        net,
        router: Router::new(net),
        config,
        stations: stations_rt,
        agents,
        queue: BinaryHeap::new(),
        seq: 0,
        horizon_s: config.horizon_s(),
        plug_violations: 0,
    };
    for a in 0..sim.agents.len() {
        if let Some(t) = sim.agents[a].agent.schedule.first() {
            let at = t.depart_s.max(0.0);
            sim.push(at, a, EventKind::TripStart);
        }
    }
    while let Some(ev) = sim.queue.pop() {
        if ev.time_s >= sim.horizon_s {
            break;
        }
        match ev.kind {
            EventKind::TripStart => sim.start_trip(ev.agent, ev.time_s)?,
            EventKind::EdgeArrive => sim.advance(ev.agent, ev.time_s)?,
            EventKind::ChargeDone(s) => sim.finish_charge(ev.agent, s, ev.time_s)?,
        }
    }
    Ok(sim.finish())
}

impl Sim<'_> {
    fn push(&mut self, time_s: f64, agent: usize, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            time_s,
            seq: self.seq,
            agent,
            kind,
        });
    }

    fn start_trip(&mut self, a: usize, now: f64) -> Result<()> {
        let rt = &mut self.agents[a];
        let trip = &rt.agent.schedule[rt.next_trip];
        let origin = self.net.index_of(trip.origin)?;
        let destination = self.net.index_of(trip.destination)?;
        if origin != rt.node {
            debug!("EV {} starts trip {} away from its origin", rt.agent.id, rt.next_trip);
        }
        rt.leg = Some(Leg {
            destination,
            target: destination,
            station: None,
        });
        rt.agent.state = AgentState::Driving;
        self.advance(a, now)
    }

    /// Moves agent `a` on from its current node until it enters an edge,
    /// plugs in, or completes its trip.
    fn advance(&mut self, a: usize, now: f64) -> Result<()> {
        loop {
            let leg = self.agents[a].leg.expect("advancing agent has a leg");
            let here = self.agents[a].node;
            if here == leg.target {
                match leg.station {
                    Some(s) => {
                        if self.arrive_at_station(a, s, now) {
                            return Ok(());
                        }
                        continue;
                    }
                    None => {
                        self.arrive_at_destination(a, now);
                        return Ok(());
                    }
                }
            }
            if self.config.charging_enabled
                && leg.station.is_none()
                && self.agents[a].soc_pct() < self.agents[a].active_trigger_pct
                && self.divert(a, now)
            {
                continue;
            }

            let tree = self.router.tree(leg.target, Metric::Time);
            let e = tree.next_edge[here].ok_or_else(|| Error::NoPath {
                from: self.net.node(here).id,
                to: self.net.node(leg.target).id,
            })?;
            let edge = self.net.edge(e);
            let need = self.agents[a].agent.eta * edge.length_km;
            let rt = &mut self.agents[a];
            if self.config.charging_enabled && rt.agent.soc_kwh < need {
                // stranded: towed to the leg's target at no time cost
                rt.m.stranded += 1;
                debug!("EV {} stranded at node {} (t={now:.0}s)", rt.agent.id, self.net.node(here).id);
                rt.node = leg.target;
                continue;
            }
            if self.config.charging_enabled {
                rt.agent.soc_kwh -= need;
                rt.m.min_soc_kwh = rt.m.min_soc_kwh.min(rt.agent.soc_kwh);
            } else {
                rt.m.external_energy_kwh += need;
            }
            rt.m.energy_consumed_kwh += need;
            rt.m.distance_km += edge.length_km;
            let dt_h = edge.travel_time_h();
            rt.m.drive_time_h += dt_h;
            if let Some(ep) = rt.episode.as_mut() {
                ep.driven_km += edge.length_km;
            }
            rt.node = edge.to;
            self.push(now + dt_h * SECONDS_PER_HOUR, a, EventKind::EdgeArrive);
            return Ok(());
        }
    }

    /// Nearest station by network distance that the agent has neither tried
    /// on this detour nor seen busy. Ties go to the smaller station id.
    fn choose_station(&self, a: usize) -> Option<usize> {
        let rt = &self.agents[a];
        (0..self.stations.len())
            .filter(|s| !rt.tried.contains(s) && !rt.known_busy.contains(s))
            .map(|s| (self.router.cost(rt.node, self.stations[s].node, Metric::Distance), s))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(self.stations[x.1].id.cmp(&self.stations[y.1].id)))
            .map(|(_, s)| s)
    }

    /// Points the agent at a station; false when none is left to try.
    fn divert(&mut self, a: usize, now: f64) -> bool {
        let Some(s) = self.choose_station(a) else {
            return false;
        };
        let here = self.agents[a].node;
        let leg = self.agents[a].leg.expect("leg");
        if self.agents[a].episode.is_none() {
            let (direct_km, direct_h) = self
                .router
                .time_path_length(here, leg.destination)
                .expect("validated network is strongly connected");
            self.agents[a].episode = Some(Episode {
                start_s: now,
                plugged_s: 0.0,
                direct_s: direct_h * SECONDS_PER_HOUR,
                direct_km,
                driven_km: 0.0,
            });
        }
        let rt = &mut self.agents[a];
        rt.tried.push(s);
        rt.leg = Some(Leg {
            target: self.stations[s].node,
            station: Some(s),
            ..leg
        });
        rt.agent.state = AgentState::Detouring;
        true
    }

    /// Energy for the cheapest edge out of the agent's node.
    fn can_leave(&self, a: usize) -> bool {
        let rt = &self.agents[a];
        self.net
            .out_edges(rt.node)
            .iter()
            .any(|&e| rt.agent.soc_kwh >= rt.agent.eta * self.net.edge(e).length_km)
    }

    /// Returns true when the agent is done for now: plugged in, or queued
    /// because it cannot drive anywhere.
    fn arrive_at_station(&mut self, a: usize, s: usize, now: f64) -> bool {
        let st = &self.stations[s];
        if st.occupied < st.plugs {
            self.plug_in(a, s, now);
            return true;
        }
        self.agents[a].m.failed_attempts += 1;
        if !self.can_leave(a) {
            self.stations[s].waiting.push_back(a);
            return true;
        }
        let rt = &mut self.agents[a];
        rt.known_busy.push(s);
        let redirect = rt.rng.random::<f64>() < self.config.redirect_probability;
        if redirect && self.divert(a, now) {
            return false;
        }
        // give up for now: back to the destination with a lower trigger
        let rt = &mut self.agents[a];
        rt.active_trigger_pct = (rt.active_trigger_pct - self.config.defer_step_pct).max(self.config.defer_floor_pct);
        let leg = rt.leg.expect("leg");
        rt.leg = Some(Leg {
            target: leg.destination,
            station: None,
            ..leg
        });
        rt.agent.state = AgentState::Driving;
        false
    }

    fn plug_in(&mut self, a: usize, s: usize, now: f64) {
        let (power, capacity) = (self.stations[s].power_kw, self.agents[a].agent.battery_kwh);
        self.stations[s].occupied += 1;
        if self.stations[s].occupied > self.stations[s].plugs {
            self.plug_violations += 1;
        }
        let rt = &mut self.agents[a];
        let wanted = (rt.agent.target_pct / 100.0 * capacity - rt.agent.soc_kwh).max(0.0);
        let mut duration_s = wanted / power * SECONDS_PER_HOUR;
        let mut energy = wanted;
        if now + duration_s > self.horizon_s {
            duration_s = (self.horizon_s - now).max(0.0);
            energy = power * duration_s / SECONDS_PER_HOUR;
        }
        rt.agent.soc_kwh = (rt.agent.soc_kwh + energy).min(capacity);
        rt.m.max_soc_kwh = rt.m.max_soc_kwh.max(rt.agent.soc_kwh);
        rt.m.energy_charged_kwh += energy;
        rt.m.tau_charge_h += duration_s / SECONDS_PER_HOUR;
        rt.m.charge_events += 1;
        if let Some(ep) = rt.episode.as_mut() {
            ep.plugged_s += duration_s;
        }
        rt.agent.state = AgentState::Charging;
        rt.known_busy.clear();
        rt.tried.clear();
        self.push(now + duration_s, a, EventKind::ChargeDone(s));
    }

    fn finish_charge(&mut self, a: usize, s: usize, now: f64) -> Result<()> {
        self.stations[s].occupied -= 1;
        if let Some(next) = self.stations[s].waiting.pop_front() {
            self.plug_in(next, s, now);
        }
        let rt = &mut self.agents[a];
        let (trig, targ) = self.config.thresholds.sample(&mut rt.rng);
        rt.agent.threshold_pct = trig;
        rt.agent.target_pct = targ;
        rt.active_trigger_pct = trig;
        let leg = rt.leg.expect("charging agent has a leg");
        rt.leg = Some(Leg {
            target: leg.destination,
            station: None,
            ..leg
        });
        rt.agent.state = AgentState::Driving;
        self.advance(a, now)
    }

    fn arrive_at_destination(&mut self, a: usize, now: f64) {
        let rt = &mut self.agents[a];
        if let Some(ep) = rt.episode.take() {
            let extra_s = (now - ep.start_s - ep.plugged_s - ep.direct_s).max(0.0);
            rt.m.tau_search_h += extra_s / SECONDS_PER_HOUR;
            rt.m.detour_distance_km += (ep.driven_km - ep.direct_km).max(0.0);
        }
        rt.leg = None;
        rt.known_busy.clear();
        rt.tried.clear();
        rt.agent.state = AgentState::Parked;
        rt.m.trips_completed += 1;
        rt.next_trip += 1;
        if let Some(t) = rt.agent.schedule.get(rt.next_trip) {
            let at = t.depart_s.max(now);
            self.push(at, a, EventKind::TripStart);
        }
    }

    fn finish(mut self) -> SimMetrics {
        let h = self.horizon_s;
        let per_ev: Vec<EvMetrics> = self
            .agents
            .drain(..)
            .map(|mut rt| {
                if let Some(ep) = rt.episode.take() {
                    // detour cut by the horizon
                    let extra_s = (h - ep.start_s - ep.plugged_s - ep.direct_s).max(0.0);
                    rt.m.tau_search_h += extra_s / SECONDS_PER_HOUR;
                    rt.m.detour_distance_km += (ep.driven_km - ep.direct_km).max(0.0);
                }
                rt.m.soc_end_kwh = rt.agent.soc_kwh;
                rt.m.tau_e_h = rt.m.tau_search_h + rt.m.tau_charge_h;
                rt.m
            })
            .collect();
        SimMetrics::aggregate(per_ev, h / SECONDS_PER_HOUR, self.plug_violations)
    }
}
