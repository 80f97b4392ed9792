//! Desk-scale mobility and charging simulator.
//!
//! Vehicles follow synthetic (or file-supplied) daily trips on a road
//! network, recharge at public stations when their battery runs low, and
//! record the time lost to charging and to searching for a free plug.

pub mod analysis;
pub mod demand;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod routing;
pub mod scenario;
pub mod stations;

pub use analysis::{extract_analytic_inputs, AnalyticInputs};
pub use demand::{calibrate_demand, generate_demand, read_trips_csv, AgentPlan, DemandProfile, Trip, TripPurpose};
pub use engine::{run_simulation, spawn_agents, AgentState, EvAgent, InitialSoc, SimConfig, ThresholdModel};
pub use error::{Error, Result};
pub use metrics::{EvMetrics, FleetSummary, SimMetrics};
pub use network::{generate_grid_network, load_network, parse_network, RoadNetwork};
pub use routing::{shortest_path, Metric, Route};
pub use scenario::{run_scenario, run_single, ScenarioKind, ScenarioOutput, SimulationConfig, SweepRow, World};
pub use stations::{place_stations, read_stations_csv, ChargingStation, Placement};
