use evcap_sim::demand::{AgentPlan, Trip, TripPurpose};
use evcap_sim::{
    generate_demand, generate_grid_network, run_simulation, spawn_agents, ChargingStation, DemandProfile, InitialSoc,
    SimConfig, SimMetrics, ThresholdModel,
};
use proptest::prelude::*;

fn one_trip(ev_id: u64, origin: u64, destination: u64) -> AgentPlan {
    AgentPlan {
        ev_id,
        home: None,
        work: None,
        trips: vec![Trip {
            depart_s: 3600.0,
            origin,
            destination,
            purpose: TripPurpose::Scheduled,
        }],
    }
}

fn fixed(trigger: f64, target: f64, soc: InitialSoc, battery: f64, eta: f64) -> SimConfig {
    SimConfig {
        seed: 1,
        horizon_days: 1.0,
        battery_kwh: battery,
        eta_kwh_per_km: eta,
        thresholds: ThresholdModel::Fixed {
            trigger_pct: trigger,
            target_pct: target,
        },
        initial_soc: soc,
        ..SimConfig::default()
    }
}

fn assert_invariants(m: &SimMetrics, battery: f64) {
    assert_eq!(m.fleet.plug_violations, 0);
    assert!(m.energy_imbalance_kwh().abs() <= 1e-6, "fleet imbalance {}", m.energy_imbalance_kwh());
    for ev in &m.per_ev {
        assert_eq!(ev.tau_e_h, ev.tau_search_h + ev.tau_charge_h);
        assert!(ev.energy_imbalance_kwh().abs() <= 1e-6, "EV {}", ev.ev_id);
        assert!(ev.min_soc_kwh >= 0.0, "EV {} went to {}", ev.ev_id, ev.min_soc_kwh);
        assert!(ev.max_soc_kwh <= battery + 1e-9);
        assert!(ev.tau_search_h >= 0.0 && ev.tau_charge_h >= 0.0);
    }
}

#[test]
fn short_trip_on_full_battery_has_no_inconvenience() {
    let net = generate_grid_network(2, 4.0, 50.0).unwrap();
    let st = vec![ChargingStation::new(0, 4, 20.0)];
    let cfg = fixed(20.0, 80.0, InitialSoc::Full, 40.0, 0.2);
    let m = run_simulation(&net, &st, &[one_trip(0, 0, 8)], &cfg).unwrap();
    let ev = &m.per_ev[0];
    assert_eq!(ev.tau_e_h, 0.0);
    assert_eq!(ev.charge_events, 0);
    assert_eq!(ev.trips_completed, 1);
    assert!((ev.distance_km - 4.0).abs() < 1e-12);
    assert!((ev.energy_consumed_kwh - 0.8).abs() < 1e-12);
    assert_invariants(&m, 40.0);
}

#[test]
fn detour_on_single_block_matches_hand_computation() {
    // 1 block of 2 km side; nodes 0 (0,0), 1 (2,0), 2 (0,2), 3 (2,2).
    // Trip 0 -> 1 with the only station on node 2. The driver starts under the
    // trigger, so it deviates at node 0: 0 -> 2 (one block), charge, then
    // 2 -> 1 (two blocks). The direct route is one block.
    let (side, speed, battery, eta, power) = (2.0, 40.0, 40.0, 0.2, 20.0);
    let net = generate_grid_network(1, side * side, speed).unwrap();
    let st = vec![ChargingStation::new(7, 2, power)];
    let cfg = fixed(20.0, 80.0, InitialSoc::Fixed { pct: 10.0 }, battery, eta);
    let m = run_simulation(&net, &st, &[one_trip(0, 0, 1)], &cfg).unwrap();
    let ev = &m.per_ev[0];

    let tau_search = (side + 2.0 * side - side) / speed;
    let soc_at_plug_pct = 100.0 * (0.10 * battery - eta * side) / battery;
    let tau_charge = (80.0 - soc_at_plug_pct) * battery / (100.0 * power);
    assert!((ev.tau_search_h - tau_search).abs() < 1e-9, "{} vs {tau_search}", ev.tau_search_h);
    assert!((ev.tau_charge_h - tau_charge).abs() < 1e-9, "{} vs {tau_charge}", ev.tau_charge_h);
    assert_eq!(ev.charge_events, 1);
    assert_eq!(ev.failed_attempts, 0);
    assert!((ev.detour_distance_km - 2.0 * side).abs() < 1e-9);
    assert!((ev.distance_km - 3.0 * side).abs() < 1e-9);
    assert!((ev.soc_end_kwh - (0.8 * battery - 2.0 * side * eta)).abs() < 1e-9);
    assert_invariants(&m, battery);
}

#[test]
fn busy_station_sends_driver_to_the_next_one() {
    // 2x2 blocks, 1 km spacing. Trip 0 -> 2 along the bottom row.
    // Station A on node 3 (1 km away) has its only plug taken for good;
    // station B on node 4 is next-nearest from A; station C on node 8 is
    // farther. With redirect probability 1 the driver goes A -> B.
    let net = generate_grid_network(2, 4.0, 50.0).unwrap();
    let mut a = ChargingStation::new(1, 3, 20.0);
    a.occupied = 1;
    let st = vec![a, ChargingStation::new(2, 4, 20.0), ChargingStation::new(3, 8, 20.0)];
    let mut cfg = fixed(20.0, 80.0, InitialSoc::Fixed { pct: 10.0 }, 40.0, 0.2);
    cfg.redirect_probability = 1.0;
    let m = run_simulation(&net, &st, &[one_trip(0, 0, 2)], &cfg).unwrap();
    let ev = &m.per_ev[0];
    assert_eq!(ev.failed_attempts, 1);
    assert_eq!(ev.charge_events, 1);
    // 0 -> 3 -> 4 -> 2 is 1 + 1 + 2 km against a direct 2 km
    assert!((ev.distance_km - 4.0).abs() < 1e-9);
    assert!((ev.detour_distance_km - 2.0).abs() < 1e-9);
    assert!((ev.tau_search_h - 2.0 / 50.0).abs() < 1e-9);
    assert_invariants(&m, 40.0);
}

#[test]
fn without_redirect_the_driver_defers_and_keeps_going() {
    let net = generate_grid_network(2, 4.0, 50.0).unwrap();
    let mut a = ChargingStation::new(1, 3, 20.0);
    a.occupied = 1;
    let st = vec![a, ChargingStation::new(2, 8, 20.0)];
    // trigger 12 %, deferral lowers it to 7 %; the vehicle sits at 10 %
    let mut cfg = fixed(12.0, 80.0, InitialSoc::Fixed { pct: 10.0 }, 40.0, 0.2);
    cfg.redirect_probability = 0.0;
    let m = run_simulation(&net, &st, &[one_trip(0, 0, 2)], &cfg).unwrap();
    let ev = &m.per_ev[0];
    assert_eq!(ev.failed_attempts, 1);
    assert_eq!(ev.charge_events, 0);
    assert_eq!(ev.trips_completed, 1);
    // 0 -> 3 -> 0 -> 1 -> 2 (or equivalent): 4 km against 2 km direct
    assert!((ev.distance_km - 4.0).abs() < 1e-9);
    assert!((ev.tau_search_h - 2.0 / 50.0).abs() < 1e-9);
    assert_invariants(&m, 40.0);
}

#[test]
fn empty_battery_is_towed_and_flagged() {
    let net = generate_grid_network(2, 4.0, 50.0).unwrap();
    let st = vec![ChargingStation::new(0, 8, 20.0)];
    let cfg = fixed(20.0, 80.0, InitialSoc::Fixed { pct: 0.0 }, 40.0, 0.2);
    let m = run_simulation(&net, &st, &[one_trip(0, 0, 2)], &cfg).unwrap();
    let ev = &m.per_ev[0];
    assert!(ev.stranded >= 1);
    assert_eq!(m.fleet.stranded_evs, 1);
    // towed to the station it was heading for, charged, then drove on
    assert_eq!(ev.charge_events, 1);
    assert_eq!(ev.trips_completed, 1);
    assert_invariants(&m, 40.0);
}

#[test]
fn stuck_vehicle_waits_for_the_plug() {
    // Two empty vehicles reach the same single-plug station; the second one
    // cannot move and waits for the first to finish.
    let net = generate_grid_network(1, 1.0, 50.0).unwrap();
    let st = vec![ChargingStation::new(0, 0, 10.0)];
    let cfg = fixed(20.0, 50.0, InitialSoc::Fixed { pct: 0.0 }, 10.0, 0.2);
    let plans = vec![one_trip(0, 0, 3), one_trip(1, 0, 3)];
    let m = run_simulation(&net, &st, &plans, &cfg).unwrap();
    let (first, second) = (&m.per_ev[0], &m.per_ev[1]);
    assert_eq!(first.charge_events, 1);
    assert_eq!(second.charge_events, 1);
    assert_eq!(second.failed_attempts, 1);
    // 5 kWh at 10 kW: half an hour each; the second waits the first half hour
    assert!((first.tau_charge_h - 0.5).abs() < 1e-9);
    assert!((second.tau_search_h - first.tau_search_h - 0.5).abs() < 1e-9);
    assert_invariants(&m, 10.0);
}

#[test]
fn baseline_without_charging_draws_external_energy() {
    let net = generate_grid_network(4, 16.0, 30.0).unwrap();
    let plans = generate_demand(&net, 10, &DemandProfile { days: 2, ..Default::default() }, 4).unwrap();
    let cfg = SimConfig {
        charging_enabled: false,
        horizon_days: 2.0,
        eta_kwh_per_km: 0.15,
        ..SimConfig::default()
    };
    let m = run_simulation(&net, &[], &plans, &cfg).unwrap();
    assert_eq!(m.fleet.charge_events, 0);
    assert_eq!(m.fleet.mean_tau_e_h, 0.0);
    assert!((m.fleet.total_external_energy_kwh - m.fleet.total_energy_consumed_kwh).abs() < 1e-9);
    assert!((m.fleet.measured_eta_kwh_per_km.unwrap() - 0.15).abs() < 1e-12);
    assert!((m.fleet.measured_speed_kmh.unwrap() - 30.0).abs() < 1e-9);
    assert_invariants(&m, cfg.battery_kwh);
}

#[test]
fn charging_without_stations_is_rejected() {
    let net = generate_grid_network(1, 1.0, 50.0).unwrap();
    assert!(run_simulation(&net, &[], &[one_trip(0, 0, 3)], &SimConfig::default()).is_err());
}

#[test]
fn bad_inputs_are_rejected_before_running() {
    let net = generate_grid_network(1, 1.0, 50.0).unwrap();
    let st = vec![ChargingStation::new(0, 0, 20.0)];
    let mut over = st.clone();
    over[0].occupied = 2;
    assert!(run_simulation(&net, &over, &[one_trip(0, 0, 3)], &SimConfig::default()).is_err());
    assert!(run_simulation(&net, &st, &[one_trip(0, 0, 0)], &SimConfig::default()).is_err());
    assert!(run_simulation(&net, &st, &[one_trip(0, 0, 99)], &SimConfig::default()).is_err());
    let dup = vec![one_trip(3, 0, 1), one_trip(3, 1, 0)];
    assert!(run_simulation(&net, &st, &dup, &SimConfig::default()).is_err());
    let bad = SimConfig {
        redirect_probability: 1.5,
        ..SimConfig::default()
    };
    assert!(run_simulation(&net, &st, &[one_trip(0, 0, 3)], &bad).is_err());
}

#[test]
fn spawned_thresholds_are_ordered_and_soc_in_range() {
    let net = generate_grid_network(10, 400.0, 50.0).unwrap();
    let plans = generate_demand(&net, 200, &DemandProfile::default(), 8).unwrap();
    let agents = spawn_agents(&plans, &SimConfig::default()).unwrap();
    for a in &agents {
        assert!(a.threshold_pct >= 1.0 && a.threshold_pct < a.target_pct && a.target_pct <= 100.0);
        let pct = 100.0 * a.soc_kwh / a.battery_kwh;
        assert!(pct >= a.threshold_pct - 1e-9 && pct <= a.target_pct + 1e-9);
    }
    let mean_trigger = agents.iter().map(|a| a.threshold_pct).sum::<f64>() / agents.len() as f64;
    let mean_target = agents.iter().map(|a| a.target_pct).sum::<f64>() / agents.len() as f64;
    // Gamma(4, 5) and Gamma(85, 1) means, with generous sampling slack
    assert!((mean_trigger - 20.0).abs() < 2.0, "{mean_trigger}");
    assert!((mean_target - 85.0).abs() < 2.0, "{mean_target}");
}

fn fleet_run(seed: u64, n_ev: u32, battery: f64, stations: u32, days: u32) -> SimMetrics {
    let net = generate_grid_network(6, 144.0, 40.0).unwrap();
    let st = evcap_sim::place_stations(&net, stations, evcap_sim::Placement::Uniform, 11.0, 1, seed).unwrap();
    let profile = DemandProfile {
        days,
        errand_rate_per_day: 1.5,
        ..Default::default()
    };
    let plans = generate_demand(&net, n_ev, &profile, seed).unwrap();
    let cfg = SimConfig {
        seed,
        horizon_days: f64::from(days),
        battery_kwh: battery,
        eta_kwh_per_km: 0.2,
        ..SimConfig::default()
    };
    run_simulation(&net, &st, &plans, &cfg).unwrap()
}

#[test]
fn identical_seed_gives_identical_metrics() {
    let a = fleet_run(5, 30, 15.0, 3, 3);
    let b = fleet_run(5, 30, 15.0, 3, 3);
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(a, fleet_run(6, 30, 15.0, 3, 3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accounting_and_bounds_hold(
        seed in 0u64..1_000,
        n_ev in 1u32..25,
        battery in 4.0f64..80.0,
        stations in 1u32..6,
        days in 1u32..4,
    ) {
        let m = fleet_run(seed, n_ev, battery, stations, days);
        prop_assert_eq!(m.fleet.plug_violations, 0);
        prop_assert!(m.energy_imbalance_kwh().abs() <= 1e-6);
        for ev in &m.per_ev {
            prop_assert_eq!(ev.tau_e_h, ev.tau_search_h + ev.tau_charge_h);
            prop_assert!(ev.energy_imbalance_kwh().abs() <= 1e-6);
            prop_assert!(ev.min_soc_kwh >= 0.0);
            prop_assert!(ev.max_soc_kwh <= battery + 1e-9);
        }
    }
}
