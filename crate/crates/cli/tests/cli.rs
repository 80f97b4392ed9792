use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

struct Run {
    code: i32,
    stderr: String,
}

fn evcap(cmd: &str, config: &Path, extra: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_evcap"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .args(extra)
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn write_config(dir: &TempDir, name: &str, value: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

/// Rows of a CSV written by the tool, keyed by column name.
fn table(path: &Path) -> Vec<HashMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

fn num(row: &HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key} = {:?}", row[key]))
}

fn paris_spec() -> Value {
    json!({
        "driver": { "distance_km": 6935.0, "eta": 0.173, "sigma": 0.7, "speed_kmh": 32.1 },
        "env": { "rho": 0.476, "xi": 0.0685, "power_kw": 20.0 }
    })
}

#[test]
fn analyze_defaults_give_a_decreasing_capacity_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "a.json", &json!({ "output_dir": "out", "analyze": {} }));
    let run = evcap("analyze", &cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = table(&dir.path().join("out/analyze.csv"));
    let battery: Vec<f64> = rows.iter().filter(|r| r["parameter"] == "battery").map(|r| num(r, "tau_e_h")).collect();
    assert_eq!(battery.len(), 50);
    assert!(battery.windows(2).all(|w| w[1] < w[0]));
    // all eight parameters are swept by default
    let mut params: Vec<&str> = rows.iter().map(|r| r["parameter"].as_str()).collect();
    params.dedup();
    assert_eq!(params.len(), 8);
    let text = std::fs::read_to_string(dir.path().join("out/analyze.csv")).unwrap();
    assert!(text.starts_with("# seed=0\n# config={"));
}

#[test]
fn analyze_zero_distance_gives_zero_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "a.json",
        &json!({
            "output_dir": "out",
            "analyze": {
                "base": {
                    "battery_kwh": 20.0,
                    "profile": { "distance_km": 0.0, "eta": 0.2, "sigma": 0.6, "speed_kmh": 10.0 },
                    "env": { "rho": 1.0, "xi": 0.1, "power_kw": 50.0 }
                },
                "sweeps": [{ "parameter": "battery", "steps": 10 }]
            }
        }),
    );
    assert_eq!(evcap("analyze", &cfg, &[]).code, 0);
    let rows = table(&dir.path().join("out/analyze.csv"));
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| num(r, "tau_e_h") == 0.0));
}

#[test]
fn analyze_full_utilization_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "a.json",
        &json!({
            "output_dir": "out",
            "analyze": {
                "base": {
                    "battery_kwh": 20.0,
                    "profile": { "distance_km": 10000.0, "eta": 0.2, "sigma": 0.6, "speed_kmh": 10.0 },
                    "env": { "rho": 1.0, "xi": 1.0, "power_kw": 50.0 }
                }
            }
        }),
    );
    let run = evcap("analyze", &cfg, &[]);
    assert_eq!(run.code, 3);
    assert!(run.stderr.contains("utilization"), "{}", run.stderr);
}

#[test]
fn analyze_derives_utilization_from_fleet() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "a.json",
        &json!({
            "output_dir": "out",
            "format": "json",
            "analyze": {
                "base": {
                    "battery_kwh": 40.0,
                    "profile": { "distance_km": 1185.0, "eta": 0.085, "sigma": 0.7, "speed_kmh": 42.4 },
                    "env": { "rho": 0.03, "xi": 0.0, "power_kw": 20.0 }
                },
                "fleet": { "n_ev": 50, "n_cs": 10, "horizon_days": 30.0 },
                "sweeps": []
            }
        }),
    );
    assert_eq!(evcap("analyze", &cfg, &[]).code, 0);
    assert!(!dir.path().join("out/analyze.csv").exists());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/analyze.json")).unwrap()).unwrap();
    let xi = doc["result"]["base"]["env"]["xi"].as_f64().unwrap();
    // 50 * 1185 * 0.085 / (10 * 720 * 20)
    assert!((xi - 0.034_973_958).abs() < 1e-8);
    assert_eq!(doc["command"], "analyze");
}

#[test]
fn unknown_keys_and_missing_blocks_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "a.json", &json!({ "analyze": {}, "colour": "blue" }));
    let run = evcap("analyze", &cfg, &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("colour"), "{}", run.stderr);

    let cfg = write_config(&dir, "b.json", &json!({ "analyze": { "base": { "battery_kwh": 1.0 } } }));
    let run = evcap("analyze", &cfg, &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("profile"), "{}", run.stderr);

    let cfg = write_config(&dir, "c.json", &json!({ "analyze": {} }));
    let run = evcap("optimize", &cfg, &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("optimize"), "{}", run.stderr);

    let run = evcap("analyze", &dir.path().join("absent.json"), &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("absent.json"));
}

fn small_sim(scenario: &str) -> Value {
    json!({
        "network": { "kind": "grid", "blocks_per_side": 6, "area_km2": 144.0 },
        "stations": { "kind": "generated", "count": 4 },
        "n_ev": 12,
        "demand": { "days": 2 },
        "battery_kwh": 20.0,
        "replications": 2,
        "scenario": scenario,
        "capacities_kwh": [10.0, 20.0, 40.0]
    })
}

#[test]
fn simulate_single_run_writes_metrics_with_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "s.json", &json!({ "output_dir": "out", "simulate": small_sim("single") }));
    let run = evcap("simulate", &cfg, &["--seed", "42"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let text = std::fs::read_to_string(dir.path().join("out/simulate.csv")).unwrap();
    assert!(text.starts_with("# seed=42\n"));
    let rows = table(&dir.path().join("out/simulate.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["seed"], "42");
    let per_ev = table(&dir.path().join("out/simulate_ev.csv"));
    assert_eq!(per_ev.len(), 12);
    for ev in &per_ev {
        let parts = num(ev, "tau_search_h") + num(ev, "tau_charge_h");
        assert_eq!(num(ev, "tau_e_h"), parts);
    }
}

#[test]
fn simulate_missing_stations_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = small_sim("single");
    sim["stations"] = json!({ "kind": "file", "path": "stations/missing.csv" });
    let cfg = write_config(&dir, "s.json", &json!({ "output_dir": "out", "simulate": sim }));
    let run = evcap("simulate", &cfg, &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("stations/missing.csv"), "{}", run.stderr);
}

#[test]
fn simulate_unreachable_distance_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = small_sim("single");
    sim["target_daily_km"] = json!(10_000.0);
    let cfg = write_config(&dir, "s.json", &json!({ "output_dir": "out", "simulate": sim }));
    let run = evcap("simulate", &cfg, &[]);
    assert_eq!(run.code, 4, "{}", run.stderr);
    assert!(run.stderr.contains("calibration"), "{}", run.stderr);
}

#[test]
fn optimize_reports_below_market_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "o.json",
        &json!({ "output_dir": "out", "format": "both", "optimize": { "spec": paris_spec() } }),
    );
    assert_eq!(evcap("optimize", &cfg, &[]).code, 0);
    let rows = table(&dir.path().join("out/optimize.csv"));
    let b = num(&rows[0], "b_opt");
    assert!(b < 47.78 && b > 1.0, "{b}");
    let total = num(&rows[0], "total_cost");
    assert!((total - num(&rows[0], "c_p") - num(&rows[0], "c_e")).abs() <= 1e-9 * total);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/optimize.json")).unwrap()).unwrap();
    assert_eq!(doc["result"]["source"], "analytic");
    assert!(doc["result"]["feasibility_boundary_kwh"].as_f64().unwrap() < b);
}

#[test]
fn optimize_without_time_value_picks_the_smallest_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = paris_spec();
    spec["cost"] = json!({ "mu": 0.0 });
    spec["search_range"] = json!([5.0, 150.0]);
    let cfg = write_config(&dir, "o.json", &json!({ "output_dir": "out", "optimize": { "spec": spec } }));
    assert_eq!(evcap("optimize", &cfg, &[]).code, 0);
    let rows = table(&dir.path().join("out/optimize.csv"));
    assert_eq!(num(&rows[0], "b_opt"), 5.0);
}

#[test]
fn homogeneous_population_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "o.json",
        &json!({
            "output_dir": "out",
            "format": "both",
            "optimize": { "spec": paris_spec(), "population": [{}, {}, {}, {}] }
        }),
    );
    assert_eq!(evcap("optimize", &cfg, &[]).code, 0);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/optimize.json")).unwrap()).unwrap();
    assert_eq!(doc["result"]["iqr_b"].as_f64().unwrap(), 0.0);
    let rows = table(&dir.path().join("out/optimize.csv"));
    assert_eq!(rows.len(), 4);
    let mean = doc["result"]["mean_b"].as_f64().unwrap();
    assert!((mean - num(&rows[0], "b_opt")).abs() < 1e-12);
}

#[test]
fn population_with_one_infeasible_driver_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = paris_spec();
    spec["search_range"] = json!([2.0, 150.0]);
    let cfg = write_config(
        &dir,
        "o.json",
        &json!({
            "output_dir": "out",
            "optimize": { "spec": spec, "population": [{}, { "eta": 200.0 }] }
        }),
    );
    // the second driver needs more than 150 kWh just to reach a station
    let run = evcap("optimize", &cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = table(&dir.path().join("out/optimize.csv"));
    assert_eq!(rows.len(), 2);
    assert!(!rows[0]["b_opt"].is_empty() && rows[0]["error"].is_empty());
    assert!(rows[1]["b_opt"].is_empty() && !rows[1]["error"].is_empty());
}

#[test]
fn all_infeasible_range_exits_with_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = paris_spec();
    spec["driver"]["eta"] = json!(10.0);
    spec["search_range"] = json!([1.0, 2.0]);
    let cfg = write_config(&dir, "o.json", &json!({ "output_dir": "out", "optimize": { "spec": spec } }));
    let run = evcap("optimize", &cfg, &[]);
    assert_eq!(run.code, 3, "{}", run.stderr);
}

#[test]
fn optimize_from_simulated_lookup() {
    let dir = tempfile::tempdir().unwrap();
    let sim_cfg = write_config(
        &dir,
        "s.json",
        &json!({ "output_dir": "sim", "simulate": small_sim("capacity_sweep") }),
    );
    assert_eq!(evcap("simulate", &sim_cfg, &[]).code, 0);
    assert_eq!(table(&dir.path().join("sim/simulate.csv")).len(), 3);

    let mut spec = paris_spec();
    spec["search_range"] = json!([15.0, 150.0]);
    let cfg = write_config(
        &dir,
        "o.json",
        &json!({
            "output_dir": "opt",
            "format": "both",
            "optimize": { "spec": spec, "lookup": "sim/simulate.csv" }
        }),
    );
    let run = evcap("optimize", &cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("opt/optimize.json")).unwrap()).unwrap();
    assert_eq!(doc["result"]["source"], "simulated_lookup");
    let b = doc["result"]["drivers"][0]["b_opt"].as_f64().unwrap();
    assert!((15.0..=150.0).contains(&b));

    // a single run is not a capacity sweep
    let single = write_config(&dir, "s1.json", &json!({ "output_dir": "one", "simulate": small_sim("single") }));
    assert_eq!(evcap("simulate", &single, &[]).code, 0);
    let cfg = write_config(
        &dir,
        "o2.json",
        &json!({ "output_dir": "opt2", "optimize": { "spec": paris_spec(), "lookup": "one/simulate.csv" } }),
    );
    let run = evcap("optimize", &cfg, &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("capacity_sweep"), "{}", run.stderr);
}

#[test]
fn whatif_density_column_is_monotone_and_flags_bad_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "w.json",
        &json!({
            "output_dir": "out",
            "whatif": {
                "spec": paris_spec(),
                "rho": [0.119, 0.238, 0.476, 0.952, 1.904],
                "power_kw": [10.0, 20.0, 40.0, -1.0]
            }
        }),
    );
    let run = evcap("whatif", &cfg, &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let rows = table(&dir.path().join("out/whatif.csv"));
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().filter(|r| r["power_kw"] == "-1.0").all(|r| !r["error"].is_empty() && r["b_opt"].is_empty()));
    let at_20: Vec<f64> = rows.iter().filter(|r| r["power_kw"] == "20.0").map(|r| num(r, "b_opt")).collect();
    assert!(at_20.windows(2).all(|w| w[1] <= w[0]), "{at_20:?}");
    let by_power: Vec<f64> = rows
        .iter()
        .filter(|r| r["rho"] == "0.476" && r["error"].is_empty())
        .map(|r| num(r, "b_opt"))
        .collect();
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread(&by_power) < spread(&at_20));
}

#[test]
fn whatif_single_cell_matches_optimize() {
    let dir = tempfile::tempdir().unwrap();
    let w = write_config(&dir, "w.json", &json!({ "output_dir": "w", "whatif": { "spec": paris_spec() } }));
    let o = write_config(&dir, "o.json", &json!({ "output_dir": "o", "optimize": { "spec": paris_spec() } }));
    assert_eq!(evcap("whatif", &w, &[]).code, 0);
    assert_eq!(evcap("optimize", &o, &[]).code, 0);
    let cell = table(&dir.path().join("w/whatif.csv"));
    let opt = table(&dir.path().join("o/optimize.csv"));
    assert_eq!(cell.len(), 1);
    for key in ["b_opt", "total_cost", "c_p", "c_e"] {
        assert_eq!(cell[0][key], opt[0][key], "{key}");
    }
}

#[test]
fn whatif_with_every_cell_failing_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = paris_spec();
    spec["driver"]["eta"] = json!(10.0);
    spec["search_range"] = json!([1.0, 2.0]);
    let cfg = write_config(&dir, "w.json", &json!({ "output_dir": "out", "whatif": { "spec": spec, "rho": [0.2, 0.4] } }));
    assert_eq!(evcap("whatif", &cfg, &[]).code, 3);
}

fn price_file(dir: &TempDir, name: &str, rows: &[(f64, f64)]) -> String {
    let mut text = String::from("battery_kwh,price_eur\n");
    for (b, p) in rows {
        text.push_str(&format!("{b},{p}\n"));
    }
    std::fs::write(dir.path().join(name), text).unwrap();
    name.to_string()
}

fn quadratic(b: f64) -> f64 {
    5.113 * b * b + 84.871 * b + 26_316.599
}

#[test]
fn fit_prices_recovers_exact_quadratic() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<(f64, f64)> = (1..=20).map(|k| (5.0 * f64::from(k), quadratic(5.0 * f64::from(k)))).collect();
    let path = price_file(&dir, "p.csv", &rows);
    let cfg = write_config(&dir, "f.json", &json!({ "output_dir": "out", "fit_prices": { "path": path } }));
    assert_eq!(evcap("fit-prices", &cfg, &[]).code, 0);
    let fit = &table(&dir.path().join("out/fit_prices.csv"))[0];
    assert!((num(fit, "a2") - 5.113).abs() < 1e-6);
    assert!((num(fit, "a1") - 84.871).abs() < 1e-4);
    assert!((num(fit, "a0") - 26_316.599).abs() < 1e-3);
    assert_eq!(fit["kept"], "20");
    assert_eq!(fit["removed"], "0");
}

#[test]
fn fit_prices_drops_one_extreme_outlier() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows: Vec<(f64, f64)> = (1..=20).map(|k| (5.0 * f64::from(k), quadratic(5.0 * f64::from(k)))).collect();
    rows.push((50.0, 1.0e6));
    let path = price_file(&dir, "p.csv", &rows);
    let cfg = write_config(&dir, "f.json", &json!({ "output_dir": "out", "fit_prices": { "path": path } }));
    assert_eq!(evcap("fit-prices", &cfg, &[]).code, 0);
    let fit = &table(&dir.path().join("out/fit_prices.csv"))[0];
    assert_eq!(fit["removed"], "1");
    assert_eq!(fit["kept"], "20");
}

#[test]
fn fit_prices_input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "battery_kwh,price_eur\n").unwrap();
    let cfg = write_config(&dir, "e.json", &json!({ "output_dir": "out", "fit_prices": { "path": "empty.csv" } }));
    let run = evcap("fit-prices", &cfg, &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("empty"), "{}", run.stderr);

    std::fs::write(dir.path().join("bad.csv"), "battery_kwh,price_eur\n40,30000\n50,abc\n").unwrap();
    let cfg = write_config(&dir, "b.json", &json!({ "output_dir": "out", "fit_prices": { "path": "bad.csv" } }));
    let run = evcap("fit-prices", &cfg, &[]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("line 3"), "{}", run.stderr);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "s.json",
        &json!({ "output_dir": "out", "format": "both", "simulate": small_sim("capacity_sweep") }),
    );
    assert_eq!(evcap("simulate", &cfg, &[]).code, 0);
    let csv = std::fs::read(dir.path().join("out/simulate.csv")).unwrap();
    let json = std::fs::read(dir.path().join("out/simulate.json")).unwrap();
    assert_eq!(evcap("simulate", &cfg, &[]).code, 0);
    assert_eq!(std::fs::read(dir.path().join("out/simulate.csv")).unwrap(), csv);
    assert_eq!(std::fs::read(dir.path().join("out/simulate.json")).unwrap(), json);
    assert_eq!(evcap("simulate", &cfg, &["--seed", "1"]).code, 0);
    assert_ne!(std::fs::read(dir.path().join("out/simulate.csv")).unwrap(), csv);
}
