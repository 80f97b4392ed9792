//! Per-vehicle and fleet measurements of a run.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvMetrics {
    pub ev_id: u64,
    pub tau_search_h: f64,
    pub tau_charge_h: f64,
    pub tau_e_h: f64,
    pub distance_km: f64,
    pub drive_time_h: f64,
    pub detour_distance_km: f64,
    pub charge_events: u32,
    pub failed_attempts: u32,
    pub stranded: u32,
    pub trips_completed: u32,
    pub energy_consumed_kwh: f64,
    pub energy_charged_kwh: f64,
    /// Energy drawn without a station (runs with charging disabled).
    pub external_energy_kwh: f64,
    pub soc_start_kwh: f64,
    pub soc_end_kwh: f64,
    pub min_soc_kwh: f64,
    pub max_soc_kwh: f64,
}

impl EvMetrics {
    /// charged + external - consumed - (end - start); zero up to rounding.
    pub fn energy_imbalance_kwh(&self) -> f64 {
        self.energy_charged_kwh + self.external_energy_kwh
            - self.energy_consumed_kwh
            - (self.soc_end_kwh - self.soc_start_kwh)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FleetSummary {
    pub n_ev: usize,
    pub horizon_h: f64,
    pub mean_tau_search_h: f64,
    pub mean_tau_charge_h: f64,
    pub mean_tau_e_h: f64,
    pub mean_distance_km: f64,
    pub mean_detour_distance_km: f64,
    /// Fleet energy over fleet distance; `None` when nobody moved.
    pub measured_eta_kwh_per_km: Option<f64>,
    /// Fleet distance over fleet driving time.
    pub measured_speed_kmh: Option<f64>,
    pub total_energy_consumed_kwh: f64,
    pub total_energy_charged_kwh: f64,
    pub total_external_energy_kwh: f64,
    pub total_soc_change_kwh: f64,
    pub charge_events: u64,
    pub failed_attempts: u64,
    pub stranded_events: u64,
    pub stranded_evs: u64,
    pub plug_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub per_ev: Vec<EvMetrics>,
    pub fleet: FleetSummary,
}

impl SimMetrics {
    pub fn aggregate(per_ev: Vec<EvMetrics>, horizon_h: f64, plug_violations: u64) -> Self {
        let n = per_ev.len();
        let mean = |f: &dyn Fn(&EvMetrics) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_ev.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let total = |f: &dyn Fn(&EvMetrics) -> f64| per_ev.iter().map(f).sum::<f64>();
        let distance = total(&|m| m.distance_km);
        let drive = total(&|m| m.drive_time_h);
        let consumed = total(&|m| m.energy_consumed_kwh);
        let fleet = FleetSummary {
            n_ev: n,
            horizon_h,
            mean_tau_search_h: mean(&|m| m.tau_search_h),
            mean_tau_charge_h: mean(&|m| m.tau_charge_h),
            mean_tau_e_h: mean(&|m| m.tau_e_h),
            mean_distance_km: mean(&|m| m.distance_km),
            mean_detour_distance_km: mean(&|m| m.detour_distance_km),
            measured_eta_kwh_per_km: (distance > 0.0).then(|| consumed / distance),
            measured_speed_kmh: (drive > 0.0).then(|| distance / drive),
            total_energy_consumed_kwh: consumed,
            total_energy_charged_kwh: total(&|m| m.energy_charged_kwh),
            total_external_energy_kwh: total(&|m| m.external_energy_kwh),
            total_soc_change_kwh: total(&|m| m.soc_end_kwh - m.soc_start_kwh),
            charge_events: per_ev.iter().map(|m| u64::from(m.charge_events)).sum(),
            failed_attempts: per_ev.iter().map(|m| u64::from(m.failed_attempts)).sum(),
            stranded_events: per_ev.iter().map(|m| u64::from(m.stranded)).sum(),
            stranded_evs: per_ev.iter().filter(|m| m.stranded > 0).count() as u64,
            plug_violations,
        };
        Self { per_ev, fleet }
    }

    /// Fleet-level energy balance residual, kWh.
    pub fn energy_imbalance_kwh(&self) -> f64 {
        let f = &self.fleet;
        f.total_energy_charged_kwh + f.total_external_energy_kwh - f.total_energy_consumed_kwh - f.total_soc_change_kwh
    }
}
