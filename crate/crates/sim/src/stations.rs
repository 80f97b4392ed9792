//! Charging stations and placement strategies.

use std::collections::HashSet;
use std::io::Read;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::network::RoadNetwork;
use crate::rng::{self, stream};

pub const DEFAULT_POWER_KW: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingStation {
    pub id: u64,
    /// External id of the node the station sits on.
    pub node: u64,
    pub power_kw: f64,
    pub plugs: u32,
    /// Plugs already taken when the run starts. They stay taken.
    #[serde(default)]
    pub occupied: u32,
}

impl ChargingStation {
    pub fn new(id: u64, node: u64, power_kw: f64) -> Self {
        Self {
            id,
            node,
            power_kw,
            plugs: 1,
            occupied: 0,
        }
    }

    pub fn validate(&self, net: &RoadNetwork) -> Result<()> {
        net.index_of(self.node)?;
        ensure_positive("power_kw", self.power_kw)?;
        if self.plugs == 0 {
            return Err(Error::Config(format!("station {} has no plugs", self.id)));
        }
        if self.occupied > self.plugs {
            return Err(Error::Config(format!(
                "station {} has {} occupied of {} plugs",
                self.id, self.occupied, self.plugs
            )));
        }
        Ok(())
    }
}

pub fn validate_stations(net: &RoadNetwork, stations: &[ChargingStation]) -> Result<()> {
    let mut ids = HashSet::new();
    for s in stations {
        s.validate(net)?;
        if !ids.insert(s.id) {
            return Err(Error::Config(format!("duplicate station id {}", s.id)));
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StationRow {
    id: u64,
    node_id: u64,
    power_kw: f64,
    plugs: u32,
}

/// Reads `id,node_id,power_kw,plugs`.
pub fn read_stations_csv<R: Read>(reader: R, net: &RoadNetwork, source_name: &str) -> Result<Vec<ChargingStation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let err = |line: u64, message: String| Error::Parse {
        source_name: source_name.to_string(),
        location: format!("line {line}"),
        message,
    };
    let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let want = ["id", "node_id", "power_kw", "plugs"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(err(1, format!("expected header `{}`", want.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: StationRow = rec.deserialize(Some(&headers)).map_err(|e| err(line, e.to_string()))?;
        let station = ChargingStation {
            id: row.id,
            node: row.node_id,
            power_kw: row.power_kw,
            plugs: row.plugs,
            occupied: 0,
        };
        station.validate(net).map_err(|e| err(line, e.to_string()))?;
        out.push(station);
    }
    validate_stations(net, &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Greedy farthest-point spread, starting near the centroid.
    Uniform,
    /// Packed along the first road row, starting at the corner node.
    Concentrated,
    /// Uniformly random distinct nodes.
    Random,
}

/// The first `count` node indices in placement order. Orders for a smaller
/// count are prefixes of orders for a larger one.
pub fn placement_order(net: &RoadNetwork, placement: Placement, count: usize, seed: u64) -> Vec<usize> {
    let n = net.node_count();
    let mut order = match placement {
        Placement::Uniform => return greedy_median_order(net, count.min(n)),
        Placement::Concentrated => {
            // sort by (y, x): first the bottom row from its left corner, then
            // the next row, and so on
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                let (p, q) = (net.node(a), net.node(b));
                p.y_km
                    .total_cmp(&q.y_km)
                    .then(p.x_km.total_cmp(&q.x_km))
                    .then(p.id.cmp(&q.id))
            });
            order
        }
        Placement::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut stream(seed, &[rng::PLACEMENT]));
            order
        }
    };
    order.truncate(count);
    order
}

/// Greedy p-median: each new station goes where it most reduces the summed
/// straight-line distance from every node to its nearest station.
fn greedy_median_order(net: &RoadNetwork, count: usize) -> Vec<usize> {
    let n = net.node_count();
    let mut nearest = vec![f64::INFINITY; n];
    let mut used = vec![false; n];
    let mut order = Vec::with_capacity(count);
    while order.len() < count {
        let total_with = |c: usize| -> f64 { (0..n).map(|j| nearest[j].min(net.euclidean_km(c, j))).sum() };
        let mut best: Option<(f64, usize)> = None;
        for c in (0..n).filter(|&c| !used[c]) {
            let t = total_with(c);
            // strictly better, or equal within rounding and a smaller id
            let better = match best {
                None => true,
                Some((bt, b)) => t < bt - 1e-9 || (t <= bt + 1e-9 && net.node(c).id < net.node(b).id),
            };
            if better {
                best = Some((t, c));
            }
        }
        let (_, next) = best.expect("unused node left");
        used[next] = true;
        order.push(next);
        for (j, d) in nearest.iter_mut().enumerate() {
            *d = d.min(net.euclidean_km(next, j));
        }
    }
    order
}

/// `count` single-plug stations at the first `count` nodes of `placement`.
pub fn place_stations(
    net: &RoadNetwork,
    count: u32,
    placement: Placement,
    power_kw: f64,
    plugs: u32,
    seed: u64,
) -> Result<Vec<ChargingStation>> {
    if count as usize > net.node_count() {
        return Err(Error::Config(format!(
            "{count} stations requested but the network has {} nodes",
            net.node_count()
        )));
    }
    let stations: Vec<ChargingStation> = placement_order(net, placement, count as usize, seed)
        .into_iter()
        .take(count as usize)
        .enumerate()
        .map(|(k, node)| ChargingStation {
            id: k as u64,
            node: net.node(node).id,
            power_kw,
            plugs,
            occupied: 0,
        })
        .collect();
    validate_stations(net, &stations)?;
    Ok(stations)
}
