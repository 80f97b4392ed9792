//! Directed road network with planar node coordinates.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

pub const DEFAULT_SPEED_KMH: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u64,
    pub x_km: f64,
    pub y_km: f64,
}

/// Directed edge between two node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: u64,
    pub from: usize,
    pub to: usize,
    pub length_km: f64,
    pub speed_kmh: f64,
}

impl Edge {
    pub fn travel_time_h(&self) -> f64 {
        self.length_km / self.speed_kmh
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    index: HashMap<u64, usize>,
    area_km2: f64,
}

impl RoadNetwork {
    /// Builds and validates a network. Edge endpoints are node indices.
    /// `area_km2` defaults to the bounding box of the nodes.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, area_km2: Option<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Config("network has no nodes".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !(n.x_km.is_finite() && n.y_km.is_finite()) {
                return Err(Error::Config(format!("node {} has non-finite coordinates", n.id)));
            }
            if index.insert(n.id, i).is_some() {
                return Err(Error::Config(format!("duplicate node id {}", n.id)));
            }
        }
        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for (k, e) in edges.iter().enumerate() {
            if e.from >= nodes.len() || e.to >= nodes.len() {
                return Err(Error::Config(format!("edge {} has an endpoint out of range", e.id)));
            }
            if e.from == e.to {
                return Err(Error::Config(format!("edge {} is a self-loop", e.id)));
            }
            ensure_positive("length_km", e.length_km)?;
            ensure_positive("speed_kmh", e.speed_kmh)?;
            out_edges[e.from].push(k);
            in_edges[e.to].push(k);
        }

        let area_km2 = match area_km2 {
            Some(a) => {
                ensure_positive("area_km2", a)?;
                a
            }
            None => bounding_box_area(&nodes),
        };
        let net = Self {
            nodes,
            edges,
            out_edges,
            in_edges,
            index,
            area_km2,
        };
        net.check_strongly_connected()?;
        Ok(net)
    }

    fn check_strongly_connected(&self) -> Result<()> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.nodes.len(), self.edges.len());
        let ix: Vec<_> = (0..self.nodes.len()).map(|_| g.add_node(())).collect();
        for e in &self.edges {
            g.add_edge(ix[e.from], ix[e.to], ());
        }
        let sccs = tarjan_scc(&g);
        if sccs.len() <= 1 {
            return Ok(());
        }
        let mut comps: Vec<Vec<u64>> = sccs
            .iter()
            .map(|c| {
                let mut ids: Vec<u64> = c.iter().map(|n| self.nodes[n.index()].id).collect();
                ids.sort_unstable();
                ids
            })
            .collect();
        // keep the largest component, report the rest
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
        comps.remove(0);
        Err(Error::DisconnectedNetwork { components: comps })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn edge(&self, idx: usize) -> &Edge {
        &self.edges[idx]
    }

    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Index of the node with external id `id`.
    pub fn index_of(&self, id: u64) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownNode(id))
    }

    pub fn area_km2(&self) -> f64 {
        self.area_km2
    }

    pub fn euclidean_km(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (&self.nodes[a], &self.nodes[b]);
        (p.x_km - q.x_km).hypot(p.y_km - q.y_km)
    }
}

fn bounding_box_area(nodes: &[Node]) -> f64 {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for n in nodes {
        x0 = x0.min(n.x_km);
        x1 = x1.max(n.x_km);
        y0 = y0.min(n.y_km);
        y1 = y1.max(n.y_km);
    }
    (x1 - x0) * (y1 - y0)
}

/// Square lattice of `blocks_per_side`² blocks covering `total_area_km2`,
/// with a pair of opposite directed edges along every block side.
pub fn generate_grid_network(blocks_per_side: u32, total_area_km2: f64, speed_kmh: f64) -> Result<RoadNetwork> {
    if blocks_per_side == 0 {
        return Err(Error::InvalidParameter {
            name: "blocks_per_side",
            value: 0.0,
            reason: "must be >= 1",
        });
    }
    ensure_positive("total_area_km2", total_area_km2)?;
    ensure_positive("speed_kmh", speed_kmh)?;
    let side = blocks_per_side as usize + 1;
    let spacing = total_area_km2.sqrt() / f64::from(blocks_per_side);

    let nodes: Vec<Node> = (0..side * side)
        .map(|i| Node {
            id: i as u64,
            x_km: (i % side) as f64 * spacing,
            y_km: (i / side) as f64 * spacing,
        })
        .collect();
    let mut edges = Vec::with_capacity(4 * side * (side - 1));
    let mut link = |a: usize, b: usize| {
        for (from, to) in [(a, b), (b, a)] {
            edges.push(Edge {
                id: edges.len() as u64,
                from,
                to,
                length_km: spacing,
                speed_kmh,
            });
        }
    };
    for row in 0..side {
        for col in 0..side {
            let i = row * side + col;
            if col + 1 < side {
                link(i, i + 1);
            }
            if row + 1 < side {
                link(i, i + side);
            }
        }
    }
    RoadNetwork::new(nodes, edges, Some(total_area_km2))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    nodes: Vec<Node>,
    edges: Vec<EdgeRecord>,
    #[serde(default)]
    area_km2: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    id: u64,
    from: u64,
    to: u64,
    #[serde(default)]
    length_km: Option<f64>,
    speed_kmh: f64,
}

/// Reads a JSON network file; see [`parse_network`].
pub fn load_network(path: &Path) -> Result<RoadNetwork> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_network(BufReader::new(file), &path.display().to_string())
}

/// Parses `{nodes: [{id, x_km, y_km}], edges: [{id, from, to, length_km?, speed_kmh}]}`
/// with an optional top-level `area_km2`. Missing edge lengths fall back to
/// the straight-line distance between the endpoints.
pub fn parse_network<R: Read>(reader: R, source_name: &str) -> Result<RoadNetwork> {
    let parse_err = |location: String, message: String| Error::Parse {
        source_name: source_name.to_string(),
        location,
        message,
    };
    let file: NetworkFile = serde_json::from_reader(reader).map_err(|e| {
        parse_err(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;

    let mut index = HashMap::new();
    for (i, n) in file.nodes.iter().enumerate() {
        index.insert(n.id, i);
    }
    let mut edges = Vec::with_capacity(file.edges.len());
    for (k, rec) in file.edges.iter().enumerate() {
        let lookup = |field: &str, id: u64| {
            index.get(&id).copied().ok_or_else(|| {
                parse_err(
                    format!("edges[{k}].{field}"),
                    format!("edge {} references unknown node id {id}", rec.id),
                )
            })
        };
        let from = lookup("from", rec.from)?;
        let to = lookup("to", rec.to)?;
        let length_km = match rec.length_km {
            Some(l) => l,
            None => {
                let (a, b) = (&file.nodes[from], &file.nodes[to]);
                (a.x_km - b.x_km).hypot(a.y_km - b.y_km)
            }
        };
        edges.push(Edge {
            id: rec.id,
            from,
            to,
            length_km,
            speed_kmh: rec.speed_kmh,
        });
    }
    RoadNetwork::new(file.nodes, edges, file.area_km2).map_err(|e| match e {
        Error::DisconnectedNetwork { .. } => e,
        other => parse_err("network".into(), other.to_string()),
    })
}
