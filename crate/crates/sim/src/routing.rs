//! Shortest paths towards a fixed target (reverse Dijkstra), cached per target.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::RoadNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Travel time, hours.
    Time,
    /// Length, km.
    Distance,
}

impl Metric {
    fn weight(self, net: &RoadNetwork, edge: usize) -> f64 {
        let e = net.edge(edge);
        match self {
            Metric::Time => e.travel_time_h(),
            Metric::Distance => e.length_km,
        }
    }
}

/// Costs from every node to one target and the first edge to take.
#[derive(Debug, Clone)]
pub struct PathTree {
    pub target: usize,
    pub cost: Vec<f64>,
    pub next_edge: Vec<Option<usize>>,
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Equal-cost alternatives are resolved towards the smaller next-node id.
fn ties(a: f64, b: f64) -> bool {
    a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

pub fn build_tree(net: &RoadNetwork, target: usize, metric: Metric) -> PathTree {
    let n = net.node_count();
    let mut cost = vec![f64::INFINITY; n];
    let mut next_edge: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    cost[target] = 0.0;
    heap.push(Entry(0.0, target));
    while let Some(Entry(c, w)) = heap.pop() {
        if done[w] {
            continue;
        }
        done[w] = true;
        for &e in net.in_edges(w) {
            let u = net.edge(e).from;
            let cand = c + metric.weight(net, e);
            if u == target {
                continue;
            }
            if ties(cand, cost[u]) {
                // equal cost: keep the edge leading to the smaller node id
                let cur = next_edge[u].expect("finite cost implies a next edge");
                let (a, b) = (net.node(w).id, net.node(net.edge(cur).to).id);
                if a < b || (a == b && net.edge(e).id < net.edge(cur).id) {
                    next_edge[u] = Some(e);
                }
            } else if cand < cost[u] {
                cost[u] = cand;
                next_edge[u] = Some(e);
                heap.push(Entry(cand, u));
            }
        }
    }
    PathTree {
        target,
        cost,
        next_edge,
    }
}

/// Memoizing router for one network. Not shared between threads; each
/// simulation run owns its own.
pub struct Router<'a> {
    net: &'a RoadNetwork,
    cache: RefCell<HashMap<(usize, Metric), Rc<PathTree>>>,
}

impl<'a> Router<'a> {
    pub fn new(net: &'a RoadNetwork) -> Self {
        Self {
            net,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn network(&self) -> &'a RoadNetwork {
        self.net
    }

    pub fn tree(&self, target: usize, metric: Metric) -> Rc<PathTree> {
        if let Some(t) = self.cache.borrow().get(&(target, metric)) {
            return Rc::clone(t);
        }
        let t = Rc::new(build_tree(self.net, target, metric));
        self.cache.borrow_mut().insert((target, metric), Rc::clone(&t));
        t
    }

    pub fn cost(&self, from: usize, to: usize, metric: Metric) -> f64 {
        self.tree(to, metric).cost[from]
    }

    /// Edge indices of the optimal path and its cost.
    pub fn path(&self, from: usize, to: usize, metric: Metric) -> Result<(Vec<usize>, f64)> {
        let tree = self.tree(to, metric);
        if !tree.cost[from].is_finite() {
            return Err(Error::NoPath {
                from: self.net.node(from).id,
                to: self.net.node(to).id,
            });
        }
        let mut edges = Vec::new();
        let mut at = from;
        while at != to {
            let e = tree.next_edge[at].expect("finite cost implies a next edge");
            edges.push(e);
            at = self.net.edge(e).to;
        }
        Ok((edges, tree.cost[from]))
    }

    /// Length (km) and time (h) along the shortest-time path.
    pub fn time_path_length(&self, from: usize, to: usize) -> Result<(f64, f64)> {
        let (edges, time) = self.path(from, to, Metric::Time)?;
        let km = edges.iter().map(|&e| self.net.edge(e).length_km).sum();
        Ok((km, time))
    }
}

/// Path between nodes given by external id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    pub nodes: Vec<u64>,
    pub edges: Vec<u64>,
    pub cost: f64,
}

pub fn shortest_path(net: &RoadNetwork, from: u64, to: u64, metric: Metric) -> Result<Route> {
    let (a, b) = (net.index_of(from)?, net.index_of(to)?);
    let (edges, cost) = Router::new(net).path(a, b, metric)?;
    let mut nodes = vec![from];
    nodes.extend(edges.iter().map(|&e| net.node(net.edge(e).to).id));
    Ok(Route {
        nodes,
        edges: edges.iter().map(|&e| net.edge(e).id).collect(),
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_grid_network, parse_network};

    #[test]
    fn same_node_is_empty_path() {
        let net = generate_grid_network(2, 4.0, 50.0).unwrap();
        let r = shortest_path(&net, 4, 4, Metric::Time).unwrap();
        assert!(r.edges.is_empty());
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn corner_to_corner_on_two_by_two_blocks() {
        // 2x2 blocks over 4 km²: spacing 1 km, corner to corner is 4 blocks
        // of Manhattan distance, i.e. 2 * (2 * spacing).
        let net = generate_grid_network(2, 4.0, 50.0).unwrap();
        let r = shortest_path(&net, 0, 8, Metric::Time).unwrap();
        assert!((r.cost - 4.0 / 50.0).abs() < 1e-12);
        let r = shortest_path(&net, 0, 8, Metric::Distance).unwrap();
        assert!((r.cost - 4.0).abs() < 1e-12);
        assert_eq!(r.edges.len(), 4);
    }

    #[test]
    fn corner_to_corner_on_one_block() {
        let net = generate_grid_network(1, 4.0, 40.0).unwrap();
        let r = shortest_path(&net, 0, 3, Metric::Time).unwrap();
        assert!((r.cost - 2.0 * 2.0 / 40.0).abs() < 1e-12);
        // two equal routes (via 1 or via 2): smaller next-node id wins
        assert_eq!(r.nodes, vec![0, 1, 3]);
    }

    #[test]
    fn metric_switches_path_on_triangle() {
        // A->C direct is short but slow; A->B->C is longer but fast.
        let json = r#"{"nodes":[{"id":0,"x_km":0,"y_km":0},{"id":1,"x_km":1,"y_km":1},{"id":2,"x_km":2,"y_km":0}],
          "edges":[
            {"id":0,"from":0,"to":2,"length_km":2,"speed_kmh":10},
            {"id":1,"from":0,"to":1,"length_km":1.5,"speed_kmh":100},
            {"id":2,"from":1,"to":2,"length_km":1.5,"speed_kmh":100},
            {"id":3,"from":2,"to":0,"length_km":2,"speed_kmh":10},
            {"id":4,"from":1,"to":0,"length_km":1.5,"speed_kmh":100},
            {"id":5,"from":2,"to":1,"length_km":1.5,"speed_kmh":100}]}"#;
        let net = parse_network(json.as_bytes(), "mem").unwrap();
        let by_time = shortest_path(&net, 0, 2, Metric::Time).unwrap();
        let by_dist = shortest_path(&net, 0, 2, Metric::Distance).unwrap();
        assert_eq!(by_time.nodes, vec![0, 1, 2]);
        assert!((by_time.cost - 0.03).abs() < 1e-12);
        assert_eq!(by_dist.nodes, vec![0, 2]);
        assert!((by_dist.cost - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_endpoint_is_an_error() {
        let net = generate_grid_network(1, 1.0, 50.0).unwrap();
        assert_eq!(shortest_path(&net, 0, 42, Metric::Time).unwrap_err(), Error::UnknownNode(42));
    }

    #[test]
    fn tree_costs_match_floyd_warshall() {
        let net = generate_grid_network(3, 9.0, 50.0).unwrap();
        let n = net.node_count();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for e in net.edges() {
            d[e.from][e.to] = d[e.from][e.to].min(e.length_km);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        let router = Router::new(&net);
        for (i, row) in d.iter().enumerate() {
            for (j, &want) in row.iter().enumerate() {
                assert!((router.cost(i, j, Metric::Distance) - want).abs() < 1e-9);
                let (edges, cost) = router.path(i, j, Metric::Distance).unwrap();
                let walked: f64 = edges.iter().map(|&e| net.edge(e).length_km).sum();
                assert!((walked - cost).abs() < 1e-9);
            }
        }
    }
}
