//! Task allocation: routing graph, MILP assignment, subtour repair and seed trajectories.

pub mod exhaustive;
mod milp;
mod repair;
mod seed;
pub mod simplex;
mod validate;

use serde::{Deserialize, Serialize};

pub use milp::{edge_variables, solve_milp, EdgeVar, MilpOptions, MilpStatus, Selection};
pub use repair::{repair_subtours, Route, RoutePlan};
pub use seed::{seed_trajectories, Seed, Visit, SEED_SPEED_FRACTION};
pub use validate::check_selection;

use crate::geometry::Segment;
use crate::mission::MissionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum NodeKind {
    Depot(usize),
    Target(usize),
    Blade(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub position: [f64; 3],
}

/// Complete digraph over depots and task nodes with per-vehicle travel times.
///
/// Nodes are ordered depots first (node `d` is the depot of vehicle `d`), then targets, then
/// blade sides.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingGraph {
    pub nodes: Vec<Node>,
    /// Per-vehicle cruise speed used for edge weights.
    pub speeds: Vec<f64>,
}

impl RoutingGraph {
    /// `depots[d]` is vehicle `d`'s depot; `tasks` follow in order.
    pub fn new(depots: &[[f64; 3]], speeds: &[f64], tasks: &[Node]) -> Self {
        assert_eq!(depots.len(), speeds.len(), "one speed per vehicle");
        assert!(speeds.iter().all(|&s| s > 0.0 && s.is_finite()), "speeds must be positive");
        let mut nodes: Vec<Node> = depots
            .iter()
            .enumerate()
            .map(|(d, &position)| Node {
                kind: NodeKind::Depot(d),
                position,
            })
            .collect();
        nodes.extend_from_slice(tasks);
        RoutingGraph {
            nodes,
            speeds: speeds.to_vec(),
        }
    }

    pub fn vehicles(&self) -> usize {
        self.speeds.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depot(&self, d: usize) -> usize {
        d
    }

    pub fn tasks(&self) -> std::ops::Range<usize> {
        self.vehicles()..self.nodes.len()
    }

    /// Directed edges of the complete digraph, self-loops excluded.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.nodes.len();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    pub fn out_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&j| j != i)
    }

    pub fn in_neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| i != j)
    }

    /// Travel time in seconds from `i` to `j` for vehicle `d`.
    pub fn weight(&self, d: usize, i: usize, j: usize) -> f64 {
        let (a, b) = (self.nodes[i].position, self.nodes[j].position);
        let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        dist / self.speeds[d]
    }

    /// Nodes vehicle `d` may use: its own depot and every task.
    pub fn vehicle_nodes(&self, d: usize) -> Vec<usize> {
        std::iter::once(d).chain(self.tasks()).collect()
    }

    /// Audit dump `d,i,j,w,z` over every edge variable (vehicles one-based, nodes zero-based).
    pub fn edge_csv(&self, sel: &Selection) -> String {
        let mut out = String::from("d,i,j,w,z\n");
        for (v, &z) in sel.vars.iter().zip(&sel.z) {
            out.push_str(&format!("{},{},{},{:.9},{}\n", v.vehicle + 1, v.from, v.to, v.weight, z as u8));
        }
        out
    }
}

/// Routing point for a blade side: the segment midpoint pushed out by `standoff` along the
/// horizontal normal that points into the scan box.
pub fn blade_node_position(seg: &Segment, box_center: [f64; 3], standoff: f64) -> [f64; 3] {
    let mid = seg.midpoint();
    let u = [seg.b[0] - seg.a[0], seg.b[1] - seg.a[1]];
    let u_len = (u[0] * u[0] + u[1] * u[1]).sqrt();
    let mut n = [box_center[0] - mid[0], box_center[1] - mid[1]];
    if u_len > 1e-12 {
        let uh = [u[0] / u_len, u[1] / u_len];
        let along = n[0] * uh[0] + n[1] * uh[1];
        n = [n[0] - along * uh[0], n[1] - along * uh[1]];
    }
    let mut n_len = (n[0] * n[0] + n[1] * n[1]).sqrt();
    if n_len < 1e-12 {
        n = if u_len > 1e-12 { [-u[1], u[0]] } else { [1.0, 0.0] };
        n_len = (n[0] * n[0] + n[1] * n[1]).sqrt();
    }
    [
        mid[0] + standoff * n[0] / n_len,
        mid[1] + standoff * n[1] / n_len,
        mid[2],
    ]
}

/// Routing graph of a mission: one node per depot, target box and blade side.
pub fn build_graph(cfg: &MissionConfig) -> RoutingGraph {
    let depots: Vec<[f64; 3]> = cfg.vehicles.iter().map(|v| v.depot).collect();
    let speeds: Vec<f64> = cfg.vehicles.iter().map(|v| v.max_speed()).collect();
    let mut tasks: Vec<Node> = cfg
        .targets
        .iter()
        .enumerate()
        .map(|(q, b)| Node {
            kind: NodeKind::Target(q),
            position: b.center(),
        })
        .collect();
    tasks.extend(cfg.blades.iter().enumerate().map(|(q, b)| Node {
        kind: NodeKind::Blade(q),
        position: blade_node_position(&b.segment(), b.bounds.center(), cfg.params.gamma_bla),
    }));
    RoutingGraph::new(&depots, &speeds, &tasks)
}
