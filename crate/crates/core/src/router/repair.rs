//! Turns an edge selection into one depot-anchored tour per vehicle.

use std::collections::VecDeque;

use serde::Serialize;

use super::{RoutingGraph, Selection};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    pub vehicle: usize,
    /// Closed tour: starts and ends at the vehicle's depot.
    pub nodes: Vec<usize>,
    pub cost: f64,
}

impl Route {
    /// Task nodes in visiting order.
    pub fn tasks(&self) -> &[usize] {
        let n = self.nodes.len();
        if n <= 2 {
            &[]
        } else {
            &self.nodes[1..n - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutePlan {
    pub routes: Vec<Route>,
    pub cost: f64,
}

/// Closed walks covering every edge, one per connected component, the depot's first.
fn closed_walks(edges: &[(usize, usize)], nodes: usize, depot: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<VecDeque<usize>> = vec![VecDeque::new(); nodes];
    let mut sorted = edges.to_vec();
    sorted.sort_unstable();
    for (i, j) in sorted {
        out[i].push_back(j);
    }
    let mut walks = Vec::new();
    let starts = std::iter::once(depot).chain(0..nodes);
    for start in starts {
        if out[start].is_empty() {
            continue;
        }
        let mut stack = vec![start];
        let mut walk = Vec::new();
        while let Some(&v) = stack.last() {
            if let Some(u) = out[v].pop_front() {
                stack.push(u);
            } else {
                walk.push(v);
                stack.pop();
            }
        }
        walk.reverse();
        walks.push(walk);
    }
    walks
}

/// Keeps the first visit of every node; drops the closing repeat of the start.
fn shortcut(walk: &[usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    for &v in walk {
        if !seen.contains(&v) {
            seen.push(v);
        }
    }
    seen
}

fn cycle_weight(g: &RoutingGraph, d: usize, cycle: &[usize]) -> f64 {
    let k = cycle.len();
    (0..k).map(|i| g.weight(d, cycle[i], cycle[(i + 1) % k])).sum()
}

/// Splices every depot-free cycle of the selection into the tour where it adds the least
/// weight, searching all vehicles' tours (ties to the lowest vehicle, then position).
pub fn repair_subtours(sel: &Selection, g: &RoutingGraph) -> Result<RoutePlan> {
    let delta = g.vehicles();
    let mut trunks: Vec<Vec<usize>> = Vec::with_capacity(delta);
    let mut orphans: Vec<Vec<usize>> = Vec::new();
    for d in 0..delta {
        let edges = sel.edges(d);
        if edges.is_empty() {
            if !g.tasks().is_empty() {
                return Err(Error::Structural(format!("vehicle {} selects no edges", d + 1)));
            }
            trunks.push(vec![d]);
            continue;
        }
        let mut indeg = vec![0usize; g.len()];
        let mut outdeg = vec![0usize; g.len()];
        for &(i, j) in &edges {
            outdeg[i] += 1;
            indeg[j] += 1;
        }
        if indeg[d] != 1 || outdeg[d] != 1 {
            return Err(Error::Structural(format!(
                "vehicle {}: depot has in-degree {} and out-degree {}",
                d + 1,
                indeg[d],
                outdeg[d]
            )));
        }
        if let Some(v) = (0..g.len()).find(|&v| indeg[v] != outdeg[v]) {
            return Err(Error::Structural(format!("vehicle {}: flow not conserved at node {v}", d + 1)));
        }
        let mut walks = closed_walks(&edges, g.len(), d).into_iter();
        trunks.push(shortcut(&walks.next().expect("depot has an out-edge")));
        orphans.extend(walks.map(|w| shortcut(&w)));
    }

    for cycle in orphans {
        let k = cycle.len();
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for (d, trunk) in trunks.iter().enumerate() {
            let around = cycle_weight(g, d, &cycle);
            for p in 0..trunk.len() {
                let (u, v) = (trunk[p], trunk[(p + 1) % trunk.len()]);
                for r in 0..k {
                    let entry = cycle[r];
                    let exit = cycle[(r + k - 1) % k];
                    let added = g.weight(d, u, entry) + around - g.weight(d, exit, entry) + g.weight(d, exit, v)
                        - g.weight(d, u, v);
                    if best.map_or(true, |(b, ..)| added < b - 1e-12) {
                        best = Some((added, d, p, r));
                    }
                }
            }
        }
        let (_, d, p, r) = best.expect("at least one trunk");
        let rotated: Vec<usize> = (0..k).map(|i| cycle[(r + i) % k]).collect();
        let at = p + 1;
        trunks[d].splice(at..at, rotated);
    }

    let mut routes = Vec::with_capacity(delta);
    let mut total = 0.0;
    for (d, trunk) in trunks.into_iter().enumerate() {
        let mut nodes = shortcut(&trunk);
        nodes.push(d);
        let cost = nodes.windows(2).map(|w| g.weight(d, w[0], w[1])).sum();
        total += cost;
        routes.push(Route { vehicle: d, nodes, cost });
    }
    Ok(RoutePlan { routes, cost: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::{edge_variables, solve_milp, MilpOptions, MilpStatus, Node, NodeKind};

    fn selection(g: &RoutingGraph, chosen: &[(usize, usize, usize)]) -> Selection {
        let vars = edge_variables(g);
        let z: Vec<bool> = vars.iter().map(|v| chosen.contains(&(v.vehicle, v.from, v.to))).collect();
        let cost = vars.iter().zip(&z).filter(|(_, &z)| z).map(|(v, _)| v.weight).sum();
        Selection {
            vars,
            z,
            cost,
            status: MilpStatus::Optimal,
            root_bound: cost,
            nodes_explored: 0,
        }
    }

    fn targets(xs: &[[f64; 3]]) -> Vec<Node> {
        xs.iter()
            .enumerate()
            .map(|(q, &position)| Node {
                kind: NodeKind::Target(q),
                position,
            })
            .collect()
    }

    #[test]
    fn single_cycle_is_unchanged() {
        let g = crate::router::tests::line_graph();
        let sel = solve_milp(&g, MilpOptions::default()).unwrap();
        let plan = repair_subtours(&sel, &g).unwrap();
        assert_eq!(plan.routes[0].nodes.len(), 4);
        assert!((plan.cost - sel.cost).abs() < 1e-12);
    }

    #[test]
    fn orphan_cycle_is_spliced() {
        let g = RoutingGraph::new(
            &[[0.0; 3]],
            &[1.0],
            &targets(&[[1.0, 0.0, 0.0], [5.0, 0.0, 0.0], [6.0, 0.0, 0.0]]),
        );
        let sel = selection(&g, &[(0, 0, 1), (0, 1, 0), (0, 2, 3), (0, 3, 2)]);
        let plan = repair_subtours(&sel, &g).unwrap();
        let r = &plan.routes[0];
        assert_eq!(r.nodes.first(), Some(&0));
        assert_eq!(r.nodes.last(), Some(&0));
        let mut visited = r.tasks().to_vec();
        visited.sort();
        assert_eq!(visited, [1, 2, 3]);
        // both trunk edges tie; the lower position wins
        assert_eq!(r.nodes, [0, 2, 3, 1, 0]);
        assert!(plan.cost >= sel.cost - 1e-12);
        assert!((plan.cost - 12.0).abs() < 1e-12);
    }

    #[test]
    fn orphan_goes_to_cheapest_vehicle() {
        let g = RoutingGraph::new(
            &[[0.0; 3], [10.0, 0.0, 0.0]],
            &[1.0, 1.0],
            &targets(&[[1.0, 0.0, 0.0], [9.0, 0.0, 0.0], [8.0, 1.0, 0.0], [8.0, -1.0, 0.0]]),
        );
        // vehicle 1 holds an orphan near vehicle 2's depot
        let sel = selection(
            &g,
            &[(0, 0, 2), (0, 2, 0), (0, 4, 5), (0, 5, 4), (1, 1, 3), (1, 3, 1)],
        );
        let plan = repair_subtours(&sel, &g).unwrap();
        assert_eq!(plan.routes[0].nodes, [0, 2, 0]);
        let mut v2 = plan.routes[1].tasks().to_vec();
        v2.sort();
        assert_eq!(v2, [3, 4, 5]);
    }

    #[test]
    fn rejects_unbalanced_flow() {
        let g = crate::router::tests::line_graph();
        let sel = selection(&g, &[(0, 0, 1), (0, 1, 2), (0, 1, 0)]);
        assert!(matches!(repair_subtours(&sel, &g), Err(Error::Structural(_))));
    }

    #[test]
    fn zero_tasks_stay_home() {
        let g = RoutingGraph::new(&[[0.0; 3], [1.0; 3]], &[1.0, 1.0], &[]);
        let sel = solve_milp(&g, MilpOptions::default()).unwrap();
        let plan = repair_subtours(&sel, &g).unwrap();
        assert_eq!(plan.routes[0].nodes, [0, 0]);
        assert_eq!(plan.routes[1].nodes, [1, 1]);
        assert_eq!(plan.cost, 0.0);
    }
}
