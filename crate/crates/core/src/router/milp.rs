//! Task-assignment MILP solved by best-first branch-and-bound over the LP relaxation.
//!
//! Variables `z[i,j|d]` exist for every ordered pair of distinct nodes in vehicle `d`'s own
//! depot plus the task nodes. Constraints per vehicle: flow conservation at task nodes, one
//! departure from and one return to its depot; across vehicles every task is entered at least
//! once. No subtour elimination.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use super::simplex::{Cmp, Lp, LpOutcome, Row};
use super::RoutingGraph;
use crate::error::{Error, Result};

const INTEGRALITY_TOL: f64 = 1e-6;
const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeVar {
    pub vehicle: usize,
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// Decision variables in index order: vehicle-major, then source, then target node id.
pub fn edge_variables(g: &RoutingGraph) -> Vec<EdgeVar> {
    let mut vars = Vec::new();
    for d in 0..g.vehicles() {
        let nodes = g.vehicle_nodes(d);
        for &i in &nodes {
            for &j in &nodes {
                if i != j {
                    vars.push(EdgeVar {
                        vehicle: d,
                        from: i,
                        to: j,
                        weight: g.weight(d, i, j),
                    });
                }
            }
        }
    }
    vars
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MilpOptions {
    pub max_nodes: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions { max_nodes: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MilpStatus {
    Optimal,
    /// Node budget exhausted; the selection is the best incumbent found.
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub vars: Vec<EdgeVar>,
    pub z: Vec<bool>,
    pub cost: f64,
    pub status: MilpStatus,
    /// LP relaxation value at the root.
    pub root_bound: f64,
    pub nodes_explored: usize,
}

impl Selection {
    /// Selected edges of vehicle `d` in variable order.
    pub fn edges(&self, d: usize) -> Vec<(usize, usize)> {
        self.vars
            .iter()
            .zip(&self.z)
            .filter(|(v, &z)| z && v.vehicle == d)
            .map(|(v, _)| (v.from, v.to))
            .collect()
    }
}

/// Constraint rows over all variables: flow, depot out, depot in, coverage.
fn model_rows(g: &RoutingGraph, vars: &[EdgeVar]) -> Vec<Row> {
    let n = vars.len();
    let mut rows = Vec::new();
    let row_where = |pred: &dyn Fn(&EdgeVar) -> f64, cmp, rhs| Row {
        coef: vars.iter().map(pred).collect(),
        cmp,
        rhs,
    };
    for d in 0..g.vehicles() {
        for t in g.tasks() {
            rows.push(row_where(
                &|v| {
                    if v.vehicle != d {
                        0.0
                    } else if v.to == t {
                        1.0
                    } else if v.from == t {
                        -1.0
                    } else {
                        0.0
                    }
                },
                Cmp::Eq,
                0.0,
            ));
        }
        rows.push(row_where(&|v| (v.vehicle == d && v.from == d) as u8 as f64, Cmp::Eq, 1.0));
        rows.push(row_where(&|v| (v.vehicle == d && v.to == d) as u8 as f64, Cmp::Eq, 1.0));
    }
    for t in g.tasks() {
        rows.push(row_where(&|v| (v.to == t) as u8 as f64, Cmp::Ge, 1.0));
    }
    debug_assert!(rows.iter().all(|r| r.coef.len() == n));
    rows
}

/// LP relaxation with some variables fixed; returns values for all variables.
fn relaxation(vars: &[EdgeVar], rows: &[Row], fixed: &[Option<bool>]) -> Option<(Vec<f64>, f64)> {
    let free: Vec<usize> = (0..vars.len()).filter(|&i| fixed[i].is_none()).collect();
    let mut lp = Lp {
        cost: free.iter().map(|&i| vars[i].weight).collect(),
        rows: Vec::with_capacity(rows.len() + free.len()),
    };
    for r in rows {
        let shift: f64 = fixed
            .iter()
            .zip(&r.coef)
            .filter_map(|(f, c)| f.map(|b| if b { *c } else { 0.0 }))
            .sum();
        lp.rows.push(Row {
            coef: free.iter().map(|&i| r.coef[i]).collect(),
            cmp: r.cmp,
            rhs: r.rhs - shift,
        });
    }
    for k in 0..free.len() {
        let mut coef = vec![0.0; free.len()];
        coef[k] = 1.0;
        lp.rows.push(Row {
            coef,
            cmp: Cmp::Le,
            rhs: 1.0,
        });
    }
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => {
            let mut full: Vec<f64> = fixed.iter().map(|f| f.map_or(0.0, |b| b as u8 as f64)).collect();
            for (k, &i) in free.iter().enumerate() {
                full[i] = x[k].min(1.0);
            }
            let obj = full.iter().zip(vars).map(|(z, v)| z * v.weight).sum();
            Some((full, obj))
        }
        _ => None,
    }
}

struct Open {
    bound: f64,
    id: usize,
    fixed: Vec<Option<bool>>,
    x: Vec<f64>,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // BinaryHeap is a max-heap: smaller (bound, id) must compare greater.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

/// Most fractional variable, ties to the lowest index.
fn branching_variable(x: &[f64]) -> Option<usize> {
    let mut pick = None;
    let mut best = f64::INFINITY;
    for (i, &v) in x.iter().enumerate() {
        let frac = (v - v.round()).abs();
        if frac > INTEGRALITY_TOL {
            let dist = (v - 0.5).abs();
            if dist < best - 1e-12 {
                best = dist;
                pick = Some(i);
            }
        }
    }
    pick
}

/// Minimum-weight edge selection for the assignment model.
///
/// A graph without task nodes has the empty selection: every vehicle stays at its depot.
pub fn solve_milp(g: &RoutingGraph, opts: MilpOptions) -> Result<Selection> {
    assert!(g.vehicles() >= 1, "routing needs at least one vehicle");
    let vars = edge_variables(g);
    if g.tasks().is_empty() {
        return Ok(Selection {
            z: vec![false; vars.len()],
            vars,
            cost: 0.0,
            status: MilpStatus::Optimal,
            root_bound: 0.0,
            nodes_explored: 0,
        });
    }
    let rows = model_rows(g, &vars);
    let root_fixed = vec![None; vars.len()];
    let (root_x, root_bound) = relaxation(&vars, &rows, &root_fixed).ok_or(Error::Infeasible)?;

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    heap.push(Open {
        bound: root_bound,
        id: next_id,
        fixed: root_fixed,
        x: root_x,
    });
    next_id += 1;
    let mut incumbent: Option<(Vec<bool>, f64)> = None;
    let mut explored = 0usize;
    let mut status = MilpStatus::Optimal;

    while let Some(node) = heap.pop() {
        if let Some((_, best)) = &incumbent {
            if node.bound >= best - BOUND_TOL {
                continue;
            }
        }
        if explored >= opts.max_nodes {
            status = MilpStatus::NodeLimit;
            break;
        }
        explored += 1;
        match branching_variable(&node.x) {
            None => {
                let z: Vec<bool> = node.x.iter().map(|&v| v > 0.5).collect();
                let cost = z.iter().zip(&vars).filter(|(b, _)| **b).map(|(_, v)| v.weight).sum();
                if incumbent.as_ref().map_or(true, |(_, best)| cost < best - BOUND_TOL) {
                    incumbent = Some((z, cost));
                }
            }
            Some(b) => {
                for value in [false, true] {
                    let mut fixed = node.fixed.clone();
                    fixed[b] = Some(value);
                    if let Some((x, bound)) = relaxation(&vars, &rows, &fixed) {
                        heap.push(Open {
                            bound: bound.max(node.bound),
                            id: next_id,
                            fixed,
                            x,
                        });
                    }
                    next_id += 1;
                }
            }
        }
    }
    let (z, cost) = incumbent.ok_or(Error::Infeasible)?;
    Ok(Selection {
        vars,
        z,
        cost,
        status,
        root_bound,
        nodes_explored: explored,
    })
}
