//! Report types written as JSON next to the trajectory files.

use std::collections::BTreeMap;

use inspect_core::dynamics::Trajectory;
use inspect_core::mission::{Clause, Grid, MissionConfig};
use inspect_core::optimizer::SolveOutcome;
use inspect_core::replanner::{ReplanRecord, TaskId};
use inspect_core::robustness::{Monitor, RobustnessReport};
use inspect_core::router::{NodeKind, RoutePlan, RoutingGraph, Seed, Selection};
use inspect_core::stl::Signal;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct ConfigDigest {
    pub file: String,
    pub sha256: String,
}

impl ConfigDigest {
    pub fn new(path: &std::path::Path, bytes: &[u8]) -> Self {
        Self {
            file: path.file_name().map_or_else(String::new, |f| f.to_string_lossy().into_owned()),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GridSummary {
    pub n: usize,
    pub ts: f64,
    pub dwell_target: usize,
    pub dwell_blade: usize,
}

impl GridSummary {
    pub fn new(g: Grid, ts: f64) -> Self {
        Self {
            n: g.n,
            ts,
            dwell_target: g.n_ins,
            dwell_blade: g.n_bla,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RouteSummary {
    pub vehicle: usize,
    pub nodes: Vec<String>,
    pub cost: f64,
}

#[derive(Debug, Serialize)]
pub struct RoutingSummary {
    pub status: inspect_core::router::MilpStatus,
    pub milp_cost: f64,
    pub root_bound: f64,
    pub nodes_explored: usize,
    pub plan_cost: f64,
    pub routes: Vec<RouteSummary>,
    pub seed: Seed,
}

pub fn node_label(g: &RoutingGraph, i: usize) -> String {
    match g.nodes[i].kind {
        NodeKind::Depot(d) => format!("depot[{}]", d + 1),
        NodeKind::Target(q) => format!("target[{}]", q + 1),
        NodeKind::Blade(q) => format!("blade[{}]", q + 1),
    }
}

impl RoutingSummary {
    pub fn new(g: &RoutingGraph, sel: &Selection, plan: &RoutePlan, seed: &Seed) -> Self {
        Self {
            status: sel.status,
            milp_cost: sel.cost,
            root_bound: sel.root_bound,
            nodes_explored: sel.nodes_explored,
            plan_cost: plan.cost,
            routes: plan
                .routes
                .iter()
                .map(|r| RouteSummary {
                    vehicle: r.vehicle + 1,
                    nodes: r.nodes.iter().map(|&i| node_label(g, i)).collect(),
                    cost: r.cost,
                })
                .collect(),
            seed: seed.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClauseValue {
    pub label: String,
    pub path: String,
    pub rho: f64,
}

#[derive(Debug, Serialize)]
pub struct Robustness {
    pub rho: f64,
    pub rho_smooth: f64,
    pub beta: f64,
    pub verdict: bool,
    pub clauses: Vec<ClauseValue>,
}

/// Path of each clause inside the conjunction built from `clauses`.
pub fn clause_paths(clauses: &[Clause]) -> Vec<(String, String)> {
    if clauses.len() == 1 {
        return vec![("0".into(), clauses[0].kind.label())];
    }
    clauses
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("0.{i}"), c.kind.label()))
        .collect()
}

impl Robustness {
    pub fn new(r: &RobustnessReport, clauses: &[Clause]) -> Self {
        let by_path: BTreeMap<&str, f64> = r.breakdown.iter().map(|v| (v.path.as_str(), v.rho)).collect();
        Self {
            rho: r.rho,
            rho_smooth: r.rho_smooth,
            beta: r.beta,
            verdict: r.verdict,
            clauses: clause_paths(clauses)
                .into_iter()
                .filter_map(|(path, label)| {
                    by_path.get(path.as_str()).map(|&rho| ClauseValue { label, path, rho })
                })
                .collect(),
        }
    }
}

/// `path,label,k,t,rho` for every subformula and every sample where it is defined.
pub fn margins_csv(monitor: &Monitor, s: &Signal, clauses: &[Clause]) -> String {
    let labels = clause_paths(clauses);
    let label_of = |path: &str| -> &str {
        labels
            .iter()
            .find(|(p, _)| path == p || path.starts_with(&format!("{p}.")))
            .map_or("formula", |(_, l)| l.as_str())
    };
    let series = monitor.series(s, inspect_core::robustness::Semantics::Exact);
    let mut out = String::from("path,label,k,t,rho\n");
    for (path, values) in monitor.paths().zip(&series) {
        let label = label_of(path);
        for (k, rho) in values.iter().enumerate() {
            out.push_str(&format!("{path},{label},{k},{:.9},{rho:.9}\n", k as f64 * s.ts()));
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct Certified {
    pub task: String,
    pub k: usize,
}

pub fn certified(completed: &BTreeMap<TaskId, usize>) -> Vec<Certified> {
    completed
        .iter()
        .map(|(t, &k)| Certified { task: t.label(), k })
        .collect()
}

pub fn uncertified(cfg: &MissionConfig, completed: &BTreeMap<TaskId, usize>) -> Vec<String> {
    (0..cfg.targets.len())
        .map(TaskId::Target)
        .chain((0..cfg.blades.len()).map(TaskId::Blade))
        .filter(|t| !completed.contains_key(t))
        .map(|t| t.label())
        .collect()
}

/// Smallest distance between any two vehicles at any common sample.
pub fn min_pairwise_distance(trajs: &[Trajectory]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in trajs.iter().enumerate() {
        for b in &trajs[i + 1..] {
            for (p, q) in a.p.iter().zip(&b.p) {
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                best = Some(best.map_or(d, |x: f64| x.min(d)));
            }
        }
    }
    best
}

#[derive(Debug, Serialize)]
pub struct PlanReport {
    pub command: &'static str,
    pub config: ConfigDigest,
    pub grid: GridSummary,
    pub formula_size: usize,
    pub routing: RoutingSummary,
    pub outcome: SolveOutcome,
    /// Robustness of the written (rounded) trajectories.
    pub robustness: Robustness,
    pub zeta: f64,
    pub zeta_satisfied: bool,
    pub certified_tasks: Vec<Certified>,
    pub uncertified_tasks: Vec<String>,
    pub min_pairwise_distance: Option<f64>,
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SeedReport {
    pub command: &'static str,
    pub config: ConfigDigest,
    pub grid: GridSummary,
    pub routing: RoutingSummary,
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    pub config: ConfigDigest,
    pub events: ConfigDigest,
    pub grid: GridSummary,
    pub routing: RoutingSummary,
    pub outcome: SolveOutcome,
    pub replans: Vec<ReplanRecord>,
    pub warnings: Vec<String>,
    pub dropped: Vec<usize>,
    pub certified_tasks: Vec<Certified>,
    pub uncertified_tasks: Vec<String>,
    pub min_pairwise_distance: Option<f64>,
    /// Exact robustness of the execution formula on the executed trajectories.
    pub rho: f64,
    pub verdict: bool,
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct CheckReport {
    pub command: &'static str,
    pub config: ConfigDigest,
    pub robustness: Robustness,
    pub breakdown: RobustnessReport,
}
