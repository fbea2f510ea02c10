//! Planning pipeline: formula, routing, seed, optimization.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::mission::{build_formula, MissionConfig};
use crate::optimizer::{optimize, OptimizerOptions, SolveOutcome};
use crate::router::{
    build_graph, repair_subtours, seed_trajectories, solve_milp, MilpOptions, RoutePlan, RoutingGraph, Seed,
    Selection,
};
use crate::stl::Formula;

#[derive(Debug, Clone)]
pub struct Planned {
    pub formula: Formula,
    pub graph: RoutingGraph,
    pub selection: Selection,
    pub routes: RoutePlan,
    pub seed: Seed,
    pub outcome: SolveOutcome,
    /// Wall-clock time of each stage, in pipeline order.
    pub timings: Vec<(&'static str, Duration)>,
}

/// Runs the whole pipeline on a validated mission.
pub fn plan_mission(cfg: &MissionConfig, opts: &OptimizerOptions) -> Result<Planned> {
    let report = cfg.validate();
    if !report.is_valid() {
        return Err(Error::InvalidConfig(report));
    }
    let clock = Instant::now();
    let formula = build_formula(cfg)?;
    let elapsed = clock.elapsed();
    let mut planned = plan_with_formula(cfg, formula, opts)?;
    planned.timings.insert(0, ("formula", elapsed));
    Ok(planned)
}

/// Pipeline with a caller-supplied formula, e.g. the mission formula plus extra clauses.
pub fn plan_with_formula(cfg: &MissionConfig, formula: Formula, opts: &OptimizerOptions) -> Result<Planned> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, Duration)>| {
        timings.push((name, clock.elapsed()));
        clock = Instant::now();
    };
    let graph = build_graph(cfg);
    let selection = solve_milp(&graph, MilpOptions::default())?;
    lap("milp", &mut timings);
    let routes = repair_subtours(&selection, &graph)?;
    lap("repair", &mut timings);
    let seed = seed_trajectories(&routes, &graph, cfg)?;
    lap("seed", &mut timings);
    let outcome = optimize(cfg, &formula, &seed.trajectories, opts)?;
    lap("optimize", &mut timings);
    Ok(Planned {
        formula,
        graph,
        selection,
        routes,
        seed,
        outcome,
        timings,
    })
}
