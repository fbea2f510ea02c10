//! Kinematic execution with injected disturbances and event-triggered replanning.
//!
//! Playback follows the active plan sample by sample. A DELAY pauses the vehicle and its plan
//! cursor, a DROPOUT freezes the vehicle for the rest of the mission, a DEVIATION shifts it by a
//! persistent offset. A task is complete once an active vehicle has stayed in its region for the
//! full dwell in one contiguous visit. When a trigger fires, the residual mission (remaining
//! tasks, current positions as depots, remaining horizon) is planned from scratch; dropped
//! vehicles become keep-out points for the survivors.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::dynamics::{to_signal, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::Segment;
use crate::mission::{clauses, in_box, ClauseKind, MissionConfig};
use crate::optimizer::OptimizerOptions;
use crate::pipeline::{plan_with_formula, Planned};
use crate::robustness::rho;
use crate::router::{blade_node_position, NodeKind, RoutePlan, RoutingGraph};
use crate::stl::{Formula, Predicate, Signal};
use crate::units::seconds_to_samples;

fn one_based<S: Serializer>(d: &usize, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(*d as u64 + 1)
}

fn one_based_all<S: Serializer>(ds: &[usize], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(ds.iter().map(|d| d + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum TaskId {
    Target(usize),
    Blade(usize),
}

impl TaskId {
    pub fn label(&self) -> String {
        match self {
            TaskId::Target(q) => format!("target[{}]", q + 1),
            TaskId::Blade(q) => format!("blade[{}]", q + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EventKind {
    Delay { seconds: f64 },
    Dropout,
    Deviation { offset: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub k: usize,
    #[serde(serialize_with = "one_based")]
    pub vehicle: usize,
    pub kind: EventKind,
}

fn parse_error(line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        what: format!("event script line {line}"),
        detail: detail.into(),
    }
}

/// Parses `k,kind,vehicle[,param]` lines: `DELAY` takes seconds, `DEVIATION` takes `dx,dy,dz`.
/// Vehicles are one-based. Blank lines, `#` comments and a `k,...` header are skipped. The
/// result is sorted by trigger index, keeping file order within an index.
pub fn parse_events(text: &str) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.to_ascii_lowercase().starts_with("k,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(parse_error(i + 1, "expected k,kind,vehicle[,param]"));
        }
        let k: usize = fields[0]
            .parse()
            .map_err(|_| parse_error(i + 1, format!("bad sample index `{}`", fields[0])))?;
        let vehicle: usize = fields[2]
            .parse()
            .ok()
            .filter(|&v| v >= 1)
            .ok_or_else(|| parse_error(i + 1, format!("bad vehicle `{}` (one-based)", fields[2])))?;
        let number = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_error(i + 1, format!("bad number `{s}`")))
        };
        let kind = match (fields[1].to_ascii_uppercase().as_str(), &fields[3..]) {
            ("DELAY", [s]) => {
                let seconds = number(s)?;
                if seconds < 0.0 {
                    return Err(parse_error(i + 1, "delay must be non-negative"));
                }
                EventKind::Delay { seconds }
            }
            ("DROPOUT", []) => EventKind::Dropout,
            ("DEVIATION", [x, y, z]) => EventKind::Deviation {
                offset: [number(x)?, number(y)?, number(z)?],
            },
            (kind, params) => {
                return Err(parse_error(
                    i + 1,
                    format!("unknown event `{kind}` with {} parameter(s)", params.len()),
                ))
            }
        };
        events.push(Event {
            k,
            vehicle: vehicle - 1,
            kind,
        });
    }
    events.sort_by_key(|e| e.k);
    Ok(events)
}

/// The plan being executed, indexed by global vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivePlan {
    /// Global sample index of the plan's first sample.
    pub start_k: usize,
    /// `None` for vehicles without a plan (dropped before this plan was made).
    pub trajectories: Vec<Option<Trajectory>>,
    /// Tasks each vehicle's route visits, in route order.
    pub owned: Vec<Vec<TaskId>>,
}

impl ActivePlan {
    /// Plan made for the full mission (identity vehicle and task indexing).
    pub fn from_planned(planned: &Planned) -> Self {
        let delta = planned.outcome.trajectories.len();
        Self::assemble(0, delta, &(0..delta).collect::<Vec<_>>(), &TaskMap::identity(&planned.graph), planned)
    }

    fn assemble(start_k: usize, delta: usize, vehicles: &[usize], tasks: &TaskMap, planned: &Planned) -> Self {
        let mut trajectories = vec![None; delta];
        let mut owned = vec![Vec::new(); delta];
        for (local, &global) in vehicles.iter().enumerate() {
            let mut t = planned.outcome.trajectories[local].clone();
            t.vehicle = global;
            trajectories[global] = Some(t);
            owned[global] = route_tasks(&planned.routes, &planned.graph, local, tasks);
        }
        Self {
            start_k,
            trajectories,
            owned,
        }
    }

    pub fn planned_position(&self, d: usize, k: usize) -> Option<[f64; 3]> {
        let t = self.trajectories[d].as_ref()?;
        let i = k.saturating_sub(self.start_k).min(t.p.len() - 1);
        Some(t.p[i])
    }
}

struct TaskMap {
    targets: Vec<usize>,
    blades: Vec<usize>,
}

impl TaskMap {
    fn identity(g: &RoutingGraph) -> Self {
        let mut targets = Vec::new();
        let mut blades = Vec::new();
        for n in &g.nodes {
            match n.kind {
                NodeKind::Target(q) => targets.push(q),
                NodeKind::Blade(q) => blades.push(q),
                NodeKind::Depot(_) => {}
            }
        }
        Self { targets, blades }
    }
}

fn route_tasks(routes: &RoutePlan, g: &RoutingGraph, local: usize, map: &TaskMap) -> Vec<TaskId> {
    routes.routes[local]
        .tasks()
        .iter()
        .filter_map(|&node| match g.nodes[node].kind {
            NodeKind::Target(q) => Some(TaskId::Target(map.targets[q])),
            NodeKind::Blade(q) => Some(TaskId::Blade(map.blades[q])),
            NodeKind::Depot(_) => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionState {
    pub k: usize,
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    /// Certified tasks and the sample at which their dwell completed.
    pub completed: BTreeMap<TaskId, usize>,
    pub active: Vec<bool>,
    /// Remaining hold samples per vehicle.
    pub holding: Vec<usize>,
    /// Current contiguous in-region run per task and vehicle.
    #[serde(skip)]
    pub runs: BTreeMap<TaskId, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Trigger {
    Deviation {
        #[serde(serialize_with = "one_based")]
        vehicle: usize,
        distance: f64,
    },
    Dropout {
        #[serde(serialize_with = "one_based")]
        vehicle: usize,
    },
    ResidualTime {
        #[serde(serialize_with = "one_based")]
        vehicle: usize,
        needed: f64,
        available: f64,
    },
}

fn task_point(cfg: &MissionConfig, task: TaskId) -> [f64; 3] {
    match task {
        TaskId::Target(q) => cfg.targets[q].center(),
        TaskId::Blade(q) => {
            let b = &cfg.blades[q];
            blade_node_position(&b.segment(), b.bounds.center(), cfg.params.gamma_bla)
        }
    }
}

fn dwell_samples(cfg: &MissionConfig, task: TaskId) -> Result<usize> {
    let t = match task {
        TaskId::Target(_) => cfg.timing.t_ins,
        TaskId::Blade(_) => cfg.timing.t_bla,
    };
    seconds_to_samples(t, cfg.timing.ts)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Trigger rules, checked in order: (b) a vehicle that just dropped out still owned open tasks;
/// (a) an active, moving vehicle is more than `Γ_dis/2` from its planned position; (c) an
/// active vehicle cannot finish its open tasks and reach home in the remaining time even at
/// full speed.
pub fn should_replan(
    state: &ExecutionState,
    plan: &ActivePlan,
    cfg: &MissionConfig,
    newly_dropped: &[usize],
) -> Result<Option<Trigger>> {
    for &d in newly_dropped {
        if plan.owned[d].iter().any(|t| !state.completed.contains_key(t)) {
            return Ok(Some(Trigger::Dropout { vehicle: d }));
        }
    }
    let moving = |d: usize| state.active[d] && state.holding[d] == 0;
    for d in (0..state.active.len()).filter(|&d| moving(d)) {
        if let Some(planned) = plan.planned_position(d, state.k) {
            let distance = dist(state.positions[d], planned);
            if distance > cfg.params.gamma_dis / 2.0 {
                return Ok(Some(Trigger::Deviation { vehicle: d, distance }));
            }
        }
    }
    let grid = cfg.grid()?;
    let available = grid.n.saturating_sub(state.k) as f64 * cfg.timing.ts;
    for d in (0..state.active.len()).filter(|&d| moving(d)) {
        let v = cfg.vehicles[d].v_max;
        let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let mut pos = state.positions[d];
        let mut needed = 0.0;
        for &task in plan.owned[d].iter().filter(|t| !state.completed.contains_key(t)) {
            let p = task_point(cfg, task);
            needed += dist(pos, p) / speed;
            let run = state.runs.get(&task).map_or(0, |r| r[d]);
            needed += dwell_samples(cfg, task)?.saturating_sub(run) as f64 * cfg.timing.ts;
            pos = p;
        }
        needed += dist(pos, cfg.homes[d].center()) / speed;
        if needed > available + 1e-9 {
            return Ok(Some(Trigger::ResidualTime {
                vehicle: d,
                needed,
                available,
            }));
        }
    }
    Ok(None)
}

/// The residual mission at the current state, with index maps back to the full mission.
#[derive(Debug, Clone)]
pub struct Residual {
    pub cfg: MissionConfig,
    pub vehicles: Vec<usize>,
    pub targets: Vec<usize>,
    pub blades: Vec<usize>,
    /// Frozen positions of dropped vehicles.
    pub hazards: Vec<[f64; 3]>,
}

fn infeasible(reason: impl Into<String>, min_tn: Option<f64>) -> Error {
    Error::ResidualInfeasible {
        reason: reason.into(),
        min_tn,
    }
}

pub fn residual_mission(state: &ExecutionState, cfg: &MissionConfig) -> Result<Residual> {
    let grid = cfg.grid()?;
    let vehicles: Vec<usize> = (0..state.active.len()).filter(|&d| state.active[d]).collect();
    if vehicles.is_empty() {
        return Err(infeasible("no active vehicles", None));
    }
    let remaining = grid.n.saturating_sub(state.k);
    if remaining < 2 {
        return Err(infeasible(format!("only {remaining} sample(s) left"), None));
    }
    let targets: Vec<usize> = (0..cfg.targets.len())
        .filter(|&q| !state.completed.contains_key(&TaskId::Target(q)))
        .collect();
    let blades: Vec<usize> = (0..cfg.blades.len())
        .filter(|&q| !state.completed.contains_key(&TaskId::Blade(q)))
        .collect();
    let mut r = cfg.clone();
    r.targets = targets.iter().map(|&q| cfg.targets[q]).collect();
    r.blades = blades.iter().map(|&q| cfg.blades[q].clone()).collect();
    r.vehicles = vehicles
        .iter()
        .map(|&d| {
            let mut v = cfg.vehicles[d].clone();
            v.depot = state.positions[d];
            v
        })
        .collect();
    r.homes = vehicles.iter().map(|&d| cfg.homes[d]).collect();
    r.timing.tn = remaining as f64 * cfg.timing.ts;
    if r.targets.is_empty() {
        r.timing.t_ins = r.timing.t_ins.min(r.timing.tn);
    }
    if r.blades.is_empty() {
        r.timing.t_bla = r.timing.t_bla.min(r.timing.tn);
    }
    let report = r.validate();
    if !report.is_valid() {
        return Err(infeasible(report.to_string().trim_end().to_string(), None));
    }
    let hazards = (0..state.active.len())
        .filter(|&d| !state.active[d])
        .map(|d| state.positions[d])
        .collect();
    Ok(Residual {
        cfg: r,
        vehicles,
        targets,
        blades,
        hazards,
    })
}

/// Residual mission formula: the mission clauses plus keep-out distance from every hazard.
pub fn residual_formula(res: &Residual) -> Result<Formula> {
    let n = res.cfg.grid()?.n;
    let mut parts: Vec<Formula> = clauses(&res.cfg)?.into_iter().map(|c| c.formula).collect();
    for d in 0..res.vehicles.len() {
        for (h, &p) in res.hazards.iter().enumerate() {
            parts.push(Formula::always(
                0,
                n,
                Formula::Pred(Predicate::SegmentDistanceBand {
                    vehicle: d,
                    segment_id: res.cfg.blades.len() + h,
                    segment: Segment::new(p, p),
                    lo: res.cfg.params.gamma_dis,
                    hi: f64::INFINITY,
                }),
            )?);
        }
    }
    Ok(Formula::and_all(parts))
}

/// Plans the residual mission from the current state.
pub fn replan(state: &ExecutionState, cfg: &MissionConfig, opts: &OptimizerOptions) -> Result<(ActivePlan, Planned)> {
    let res = residual_mission(state, cfg)?;
    let phi = residual_formula(&res)?;
    let planned = plan_with_formula(&res.cfg, phi, opts).map_err(|e| match e {
        Error::HorizonTooShort { min_tn, .. } => infeasible(
            format!("remaining horizon {} s is shorter than the residual routes need", res.cfg.timing.tn),
            Some(min_tn),
        ),
        other => other,
    })?;
    let map = TaskMap {
        targets: res.targets.clone(),
        blades: res.blades.clone(),
    };
    let plan = ActivePlan::assemble(state.k, cfg.vehicles.len(), &res.vehicles, &map, &planned);
    Ok((plan, planned))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplanRecord {
    pub k: usize,
    pub trigger: Trigger,
    pub remaining_tasks: Vec<TaskId>,
    #[serde(serialize_with = "one_based_all")]
    pub active_vehicles: Vec<usize>,
    pub rho: f64,
    pub rho_smooth: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Execution {
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    pub completed: BTreeMap<TaskId, usize>,
    pub replans: Vec<ReplanRecord>,
    pub warnings: Vec<String>,
    #[serde(serialize_with = "one_based_all")]
    pub dropped: Vec<usize>,
    /// Exact robustness of the execution formula on the executed trajectories.
    pub rho: f64,
    pub verdict: bool,
}

/// Mission clauses that apply to an execution: safety for every vehicle, every task, and the
/// home clauses of vehicles that did not drop out.
pub fn execution_formula(cfg: &MissionConfig, dropped: &[usize]) -> Result<Formula> {
    let parts: Vec<Formula> = clauses(cfg)?
        .into_iter()
        .filter(|c| match c.kind {
            ClauseKind::Home(d) | ClauseKind::HomeAbsorbing(d) => !dropped.contains(&d),
            _ => true,
        })
        .map(|c| c.formula)
        .collect();
    Ok(Formula::and_all(parts))
}

fn region(cfg: &MissionConfig, task: TaskId, d: usize) -> Formula {
    match task {
        TaskId::Target(q) => in_box(d, &cfg.targets[q]),
        TaskId::Blade(q) => cfg.blade_scan(d, q),
    }
}

/// Plays the plan back under the events without replanning.
pub fn simulate(cfg: &MissionConfig, plan: &ActivePlan, events: &[Event]) -> Result<Execution> {
    drive(cfg, plan.clone(), events, None)
}

/// Plays the plan back under the events, replanning whenever a trigger fires.
pub fn execute(cfg: &MissionConfig, plan: ActivePlan, events: &[Event], opts: &OptimizerOptions) -> Result<Execution> {
    drive(cfg, plan, events, Some(opts))
}

fn drive(cfg: &MissionConfig, mut plan: ActivePlan, events: &[Event], opts: Option<&OptimizerOptions>) -> Result<Execution> {
    let n = cfg.grid()?.n;
    let ts = cfg.timing.ts;
    let delta = cfg.vehicles.len();
    let mut warnings = Vec::new();
    let mut pending: Vec<Event> = Vec::new();
    for e in events {
        if e.k > n {
            warnings.push(format!("event at k = {} is beyond the horizon N = {n}; ignored", e.k));
        } else if e.vehicle >= delta {
            warnings.push(format!("event at k = {} names unknown vehicle {}; ignored", e.k, e.vehicle + 1));
        } else {
            pending.push(*e);
        }
    }
    pending.sort_by_key(|e| e.k);

    let tasks: Vec<TaskId> = (0..cfg.targets.len())
        .map(TaskId::Target)
        .chain((0..cfg.blades.len()).map(TaskId::Blade))
        .collect();
    let regions: Vec<Vec<Formula>> = tasks.iter().map(|&t| (0..delta).map(|d| region(cfg, t, d)).collect()).collect();
    let dwell: Vec<usize> = tasks.iter().map(|&t| dwell_samples(cfg, t)).collect::<Result<_>>()?;

    let start = |d: usize, plan: &ActivePlan| plan.trajectories[d].as_ref().map_or(cfg.vehicles[d].depot, |t| t.p[0]);
    let mut state = ExecutionState {
        k: 0,
        positions: (0..delta).map(|d| start(d, &plan)).collect(),
        velocities: (0..delta)
            .map(|d| plan.trajectories[d].as_ref().map_or([0.0; 3], |t| t.v[0]))
            .collect(),
        completed: BTreeMap::new(),
        active: (0..delta).map(|d| plan.trajectories[d].is_some()).collect(),
        holding: vec![0; delta],
        runs: tasks.iter().map(|&t| (t, vec![0; delta])).collect(),
    };
    let mut cursor = vec![0usize; delta];
    let mut offset = vec![[0.0; 3]; delta];
    let mut exec_p: Vec<Vec<[f64; 3]>> = vec![Vec::with_capacity(n + 1); delta];
    let mut exec_v: Vec<Vec<[f64; 3]>> = vec![Vec::with_capacity(n + 1); delta];
    let mut exec_a: Vec<Vec<[f64; 3]>> = vec![Vec::with_capacity(n); delta];
    let mut replans = Vec::new();
    let mut dropped = Vec::new();
    let mut deferred: Option<Trigger> = None;
    let mut next_event = 0;

    for k in 0..=n {
        state.k = k;
        if k > 0 {
            for d in 0..delta {
                let traj = plan.trajectories[d].as_ref();
                let mut accel = [0.0; 3];
                match traj {
                    Some(t) if state.active[d] && state.holding[d] == 0 => {
                        if cursor[d] < t.a.len() {
                            accel = t.a[cursor[d]];
                        }
                        cursor[d] = (cursor[d] + 1).min(t.p.len() - 1);
                        let p = t.p[cursor[d]];
                        state.positions[d] = [p[0] + offset[d][0], p[1] + offset[d][1], p[2] + offset[d][2]];
                        state.velocities[d] = t.v[cursor[d]];
                    }
                    _ => {
                        if state.holding[d] > 0 {
                            state.holding[d] -= 1;
                        }
                        state.velocities[d] = [0.0; 3];
                    }
                }
                exec_a[d].push(accel);
            }
        }
        let mut newly_dropped = Vec::new();
        while next_event < pending.len() && pending[next_event].k == k {
            let e = pending[next_event];
            next_event += 1;
            let d = e.vehicle;
            if !state.active[d] {
                warnings.push(format!("event at k = {k} for inactive vehicle {}; ignored", d + 1));
                continue;
            }
            match e.kind {
                EventKind::Dropout => {
                    state.active[d] = false;
                    state.velocities[d] = [0.0; 3];
                    dropped.push(d);
                    newly_dropped.push(d);
                }
                EventKind::Delay { seconds } => {
                    state.holding[d] += seconds_to_samples(seconds, ts)?;
                    state.velocities[d] = [0.0; 3];
                }
                EventKind::Deviation { offset: o } => {
                    for j in 0..3 {
                        offset[d][j] += o[j];
                        state.positions[d][j] += o[j];
                    }
                }
            }
        }
        for d in 0..delta {
            exec_p[d].push(state.positions[d]);
            exec_v[d].push(state.velocities[d]);
        }

        let snapshot = Signal::new(
            ts,
            state.positions.iter().map(|&p| vec![p]).collect(),
            state.velocities.iter().map(|&v| vec![v]).collect(),
        )?;
        for (i, &task) in tasks.iter().enumerate() {
            if state.completed.contains_key(&task) {
                continue;
            }
            let runs = state.runs.get_mut(&task).expect("every task has a run counter");
            for d in 0..delta {
                let inside = state.active[d] && regions[i][d].eval_bool(&snapshot, 0)?;
                runs[d] = if inside { runs[d] + 1 } else { 0 };
                if runs[d] > dwell[i] && !state.completed.contains_key(&task) {
                    state.completed.insert(task, k);
                }
            }
        }

        let Some(opts) = opts else { continue };
        if k >= n {
            continue;
        }
        let trigger = match deferred.take() {
            Some(t) => Some(t),
            None => should_replan(&state, &plan, cfg, &newly_dropped)?,
        };
        let Some(trigger) = trigger else { continue };
        if (0..delta).any(|d| state.active[d] && state.holding[d] > 0) {
            deferred = Some(trigger);
            continue;
        }
        let (next, planned) = replan(&state, cfg, opts)?;
        replans.push(ReplanRecord {
            k,
            trigger,
            remaining_tasks: tasks.iter().copied().filter(|t| !state.completed.contains_key(t)).collect(),
            active_vehicles: (0..delta).filter(|&d| state.active[d]).collect(),
            rho: planned.outcome.rho,
            rho_smooth: planned.outcome.rho_smooth,
            iterations: planned.outcome.iterations,
        });
        plan = next;
        cursor = vec![0; delta];
        offset = vec![[0.0; 3]; delta];
    }

    let trajectories: Vec<Trajectory> = (0..delta)
        .map(|d| Trajectory {
            vehicle: d,
            ts,
            p: std::mem::take(&mut exec_p[d]),
            v: std::mem::take(&mut exec_v[d]),
            a: std::mem::take(&mut exec_a[d]),
        })
        .collect();
    let phi = execution_formula(cfg, &dropped)?;
    let s = to_signal(&trajectories)?;
    let value = rho(&phi, &s, 0)?;
    let verdict = phi.eval_bool(&s, 0)?;
    Ok(Execution {
        trajectories,
        completed: state.completed,
        replans,
        warnings,
        dropped,
        rho: value,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Aabb;
    use crate::mission::tests::sample_config;
    use crate::pipeline::plan_mission;

    fn quick() -> OptimizerOptions {
        OptimizerOptions {
            max_iters: 400,
            ..Default::default()
        }
    }

    fn mission() -> MissionConfig {
        let mut cfg = sample_config(2, 2, 0, 0);
        cfg.targets[0] = Aabb::around([4.0, 7.0, 2.0], 0.8);
        cfg.targets[1] = Aabb::around([16.0, 7.0, 2.0], 0.8);
        cfg.timing.tn = 40.0;
        cfg.timing.t_ins = 1.0;
        cfg.timing.ts = 0.5;
        cfg.params.beta = 20.0;
        cfg
    }

    #[test]
    fn parses_event_scripts() {
        let text = "k,kind,vehicle,param\n# comment\n12,DELAY,1,2.5\n\n3,dropout,2\n5,DEVIATION,1,0.5,-1,0 # shove\n";
        let ev = parse_events(text).unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[0], Event { k: 3, vehicle: 1, kind: EventKind::Dropout });
        assert_eq!(ev[1].kind, EventKind::Deviation { offset: [0.5, -1.0, 0.0] });
        assert_eq!(ev[2].kind, EventKind::Delay { seconds: 2.5 });
        assert!(parse_events("1,DELAY,1").is_err());
        assert!(parse_events("1,DROPOUT,0").is_err());
        assert!(parse_events("x,DROPOUT,1").is_err());
        assert!(parse_events("1,TELEPORT,1,3").is_err());
    }

    #[test]
    fn no_events_reproduce_the_plan() {
        let cfg = mission();
        let planned = plan_mission(&cfg, &quick()).unwrap();
        let plan = ActivePlan::from_planned(&planned);
        let exec = simulate(&cfg, &plan, &[]).unwrap();
        for (d, t) in exec.trajectories.iter().enumerate() {
            assert_eq!(t.p, planned.outcome.trajectories[d].p);
        }
        assert!(planned.outcome.rho > 0.0);
        assert_eq!(exec.completed.len(), 2);
        assert!(exec.verdict);
        assert!(exec.replans.is_empty());
    }

    #[test]
    fn delay_postpones_certification() {
        let cfg = mission();
        let planned = plan_mission(&cfg, &quick()).unwrap();
        let plan = ActivePlan::from_planned(&planned);
        let base = simulate(&cfg, &plan, &[]).unwrap();
        let (&task, &when) = base.completed.iter().next().unwrap();
        let owner = plan.owned.iter().position(|o| o.contains(&task)).unwrap();
        let delay = Event {
            k: 1,
            vehicle: owner,
            kind: EventKind::Delay { seconds: cfg.timing.t_ins },
        };
        let late = simulate(&cfg, &plan, &[delay]).unwrap();
        assert_ne!(late.completed.get(&task), Some(&when));
    }

    #[test]
    fn dropout_freezes_vehicle() {
        let cfg = mission();
        let planned = plan_mission(&cfg, &quick()).unwrap();
        let plan = ActivePlan::from_planned(&planned);
        let ev = [Event { k: 0, vehicle: 1, kind: EventKind::Dropout }];
        let exec = simulate(&cfg, &plan, &ev).unwrap();
        let t = &exec.trajectories[1];
        assert!(t.p.iter().all(|p| *p == t.p[0]));
        assert_ne!(exec.trajectories[0].p[5], exec.trajectories[0].p[0]);
        assert_eq!(exec.dropped, [1]);
    }

    #[test]
    fn trigger_rules() {
        let cfg = mission();
        let planned = plan_mission(&cfg, &quick()).unwrap();
        let plan = ActivePlan::from_planned(&planned);
        let mut state = ExecutionState {
            k: 0,
            positions: cfg.vehicles.iter().map(|v| v.depot).collect(),
            velocities: vec![[0.0; 3]; 2],
            completed: BTreeMap::new(),
            active: vec![true, true],
            holding: vec![0, 0],
            runs: BTreeMap::new(),
        };
        assert_eq!(should_replan(&state, &plan, &cfg, &[]).unwrap(), None);
        state.positions[0][0] += cfg.params.gamma_dis;
        assert!(matches!(
            should_replan(&state, &plan, &cfg, &[]).unwrap(),
            Some(Trigger::Deviation { vehicle: 0, .. })
        ));
        state.positions[0][0] -= cfg.params.gamma_dis;
        // dropped vehicle whose tasks are all done: no trigger from the dropout rule
        for t in plan.owned[1].clone() {
            state.completed.insert(t, 0);
        }
        state.active[1] = false;
        assert_eq!(should_replan(&state, &plan, &cfg, &[1]).unwrap(), None);
        state.completed.clear();
        assert_eq!(
            should_replan(&state, &plan, &cfg, &[1]).unwrap(),
            Some(Trigger::Dropout { vehicle: 1 })
        );
        state.active[1] = true;
        state.k = cfg.grid().unwrap().n - 2;
        assert!(matches!(
            should_replan(&state, &plan, &cfg, &[]).unwrap(),
            Some(Trigger::ResidualTime { .. }) | Some(Trigger::Deviation { .. })
        ));
    }

    #[test]
    fn replan_at_start_reproduces_plan() {
        let cfg = mission();
        let opts = quick();
        let planned = plan_mission(&cfg, &opts).unwrap();
        let state = ExecutionState {
            k: 0,
            positions: cfg.vehicles.iter().map(|v| v.depot).collect(),
            velocities: vec![[0.0; 3]; 2],
            completed: BTreeMap::new(),
            active: vec![true, true],
            holding: vec![0, 0],
            runs: BTreeMap::new(),
        };
        let (_, again) = replan(&state, &cfg, &opts).unwrap();
        assert!((again.outcome.rho - planned.outcome.rho).abs() < 1e-6);
    }

    #[test]
    fn dropout_hands_tasks_to_survivor() {
        let cfg = mission();
        let opts = quick();
        let planned = plan_mission(&cfg, &opts).unwrap();
        let plan = ActivePlan::from_planned(&planned);
        assert!(!plan.owned[1].is_empty());
        let ev = [Event { k: 2, vehicle: 1, kind: EventKind::Dropout }];
        let exec = execute(&cfg, plan, &ev, &opts).unwrap();
        assert_eq!(exec.replans.len(), 1);
        assert_eq!(exec.replans[0].trigger, Trigger::Dropout { vehicle: 1 });
        assert_eq!(exec.completed.len(), 2, "{exec:?}");
        assert!(exec.verdict, "rho = {}", exec.rho);
    }

    #[test]
    fn nothing_left_means_fly_home() {
        let cfg = mission();
        let mut state = ExecutionState {
            k: 10,
            positions: vec![[5.0, 8.0, 3.0], [15.0, 8.0, 3.0]],
            velocities: vec![[0.0; 3]; 2],
            completed: BTreeMap::new(),
            active: vec![true, true],
            holding: vec![0, 0],
            runs: BTreeMap::new(),
        };
        state.completed.insert(TaskId::Target(0), 5);
        state.completed.insert(TaskId::Target(1), 6);
        let (plan, planned) = replan(&state, &cfg, &quick()).unwrap();
        assert!(plan.owned.iter().all(Vec::is_empty));
        let s = to_signal(&planned.outcome.trajectories).unwrap();
        let res = residual_mission(&state, &cfg).unwrap();
        for c in clauses(&res.cfg).unwrap() {
            if matches!(c.kind, ClauseKind::Home(_) | ClauseKind::HomeAbsorbing(_)) {
                assert!(c.formula.eval_bool(&s, 0).unwrap(), "{:?}", c.kind);
            }
        }
    }

    #[test]
    fn all_vehicles_dropped_is_infeasible() {
        let cfg = mission();
        let opts = quick();
        let planned = plan_mission(&cfg, &opts).unwrap();
        let plan = ActivePlan::from_planned(&planned);
        let ev = [
            Event { k: 1, vehicle: 0, kind: EventKind::Dropout },
            Event { k: 1, vehicle: 1, kind: EventKind::Dropout },
        ];
        assert!(matches!(
            execute(&cfg, plan, &ev, &opts),
            Err(Error::ResidualInfeasible { .. })
        ));
    }
}
