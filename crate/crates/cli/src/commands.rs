//! Subcommand implementations. Each returns the process exit status.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use inspect_core::dynamics::{from_csv, to_csv, to_signal, Trajectory};
use inspect_core::mission::{build_formula, clauses, MissionConfig};
use inspect_core::optimizer::{log_csv, OptimizerOptions};
use inspect_core::pipeline::plan_mission;
use inspect_core::replanner::{execute, parse_events, simulate as playback, ActivePlan};
use inspect_core::robustness::Monitor;
use inspect_core::router::{build_graph, repair_subtours, seed_trajectories, solve_milp, MilpOptions};
use inspect_core::Error;
use serde::Serialize;

use crate::report::{
    certified, margins_csv, min_pairwise_distance, uncertified, CheckReport, ConfigDigest, GridSummary, PlanReport,
    Robustness, RoutingSummary, SeedReport, SimulateReport,
};
use crate::Global;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_HORIZON: u8 = 3;
pub const EXIT_BELOW_ZETA: u8 = 4;
pub const EXIT_RESIDUAL: u8 = 5;

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_)
            | Error::Json(_)
            | Error::Parse { .. }
            | Error::TimeGrid { .. }
            | Error::Shape(_)
            | Error::Horizon { .. } => EXIT_CONFIG,
            Error::HorizonTooShort { .. } => EXIT_HORIZON,
            Error::ResidualInfeasible { .. } => EXIT_RESIDUAL,
            _ => EXIT_FAILED,
        };
        let mut message = e.to_string();
        if let Error::ResidualInfeasible { min_tn: Some(t), .. } = &e {
            message.push_str(&format!(" (minimal feasible residual horizon {t} s)"));
        }
        Failure { code, message }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_FAILED,
        message: format!("{}: {e}", path.display()),
    }
}

fn run(f: impl FnOnce() -> Result<u8, Failure>) -> u8 {
    match f() {
        Ok(code) => code,
        Err(fail) => {
            eprintln!("error: {}", fail.message);
            fail.code
        }
    }
}

fn load_config(path: &Path) -> Result<(MissionConfig, ConfigDigest), Failure> {
    let bytes = fs::read(path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("{}: {e}", path.display()),
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let cfg = MissionConfig::from_json(&text)?;
    let report = cfg.validate();
    if !report.is_valid() {
        return Err(Error::InvalidConfig(report).into());
    }
    Ok((cfg, ConfigDigest::new(path, &bytes)))
}

fn options(g: &Global) -> OptimizerOptions {
    OptimizerOptions {
        beta: g.beta,
        max_iters: g.max_iters,
        multi_start: g.multi_start,
        seed: g.seed,
        ..Default::default()
    }
}

struct OutDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    fn create(dir: PathBuf) -> Result<Self, Failure> {
        fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| io_failure(&path, e))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::from(e)))?;
        text.push('\n');
        self.write(name, text)
    }

    /// `trajectory_<d>.csv` per vehicle plus `name` with all vehicles.
    fn write_trajectories(&mut self, name: &str, trajs: &[Trajectory]) -> Result<String, Failure> {
        for t in trajs {
            self.write(&format!("trajectory_{}.csv", t.vehicle + 1), to_csv(std::slice::from_ref(t)))?;
        }
        let all = to_csv(trajs);
        self.write(name, &all)?;
        Ok(all)
    }
}

fn timings_json(timings: &[(&'static str, Duration)]) -> BTreeMap<String, f64> {
    timings.iter().map(|(k, d)| (k.to_string(), d.as_secs_f64())).collect()
}

pub fn plan(config: &Path, g: &Global) -> u8 {
    run(|| {
        let (cfg, digest) = load_config(config)?;
        let grid = cfg.grid()?;
        let ts = cfg.timing.ts;
        let planned = plan_mission(&cfg, &options(g))?;
        let clock = Instant::now();
        let mut out = OutDir::create(g.out.clone().unwrap_or_else(|| "out".into()))?;

        let csv = out.write_trajectories("trajectories.csv", &planned.outcome.trajectories)?;
        let written = from_csv(&csv, ts)?;
        let signal = to_signal(&written)?;
        let cls = clauses(&cfg)?;
        let monitor = Monitor::new(&planned.formula);
        let rob = monitor.report(&signal, 0, planned.outcome.beta)?;
        let zeta_satisfied = rob.rho_smooth >= cfg.params.zeta;

        let mut active = ActivePlan::from_planned(&planned);
        active.trajectories = written.iter().cloned().map(Some).collect();
        let exec = playback(&cfg, &active, &[])?;

        out.write("iterations.csv", log_csv(&planned.outcome.log))?;
        out.write("edges.csv", planned.graph.edge_csv(&planned.selection))?;
        out.write("formula.stl", planned.formula.to_text(ts) + "\n")?;
        if g.margins {
            out.write("margins.csv", margins_csv(&monitor, &signal, &cls))?;
        }
        let mut timings = planned.timings.clone();
        timings.push(("report", clock.elapsed()));
        out.write_json("timings.json", &timings_json(&timings))?;
        let mut files = out.files.clone();
        files.push("report.json".into());

        let report = PlanReport {
            command: "plan",
            config: digest,
            grid: GridSummary::new(grid, ts),
            formula_size: planned.formula.size(),
            routing: RoutingSummary::new(&planned.graph, &planned.selection, &planned.routes, &planned.seed),
            outcome: planned.outcome.clone(),
            robustness: Robustness::new(&rob, &cls),
            zeta: cfg.params.zeta,
            zeta_satisfied,
            certified_tasks: certified(&exec.completed),
            uncertified_tasks: uncertified(&cfg, &exec.completed),
            min_pairwise_distance: min_pairwise_distance(&written),
            files,
        };
        out.write_json("report.json", &report)?;

        println!(
            "rho = {:.6}  rho_smooth = {:.6} (beta = {})  zeta = {}  iterations = {} ({:?})",
            rob.rho, rob.rho_smooth, rob.beta, cfg.params.zeta, planned.outcome.iterations, planned.outcome.termination
        );
        for c in &report.robustness.clauses {
            println!("  {:<20} {:.6}", c.label, c.rho);
        }
        println!("artifacts in {}", out.dir.display());
        Ok(if zeta_satisfied { EXIT_OK } else { EXIT_BELOW_ZETA })
    })
}

pub fn check(config: &Path, paths: &[PathBuf], g: &Global) -> u8 {
    run(|| {
        let (cfg, digest) = load_config(config)?;
        let grid = cfg.grid()?;
        let ts = cfg.timing.ts;
        let mut by_vehicle: BTreeMap<usize, Trajectory> = BTreeMap::new();
        for path in paths {
            let text = fs::read_to_string(path).map_err(|e| Failure {
                code: EXIT_CONFIG,
                message: format!("{}: {e}", path.display()),
            })?;
            for t in from_csv(&text, ts)? {
                let d = t.vehicle;
                if by_vehicle.insert(d, t).is_some() {
                    return Err(Error::Shape(format!("vehicle {} appears in more than one file", d + 1)).into());
                }
            }
        }
        let delta = cfg.vehicle_count();
        if by_vehicle.len() != delta || by_vehicle.keys().copied().ne(0..delta) {
            return Err(Error::Shape(format!(
                "config has {delta} vehicle(s), trajectories cover {:?}",
                by_vehicle.keys().map(|d| d + 1).collect::<Vec<_>>()
            ))
            .into());
        }
        let trajs: Vec<Trajectory> = by_vehicle.into_values().collect();
        if let Some(t) = trajs.iter().find(|t| t.p.len() != grid.n + 1) {
            return Err(Error::Shape(format!(
                "vehicle {} has {} samples, the mission needs N + 1 = {}",
                t.vehicle + 1,
                t.p.len(),
                grid.n + 1
            ))
            .into());
        }
        let signal = to_signal(&trajs)?;
        let phi = build_formula(&cfg)?;
        let cls = clauses(&cfg)?;
        let monitor = Monitor::new(&phi);
        let beta = g.beta.unwrap_or(cfg.params.beta);
        let rob = monitor.report(&signal, 0, beta)?;
        let summary = Robustness::new(&rob, &cls);

        println!("rho = {:.9}", rob.rho);
        println!("rho_smooth = {:.9} (beta = {beta})", rob.rho_smooth);
        for c in &summary.clauses {
            println!("  {:<20} {:.6}", c.label, c.rho);
        }
        println!("verdict: {}", if rob.verdict { "satisfied" } else { "violated" });

        let verdict = rob.verdict;
        if let Some(dir) = &g.out {
            let mut out = OutDir::create(dir.clone())?;
            if g.margins {
                out.write("margins.csv", margins_csv(&monitor, &signal, &cls))?;
            }
            let report = CheckReport {
                command: "check",
                config: digest,
                robustness: summary,
                breakdown: rob,
            };
            out.write_json("check.json", &report)?;
        }
        Ok(if verdict { EXIT_OK } else { EXIT_FAILED })
    })
}

pub fn seed(config: &Path, g: &Global) -> u8 {
    run(|| {
        let (cfg, digest) = load_config(config)?;
        let grid = cfg.grid()?;
        let graph = build_graph(&cfg);
        let selection = solve_milp(&graph, MilpOptions::default())?;
        let routes = repair_subtours(&selection, &graph)?;
        let seed = seed_trajectories(&routes, &graph, &cfg)?;
        let mut out = OutDir::create(g.out.clone().unwrap_or_else(|| "out".into()))?;
        out.write("edges.csv", graph.edge_csv(&selection))?;
        out.write("seed_trajectories.csv", to_csv(&seed.trajectories))?;
        let mut files = out.files.clone();
        files.push("routes.json".into());
        let report = SeedReport {
            command: "seed",
            config: digest,
            grid: GridSummary::new(grid, cfg.timing.ts),
            routing: RoutingSummary::new(&graph, &selection, &routes, &seed),
            files,
        };
        out.write_json("routes.json", &report)?;
        for r in &report.routing.routes {
            println!("vehicle {}: {} (cost {:.3} s)", r.vehicle, r.nodes.join(" -> "), r.cost);
        }
        println!("artifacts in {}", out.dir.display());
        Ok(EXIT_OK)
    })
}

pub fn simulate(config: &Path, events: &Path, g: &Global) -> u8 {
    run(|| {
        let (cfg, digest) = load_config(config)?;
        let grid = cfg.grid()?;
        let ts = cfg.timing.ts;
        let script = fs::read(events).map_err(|e| Failure {
            code: EXIT_CONFIG,
            message: format!("{}: {e}", events.display()),
        })?;
        let event_list = parse_events(&String::from_utf8_lossy(&script))?;
        let opts = options(g);
        let planned = plan_mission(&cfg, &opts)?;
        let clock = Instant::now();
        let exec = execute(&cfg, ActivePlan::from_planned(&planned), &event_list, &opts)?;
        let mut timings = planned.timings.clone();
        timings.push(("execute", clock.elapsed()));

        let mut out = OutDir::create(g.out.clone().unwrap_or_else(|| "out".into()))?;
        out.write("planned_trajectories.csv", to_csv(&planned.outcome.trajectories))?;
        out.write_trajectories("trajectories.csv", &exec.trajectories)?;
        out.write("iterations.csv", log_csv(&planned.outcome.log))?;
        out.write_json("timings.json", &timings_json(&timings))?;
        let mut files = out.files.clone();
        files.push("report.json".into());
        for w in &exec.warnings {
            eprintln!("warning: {w}");
        }
        let report = SimulateReport {
            command: "simulate",
            config: digest,
            events: ConfigDigest::new(events, &script),
            grid: GridSummary::new(grid, ts),
            routing: RoutingSummary::new(&planned.graph, &planned.selection, &planned.routes, &planned.seed),
            outcome: planned.outcome.clone(),
            replans: exec.replans.clone(),
            warnings: exec.warnings.clone(),
            dropped: exec.dropped.iter().map(|d| d + 1).collect(),
            certified_tasks: certified(&exec.completed),
            uncertified_tasks: uncertified(&cfg, &exec.completed),
            min_pairwise_distance: min_pairwise_distance(&exec.trajectories),
            rho: exec.rho,
            verdict: exec.verdict,
            files,
        };
        out.write_json("report.json", &report)?;
        println!(
            "planned rho = {:.6}; executed rho = {:.6}; {} replan(s); verdict: {}",
            planned.outcome.rho,
            exec.rho,
            exec.replans.len(),
            if exec.verdict { "satisfied" } else { "violated" }
        );
        println!("artifacts in {}", out.dir.display());
        Ok(if exec.verdict { EXIT_OK } else { EXIT_FAILED })
    })
}
