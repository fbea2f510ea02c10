//! Smooth-robustness maximization over acceleration sequences.
//!
//! The decision vector stacks every vehicle's accelerations as `x[(d·3 + j)·N + k]`. Ascent is
//! projected onto the acceleration box; velocity bounds enter as a quadratic penalty. The
//! smoothing sharpness is raised in stages `β/8, β/4, β/2, β`.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{check_feasible, rollout, to_signal, State, Trajectory};
use crate::error::{Error, Result};
use crate::mission::MissionConfig;
use crate::robustness::{Monitor, Semantics};
use crate::stl::{Formula, Signal};

pub const DEFAULT_PENALTY: f64 = 10.0;
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const STALL_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    /// Final smoothing sharpness; `None` uses the mission's.
    pub beta: Option<f64>,
    pub penalty: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub stall_tol: f64,
    pub multi_start: usize,
    pub seed: u64,
    /// Perturbation of extra starts, as a share of each acceleration range.
    pub perturbation: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            beta: None,
            penalty: DEFAULT_PENALTY,
            max_iters: 5000,
            grad_tol: 1e-6,
            stall_tol: 1e-9,
            multi_start: 1,
            seed: 0,
            perturbation: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    IterationLimit,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub beta: f64,
    pub rho_exact: f64,
    pub rho_smooth: f64,
    pub grad_norm: f64,
    pub step: f64,
}

pub const LOG_HEADER: &str = "iter,beta,rho_exact,rho_smooth,grad_norm,step";

pub fn log_csv(log: &[IterationRecord]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.iter, r.beta, r.rho_exact, r.rho_smooth, r.grad_norm, r.step
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveOutcome {
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    pub rho: f64,
    pub rho_smooth: f64,
    pub beta: f64,
    pub zeta: f64,
    pub zeta_satisfied: bool,
    pub seed_rho: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub velocity_violations: usize,
    /// Index of the winning start; 0 is the unperturbed seed.
    pub start: usize,
    #[serde(skip)]
    pub log: Vec<IterationRecord>,
}

/// The objective `ρ̃(rollout(x)) − λ·Σ max(0, velocity excess)²` and its gradient.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    cfg: &'a MissionConfig,
    monitor: Monitor,
    starts: Vec<State>,
    n: usize,
    ts: f64,
    penalty: f64,
}

impl<'a> Problem<'a> {
    pub fn new(cfg: &'a MissionConfig, phi: &Formula, starts: Vec<State>, n: usize, penalty: f64) -> Result<Self> {
        if starts.len() != cfg.vehicles.len() {
            return Err(Error::Shape(format!(
                "{} start states for {} vehicles",
                starts.len(),
                cfg.vehicles.len()
            )));
        }
        let monitor = Monitor::new(phi);
        if monitor.horizon() > n {
            return Err(Error::Horizon {
                required: monitor.horizon(),
                last: n,
            });
        }
        Ok(Self {
            cfg,
            monitor,
            starts,
            n,
            ts: cfg.timing.ts,
            penalty,
        })
    }

    pub fn dim(&self) -> usize {
        self.starts.len() * 3 * self.n
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    pub fn encode(&self, trajs: &[Trajectory]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (d, t) in trajs.iter().enumerate() {
            for (k, a) in t.a.iter().enumerate().take(self.n) {
                for j in 0..3 {
                    x[(d * 3 + j) * self.n + k] = a[j];
                }
            }
        }
        x
    }

    pub fn decode(&self, x: &[f64]) -> Vec<Trajectory> {
        (0..self.starts.len())
            .map(|d| {
                let accels: Vec<[f64; 3]> = (0..self.n)
                    .map(|k| std::array::from_fn(|j| x[(d * 3 + j) * self.n + k]))
                    .collect();
                rollout(d, self.starts[d], &accels, self.ts)
            })
            .collect()
    }

    pub fn project(&self, x: &mut [f64]) {
        for (d, spec) in self.cfg.vehicles.iter().enumerate() {
            for j in 0..3 {
                for v in &mut x[(d * 3 + j) * self.n..(d * 3 + j + 1) * self.n] {
                    *v = v.clamp(spec.a_min[j], spec.a_max[j]);
                }
            }
        }
    }

    fn penalty_terms(&self, trajs: &[Trajectory], mut grad_v: Option<&mut Vec<Vec<[f64; 3]>>>) -> f64 {
        let mut total = 0.0;
        for (d, t) in trajs.iter().enumerate() {
            let spec = &self.cfg.vehicles[d];
            for (k, v) in t.v.iter().enumerate() {
                for j in 0..3 {
                    let over = (v[j] - spec.v_max[j]).max(0.0);
                    let under = (spec.v_min[j] - v[j]).max(0.0);
                    total += over * over + under * under;
                    if let Some(g) = grad_v.as_deref_mut() {
                        g[d][k][j] -= self.penalty * 2.0 * (over - under);
                    }
                }
            }
        }
        self.penalty * total
    }

    fn smooth_value(&self, s: &Signal, beta: f64) -> Result<f64> {
        let values = self.monitor.series(s, Semantics::Smooth { beta });
        if let Some(path) = self.monitor.first_nonfinite(&values) {
            return Err(Error::NonFinite { path });
        }
        Ok(values[0][0])
    }

    pub fn objective(&self, x: &[f64], beta: f64) -> Result<f64> {
        let trajs = self.decode(x);
        let s = to_signal(&trajs)?;
        Ok(self.smooth_value(&s, beta)? - self.penalty_terms(&trajs, None))
    }

    pub fn objective_and_gradient(&self, x: &[f64], beta: f64) -> Result<(f64, Vec<f64>)> {
        let trajs = self.decode(x);
        let s = to_signal(&trajs)?;
        let (rho, sg) = self.monitor.grad_rho_smooth(&s, 0, beta)?;
        let mut gv = sg.dv;
        let pen = self.penalty_terms(&trajs, Some(&mut gv));
        let mut grad = vec![0.0; self.dim()];
        let (ts, n) = (self.ts, self.n);
        for d in 0..self.starts.len() {
            for j in 0..3 {
                let mut lp = sg.dp[d][n][j];
                let mut lv = gv[d][n][j];
                for k in (0..n).rev() {
                    grad[(d * 3 + j) * n + k] = lp * 0.5 * ts * ts + lv * ts;
                    let lp_k = sg.dp[d][k][j] + lp;
                    lv = gv[d][k][j] + lp * ts + lv;
                    lp = lp_k;
                }
            }
        }
        Ok((rho - pen, grad))
    }

    pub fn rho(&self, x: &[f64]) -> Result<f64> {
        self.monitor.rho(&to_signal(&self.decode(x))?, 0)
    }

    pub fn rho_smooth(&self, x: &[f64], beta: f64) -> Result<f64> {
        self.smooth_value(&to_signal(&self.decode(x))?, beta)
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    x: Vec<f64>,
    rho: f64,
    rho_smooth: f64,
    meets_zeta: bool,
}

impl Candidate {
    fn beats(&self, other: &Candidate) -> bool {
        (self.meets_zeta && !other.meets_zeta) || (self.meets_zeta == other.meets_zeta && self.rho > other.rho)
    }
}

struct Run {
    best: Option<Candidate>,
    log: Vec<IterationRecord>,
    iterations: usize,
    termination: Termination,
}

fn inf_norm(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

/// One β-continuation ascent. Keeps the best iterate with exact ρ at least `floor`, preferring
/// iterates whose smooth robustness meets ζ, then higher exact ρ.
fn ascend(p: &Problem, x0: Vec<f64>, opts: &OptimizerOptions, beta0: f64, zeta: f64, floor: f64) -> Result<Run> {
    let stages = [beta0 / 8.0, beta0 / 4.0, beta0 / 2.0, beta0];
    let mut best: Option<Candidate> = None;
    let mut log = Vec::new();
    let consider = |x: &[f64], best: &mut Option<Candidate>| -> Result<(f64, f64)> {
        let rho = p.rho(x)?;
        let rho_smooth = p.rho_smooth(x, beta0)?;
        if rho >= floor {
            let c = Candidate {
                x: x.to_vec(),
                rho,
                rho_smooth,
                meets_zeta: rho_smooth >= zeta,
            };
            if best.as_ref().map_or(true, |b| c.beats(b)) {
                *best = Some(c);
            }
        }
        Ok((rho, rho_smooth))
    };

    let mut x = x0;
    let mut iter = 0usize;
    let mut termination = Termination::Converged;
    let (rho0, _) = consider(&x, &mut best)?;
    for (si, &beta) in stages.iter().enumerate() {
        let budget = if si + 1 == stages.len() {
            opts.max_iters.saturating_sub(iter)
        } else {
            opts.max_iters / stages.len()
        };
        let (mut value, mut grad) = p.objective_and_gradient(&x, beta)?;
        if si == 0 {
            let mut probe: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + g).collect();
            p.project(&mut probe);
            log.push(IterationRecord {
                iter: 0,
                beta,
                rho_exact: rho0,
                rho_smooth: p.rho_smooth(&x, beta)?,
                grad_norm: inf_norm(probe.iter().zip(&x).map(|(a, b)| a - b)),
                step: 0.0,
            });
        }
        let mut history: VecDeque<f64> = VecDeque::from([value]);
        let mut used = 0usize;
        termination = loop {
            let mut probe: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + g).collect();
            p.project(&mut probe);
            let pg_norm = inf_norm(probe.iter().zip(&x).map(|(a, b)| a - b));
            if pg_norm < opts.grad_tol {
                break Termination::Converged;
            }
            if used >= budget {
                break Termination::IterationLimit;
            }
            let mut step = 1.0;
            let mut accepted = None;
            while step >= MIN_STEP {
                let mut trial: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
                p.project(&mut trial);
                let ascent: f64 = trial.iter().zip(&x).zip(&grad).map(|((t, a), g)| (t - a) * g).sum();
                let v = p.objective(&trial, beta)?;
                if v >= value + ARMIJO_C * ascent && v > value {
                    accepted = Some(trial);
                    break;
                }
                step *= 0.5;
            }
            let Some(next) = accepted else {
                break Termination::Stalled;
            };
            x = next;
            (value, grad) = p.objective_and_gradient(&x, beta)?;
            iter += 1;
            used += 1;
            let (rho, _) = consider(&x, &mut best)?;
            log.push(IterationRecord {
                iter,
                beta,
                rho_exact: rho,
                rho_smooth: p.rho_smooth(&x, beta)?,
                grad_norm: pg_norm,
                step,
            });
            history.push_back(value);
            if history.len() > STALL_WINDOW {
                let old = history.pop_front().expect("window is non-empty");
                if (value - old).abs() < opts.stall_tol {
                    break Termination::Stalled;
                }
            }
        };
        if iter >= opts.max_iters {
            termination = Termination::IterationLimit;
            break;
        }
    }
    Ok(Run {
        best,
        log,
        iterations: iter,
        termination,
    })
}

/// Refines the seed trajectories. The returned iterate never has lower exact robustness than
/// the seed.
pub fn optimize(
    cfg: &MissionConfig,
    phi: &Formula,
    seed: &[Trajectory],
    opts: &OptimizerOptions,
) -> Result<SolveOutcome> {
    let n = cfg.grid()?.n;
    for t in seed {
        t.check_consistency()?;
        if t.steps() != n {
            return Err(Error::Shape(format!("seed has {} steps, mission needs {n}", t.steps())));
        }
    }
    let starts: Vec<State> = seed.iter().map(Trajectory::start).collect();
    let p = Problem::new(cfg, phi, starts, n, opts.penalty)?;
    let beta0 = opts.beta.unwrap_or(cfg.params.beta);
    if !(beta0 > 0.0) {
        return Err(Error::NonPositiveBeta(beta0));
    }
    let zeta = cfg.params.zeta;
    let mut x0 = p.encode(seed);
    p.project(&mut x0);
    let floor = p.rho(&x0)?;

    let mut starts_x = vec![x0.clone()];
    for i in 1..opts.multi_start.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
        let mut x = x0.clone();
        for (d, spec) in cfg.vehicles.iter().enumerate() {
            for j in 0..3 {
                let span = opts.perturbation * (spec.a_max[j] - spec.a_min[j]);
                for v in &mut x[(d * 3 + j) * n..(d * 3 + j + 1) * n] {
                    *v += span * rng.gen_range(-1.0..=1.0);
                }
            }
        }
        p.project(&mut x);
        starts_x.push(x);
    }

    let runs: Vec<Result<Run>> = if starts_x.len() == 1 {
        vec![ascend(&p, x0, opts, beta0, zeta, floor)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = starts_x
                .into_iter()
                .map(|x| {
                    let p = &p;
                    scope.spawn(move || ascend(p, x, opts, beta0, zeta, floor))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("optimizer thread panicked")).collect()
        })
    };

    let mut chosen: Option<(usize, Candidate, Run)> = None;
    for (i, run) in runs.into_iter().enumerate() {
        let mut run = run?;
        if let Some(c) = run.best.take() {
            if chosen.as_ref().map_or(true, |(_, b, _)| c.beats(b)) {
                chosen = Some((i, c, run));
            }
        }
    }
    let (start, best, run) = chosen.expect("the seed itself is always a candidate");
    let trajectories = p.decode(&best.x);
    let mut velocity_violations = 0;
    for (d, t) in trajectories.iter().enumerate() {
        velocity_violations += check_feasible(t, &cfg.vehicles[d])?.velocity_violations();
    }
    Ok(SolveOutcome {
        trajectories,
        rho: best.rho,
        rho_smooth: best.rho_smooth,
        beta: beta0,
        zeta,
        zeta_satisfied: best.meets_zeta,
        seed_rho: floor,
        iterations: run.iterations,
        termination: run.termination,
        velocity_violations,
        start,
        log: run.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::tests::sample_config;
    use crate::mission::{build_formula, clauses, ClauseKind};
    use crate::robustness::rho;

    fn hover(cfg: &MissionConfig) -> Vec<Trajectory> {
        let n = cfg.grid().unwrap().n;
        cfg.vehicles
            .iter()
            .enumerate()
            .map(|(d, v)| rollout(d, State::at_rest(v.depot), &vec![[0.0; 3]; n], cfg.timing.ts))
            .collect()
    }

    fn small_config() -> MissionConfig {
        let mut cfg = sample_config(1, 1, 0, 0);
        cfg.timing.tn = 8.0;
        cfg.timing.ts = 0.5;
        cfg.timing.t_ins = 1.0;
        cfg
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut cfg = sample_config(2, 1, 1, 1);
        cfg.timing.tn = 6.0;
        cfg.timing.t_ins = 1.0;
        cfg.timing.t_bla = 1.0;
        cfg.blade_speed_band = Some([0.0, 1.0]);
        let phi = build_formula(&cfg).unwrap();
        let n = cfg.grid().unwrap().n;
        let starts = cfg.vehicles.iter().map(|v| State::at_rest(v.depot)).collect();
        let p = Problem::new(&cfg, &phi, starts, n, DEFAULT_PENALTY).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let beta = 2.0;
        let (_, g) = p.objective_and_gradient(&x, beta).unwrap();
        let h = 1e-5;
        let mut fd = vec![0.0; x.len()];
        for i in 0..x.len() {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            fd[i] = (p.objective(&a, beta).unwrap() - p.objective(&b, beta).unwrap()) / (2.0 * h);
        }
        let scale = inf_norm(fd.iter().copied()).max(1e-8);
        let err = inf_norm(g.iter().zip(&fd).map(|(a, b)| a - b));
        assert!(err / scale < 1e-4, "relative error {}", err / scale);
    }

    #[test]
    fn swapping_identical_vehicles_is_symmetric() {
        let mut cfg = sample_config(2, 0, 0, 0);
        cfg.homes[1] = cfg.homes[0];
        cfg.vehicles[1] = cfg.vehicles[0].clone();
        cfg.vehicles[1].depot = [2.0, 2.0, 3.0];
        cfg.vehicles[0].depot = [2.0, 2.0, 3.0];
        cfg.timing.tn = 4.0;
        let phi = build_formula(&cfg).unwrap();
        let n = cfg.grid().unwrap().n;
        let starts = cfg.vehicles.iter().map(|v| State::at_rest(v.depot)).collect();
        let p = Problem::new(&cfg, &phi, starts, n, DEFAULT_PENALTY).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let half = p.dim() / 2;
        let swapped: Vec<f64> = x[half..].iter().chain(&x[..half]).copied().collect();
        let a = p.objective(&x, 5.0).unwrap();
        let b = p.objective(&swapped, 5.0).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn hover_seed_learns_to_visit_target() {
        let mut cfg = small_config();
        cfg.targets[0] = crate::geometry::Aabb::around([3.0, 2.0, 1.0], 0.6);
        cfg.homes[0] = crate::geometry::Aabb::around([2.0, 3.0, 1.0], 0.6);
        cfg.params.beta = 20.0;
        let phi = build_formula(&cfg).unwrap();
        let seed = hover(&cfg);
        let out = optimize(&cfg, &phi, &seed, &OptimizerOptions::default()).unwrap();
        let s = to_signal(&out.trajectories).unwrap();
        assert!(out.rho > 0.0, "rho = {}", out.rho);
        assert!(phi.eval_bool(&s, 0).unwrap());
        assert!(out.rho >= out.seed_rho);
        for (d, t) in out.trajectories.iter().enumerate() {
            t.check_consistency().unwrap();
            for a in &t.a {
                for j in 0..3 {
                    assert!(a[j] >= cfg.vehicles[d].a_min[j] && a[j] <= cfg.vehicles[d].a_max[j]);
                }
            }
        }
        assert_eq!(out.log[0].iter, 0);
        assert!(log_csv(&out.log).starts_with(LOG_HEADER));
    }

    #[test]
    fn crossing_vehicles_separate() {
        let mut cfg = sample_config(2, 0, 0, 0);
        // depots and homes swapped across, straight paths cross mid-way
        cfg.vehicles[0].depot = [4.0, 6.0, 5.0];
        cfg.vehicles[1].depot = [8.0, 6.0, 5.0];
        cfg.homes[0] = crate::geometry::Aabb::around([8.0, 6.0, 5.5], 0.4);
        cfg.homes[1] = crate::geometry::Aabb::around([4.0, 6.0, 5.5], 0.4);
        cfg.timing.tn = 10.0;
        cfg.params.beta = 20.0;
        let phi = build_formula(&cfg).unwrap();
        let g = crate::router::build_graph(&cfg);
        let sel = crate::router::solve_milp(&g, Default::default()).unwrap();
        let plan = crate::router::repair_subtours(&sel, &g).unwrap();
        let seed = crate::router::seed_trajectories(&plan, &g, &cfg).unwrap();
        let seed_signal = to_signal(&seed.trajectories).unwrap();
        let safety = clauses(&cfg).unwrap().into_iter().find(|c| c.kind == ClauseKind::Safety(0)).unwrap();
        assert!(rho(&safety.formula, &seed_signal, 0).unwrap() < 0.0);
        let out = optimize(&cfg, &phi, &seed.trajectories, &OptimizerOptions::default()).unwrap();
        let s = to_signal(&out.trajectories).unwrap();
        assert!(rho(&safety.formula, &s, 0).unwrap() > 0.0);
    }

    #[test]
    fn satisfied_seed_is_not_degraded() {
        let mut cfg = small_config();
        cfg.timing.tn = 30.0;
        let phi = build_formula(&cfg).unwrap();
        let g = crate::router::build_graph(&cfg);
        let sel = crate::router::solve_milp(&g, Default::default()).unwrap();
        let plan = crate::router::repair_subtours(&sel, &g).unwrap();
        let seed = crate::router::seed_trajectories(&plan, &g, &cfg).unwrap();
        let n = cfg.grid().unwrap().n;
        let p = Problem::new(
            &cfg,
            &phi,
            seed.trajectories.iter().map(Trajectory::start).collect(),
            n,
            DEFAULT_PENALTY,
        )
        .unwrap();
        let x = p.encode(&seed.trajectories);
        let seed_smooth = p.rho_smooth(&x, cfg.params.beta).unwrap();
        let opts = OptimizerOptions {
            max_iters: 200,
            ..Default::default()
        };
        let out = optimize(&cfg, &phi, &seed.trajectories, &opts).unwrap();
        assert!(out.rho >= out.seed_rho);
        assert!(out.rho_smooth >= seed_smooth - 1e-12 || !out.zeta_satisfied);
        let again = optimize(&cfg, &phi, &seed.trajectories, &opts).unwrap();
        assert_eq!(again.trajectories, out.trajectories);
    }

    #[test]
    fn multi_start_is_deterministic_and_no_worse() {
        let cfg = small_config();
        let phi = build_formula(&cfg).unwrap();
        let seed = hover(&cfg);
        let opts = OptimizerOptions {
            multi_start: 3,
            seed: 11,
            max_iters: 120,
            ..Default::default()
        };
        let a = optimize(&cfg, &phi, &seed, &opts).unwrap();
        let b = optimize(&cfg, &phi, &seed, &opts).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.start, b.start);
        assert!(a.rho >= a.seed_rho);
    }

    #[test]
    fn rejects_inconsistent_seed() {
        let cfg = small_config();
        let phi = build_formula(&cfg).unwrap();
        let mut seed = hover(&cfg);
        seed[0].p[3][0] += 1.0;
        assert!(matches!(
            optimize(&cfg, &phi, &seed, &OptimizerOptions::default()),
            Err(Error::Inconsistent { .. })
        ));
    }
}
