//! Per-axis double integrator with zero-order-hold accelerations.
//!
//! ```text
//! p[k+1] = p[k] + v[k]·Ts + ½·a[k]·Ts²
//! v[k+1] = v[k] + a[k]·Ts
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl::Signal;
use crate::units::seconds_to_samples;

/// Absolute tolerance of the dynamic-consistency check.
pub const CONSISTENCY_TOL: f64 = 1e-9;

/// Slack allowed when comparing velocities and accelerations against their bounds.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub depot: [f64; 3],
    pub v_min: [f64; 3],
    pub v_max: [f64; 3],
    pub a_min: [f64; 3],
    pub a_max: [f64; 3],
}

impl VehicleSpec {
    /// Symmetric limits `±v`, `±a` on every axis.
    pub fn symmetric(depot: [f64; 3], v: f64, a: f64) -> Self {
        Self {
            depot,
            v_min: [-v; 3],
            v_max: [v; 3],
            a_min: [-a; 3],
            a_max: [a; 3],
        }
    }

    /// `‖v̄‖∞`, the speed used for routing weights.
    pub fn max_speed(&self) -> f64 {
        self.v_max.iter().copied().fold(0.0, f64::max)
    }

    pub fn clamp_accel(&self, a: [f64; 3]) -> [f64; 3] {
        [
            a[0].clamp(self.a_min[0], self.a_max[0]),
            a[1].clamp(self.a_min[1], self.a_max[1]),
            a[2].clamp(self.a_min[2], self.a_max[2]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub p: [f64; 3],
    pub v: [f64; 3],
}

impl State {
    pub fn at_rest(p: [f64; 3]) -> Self {
        Self { p, v: [0.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vehicle: usize,
    pub ts: f64,
    /// `N + 1` positions.
    pub p: Vec<[f64; 3]>,
    /// `N + 1` velocities.
    pub v: Vec<[f64; 3]>,
    /// `N` accelerations.
    pub a: Vec<[f64; 3]>,
}

impl Trajectory {
    /// Number of inputs, `N`.
    pub fn steps(&self) -> usize {
        self.a.len()
    }

    pub fn start(&self) -> State {
        State {
            p: self.p[0],
            v: self.v[0],
        }
    }

    pub fn state(&self, k: usize) -> State {
        State {
            p: self.p[k],
            v: self.v[k],
        }
    }

    /// Verifies the double-integrator recursion and sequence lengths.
    pub fn check_consistency(&self) -> Result<()> {
        let n = self.a.len();
        if self.p.len() != n + 1 || self.v.len() != n + 1 {
            return Err(Error::Shape(format!(
                "trajectory has {} positions, {} velocities and {} inputs",
                self.p.len(),
                self.v.len(),
                n
            )));
        }
        let ts = self.ts;
        for k in 0..n {
            for j in 0..3 {
                let p_next = self.p[k][j] + self.v[k][j] * ts + 0.5 * self.a[k][j] * ts * ts;
                let v_next = self.v[k][j] + self.a[k][j] * ts;
                let residual = (p_next - self.p[k + 1][j]).abs().max((v_next - self.v[k + 1][j]).abs());
                if !(residual <= CONSISTENCY_TOL) {
                    return Err(Error::Inconsistent { k, axis: j, residual });
                }
            }
        }
        Ok(())
    }
}

/// Unique trajectory from `start` under `accels`; no clamping.
pub fn rollout(vehicle: usize, start: State, accels: &[[f64; 3]], ts: f64) -> Trajectory {
    let mut p = Vec::with_capacity(accels.len() + 1);
    let mut v = Vec::with_capacity(accels.len() + 1);
    let (mut pk, mut vk) = (start.p, start.v);
    p.push(pk);
    v.push(vk);
    for a in accels {
        for j in 0..3 {
            pk[j] += vk[j] * ts + 0.5 * a[j] * ts * ts;
            vk[j] += a[j] * ts;
        }
        p.push(pk);
        v.push(vk);
    }
    Trajectory {
        vehicle,
        ts,
        p,
        v,
        a: accels.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    Velocity,
    Acceleration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub axis: usize,
    pub quantity: Quantity,
    /// Distance outside the admissible interval.
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn velocity_violations(&self) -> usize {
        self.violations
            .iter()
            .filter(|v| v.quantity == Quantity::Velocity)
            .count()
    }
}

fn excess(x: f64, lo: f64, hi: f64) -> f64 {
    (lo - x).max(x - hi).max(0.0)
}

/// Lists every `(k, axis)` where velocity or acceleration leaves its bounds by more than
/// [`BOUND_TOL`].
pub fn check_feasible(traj: &Trajectory, spec: &VehicleSpec) -> Result<FeasibilityReport> {
    traj.check_consistency()?;
    let mut violations = Vec::new();
    for (k, v) in traj.v.iter().enumerate() {
        for j in 0..3 {
            let e = excess(v[j], spec.v_min[j], spec.v_max[j]);
            if e > BOUND_TOL {
                violations.push(Violation {
                    k,
                    axis: j,
                    quantity: Quantity::Velocity,
                    magnitude: e,
                });
            }
        }
    }
    for (k, a) in traj.a.iter().enumerate() {
        for j in 0..3 {
            let e = excess(a[j], spec.a_min[j], spec.a_max[j]);
            if e > BOUND_TOL {
                violations.push(Violation {
                    k,
                    axis: j,
                    quantity: Quantity::Acceleration,
                    magnitude: e,
                });
            }
        }
    }
    Ok(FeasibilityReport { violations })
}

/// `N = round(TN / Ts)` (half up) and `t_k = k·Ts`.
pub fn time_grid(tn: f64, ts: f64) -> Result<(usize, Vec<f64>)> {
    if !(ts > 0.0) || !(tn >= ts) || !tn.is_finite() {
        return Err(Error::TimeGrid { tn, ts });
    }
    let n = seconds_to_samples(tn, ts)?;
    Ok((n, (0..=n).map(|k| k as f64 * ts).collect()))
}

/// Rest-to-rest straight-line move of displacement `delta` with a trapezoidal speed profile.
///
/// Per-axis velocity and acceleration stay within `fraction` of the vehicle bounds (velocity
/// bounds are taken in the direction of travel). Switching instants fall on sample boundaries,
/// so the returned accelerations reproduce the displacement exactly under [`rollout`].
pub fn rest_to_rest(delta: [f64; 3], spec: &VehicleSpec, ts: f64, fraction: f64) -> Vec<[f64; 3]> {
    let dist = (delta[0] * delta[0] + delta[1] * delta[1] + delta[2] * delta[2]).sqrt();
    if dist == 0.0 {
        return Vec::new();
    }
    let mut v_cap = f64::INFINITY;
    let mut a_cap = f64::INFINITY;
    for j in 0..3 {
        let share = delta[j].abs() / dist;
        if share == 0.0 {
            continue;
        }
        let v_lim = if delta[j] > 0.0 { spec.v_max[j] } else { -spec.v_min[j] };
        let a_lim = spec.a_max[j].min(-spec.a_min[j]);
        v_cap = v_cap.min(fraction * v_lim / share);
        a_cap = a_cap.min(fraction * a_lim / share);
    }
    // n1 accelerating steps, n2 cruising steps, n1 braking steps:
    // distance = A'·Ts²·n1·(n1 + n2), peak speed = A'·Ts·n1.
    let need_accel = dist / (a_cap * ts * ts);
    let need_speed = dist / (v_cap * ts);
    let n1_max = need_accel.sqrt().ceil().max(1.0) as usize;
    let (mut best_n1, mut best_n2) = (0, 0);
    for n1 in 1..=n1_max {
        let n2_speed = (need_speed - n1 as f64).ceil().max(0.0) as usize;
        let n2_accel = (need_accel / n1 as f64 - n1 as f64).ceil().max(0.0) as usize;
        let n2 = n2_speed.max(n2_accel);
        if best_n1 == 0 || 2 * n1 + n2 < 2 * best_n1 + best_n2 {
            best_n1 = n1;
            best_n2 = n2;
        }
    }
    let (n1, n2) = (best_n1, best_n2);
    let accel = dist / (ts * ts * (n1 * (n1 + n2)) as f64);
    let dir = [delta[0] / dist, delta[1] / dist, delta[2] / dist];
    let push = [accel * dir[0], accel * dir[1], accel * dir[2]];
    let mut out = Vec::with_capacity(2 * n1 + n2);
    out.extend(std::iter::repeat(push).take(n1));
    out.extend(std::iter::repeat([0.0; 3]).take(n2));
    out.extend(std::iter::repeat([-push[0], -push[1], -push[2]]).take(n1));
    out
}

/// Position and velocity samples of every trajectory as one signal.
pub fn to_signal(trajs: &[Trajectory]) -> Result<Signal> {
    let ts = trajs.first().map_or(0.0, |t| t.ts);
    Signal::new(
        ts,
        trajs.iter().map(|t| t.p.clone()).collect(),
        trajs.iter().map(|t| t.v.clone()).collect(),
    )
}

pub const CSV_HEADER: &str = "t,vehicle,px,py,pz,vx,vy,vz,ax,ay,az";

/// Renders trajectories as CSV, one row per `(k, vehicle)`, `k`-major, nine decimals. Vehicle
/// ids are one-based; the acceleration columns of the final sample are zero.
pub fn to_csv(trajs: &[Trajectory]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    let len = trajs.iter().map(|t| t.p.len()).max().unwrap_or(0);
    for k in 0..len {
        for tr in trajs {
            if k >= tr.p.len() {
                continue;
            }
            let a = tr.a.get(k).copied().unwrap_or([0.0; 3]);
            let (p, v) = (tr.p[k], tr.v[k]);
            let _ = writeln!(
                out,
                "{:.9},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                k as f64 * tr.ts,
                tr.vehicle + 1,
                p[0],
                p[1],
                p[2],
                v[0],
                v[1],
                v[2],
                a[0],
                a[1],
                a[2]
            );
        }
    }
    out
}

/// Parses CSV written by [`to_csv`] back into per-vehicle trajectories ordered by vehicle id.
/// Rows must sit on the `k·ts` grid; the dynamics are not re-checked since values are rounded.
pub fn from_csv(text: &str, ts: f64) -> Result<Vec<Trajectory>> {
    let bad = |detail: String| Error::Parse {
        what: "trajectory CSV".into(),
        detail,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(h) => return Err(bad(format!("unexpected header `{h}`"))),
        None => return Err(bad("empty file".into())),
    }
    let mut rows: std::collections::BTreeMap<usize, Vec<(usize, [f64; 9])>> = Default::default();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 11 {
            return Err(bad(format!("row {} has {} fields", i + 2, fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: `{s}`: {e}", i + 2)));
        let t = num(fields[0])?;
        let vehicle: usize = fields[1]
            .parse()
            .map_err(|e| bad(format!("row {}: vehicle `{}`: {e}", i + 2, fields[1])))?;
        if vehicle == 0 {
            return Err(bad(format!("row {}: vehicle ids are one-based", i + 2)));
        }
        let k = (t / ts).round();
        if (k * ts - t).abs() > 1e-6 || k < 0.0 {
            return Err(bad(format!("row {}: t = {t} is off the Ts = {ts} grid", i + 2)));
        }
        let mut vals = [0.0; 9];
        for (slot, s) in vals.iter_mut().zip(&fields[2..]) {
            *slot = num(s)?;
        }
        rows.entry(vehicle - 1).or_default().push((k as usize, vals));
    }
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    let mut out = Vec::new();
    for (vehicle, mut samples) in rows {
        samples.sort_by_key(|(k, _)| *k);
        if samples.iter().enumerate().any(|(i, (k, _))| *k != i) {
            return Err(bad(format!("vehicle {} has missing or duplicate samples", vehicle + 1)));
        }
        let n = samples.len() - 1;
        out.push(Trajectory {
            vehicle,
            ts,
            p: samples.iter().map(|(_, r)| [r[0], r[1], r[2]]).collect(),
            v: samples.iter().map(|(_, r)| [r[3], r[4], r[5]]).collect(),
            a: samples[..n].iter().map(|(_, r)| [r[6], r[7], r[8]]).collect(),
        });
    }
    Ok(out)
}
