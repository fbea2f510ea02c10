//! Quantitative semantics: exact robustness and its log-sum-exp smoothing, with reverse-mode
//! gradients with respect to the signal.
//!
//! A formula is flattened into a pre-order node arena. Each node's value is computed for every
//! sample index at which it is defined (`0..=N − horizon(node)`), bottom-up. Gradients are
//! accumulated top-down over the same arena; because a parent always precedes its children in
//! pre-order, a single ascending sweep finalizes each node's adjoint before it is propagated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl::{band_margin, norm, sub, Formula, Interval, Predicate, Signal};

/// `(1/β)·ln Σ exp(β r_i)`, shifted by the maximum so large `|β r|` cannot overflow.
pub fn lse_max(r: &[f64], beta: f64) -> f64 {
    if r.iter().any(|x| x.is_nan()) {
        return f64::NAN;
    }
    let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = r.iter().map(|&x| (beta * (x - m)).exp()).sum();
    m + s.ln() / beta
}

/// `−(1/β)·ln Σ exp(−β r_i)`, shifted by the minimum.
pub fn lse_min(r: &[f64], beta: f64) -> f64 {
    if r.iter().any(|x| x.is_nan()) {
        return f64::NAN;
    }
    let m = r.iter().copied().fold(f64::INFINITY, f64::min);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = r.iter().map(|&x| (-beta * (x - m)).exp()).sum();
    m - s.ln() / beta
}

fn min_of(r: &[f64]) -> f64 {
    r.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(r: &[f64]) -> f64 {
    r.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluation semantics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Semantics {
    Exact,
    Smooth { beta: f64 },
}

impl Semantics {
    fn min(self, r: &[f64]) -> f64 {
        match self {
            Semantics::Exact => min_of(r),
            Semantics::Smooth { beta } => lse_min(r, beta),
        }
    }

    fn max(self, r: &[f64]) -> f64 {
        match self {
            Semantics::Exact => max_of(r),
            Semantics::Smooth { beta } => lse_max(r, beta),
        }
    }

    /// Band margin `min(x − lo, hi − x)` under this semantics; infinite sides are dropped.
    fn band(self, x: f64, lo: f64, hi: f64) -> f64 {
        match self {
            Semantics::Smooth { beta } if lo.is_finite() && hi.is_finite() => lse_min(&[x - lo, hi - x], beta),
            _ => band_margin(x, lo, hi),
        }
    }
}

/// Derivative of the smooth band margin with respect to `x`.
fn band_slope(x: f64, lo: f64, hi: f64, beta: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let (m1, m2) = (x - lo, hi - x);
            let v = lse_min(&[m1, m2], beta);
            (-beta * (m1 - v)).exp() - (-beta * (m2 - v)).exp()
        }
        (true, false) => 1.0,
        (false, true) => -1.0,
        (false, false) => 0.0,
    }
}

#[derive(Debug, Clone)]
enum Op {
    Pred(Predicate),
    Not,
    And,
    Or,
    Implies,
    Always(Interval),
    Eventually(Interval),
    Next,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    children: Vec<usize>,
    horizon: usize,
    path: String,
}

/// Partial derivatives of a scalar with respect to every position and velocity sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalGradient {
    /// `dp[d][k][j]`
    pub dp: Vec<Vec<[f64; 3]>>,
    /// `dv[d][k][j]`
    pub dv: Vec<Vec<[f64; 3]>>,
}

impl SignalGradient {
    pub fn zeros(vehicles: usize, len: usize) -> Self {
        Self {
            dp: vec![vec![[0.0; 3]; len]; vehicles],
            dv: vec![vec![[0.0; 3]; len]; vehicles],
        }
    }

    /// Flattened as `[d][k][p1 p2 p3 v1 v2 v3]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (dp, dv) in self.dp.iter().zip(&self.dv) {
            for (p, v) in dp.iter().zip(dv) {
                out.extend_from_slice(p);
                out.extend_from_slice(v);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.dp.iter().map(|d| d.len() * 6).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exact value of one subformula at the report's evaluation index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubformulaValue {
    /// Child indices from the root, dot separated; the root is `"0"`.
    pub path: String,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub rho: f64,
    pub rho_smooth: f64,
    pub beta: f64,
    pub breakdown: Vec<SubformulaValue>,
    /// `rho > 0`.
    pub verdict: bool,
}

/// A formula compiled for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Monitor {
    nodes: Vec<Node>,
}

impl Monitor {
    pub fn new(phi: &Formula) -> Self {
        let mut nodes = Vec::with_capacity(phi.size());
        flatten(phi, "0".into(), &mut nodes);
        Self { nodes }
    }

    pub fn horizon(&self) -> usize {
        self.nodes[0].horizon
    }

    /// Dot-separated path of every node, in pre-order.
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.path.as_str())
    }

    fn check(&self, s: &Signal, k: usize) -> Result<()> {
        for n in &self.nodes {
            if let Op::Pred(p) = &n.op {
                if let Some(&v) = p.vehicles().iter().find(|&&v| v >= s.vehicle_count()) {
                    return Err(Error::Shape(format!(
                        "formula references vehicle {} but the signal has {}",
                        v + 1,
                        s.vehicle_count()
                    )));
                }
            }
        }
        let required = k + self.horizon();
        if required > s.last_index() {
            return Err(Error::Horizon {
                required,
                last: s.last_index(),
            });
        }
        Ok(())
    }

    /// Value series of every node: `values[node][t]` for `t in 0..=N − horizon(node)`.
    pub fn series(&self, s: &Signal, sem: Semantics) -> Vec<Vec<f64>> {
        let n = s.last_index() + 1;
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        let mut buf = Vec::new();
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            let len = n.saturating_sub(node.horizon);
            let mut out = Vec::with_capacity(len);
            for t in 0..len {
                let v = match &node.op {
                    Op::Pred(p) => pred_value(p, s, t, sem),
                    Op::Not => -values[node.children[0]][t],
                    Op::And | Op::Or => {
                        buf.clear();
                        buf.extend(node.children.iter().map(|&c| values[c][t]));
                        if matches!(node.op, Op::And) {
                            sem.min(&buf)
                        } else {
                            sem.max(&buf)
                        }
                    }
                    Op::Implies => {
                        let l = values[node.children[0]][t];
                        let r = values[node.children[1]][t];
                        sem.max(&[-l, r])
                    }
                    Op::Always(i) => sem.min(&values[node.children[0]][t + i.lo..=t + i.hi]),
                    Op::Eventually(i) => sem.max(&values[node.children[0]][t + i.lo..=t + i.hi]),
                    Op::Next => values[node.children[0]][t + 1],
                };
                out.push(v);
            }
            values[id] = out;
        }
        values
    }

    fn value(&self, s: &Signal, k: usize, sem: Semantics) -> Result<f64> {
        self.check(s, k)?;
        if let Semantics::Smooth { beta } = sem {
            if !(beta > 0.0) {
                return Err(Error::NonPositiveBeta(beta));
            }
        }
        Ok(self.series(s, sem)[0][k])
    }

    pub fn rho(&self, s: &Signal, k: usize) -> Result<f64> {
        self.value(s, k, Semantics::Exact)
    }

    pub fn rho_smooth(&self, s: &Signal, k: usize, beta: f64) -> Result<f64> {
        self.value(s, k, Semantics::Smooth { beta })
    }

    /// Smooth robustness and its gradient with respect to every signal entry.
    pub fn grad_rho_smooth(&self, s: &Signal, k: usize, beta: f64) -> Result<(f64, SignalGradient)> {
        self.check(s, k)?;
        if !(beta > 0.0) {
            return Err(Error::NonPositiveBeta(beta));
        }
        let sem = Semantics::Smooth { beta };
        let values = self.series(s, sem);
        if let Some(path) = self.first_nonfinite(&values) {
            return Err(Error::NonFinite { path });
        }
        let grad = self.backward(s, k, beta, &values);
        Ok((values[0][k], grad))
    }

    /// Path of the deepest node whose values are non-finite while all its children are finite.
    pub fn first_nonfinite(&self, values: &[Vec<f64>]) -> Option<String> {
        let bad = |id: usize| values[id].iter().any(|v| !v.is_finite());
        (0..self.nodes.len())
            .rev()
            .find(|&id| bad(id) && self.nodes[id].children.iter().all(|&c| !bad(c)))
            .map(|id| self.nodes[id].path.clone())
    }

    fn backward(&self, s: &Signal, k: usize, beta: f64, values: &[Vec<f64>]) -> SignalGradient {
        let mut grad = SignalGradient::zeros(s.vehicle_count(), s.last_index() + 1);
        let mut adj: Vec<Vec<f64>> = values.iter().map(|v| vec![0.0; v.len()]).collect();
        adj[0][k] = 1.0;
        for id in 0..self.nodes.len() {
            let node = &self.nodes[id];
            for t in 0..adj[id].len() {
                let g = adj[id][t];
                if g == 0.0 {
                    continue;
                }
                let out = values[id][t];
                match &node.op {
                    Op::Pred(p) => pred_backward(p, s, t, beta, g, &mut grad),
                    Op::Not => adj[node.children[0]][t] -= g,
                    Op::And | Op::Or => {
                        let sign = if matches!(node.op, Op::And) { -1.0 } else { 1.0 };
                        for &c in &node.children {
                            let w = softmax_weight(values[c][t], out, sign * beta);
                            adj[c][t] += g * w;
                        }
                    }
                    Op::Implies => {
                        let (l, r) = (node.children[0], node.children[1]);
                        adj[l][t] -= g * softmax_weight(-values[l][t], out, beta);
                        adj[r][t] += g * softmax_weight(values[r][t], out, beta);
                    }
                    Op::Always(i) | Op::Eventually(i) => {
                        let sign = if matches!(node.op, Op::Always(_)) { -1.0 } else { 1.0 };
                        let c = node.children[0];
                        for u in t + i.lo..=t + i.hi {
                            let w = softmax_weight(values[c][u], out, sign * beta);
                            adj[c][u] += g * w;
                        }
                    }
                    Op::Next => adj[node.children[0]][t + 1] += g,
                }
            }
        }
        grad
    }

    /// Exact and smooth robustness at `k` with the exact value of every subformula at `k`.
    pub fn report(&self, s: &Signal, k: usize, beta: f64) -> Result<RobustnessReport> {
        self.check(s, k)?;
        if !(beta > 0.0) {
            return Err(Error::NonPositiveBeta(beta));
        }
        let exact = self.series(s, Semantics::Exact);
        let smooth = self.series(s, Semantics::Smooth { beta });
        let breakdown = self
            .nodes
            .iter()
            .zip(&exact)
            .map(|(n, v)| SubformulaValue {
                path: n.path.clone(),
                rho: v[k],
            })
            .collect();
        Ok(RobustnessReport {
            rho: exact[0][k],
            rho_smooth: smooth[0][k],
            beta,
            breakdown,
            verdict: exact[0][k] > 0.0,
        })
    }
}

/// Softmax weight of value `r` in an LSE node with output `out` and signed sharpness
/// (`+β` for max, `−β` for min): `exp(±β (r − out))`.
fn softmax_weight(r: f64, out: f64, signed_beta: f64) -> f64 {
    if r.is_infinite() {
        // an infinite operand is either dominated (weight 0) or the output is infinite too
        return if r == out { 1.0 } else { 0.0 };
    }
    (signed_beta * (r - out)).exp()
}

fn flatten(f: &Formula, path: String, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    let op = match f {
        Formula::Pred(p) => Op::Pred(p.clone()),
        Formula::Not(_) => Op::Not,
        Formula::And(_) => Op::And,
        Formula::Or(_) => Op::Or,
        Formula::Implies(..) => Op::Implies,
        Formula::Always(i, _) => Op::Always(*i),
        Formula::Eventually(i, _) => Op::Eventually(*i),
        Formula::Next(_) => Op::Next,
    };
    nodes.push(Node {
        op,
        children: Vec::new(),
        horizon: f.horizon(),
        path: path.clone(),
    });
    let children = f
        .children()
        .into_iter()
        .enumerate()
        .map(|(i, c)| flatten(c, format!("{path}.{i}"), nodes))
        .collect();
    nodes[id].children = children;
    id
}

fn pred_value(p: &Predicate, s: &Signal, t: usize, sem: Semantics) -> f64 {
    match *p {
        Predicate::AxisBand {
            vehicle,
            axis,
            lo,
            hi,
            negated,
        } => {
            let m = sem.band(s.position(vehicle, t)[axis], lo, hi);
            if negated {
                -m
            } else {
                m
            }
        }
        Predicate::PairDistance { .. } => p.margin(s, t),
        Predicate::SegmentDistanceBand {
            vehicle,
            ref segment,
            lo,
            hi,
            ..
        } => sem.band(segment.distance(s.position(vehicle, t)), lo, hi),
        Predicate::SpeedBand { vehicle, lo, hi } => sem.band(norm(s.velocity(vehicle, t)), lo, hi),
    }
}

fn axpy(acc: &mut [f64; 3], g: f64, dir: [f64; 3]) {
    for j in 0..3 {
        acc[j] += g * dir[j];
    }
}

fn pred_backward(p: &Predicate, s: &Signal, t: usize, beta: f64, g: f64, grad: &mut SignalGradient) {
    match *p {
        Predicate::AxisBand {
            vehicle,
            axis,
            lo,
            hi,
            negated,
        } => {
            let slope = band_slope(s.position(vehicle, t)[axis], lo, hi, beta);
            let sign = if negated { -1.0 } else { 1.0 };
            grad.dp[vehicle][t][axis] += g * sign * slope;
        }
        Predicate::PairDistance { a, b, .. } => {
            let diff = sub(s.position(a, t), s.position(b, t));
            let d = norm(diff);
            if d > 0.0 {
                let u = [diff[0] / d, diff[1] / d, diff[2] / d];
                axpy(&mut grad.dp[a][t], g, u);
                axpy(&mut grad.dp[b][t], -g, u);
            }
        }
        Predicate::SegmentDistanceBand {
            vehicle,
            ref segment,
            lo,
            hi,
            ..
        } => {
            let pos = s.position(vehicle, t);
            let slope = band_slope(segment.distance(pos), lo, hi, beta);
            axpy(&mut grad.dp[vehicle][t], g * slope, segment.distance_gradient(pos));
        }
        Predicate::SpeedBand { vehicle, lo, hi } => {
            let v = s.velocity(vehicle, t);
            let speed = norm(v);
            if speed > 0.0 {
                let slope = band_slope(speed, lo, hi, beta);
                axpy(&mut grad.dv[vehicle][t], g * slope / speed, v);
            }
        }
    }
}

pub fn rho(phi: &Formula, s: &Signal, k: usize) -> Result<f64> {
    Monitor::new(phi).rho(s, k)
}

pub fn rho_smooth(phi: &Formula, s: &Signal, k: usize, beta: f64) -> Result<f64> {
    Monitor::new(phi).rho_smooth(s, k, beta)
}

pub fn grad_rho_smooth(phi: &Formula, s: &Signal, k: usize, beta: f64) -> Result<SignalGradient> {
    Monitor::new(phi).grad_rho_smooth(s, k, beta).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(lo: f64, hi: f64) -> Formula {
        Formula::pred(Predicate::AxisBand {
            vehicle: 0,
            axis: 0,
            lo,
            hi,
            negated: false,
        })
    }

    fn xs(values: &[f64]) -> Signal {
        Signal::from_positions(1.0, vec![values.iter().map(|&x| [x, 0.0, 0.0]).collect()]).unwrap()
    }

    #[test]
    fn lse_reference_values() {
        assert!((lse_min(&[1.0, 1.0], 1.0) - (1.0 - 2f64.ln())).abs() < 1e-12);
        assert!((lse_min(&[1.0, 1.0], 1.0) - 0.30685).abs() < 1e-5);
        for beta in [0.1, 1.0, 1e3] {
            assert_eq!(lse_max(&[3.25], beta), 3.25);
            assert_eq!(lse_min(&[3.25], beta), 3.25);
        }
    }

    #[test]
    fn lse_does_not_overflow() {
        let r = [1e6, -1e6, 5e5];
        assert_eq!(lse_max(&r, 1.0), 1e6);
        assert_eq!(lse_min(&r, 1.0), -1e6);
        assert!(lse_max(&[1.0, 1.0 + 1e-3], 1e9).is_finite());
    }

    #[test]
    fn exact_robustness_examples() {
        assert_eq!(rho(&band(0.0, 4.0), &xs(&[1.0]), 0).unwrap(), 1.0);
        let s = Signal::from_positions(1.0, vec![vec![[0.0; 3]], vec![[2.0, 0.0, 0.0]]]).unwrap();
        let pair = Formula::pred(Predicate::PairDistance {
            a: 0,
            b: 1,
            threshold: 2.0,
        });
        assert_eq!(rho(&pair, &s, 0).unwrap(), 0.0);
        let phi = Formula::always(0, 2, band(0.0, f64::INFINITY)).unwrap();
        assert_eq!(rho(&phi, &xs(&[3.0, 1.0, 2.0]), 0).unwrap(), 1.0);
    }

    #[test]
    fn band_gradient_follows_nearest_side() {
        let g = grad_rho_smooth(&band(0.0, 4.0), &xs(&[1.0]), 0, 100.0).unwrap();
        assert!((g.dp[0][0][0] - 1.0).abs() < 1e-12);
        let g = grad_rho_smooth(&band(0.0, 4.0), &xs(&[3.5]), 0, 100.0).unwrap();
        assert!((g.dp[0][0][0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_distance_gradient_is_unit_direction() {
        let s = Signal::from_positions(1.0, vec![vec![[0.0; 3]], vec![[3.0, 0.0, 0.0]]]).unwrap();
        let pair = Formula::pred(Predicate::PairDistance {
            a: 0,
            b: 1,
            threshold: 1.0,
        });
        let g = grad_rho_smooth(&pair, &s, 0, 10.0).unwrap();
        assert_eq!(g.dp[0][0], [-1.0, 0.0, 0.0]);
        assert_eq!(g.dp[1][0], [1.0, 0.0, 0.0]);
        assert_eq!(g.len(), 12);

        let same = Signal::from_positions(1.0, vec![vec![[1.0; 3]], vec![[1.0; 3]]]).unwrap();
        let g = grad_rho_smooth(&pair, &same, 0, 10.0).unwrap();
        assert!(g.to_vec().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nonpositive_beta_is_rejected() {
        assert!(matches!(
            rho_smooth(&band(0.0, 1.0), &xs(&[0.5]), 0, 0.0),
            Err(Error::NonPositiveBeta(_))
        ));
        assert!(grad_rho_smooth(&band(0.0, 1.0), &xs(&[0.5]), 0, -1.0).is_err());
    }

    #[test]
    fn horizon_violation_is_an_error() {
        let phi = Formula::eventually(0, 3, band(0.0, 1.0)).unwrap();
        assert!(matches!(rho(&phi, &xs(&[0.0, 0.0]), 0), Err(Error::Horizon { .. })));
    }

    #[test]
    fn report_breaks_down_by_path() {
        let phi = Formula::And(vec![band(0.0, 4.0), band(0.0, 10.0)]);
        let r = Monitor::new(&phi).report(&xs(&[1.0]), 0, 10.0).unwrap();
        assert_eq!(r.rho, 1.0);
        assert!(r.verdict);
        let paths: Vec<_> = r.breakdown.iter().map(|b| b.path.as_str()).collect();
        assert_eq!(paths, ["0", "0.0", "0.1"]);
        assert_eq!(r.breakdown[2].rho, 1.0);
        assert!(r.rho_smooth < r.rho);
    }

    #[test]
    fn speed_band_gradient() {
        let s = Signal::new(1.0, vec![vec![[0.0; 3]]], vec![vec![[3.0, 4.0, 0.0]]]).unwrap();
        let phi = Formula::pred(Predicate::SpeedBand {
            vehicle: 0,
            lo: 0.0,
            hi: 5.5,
        });
        let (v, g) = Monitor::new(&phi).grad_rho_smooth(&s, 0, 1e3).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
        assert!((g.dv[0][0][0] + 0.6).abs() < 1e-9);
        assert!((g.dv[0][0][1] + 0.8).abs() < 1e-9);
    }
}
