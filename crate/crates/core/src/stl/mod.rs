//! Discrete-time Signal Temporal Logic: syntax tree, textual form and boolean semantics.
//!
//! Temporal windows are closed intervals of sample indices. Predicates refer to vehicles and
//! blade segments by zero-based index; the textual form uses one-based names (`p1`, `b1`).

mod parser;
mod print;

pub use parser::{parse, parse_expr, Binding, Expr};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Segment;

/// Closed window `[lo, hi]` in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::MalformedFormula(format!("window [{lo}, {hi}] has lo > hi")));
        }
        Ok(Self { lo, hi })
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predicate {
    /// Position coordinate `axis` of `vehicle` inside the open interval `(lo, hi)`.
    /// Either bound may be infinite, which turns the band into a half-space.
    AxisBand {
        vehicle: usize,
        axis: usize,
        lo: f64,
        hi: f64,
        negated: bool,
    },
    /// `‖p_a − p_b‖ ≥ threshold`.
    PairDistance { a: usize, b: usize, threshold: f64 },
    /// Distance from `vehicle` to a blade segment inside the open interval `(lo, hi)`,
    /// i.e. within a halfwidth ε of the standoff distance Γ: `(Γ − ε, Γ + ε)`.
    SegmentDistanceBand {
        vehicle: usize,
        segment_id: usize,
        segment: Segment,
        lo: f64,
        hi: f64,
    },
    /// Speed magnitude of `vehicle` inside `(lo, hi)`.
    SpeedBand { vehicle: usize, lo: f64, hi: f64 },
}

impl Predicate {
    /// Vehicles whose signals the predicate reads.
    pub fn vehicles(&self) -> Vec<usize> {
        match *self {
            Predicate::AxisBand { vehicle, .. }
            | Predicate::SegmentDistanceBand { vehicle, .. }
            | Predicate::SpeedBand { vehicle, .. } => vec![vehicle],
            Predicate::PairDistance { a, b, .. } => vec![a, b],
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedFormula(msg));
        match *self {
            Predicate::AxisBand { axis, lo, hi, .. } => {
                if axis > 2 {
                    return bad(format!("axis index {axis} out of range"));
                }
                if lo.is_nan() || hi.is_nan() || lo >= hi {
                    return bad(format!("band ({lo}, {hi}) is empty"));
                }
                if lo.is_infinite() && hi.is_infinite() {
                    return bad("band with two infinite bounds is vacuous".into());
                }
            }
            Predicate::PairDistance { a, b, threshold } => {
                if a == b {
                    return bad(format!("pair distance between vehicle {a} and itself"));
                }
                if !(threshold >= 0.0) || !threshold.is_finite() {
                    return bad(format!("distance threshold {threshold} must be finite and >= 0"));
                }
            }
            Predicate::SegmentDistanceBand { lo, hi, .. } => {
                if !(lo < hi) || !lo.is_finite() || hi.is_nan() {
                    return bad(format!("segment distance band ({lo}, {hi}) is empty or has no lower bound"));
                }
            }
            Predicate::SpeedBand { lo, hi, .. } => {
                if lo.is_nan() || hi.is_nan() || lo >= hi || (lo.is_infinite() && hi.is_infinite()) {
                    return bad(format!("speed band ({lo}, {hi}) is empty or vacuous"));
                }
            }
        }
        Ok(())
    }

    /// Signed margin: positive strictly inside the predicate's set, negative outside.
    pub fn margin(&self, s: &Signal, k: usize) -> f64 {
        match *self {
            Predicate::AxisBand {
                vehicle,
                axis,
                lo,
                hi,
                negated,
            } => {
                let m = band_margin(s.position(vehicle, k)[axis], lo, hi);
                if negated {
                    -m
                } else {
                    m
                }
            }
            Predicate::PairDistance { a, b, threshold } => {
                norm(sub(s.position(a, k), s.position(b, k))) - threshold
            }
            Predicate::SegmentDistanceBand {
                vehicle,
                ref segment,
                lo,
                hi,
                ..
            } => band_margin(segment.distance(s.position(vehicle, k)), lo, hi),
            Predicate::SpeedBand { vehicle, lo, hi } => band_margin(norm(s.velocity(vehicle, k)), lo, hi),
        }
    }

    /// Boolean satisfaction. Open bands use strict inequalities, the distance threshold is
    /// non-strict.
    pub fn holds(&self, s: &Signal, k: usize) -> bool {
        match *self {
            Predicate::AxisBand {
                vehicle,
                axis,
                lo,
                hi,
                negated,
            } => {
                let x = s.position(vehicle, k)[axis];
                (lo < x && x < hi) != negated
            }
            Predicate::PairDistance { a, b, threshold } => {
                norm(sub(s.position(a, k), s.position(b, k))) >= threshold
            }
            Predicate::SegmentDistanceBand {
                vehicle,
                ref segment,
                lo,
                hi,
                ..
            } => {
                let d = segment.distance(s.position(vehicle, k));
                lo < d && d < hi
            }
            Predicate::SpeedBand { vehicle, lo, hi } => {
                let v = norm(s.velocity(vehicle, k));
                lo < v && v < hi
            }
        }
    }
}

/// `min(x − lo, hi − x)`, dropping infinite sides.
pub(crate) fn band_margin(x: f64, lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (x - lo).min(hi - x),
        (true, false) => x - lo,
        (false, true) => hi - x,
        (false, false) => f64::INFINITY,
    }
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    Pred(Predicate),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Next(Box<Formula>),
}

impl Formula {
    pub fn pred(p: Predicate) -> Self {
        Formula::Pred(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Self {
        Formula::Implies(Box::new(lhs), Box::new(rhs))
    }

    pub fn always(lo: usize, hi: usize, f: Formula) -> Result<Self> {
        Ok(Formula::Always(Interval::new(lo, hi)?, Box::new(f)))
    }

    pub fn eventually(lo: usize, hi: usize, f: Formula) -> Result<Self> {
        Ok(Formula::Eventually(Interval::new(lo, hi)?, Box::new(f)))
    }

    pub fn next(f: Formula) -> Self {
        Formula::Next(Box::new(f))
    }

    /// Conjunction that collapses a single operand to itself.
    ///
    /// Panics on an empty operand list.
    pub fn and_all(mut children: Vec<Formula>) -> Self {
        assert!(!children.is_empty(), "empty conjunction");
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            Formula::And(children)
        }
    }

    /// Disjunction that collapses a single operand to itself.
    ///
    /// Panics on an empty operand list.
    pub fn or_all(mut children: Vec<Formula>) -> Self {
        assert!(!children.is_empty(), "empty disjunction");
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            Formula::Or(children)
        }
    }

    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::Pred(_) => vec![],
            Formula::Not(c) | Formula::Always(_, c) | Formula::Eventually(_, c) | Formula::Next(c) => {
                vec![c]
            }
            Formula::And(cs) | Formula::Or(cs) => cs.iter().collect(),
            Formula::Implies(l, r) => vec![l, r],
        }
    }

    /// Checks arity, window and predicate invariants over the whole tree.
    pub fn validate(&self) -> Result<()> {
        match self {
            Formula::Pred(p) => p.check()?,
            Formula::And(cs) | Formula::Or(cs) if cs.len() < 2 => {
                return Err(Error::MalformedFormula(format!(
                    "n-ary connective with {} operand(s)",
                    cs.len()
                )))
            }
            Formula::Always(i, _) | Formula::Eventually(i, _) if i.lo > i.hi => {
                return Err(Error::MalformedFormula(format!("window [{}, {}]", i.lo, i.hi)))
            }
            _ => {}
        }
        for c in self.children() {
            c.validate()?;
        }
        Ok(())
    }

    /// Number of samples beyond the evaluation index that the formula reads.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::Pred(_) => 0,
            Formula::Not(c) => c.horizon(),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().map(Formula::horizon).max().unwrap_or(0),
            Formula::Implies(l, r) => l.horizon().max(r.horizon()),
            Formula::Always(i, c) | Formula::Eventually(i, c) => i.hi + c.horizon(),
            Formula::Next(c) => 1 + c.horizon(),
        }
    }

    /// Total node count.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Formula::size).sum::<usize>()
    }

    /// Visits every predicate in pre-order.
    pub fn for_each_predicate<'a>(&'a self, f: &mut impl FnMut(&'a Predicate)) {
        if let Formula::Pred(p) = self {
            f(p);
        }
        for c in self.children() {
            c.for_each_predicate(f);
        }
    }

    /// Rewrites every predicate in place.
    pub fn map_predicates(&self, f: &mut impl FnMut(&Predicate) -> Predicate) -> Formula {
        match self {
            Formula::Pred(p) => Formula::Pred(f(p)),
            Formula::Not(c) => Formula::not(c.map_predicates(f)),
            Formula::And(cs) => Formula::And(cs.iter().map(|c| c.map_predicates(f)).collect()),
            Formula::Or(cs) => Formula::Or(cs.iter().map(|c| c.map_predicates(f)).collect()),
            Formula::Implies(l, r) => Formula::implies(l.map_predicates(f), r.map_predicates(f)),
            Formula::Always(i, c) => Formula::Always(*i, Box::new(c.map_predicates(f))),
            Formula::Eventually(i, c) => Formula::Eventually(*i, Box::new(c.map_predicates(f))),
            Formula::Next(c) => Formula::next(c.map_predicates(f)),
        }
    }

    /// Boolean satisfaction at sample `k`.
    pub fn eval_bool(&self, s: &Signal, k: usize) -> Result<bool> {
        s.check_vehicles(self)?;
        let required = k + self.horizon();
        if required > s.last_index() {
            return Err(Error::Horizon {
                required,
                last: s.last_index(),
            });
        }
        Ok(self.sat(s, k))
    }

    fn sat(&self, s: &Signal, k: usize) -> bool {
        match self {
            Formula::Pred(p) => p.holds(s, k),
            Formula::Not(c) => !c.sat(s, k),
            Formula::And(cs) => cs.iter().all(|c| c.sat(s, k)),
            Formula::Or(cs) => cs.iter().any(|c| c.sat(s, k)),
            Formula::Implies(l, r) => !l.sat(s, k) || r.sat(s, k),
            Formula::Always(i, c) => (k + i.lo..=k + i.hi).all(|t| c.sat(s, t)),
            Formula::Eventually(i, c) => (k + i.lo..=k + i.hi).any(|t| c.sat(s, t)),
            Formula::Next(c) => c.sat(s, k + 1),
        }
    }
}

/// Sampled positions and velocities of every vehicle on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    ts: f64,
    positions: Vec<Vec<[f64; 3]>>,
    velocities: Vec<Vec<[f64; 3]>>,
}

impl Signal {
    /// `positions[d][k]`, `velocities[d][k]`; every sequence must have the same length.
    pub fn new(ts: f64, positions: Vec<Vec<[f64; 3]>>, velocities: Vec<Vec<[f64; 3]>>) -> Result<Self> {
        if !(ts > 0.0) {
            return Err(Error::Shape(format!("sampling period {ts} must be positive")));
        }
        if positions.is_empty() || positions.len() != velocities.len() {
            return Err(Error::Shape("position and velocity vehicle counts differ or are zero".into()));
        }
        let len = positions[0].len();
        if len == 0 {
            return Err(Error::Shape("empty signal".into()));
        }
        if positions.iter().chain(&velocities).any(|seq| seq.len() != len) {
            return Err(Error::Shape("sequences have different lengths".into()));
        }
        Ok(Self {
            ts,
            positions,
            velocities,
        })
    }

    /// Signal with positions only; velocities are zero.
    pub fn from_positions(ts: f64, positions: Vec<Vec<[f64; 3]>>) -> Result<Self> {
        let velocities = positions.iter().map(|p| vec![[0.0; 3]; p.len()]).collect();
        Self::new(ts, positions, velocities)
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    /// Index of the last sample, `N`.
    pub fn last_index(&self) -> usize {
        self.positions[0].len() - 1
    }

    pub fn vehicle_count(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, vehicle: usize, k: usize) -> [f64; 3] {
        self.positions[vehicle][k]
    }

    pub fn velocity(&self, vehicle: usize, k: usize) -> [f64; 3] {
        self.velocities[vehicle][k]
    }

    pub fn positions(&self, vehicle: usize) -> &[[f64; 3]] {
        &self.positions[vehicle]
    }

    pub fn velocities(&self, vehicle: usize) -> &[[f64; 3]] {
        &self.velocities[vehicle]
    }

    pub(crate) fn check_vehicles(&self, phi: &Formula) -> Result<()> {
        let mut worst = None;
        phi.for_each_predicate(&mut |p| {
            for v in p.vehicles() {
                if v >= self.vehicle_count() {
                    worst = Some(v);
                }
            }
        });
        match worst {
            Some(v) => Err(Error::Shape(format!(
                "formula references vehicle {} but the signal has {}",
                v + 1,
                self.vehicle_count()
            ))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_band(lo: f64, hi: f64) -> Formula {
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
    fn axis_band_membership() {
        assert!(x_band(0.0, 2.0).eval_bool(&xs(&[1.0]), 0).unwrap());
        assert!(!x_band(0.0, 2.0).eval_bool(&xs(&[2.0]), 0).unwrap());
    }

    #[test]
    fn always_and_eventually_windows() {
        let nonneg = x_band(0.0, f64::INFINITY);
        let phi = Formula::always(0, 2, nonneg).unwrap();
        assert!(!phi.eval_bool(&xs(&[1.0, -1.0, 1.0]), 0).unwrap());

        let ge2 = x_band(2.0, f64::INFINITY);
        let phi = Formula::eventually(0, 2, ge2).unwrap();
        assert!(phi.eval_bool(&xs(&[0.0, 1.0, 3.0]), 0).unwrap());
    }

    #[test]
    fn horizon_is_additive() {
        let p = x_band(0.0, 1.0);
        assert_eq!(p.horizon(), 0);
        assert_eq!(Formula::always(0, 10, p.clone()).unwrap().horizon(), 10);
        let nested = Formula::eventually(0, 5, Formula::always(0, 3, p).unwrap()).unwrap();
        assert_eq!(nested.horizon(), 8);
    }

    #[test]
    fn window_past_signal_end_is_a_horizon_error() {
        let phi = Formula::always(0, 3, x_band(0.0, 1.0)).unwrap();
        assert!(matches!(
            phi.eval_bool(&xs(&[0.5, 0.5]), 0),
            Err(Error::Horizon { required: 3, last: 1 })
        ));
        let phi = Formula::next(x_band(0.0, 1.0));
        assert!(phi.eval_bool(&xs(&[0.5, 0.5]), 1).is_err());
    }

    #[test]
    fn negated_band_and_half_spaces() {
        let outside = Formula::pred(Predicate::AxisBand {
            vehicle: 0,
            axis: 0,
            lo: 0.0,
            hi: 1.0,
            negated: true,
        });
        assert!(outside.eval_bool(&xs(&[1.5]), 0).unwrap());
        assert!(!outside.eval_bool(&xs(&[0.5]), 0).unwrap());
        assert_eq!(band_margin(3.0, f64::NEG_INFINITY, 1.0), -2.0);
    }

    #[test]
    fn implication_is_material() {
        let a = x_band(0.0, 1.0);
        let b = x_band(0.0, 0.4);
        let phi = Formula::implies(a, b);
        assert!(phi.eval_bool(&xs(&[2.0]), 0).unwrap());
        assert!(!phi.eval_bool(&xs(&[0.5]), 0).unwrap());
        assert!(phi.eval_bool(&xs(&[0.2]), 0).unwrap());
    }

    #[test]
    fn arity_checks() {
        assert!(Formula::And(vec![x_band(0.0, 1.0)]).validate().is_err());
        assert!(x_band(1.0, 1.0).validate().is_err());
        assert!(x_band(f64::NEG_INFINITY, f64::INFINITY).validate().is_err());
        assert!(Interval::new(3, 2).is_err());
    }

    #[test]
    fn signal_shape_is_checked() {
        assert!(Signal::from_positions(1.0, vec![vec![[0.0; 3]; 3], vec![[0.0; 3]; 2]]).is_err());
        assert!(Signal::from_positions(0.0, vec![vec![[0.0; 3]; 3]]).is_err());
        let pair = Formula::pred(Predicate::PairDistance {
            a: 0,
            b: 1,
            threshold: 1.0,
        });
        assert!(matches!(pair.eval_bool(&xs(&[0.0]), 0), Err(Error::Shape(_))));
    }
}
