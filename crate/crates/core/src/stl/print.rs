use std::fmt::Write;

use crate::stl::{Formula, Predicate};

const AXES: [&str; 3] = ["x", "y", "z"];

impl Formula {
    /// Renders the formula in the textual syntax with canonical names (`p1`, `b1`) and window
    /// bounds in seconds. Parsing the result with [`crate::stl::Binding::canonical`] over the same
    /// sampling period yields an equal formula.
    pub fn to_text(&self, ts: f64) -> String {
        let mut out = String::new();
        write_formula(&mut out, self, ts);
        out
    }
}

fn is_binary(f: &Formula) -> bool {
    matches!(f, Formula::And(_) | Formula::Or(_) | Formula::Implies(..))
}

fn write_operand(out: &mut String, f: &Formula, ts: f64) {
    if is_binary(f) {
        out.push('(');
        write_formula(out, f, ts);
        out.push(')');
    } else {
        write_formula(out, f, ts);
    }
}

fn write_joined(out: &mut String, cs: &[Formula], sep: &str, ts: f64) {
    for (i, c) in cs.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        write_operand(out, c, ts);
    }
}

fn write_formula(out: &mut String, f: &Formula, ts: f64) {
    match f {
        Formula::Pred(p) => write_predicate(out, p),
        Formula::Not(c) => {
            out.push_str("not ");
            write_operand(out, c, ts);
        }
        Formula::And(cs) => write_joined(out, cs, " and ", ts),
        Formula::Or(cs) => write_joined(out, cs, " or ", ts),
        Formula::Implies(l, r) => {
            write_operand(out, l, ts);
            out.push_str(" -> ");
            write_operand(out, r, ts);
        }
        Formula::Always(i, c) | Formula::Eventually(i, c) => {
            let op = if matches!(f, Formula::Always(..)) { 'G' } else { 'F' };
            let _ = write!(out, "{op}[{}, {}] ", i.lo as f64 * ts, i.hi as f64 * ts);
            write_operand(out, c, ts);
        }
        Formula::Next(c) => {
            out.push_str("X ");
            write_operand(out, c, ts);
        }
    }
}

fn write_predicate(out: &mut String, p: &Predicate) {
    let _ = match *p {
        Predicate::AxisBand {
            vehicle,
            axis,
            lo,
            hi,
            negated,
        } => {
            let not = if negated { "not " } else { "" };
            write!(out, "p{}.{} {not}in ({lo}, {hi})", vehicle + 1, AXES[axis])
        }
        Predicate::PairDistance { a, b, threshold } => {
            write!(out, "dist(p{}, p{}) >= {threshold}", a + 1, b + 1)
        }
        Predicate::SegmentDistanceBand {
            vehicle,
            segment_id,
            lo,
            hi,
            ..
        } => write!(out, "bladedist(p{}, b{}) in ({lo}, {hi})", vehicle + 1, segment_id + 1),
        Predicate::SpeedBand { vehicle, lo, hi } => {
            write!(out, "speed(p{}) in ({lo}, {hi})", vehicle + 1)
        }
    };
}
