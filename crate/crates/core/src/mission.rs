//! Mission configuration, validation and the mission formula.
//!
//! The formula is a conjunction of clauses:
//!
//! * per vehicle, `G[0,T_N]` of workspace membership, obstacle avoidance and separation from
//!   every other vehicle;
//! * per target, `F[0,T_N−T_ins]` of some vehicle staying inside it for `G[0,T_ins]`;
//! * per blade side, the same with the blade box, the standoff-distance band and optionally a
//!   speed band;
//! * per vehicle, `F[1,T_N]` home, and `G[1,T_N−1](home → X home)`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{time_grid, VehicleSpec};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Segment};
use crate::stl::{Binding, Formula, Predicate};
use crate::units::seconds_to_samples;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BladeConfig {
    /// Region the vehicle must be in while scanning this blade side.
    #[serde(rename = "box")]
    pub bounds: Aabb,
    pub a: [f64; 3],
    pub b: [f64; 3],
}

impl BladeConfig {
    pub fn segment(&self) -> Segment {
        Segment::new(self.a, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    #[serde(rename = "TN")]
    pub tn: f64,
    #[serde(rename = "Tins")]
    pub t_ins: f64,
    #[serde(rename = "Tbla")]
    pub t_bla: f64,
    #[serde(rename = "Ts")]
    pub ts: f64,
}

fn default_beta() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub gamma_dis: f64,
    pub gamma_bla: f64,
    pub eps: f64,
    pub zeta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub workspace: Aabb,
    #[serde(default)]
    pub obstacles: Vec<Aabb>,
    #[serde(default)]
    pub targets: Vec<Aabb>,
    #[serde(default)]
    pub blades: Vec<BladeConfig>,
    pub homes: Vec<Aabb>,
    pub vehicles: Vec<VehicleSpec>,
    pub timing: Timing,
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blade_speed_band: Option<[f64; 2]>,
}

/// Sample counts derived from the timing section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub n: usize,
    pub n_ins: usize,
    pub n_bla: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    BoxDegenerate,
    BoxOutsideWorkspace,
    WindowExceedsHorizon,
    InvalidTimeGrid,
    DepotInObstacle,
    DepotOutsideWorkspace,
    NonpositiveParameter,
    NegativeZeta,
    NoVehicles,
    VehicleBounds,
    HomeCountMismatch,
    SegmentDegenerate,
    SegmentOutsideBox,
    SpeedBandInvalid,
    NonfiniteValue,
}

impl IssueCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            IssueCode::BoxDegenerate => "BOX_DEGENERATE",
            IssueCode::BoxOutsideWorkspace => "BOX_OUTSIDE_WORKSPACE",
            IssueCode::WindowExceedsHorizon => "WINDOW_EXCEEDS_HORIZON",
            IssueCode::InvalidTimeGrid => "INVALID_TIME_GRID",
            IssueCode::DepotInObstacle => "DEPOT_IN_OBSTACLE",
            IssueCode::DepotOutsideWorkspace => "DEPOT_OUTSIDE_WORKSPACE",
            IssueCode::NonpositiveParameter => "NONPOSITIVE_PARAMETER",
            IssueCode::NegativeZeta => "NEGATIVE_ZETA",
            IssueCode::NoVehicles => "NO_VEHICLES",
            IssueCode::VehicleBounds => "VEHICLE_BOUNDS",
            IssueCode::HomeCountMismatch => "HOME_COUNT_MISMATCH",
            IssueCode::SegmentDegenerate => "SEGMENT_DEGENERATE",
            IssueCode::SegmentOutsideBox => "SEGMENT_OUTSIDE_BOX",
            IssueCode::SpeedBandInvalid => "SPEED_BAND_INVALID",
            IssueCode::NonfiniteValue => "NONFINITE_VALUE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    fn push(&mut self, code: IssueCode, message: impl Into<String>) {
        self.issues.push(Issue {
            code,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.issues {
            writeln!(f, "{}: {}", i.code.as_str(), i.message)?;
        }
        Ok(())
    }
}

/// Exact point-to-segment Euclidean distance.
pub fn dist_to_segment(p: [f64; 3], seg: &Segment) -> f64 {
    seg.distance(p)
}

impl MissionConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn vehicle_count(&self) -> usize {
        self.vehicles.len()
    }

    pub fn ts(&self) -> f64 {
        self.timing.ts
    }

    pub fn segments(&self) -> Vec<Segment> {
        self.blades.iter().map(BladeConfig::segment).collect()
    }

    pub fn grid(&self) -> Result<Grid> {
        let (n, _) = time_grid(self.timing.tn, self.timing.ts)?;
        Ok(Grid {
            n,
            n_ins: seconds_to_samples(self.timing.t_ins, self.timing.ts)?,
            n_bla: seconds_to_samples(self.timing.t_bla, self.timing.ts)?,
        })
    }

    /// Lists every invariant violation; an empty report means the configuration is usable.
    pub fn validate(&self) -> ValidationReport {
        use IssueCode::*;
        let mut r = ValidationReport::default();
        let ws = &self.workspace;

        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let mut numbers: Vec<f64> = Vec::new();
        numbers.extend(ws.lo.iter().chain(&ws.hi));
        for b in self.obstacles.iter().chain(&self.targets).chain(&self.homes) {
            numbers.extend(b.lo.iter().chain(&b.hi));
        }
        for b in &self.blades {
            numbers.extend(b.bounds.lo.iter().chain(&b.bounds.hi).chain(&b.a).chain(&b.b));
        }
        for v in &self.vehicles {
            numbers.extend(v.depot.iter().chain(&v.v_min).chain(&v.v_max).chain(&v.a_min).chain(&v.a_max));
        }
        let t = &self.timing;
        let p = &self.params;
        numbers.extend([t.tn, t.t_ins, t.t_bla, t.ts, p.gamma_dis, p.gamma_bla, p.eps, p.zeta, p.beta]);
        if !finite(&numbers) {
            r.push(NonfiniteValue, "configuration contains a non-finite number");
            return r;
        }

        let check_box = |name: String, b: &Aabb, r: &mut ValidationReport| {
            if b.is_degenerate() {
                r.push(BoxDegenerate, format!("{name}: lo must be < hi on every axis"));
            } else if !b.intersects(ws) {
                r.push(BoxOutsideWorkspace, format!("{name} does not intersect the workspace"));
            }
        };
        if ws.is_degenerate() {
            r.push(BoxDegenerate, "workspace: lo must be < hi on every axis");
        }
        for (q, b) in self.obstacles.iter().enumerate() {
            check_box(format!("obstacle {}", q + 1), b, &mut r);
        }
        for (q, b) in self.targets.iter().enumerate() {
            check_box(format!("target {}", q + 1), b, &mut r);
        }
        for (d, b) in self.homes.iter().enumerate() {
            check_box(format!("home {}", d + 1), b, &mut r);
        }
        for (q, b) in self.blades.iter().enumerate() {
            check_box(format!("blade {} box", q + 1), &b.bounds, &mut r);
            let seg = b.segment();
            if !(seg.length() > 0.0) {
                r.push(SegmentDegenerate, format!("blade {}: endpoints coincide", q + 1));
            } else {
                let grown = b.bounds.inflate(p.gamma_bla + p.eps);
                if !grown.contains_closed(seg.a) || !grown.contains_closed(seg.b) {
                    r.push(
                        SegmentOutsideBox,
                        format!("blade {}: segment leaves its box inflated by gamma_bla + eps", q + 1),
                    );
                }
            }
        }

        if self.vehicles.is_empty() {
            r.push(NoVehicles, "at least one vehicle is required");
        }
        if self.homes.len() != self.vehicles.len() {
            r.push(
                HomeCountMismatch,
                format!("{} homes for {} vehicles", self.homes.len(), self.vehicles.len()),
            );
        }
        for (d, v) in self.vehicles.iter().enumerate() {
            for j in 0..3 {
                if !(v.v_min[j] < 0.0 && 0.0 < v.v_max[j] && v.a_min[j] < 0.0 && 0.0 < v.a_max[j]) {
                    r.push(
                        VehicleBounds,
                        format!("vehicle {} axis {}: need v_min < 0 < v_max and a_min < 0 < a_max", d + 1, j + 1),
                    );
                    break;
                }
            }
            if !ws.contains(v.depot) {
                r.push(DepotOutsideWorkspace, format!("vehicle {} depot is outside the workspace", d + 1));
            }
            for (q, o) in self.obstacles.iter().enumerate() {
                if o.contains_closed(v.depot) {
                    r.push(
                        DepotInObstacle,
                        format!("vehicle {} depot lies in obstacle {}", d + 1, q + 1),
                    );
                }
            }
        }

        if !(t.ts > 0.0) || !(t.tn >= t.ts) {
            r.push(InvalidTimeGrid, format!("need TN >= Ts > 0 (TN = {}, Ts = {})", t.tn, t.ts));
        }
        if t.t_ins < 0.0 || t.t_bla < 0.0 {
            r.push(NonpositiveParameter, "dwell times must be non-negative");
        }
        if t.t_ins > t.tn {
            r.push(WindowExceedsHorizon, format!("Tins = {} exceeds TN = {}", t.t_ins, t.tn));
        }
        if t.t_bla > t.tn {
            r.push(WindowExceedsHorizon, format!("Tbla = {} exceeds TN = {}", t.t_bla, t.tn));
        }
        if !(p.gamma_dis > 0.0) {
            r.push(NonpositiveParameter, "gamma_dis must be > 0");
        }
        if !(p.eps > 0.0) {
            r.push(NonpositiveParameter, "eps must be > 0");
        }
        if p.gamma_bla < 0.0 {
            r.push(NonpositiveParameter, "gamma_bla must be >= 0");
        }
        if !(p.beta > 0.0) {
            r.push(NonpositiveParameter, "beta must be > 0");
        }
        if p.zeta < 0.0 {
            r.push(NegativeZeta, "zeta must be >= 0");
        }
        if let Some([lo, hi]) = self.blade_speed_band {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                r.push(SpeedBandInvalid, format!("blade speed band ({lo}, {hi}) is empty"));
            }
        }
        r
    }

    /// Name resolution for textual formulas: vehicles `p1..`, segments `b1..`, and macros
    /// `ws<d>`, `home<d>`, `obs<q>_<d>` (avoidance), `target<q>_<d>`, `blade<q>_<d>`.
    pub fn binding(&self) -> Binding {
        let mut env = Binding::canonical(self.timing.ts, self.vehicles.len(), &self.segments());
        let mut macros = BTreeMap::new();
        for d in 0..self.vehicles.len() {
            macros.insert(format!("ws{}", d + 1), in_box(d, &self.workspace));
            if let Some(h) = self.homes.get(d) {
                macros.insert(format!("home{}", d + 1), in_box(d, h));
            }
            for (q, o) in self.obstacles.iter().enumerate() {
                macros.insert(format!("obs{}_{}", q + 1, d + 1), avoid_box(d, o));
            }
            for (q, tgt) in self.targets.iter().enumerate() {
                macros.insert(format!("target{}_{}", q + 1, d + 1), in_box(d, tgt));
            }
            for q in 0..self.blades.len() {
                macros.insert(format!("blade{}_{}", q + 1, d + 1), self.blade_scan(d, q));
            }
        }
        env.macros = macros;
        env
    }

    /// Scan condition of vehicle `d` for blade side `q`: box, standoff band, optional speed band.
    pub fn blade_scan(&self, d: usize, q: usize) -> Formula {
        let blade = &self.blades[q];
        let Formula::And(mut parts) = in_box(d, &blade.bounds) else {
            unreachable!("box membership is a conjunction")
        };
        parts.push(Formula::Pred(Predicate::SegmentDistanceBand {
            vehicle: d,
            segment_id: q,
            segment: blade.segment(),
            lo: self.params.gamma_bla - self.params.eps,
            hi: self.params.gamma_bla + self.params.eps,
        }));
        if let Some([lo, hi]) = self.blade_speed_band {
            parts.push(Formula::Pred(Predicate::SpeedBand { vehicle: d, lo, hi }));
        }
        Formula::And(parts)
    }
}

/// Membership of vehicle `d` in the open box.
pub fn in_box(d: usize, b: &Aabb) -> Formula {
    Formula::And(
        (0..3)
            .map(|axis| {
                Formula::Pred(Predicate::AxisBand {
                    vehicle: d,
                    axis,
                    lo: b.lo[axis],
                    hi: b.hi[axis],
                    negated: false,
                })
            })
            .collect(),
    )
}

/// Vehicle `d` outside the box: the disjunction of the six outward half-spaces.
pub fn avoid_box(d: usize, b: &Aabb) -> Formula {
    let mut sides = Vec::with_capacity(6);
    for axis in 0..3 {
        sides.push(Formula::Pred(Predicate::AxisBand {
            vehicle: d,
            axis,
            lo: f64::NEG_INFINITY,
            hi: b.lo[axis],
            negated: false,
        }));
        sides.push(Formula::Pred(Predicate::AxisBand {
            vehicle: d,
            axis,
            lo: b.hi[axis],
            hi: f64::INFINITY,
            negated: false,
        }));
    }
    Formula::Or(sides)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClauseKind {
    Safety(usize),
    Target(usize),
    Blade(usize),
    Home(usize),
    HomeAbsorbing(usize),
}

impl ClauseKind {
    pub fn label(&self) -> String {
        match *self {
            ClauseKind::Safety(d) => format!("safety[{}]", d + 1),
            ClauseKind::Target(q) => format!("target[{}]", q + 1),
            ClauseKind::Blade(q) => format!("blade[{}]", q + 1),
            ClauseKind::Home(d) => format!("home[{}]", d + 1),
            ClauseKind::HomeAbsorbing(d) => format!("home_absorbing[{}]", d + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub kind: ClauseKind,
    pub formula: Formula,
}

/// Safety requirement of vehicle `d` at a single instant: workspace, obstacles, separation.
pub fn safety_state(cfg: &MissionConfig, d: usize) -> Formula {
    let mut parts = vec![in_box(d, &cfg.workspace)];
    parts.extend(cfg.obstacles.iter().map(|o| avoid_box(d, o)));
    for m in 0..cfg.vehicles.len() {
        if m != d {
            parts.push(Formula::Pred(Predicate::PairDistance {
                a: d.min(m),
                b: d.max(m),
                threshold: cfg.params.gamma_dis,
            }));
        }
    }
    Formula::and_all(parts)
}

/// The clauses of the mission formula in conjunction order.
pub fn clauses(cfg: &MissionConfig) -> Result<Vec<Clause>> {
    let report = cfg.validate();
    if !report.is_valid() {
        return Err(Error::InvalidConfig(report));
    }
    let g = cfg.grid()?;
    let n = g.n;
    let window_end = |dwell: usize| {
        n.checked_sub(dwell).ok_or(Error::Horizon {
            required: dwell,
            last: n,
        })
    };
    let delta = cfg.vehicles.len();
    let mut out = Vec::new();
    for d in 0..delta {
        out.push(Clause {
            kind: ClauseKind::Safety(d),
            formula: Formula::always(0, n, safety_state(cfg, d))?,
        });
    }
    for (q, tgt) in cfg.targets.iter().enumerate() {
        let any = (0..delta)
            .map(|d| Formula::always(0, g.n_ins, in_box(d, tgt)))
            .collect::<Result<Vec<_>>>()?;
        out.push(Clause {
            kind: ClauseKind::Target(q),
            formula: Formula::eventually(0, window_end(g.n_ins)?, Formula::or_all(any))?,
        });
    }
    for q in 0..cfg.blades.len() {
        let any = (0..delta)
            .map(|d| Formula::always(0, g.n_bla, cfg.blade_scan(d, q)))
            .collect::<Result<Vec<_>>>()?;
        out.push(Clause {
            kind: ClauseKind::Blade(q),
            formula: Formula::eventually(0, window_end(g.n_bla)?, Formula::or_all(any))?,
        });
    }
    for d in 0..delta {
        out.push(Clause {
            kind: ClauseKind::Home(d),
            formula: Formula::eventually(1, n, in_box(d, &cfg.homes[d]))?,
        });
    }
    let absorbing_end = n.checked_sub(1).filter(|&e| e >= 1).ok_or(Error::Horizon {
        required: 2,
        last: n,
    })?;
    for d in 0..delta {
        let home = in_box(d, &cfg.homes[d]);
        out.push(Clause {
            kind: ClauseKind::HomeAbsorbing(d),
            formula: Formula::always(1, absorbing_end, Formula::implies(home.clone(), Formula::next(home)))?,
        });
    }
    Ok(out)
}

/// The full mission formula: the conjunction of [`clauses`].
pub fn build_formula(cfg: &MissionConfig) -> Result<Formula> {
    let parts: Vec<Formula> = clauses(cfg)?.into_iter().map(|c| c.formula).collect();
    Ok(Formula::and_all(parts))
}
