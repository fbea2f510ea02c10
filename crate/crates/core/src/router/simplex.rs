//! Dense two-phase tableau simplex for small linear programs in `x ≥ 0` form.

const PIVOT_TOL: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coef: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// Minimize `cost·x` subject to the rows and `x ≥ 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lp {
    pub cost: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    PivotLimit,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// Reduced-cost rows; the last entry holds minus the objective value.
    objectives: Vec<Vec<f64>>,
    width: usize,
    pivots: usize,
}

enum Step {
    Optimal,
    Unbounded,
    PivotLimit,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        let eliminate = |row: &mut Vec<f64>| {
            let f = row[c];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[c] = 0.0;
            }
        };
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                eliminate(row);
            }
        }
        for obj in self.objectives.iter_mut() {
            eliminate(obj);
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs primal simplex on objective row `o` over columns `0..allowed`. Dantzig pricing,
    /// switching to Bland's rule once `3·allowed` pivots pass without objective progress.
    fn optimize(&mut self, o: usize, allowed: usize) -> Step {
        let rhs = self.width;
        let mut bland = false;
        let mut stalled = 0usize;
        let mut best = -self.objectives[o][rhs];
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Step::PivotLimit;
            }
            let obj = &self.objectives[o];
            let entering = if bland {
                (0..allowed).find(|&j| obj[j] < -PIVOT_TOL)
            } else {
                let mut pick = None;
                let mut most = -PIVOT_TOL;
                for j in 0..allowed {
                    if obj[j] < most {
                        most = obj[j];
                        pick = Some(j);
                    }
                }
                pick
            };
            let Some(c) = entering else {
                return Step::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = row[rhs] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Step::Unbounded;
            };
            self.pivot(r, c);
            let value = -self.objectives[o][rhs];
            if value < best - 1e-12 {
                best = value;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled > 3 * allowed.max(1) {
                    bland = true;
                }
            }
        }
    }
}

impl Lp {
    pub fn vars(&self) -> usize {
        self.cost.len()
    }

    pub fn solve(&self) -> LpOutcome {
        let n = self.vars();
        let m = self.rows.len();
        let mut rows: Vec<(Vec<f64>, Cmp, f64)> = self
            .rows
            .iter()
            .map(|r| {
                debug_assert_eq!(r.coef.len(), n);
                if r.rhs < 0.0 {
                    let flipped = match r.cmp {
                        Cmp::Le => Cmp::Ge,
                        Cmp::Ge => Cmp::Le,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (r.coef.iter().map(|v| -v).collect(), flipped, -r.rhs)
                } else {
                    (r.coef.clone(), r.cmp, r.rhs)
                }
            })
            .collect();

        let slacks = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        let artificials = rows.iter().filter(|r| r.1 != Cmp::Le).count();
        let first_art = n + slacks;
        let width = first_art + artificials;
        let mut table = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut s, mut a) = (n, first_art);
        for (coef, cmp, rhs) in rows.drain(..) {
            let mut row = vec![0.0; width + 1];
            row[..n].copy_from_slice(&coef);
            row[width] = rhs;
            match cmp {
                Cmp::Le => {
                    row[s] = 1.0;
                    basis.push(s);
                    s += 1;
                }
                Cmp::Ge => {
                    row[s] = -1.0;
                    s += 1;
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
                Cmp::Eq => {
                    row[a] = 1.0;
                    basis.push(a);
                    a += 1;
                }
            }
            table.push(row);
        }

        let mut phase1 = vec![0.0; width + 1];
        let mut phase2 = vec![0.0; width + 1];
        phase2[..n].copy_from_slice(&self.cost);
        for j in first_art..width {
            phase1[j] = 1.0;
        }
        for (row, &b) in table.iter().zip(&basis) {
            if b >= first_art {
                for (v, r) in phase1.iter_mut().zip(row) {
                    *v -= r;
                }
            }
        }
        let mut t = Tableau {
            rows: table,
            basis,
            objectives: vec![phase1, phase2],
            width,
            pivots: 0,
        };

        if artificials > 0 {
            match t.optimize(0, width) {
                Step::PivotLimit => return LpOutcome::PivotLimit,
                Step::Unbounded => unreachable!("phase one is bounded below by zero"),
                Step::Optimal => {}
            }
            if -t.objectives[0][width] > FEASIBILITY_TOL {
                return LpOutcome::Infeasible;
            }
            for r in 0..m {
                if t.basis[r] >= first_art {
                    if let Some(c) = (0..first_art).find(|&j| t.rows[r][j].abs() > PIVOT_TOL) {
                        t.pivot(r, c);
                    }
                }
            }
        }
        match t.optimize(1, first_art) {
            Step::PivotLimit => LpOutcome::PivotLimit,
            Step::Unbounded => LpOutcome::Unbounded,
            Step::Optimal => {
                let mut x = vec![0.0; n];
                for (row, &b) in t.rows.iter().zip(&t.basis) {
                    if b < n {
                        x[b] = row[width].max(0.0);
                    }
                }
                let objective = x.iter().zip(&self.cost).map(|(a, b)| a * b).sum();
                LpOutcome::Optimal { x, objective }
            }
        }
    }
}
