//! Exhaustive reference solver for the assignment model on small graphs.
//!
//! Enumerates binary edge sets per vehicle directly (no LP), pruning partial assignments whose
//! in-degrees can no longer balance, then combines vehicles over coverage masks. Intended for
//! graphs with at most six nodes.

use super::RoutingGraph;

struct Search<'a> {
    g: &'a RoutingGraph,
    d: usize,
    nodes: Vec<usize>,
    indeg: Vec<usize>,
    outdeg: Vec<usize>,
    best: Vec<f64>,
}

impl Search<'_> {
    fn balanced_so_far(&self, done: usize) -> bool {
        let m = self.nodes.len();
        let remaining = m - done;
        (0..done).all(|b| {
            let target = if b == 0 { 1 } else { self.outdeg[b] };
            let more = remaining - usize::from(b >= done);
            self.indeg[b] <= target && self.indeg[b] + more >= target
        })
    }

    fn visit(&mut self, a: usize, cost: f64) {
        let m = self.nodes.len();
        if a == m {
            if self.indeg[0] != 1 {
                return;
            }
            if (1..m).any(|b| self.indeg[b] != self.outdeg[b]) {
                return;
            }
            let mask = (1..m).filter(|&b| self.indeg[b] > 0).fold(0usize, |acc, b| acc | 1 << (b - 1));
            if cost < self.best[mask] {
                self.best[mask] = cost;
            }
            return;
        }
        let others: Vec<usize> = (0..m).filter(|&b| b != a).collect();
        let subsets: Vec<usize> = if a == 0 {
            (0..others.len()).map(|bit| 1 << bit).collect()
        } else {
            (0..1usize << others.len()).collect()
        };
        for s in subsets {
            let mut added = 0.0;
            for (bit, &b) in others.iter().enumerate() {
                if s >> bit & 1 == 1 {
                    self.indeg[b] += 1;
                    added += self.g.weight(self.d, self.nodes[a], self.nodes[b]);
                }
            }
            self.outdeg[a] = s.count_ones() as usize;
            if self.balanced_so_far(a + 1) {
                self.visit(a + 1, cost + added);
            }
            for (bit, &b) in others.iter().enumerate() {
                if s >> bit & 1 == 1 {
                    self.indeg[b] -= 1;
                }
            }
        }
        self.outdeg[a] = 0;
    }
}

/// Optimal objective of the assignment model by enumeration.
pub fn brute_force_cost(g: &RoutingGraph) -> f64 {
    let nt = g.tasks().len();
    if nt == 0 {
        return 0.0;
    }
    let mut reach = vec![f64::INFINITY; 1 << nt];
    reach[0] = 0.0;
    for d in 0..g.vehicles() {
        let nodes = g.vehicle_nodes(d);
        let m = nodes.len();
        let mut s = Search {
            g,
            d,
            nodes,
            indeg: vec![0; m],
            outdeg: vec![0; m],
            best: vec![f64::INFINITY; 1 << nt],
        };
        s.visit(0, 0.0);
        let mut next = vec![f64::INFINITY; 1 << nt];
        for (acc, &c0) in reach.iter().enumerate() {
            if c0.is_finite() {
                for (mask, &c1) in s.best.iter().enumerate() {
                    if c1.is_finite() && c0 + c1 < next[acc | mask] {
                        next[acc | mask] = c0 + c1;
                    }
                }
            }
        }
        reach = next;
    }
    reach[(1 << nt) - 1]
}
