use std::collections::BTreeMap;

use super::{NodeKind, RoutingGraph, Selection};

/// Checks a selection against the assignment constraints from the raw edge list, independent of
/// the solver's row construction. Returns one message per violated constraint.
pub fn check_selection(g: &RoutingGraph, sel: &Selection) -> Vec<String> {
    let mut problems = Vec::new();
    let tasks: Vec<usize> = g.tasks().collect();
    if tasks.is_empty() {
        if sel.z.iter().any(|&z| z) {
            problems.push("edges selected although there are no tasks".to_string());
        }
        return problems;
    }
    let mut covered: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cost = 0.0;
    for d in 0..g.vehicles() {
        let mut indeg = vec![0i64; g.len()];
        let mut outdeg = vec![0i64; g.len()];
        for (i, j) in sel.edges(d) {
            if i == j {
                problems.push(format!("vehicle {}: self-loop at node {i}", d + 1));
            }
            for n in [i, j] {
                if let NodeKind::Depot(o) = g.nodes[n].kind {
                    if o != d {
                        problems.push(format!("vehicle {}: uses depot of vehicle {}", d + 1, o + 1));
                    }
                }
            }
            outdeg[i] += 1;
            indeg[j] += 1;
            *covered.entry(j).or_default() += 1;
            cost += g.weight(d, i, j);
        }
        for &t in &tasks {
            if indeg[t] != outdeg[t] {
                problems.push(format!(
                    "vehicle {}: flow not conserved at node {t} (in {}, out {})",
                    d + 1,
                    indeg[t],
                    outdeg[t]
                ));
            }
        }
        if outdeg[d] != 1 {
            problems.push(format!("vehicle {}: {} depot departures", d + 1, outdeg[d]));
        }
        if indeg[d] != 1 {
            problems.push(format!("vehicle {}: {} depot returns", d + 1, indeg[d]));
        }
    }
    for &t in &tasks {
        if covered.get(&t).copied().unwrap_or(0) == 0 {
            problems.push(format!("task node {t} is never visited"));
        }
    }
    if (cost - sel.cost).abs() > 1e-6 * cost.max(1.0) {
        problems.push(format!("reported cost {} differs from edge sum {cost}", sel.cost));
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::router::{solve_milp, MilpOptions};

    #[test]
    fn flags_broken_selections() {
        let g = crate::router::tests::line_graph();
        let mut sel = solve_milp(&g, MilpOptions::default()).unwrap();
        assert!(check_selection(&g, &sel).is_empty());
        let first = sel.z.iter().position(|&z| z).unwrap();
        sel.z[first] = false;
        let problems = check_selection(&g, &sel);
        assert!(problems.iter().any(|p| p.contains("depot departures")));
        assert!(problems.iter().any(|p| p.contains("cost")));
    }
}
