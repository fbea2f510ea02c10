//! Kinematic seed trajectories that follow the route plan.

use serde::Serialize;

use super::{NodeKind, RoutePlan, RoutingGraph};
use crate::dynamics::{rest_to_rest, rollout, State, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::mission::MissionConfig;
use crate::units::seconds_to_samples_ceil;

/// Share of each per-axis velocity and acceleration bound used by seed legs.
pub const SEED_SPEED_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Visit {
    pub node: usize,
    /// First sample at the node.
    pub arrival: usize,
    /// Last sample of the dwell at the node.
    pub departure: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seed {
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    pub visits: Vec<Vec<Visit>>,
    /// Sample at which each vehicle comes to rest at its home box center.
    pub home_arrival: Vec<usize>,
}

/// Rest-to-rest legs through every route node with dwells at task nodes, then to the home box
/// center, holding there until the end of the horizon.
pub fn seed_trajectories(plan: &RoutePlan, g: &RoutingGraph, cfg: &MissionConfig) -> Result<Seed> {
    let grid = cfg.grid()?;
    let ts = cfg.timing.ts;
    let dwell_ins = seconds_to_samples_ceil(cfg.timing.t_ins, ts)?;
    let dwell_bla = seconds_to_samples_ceil(cfg.timing.t_bla, ts)?;
    let mut plans = Vec::with_capacity(plan.routes.len());
    let mut visits = Vec::with_capacity(plan.routes.len());
    let mut home_arrival = Vec::with_capacity(plan.routes.len());
    let mut required = 0usize;
    for route in &plan.routes {
        let d = route.vehicle;
        let spec = &cfg.vehicles[d];
        let mut accels: Vec<[f64; 3]> = Vec::new();
        let mut pos = spec.depot;
        let mut stops = Vec::new();
        // task legs keep out of the home box: once inside, the vehicle must stay
        let leg_to = |accels: &mut Vec<[f64; 3]>, pos: &mut [f64; 3], goal: [f64; 3], home: Option<&Aabb>| {
            for w in leg_waypoints(cfg, *pos, goal, home) {
                let delta = [w[0] - pos[0], w[1] - pos[1], w[2] - pos[2]];
                accels.extend(rest_to_rest(delta, spec, ts, SEED_SPEED_FRACTION));
                *pos = w;
            }
        };
        for &node in route.tasks() {
            leg_to(&mut accels, &mut pos, g.nodes[node].position, Some(&cfg.homes[d]));
            let dwell = match g.nodes[node].kind {
                NodeKind::Blade(_) => dwell_bla,
                _ => dwell_ins,
            };
            let arrival = accels.len();
            accels.extend(std::iter::repeat([0.0; 3]).take(dwell));
            stops.push(Visit {
                node,
                arrival,
                departure: arrival + dwell,
            });
        }
        leg_to(&mut accels, &mut pos, cfg.homes[d].center(), None);
        home_arrival.push(accels.len());
        required = required.max(accels.len());
        plans.push(accels);
        visits.push(stops);
    }
    if required > grid.n {
        return Err(Error::HorizonTooShort {
            required_samples: required,
            min_tn: required as f64 * ts,
        });
    }
    let trajectories = plans
        .into_iter()
        .enumerate()
        .map(|(d, mut accels)| {
            accels.resize(grid.n, [0.0; 3]);
            rollout(d, State::at_rest(cfg.vehicles[d].depot), &accels, ts)
        })
        .collect();
    Ok(Seed {
        trajectories,
        visits,
        home_arrival,
    })
}

/// Stops from `from` to `to`: straight when the leg clears every obstacle (and `keep_out`)
/// inflated by 1.25 times the separation distance, otherwise climb above the blocking boxes,
/// cross, and descend. Falls back to the straight leg when no such detour fits under the
/// workspace ceiling.
fn leg_waypoints(cfg: &MissionConfig, from: [f64; 3], to: [f64; 3], keep_out: Option<&Aabb>) -> Vec<[f64; 3]> {
    let margin = 1.25 * cfg.params.gamma_dis;
    let inflated: Vec<Aabb> = cfg.obstacles.iter().chain(keep_out).map(|o| o.inflate(margin)).collect();
    let straight = vec![to];
    let mut path = straight.clone();
    let mut top = f64::NEG_INFINITY;
    for _ in 0..=inflated.len() {
        let mut prev = from;
        let mut raised = false;
        for &w in &path {
            for b in inflated.iter().filter(|b| b.hits_segment(prev, w)) {
                if b.hi[2] > top {
                    top = b.hi[2];
                    raised = true;
                }
            }
            prev = w;
        }
        if !raised {
            return path;
        }
        if top >= cfg.workspace.hi[2] - margin {
            return straight;
        }
        path = [[from[0], from[1], from[2].max(top)], [to[0], to[1], to[2].max(top)], to]
            .into_iter()
            .fold(Vec::new(), |mut acc: Vec<[f64; 3]>, w| {
                if w != from && acc.last() != Some(&w) {
                    acc.push(w);
                }
                acc
            });
    }
    straight
}
