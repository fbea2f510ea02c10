use inspect_core::dynamics::{check_feasible, rest_to_rest, rollout, to_signal, State, VehicleSpec};
use inspect_core::geometry::{Aabb, Segment};
use inspect_core::mission::{build_formula, MissionConfig, Params, Timing};
use inspect_core::optimizer::{optimize, OptimizerOptions};
use inspect_core::robustness::{lse_max, lse_min, rho, rho_smooth, Monitor};
use inspect_core::router::{
    build_graph, check_selection, repair_subtours, seed_trajectories, solve_milp, MilpOptions, SEED_SPEED_FRACTION,
};
use inspect_core::stl::{Formula, Interval, Predicate, Signal};
use proptest::prelude::*;

fn point(r: f64) -> impl Strategy<Value = [f64; 3]> {
    [-r..r, -r..r, -r..r]
}

fn predicate() -> impl Strategy<Value = Predicate> {
    let band = (-4.0..4.0f64, 0.1..4.0f64, 0..4u8).prop_map(|(lo, w, kind)| match kind {
        0 => (f64::NEG_INFINITY, lo),
        1 => (lo, f64::INFINITY),
        _ => (lo, lo + w),
    });
    prop_oneof![
        (0..2usize, 0..3usize, band, any::<bool>()).prop_map(|(vehicle, axis, (lo, hi), negated)| {
            Predicate::AxisBand {
                vehicle,
                axis,
                lo,
                hi,
                negated,
            }
        }),
        (0.1..6.0f64).prop_map(|threshold| Predicate::PairDistance { a: 0, b: 1, threshold }),
        (0..2usize, point(3.0), point(3.0), 0.0..3.0f64, 0.1..3.0f64).prop_map(|(vehicle, a, b, lo, w)| {
            Predicate::SegmentDistanceBand {
                vehicle,
                segment_id: 0,
                segment: Segment::new(a, b),
                lo,
                hi: lo + w,
            }
        }),
        (0..2usize, 0.0..2.0f64, 0.1..2.0f64).prop_map(|(vehicle, lo, w)| Predicate::SpeedBand {
            vehicle,
            lo,
            hi: lo + w
        }),
    ]
}

fn formula() -> impl Strategy<Value = Formula> {
    let window = (0..4usize, 0..4usize).prop_map(|(a, w)| Interval { lo: a, hi: a + w });
    predicate().prop_map(Formula::Pred).prop_recursive(4, 32, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::implies(l, r)),
            (window.clone(), inner.clone()).prop_map(|(i, c)| Formula::Always(i, Box::new(c))),
            (window.clone(), inner.clone()).prop_map(|(i, c)| Formula::Eventually(i, Box::new(c))),
            inner.prop_map(Formula::next),
        ]
    })
}

/// Two-vehicle signal with `len` samples.
fn signal(len: usize) -> impl Strategy<Value = Signal> {
    let track = || prop::collection::vec(point(5.0), len);
    let speeds = || prop::collection::vec(point(2.0), len);
    (track(), track(), speeds(), speeds())
        .prop_map(|(p0, p1, v0, v1)| Signal::new(0.5, vec![p0, p1], vec![v0, v1]).unwrap())
}

fn formula_and_signal() -> impl Strategy<Value = (Formula, Signal)> {
    formula().prop_flat_map(|f| {
        let len = f.horizon() + 1;
        (Just(f), (len..len + 3).prop_flat_map(signal))
    })
}

fn perturbed(s: &Signal, index: usize, h: f64) -> Signal {
    let len = s.last_index() + 1;
    let (d, rest) = (index / (6 * len), index % (6 * len));
    let (k, slot) = (rest / 6, rest % 6);
    let mut p: Vec<Vec<[f64; 3]>> = (0..s.vehicle_count()).map(|v| s.positions(v).to_vec()).collect();
    let mut v: Vec<Vec<[f64; 3]>> = (0..s.vehicle_count()).map(|u| s.velocities(u).to_vec()).collect();
    if slot < 3 {
        p[d][k][slot] += h;
    } else {
        v[d][k][slot - 3] += h;
    }
    Signal::new(s.ts(), p, v).unwrap()
}

/// Two vehicles, one target, one obstacle; small horizon.
fn small_mission(target: [f64; 3], tn: f64) -> MissionConfig {
    let depots = [[2.0, 2.0, 1.0], [14.0, 2.0, 1.0]];
    MissionConfig {
        workspace: Aabb::new([0.0; 3], [16.0, 16.0, 10.0]),
        obstacles: vec![Aabb::new([7.0, 6.0, 0.0], [9.0, 8.0, 4.0])],
        targets: vec![Aabb::around(target, 1.0)],
        blades: vec![],
        homes: depots.iter().map(|d| Aabb::around([d[0], 4.0, 1.0], 0.5)).collect(),
        vehicles: depots.iter().map(|&d| VehicleSpec::symmetric(d, 2.0, 1.5)).collect(),
        timing: Timing {
            tn,
            t_ins: 1.0,
            t_bla: 1.0,
            ts: 0.5,
        },
        params: Params {
            gamma_dis: 1.0,
            gamma_bla: 1.0,
            eps: 0.4,
            zeta: 0.0,
            beta: 10.0,
        },
        blade_speed_band: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lse_brackets_min_and_max(
        r in prop::collection::vec(-10.0..10.0f64, 1..64),
        beta in prop_oneof![Just(0.5), Just(1.0), Just(10.0), Just(100.0)],
    ) {
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = (r.len() as f64).ln() / beta;
        let (smin, smax) = (lse_min(&r, beta), lse_max(&r, beta));
        prop_assert!(lo - slack <= smin && smin <= lo);
        prop_assert!(hi <= smax && smax <= hi + slack);
    }

    #[test]
    fn robustness_sign_matches_boolean((f, s) in formula_and_signal()) {
        let r = rho(&f, &s, 0).unwrap();
        if r.abs() > 1e-6 {
            prop_assert_eq!(r > 0.0, f.eval_bool(&s, 0).unwrap());
        }
    }

    #[test]
    fn smooth_robustness_approaches_exact((f, s) in formula_and_signal()) {
        let exact = rho(&f, &s, 0).unwrap();
        let sharp = rho_smooth(&f, &s, 0, 1e4).unwrap();
        prop_assert!((exact - sharp).abs() < 0.05, "{} vs {}", exact, sharp);
    }

    #[test]
    fn rollout_recursion_and_superposition(
        s1 in (point(10.0), point(2.0)),
        s2 in (point(10.0), point(2.0)),
        a in prop::collection::vec((point(2.0), point(2.0)), 1..60),
        ts in 0.05..0.5f64,
    ) {
        let a1: Vec<[f64; 3]> = a.iter().map(|x| x.0).collect();
        let a2: Vec<[f64; 3]> = a.iter().map(|x| x.1).collect();
        let t1 = rollout(0, State { p: s1.0, v: s1.1 }, &a1, ts);
        for k in 0..a1.len() {
            for j in 0..3 {
                prop_assert!((t1.p[k + 1][j] - (t1.p[k][j] + ts * t1.v[k][j] + 0.5 * ts * ts * a1[k][j])).abs() <= 1e-9);
                prop_assert!((t1.v[k + 1][j] - (t1.v[k][j] + ts * a1[k][j])).abs() <= 1e-9);
            }
        }
        let t2 = rollout(0, State { p: s2.0, v: s2.1 }, &a2, ts);
        let add = |x: [f64; 3], y: [f64; 3]| [x[0] + y[0], x[1] + y[1], x[2] + y[2]];
        let sum: Vec<[f64; 3]> = a1.iter().zip(&a2).map(|(&x, &y)| add(x, y)).collect();
        let t12 = rollout(0, State { p: add(s1.0, s2.0), v: add(s1.1, s2.1) }, &sum, ts);
        for k in 0..=a1.len() {
            for j in 0..3 {
                prop_assert!((t12.p[k][j] - t1.p[k][j] - t2.p[k][j]).abs() <= 1e-9);
                prop_assert!((t12.v[k][j] - t1.v[k][j] - t2.v[k][j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn rest_to_rest_respects_seed_fraction(delta in point(20.0), ts in 0.1..1.0f64) {
        let spec = VehicleSpec::symmetric([0.0; 3], 2.0, 1.5);
        let a = rest_to_rest(delta, &spec, ts, SEED_SPEED_FRACTION);
        let t = rollout(0, State::at_rest([0.0; 3]), &a, ts);
        let end = t.p.last().unwrap();
        for j in 0..3 {
            prop_assert!((end[j] - delta[j]).abs() < 1e-9);
            prop_assert!(t.v.last().unwrap()[j].abs() < 1e-9);
        }
        for v in &t.v {
            prop_assert!(v.iter().all(|x| x.abs() <= SEED_SPEED_FRACTION * 2.0 + 1e-9));
        }
        for x in &a {
            prop_assert!(x.iter().all(|c| c.abs() <= SEED_SPEED_FRACTION * 1.5 + 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gradient_matches_central_differences(
        target in (3.0..13.0f64, 9.0..14.0f64, 2.0..8.0f64),
        s in signal(9),
        beta in prop_oneof![Just(1.0), Just(5.0), Just(10.0)],
    ) {
        let cfg = small_mission([target.0, target.1, target.2], 4.0);
        let phi = build_formula(&cfg).unwrap();
        let m = Monitor::new(&phi);
        let (_, g) = m.grad_rho_smooth(&s, 0, beta).unwrap();
        let analytic = g.to_vec();
        let h = 1e-5;
        let mut err = 0.0f64;
        let mut scale = 1e-6f64;
        for (i, a) in analytic.iter().enumerate() {
            let up = m.rho_smooth(&perturbed(&s, i, h), 0, beta).unwrap();
            let down = m.rho_smooth(&perturbed(&s, i, -h), 0, beta).unwrap();
            let fd = (up - down) / (2.0 * h);
            err = err.max((a - fd).abs());
            scale = scale.max(a.abs()).max(fd.abs());
        }
        prop_assert!(err / scale < 1e-4, "relative error {}", err / scale);
    }

    #[test]
    fn routing_covers_every_task(
        targets in prop::collection::vec((2.0..14.0f64, 9.0..14.0f64, 2.0..8.0f64), 0..4),
    ) {
        let mut cfg = small_mission([8.0, 12.0, 5.0], 200.0);
        cfg.targets = targets.iter().map(|&(x, y, z)| Aabb::around([x, y, z], 1.0)).collect();
        let g = build_graph(&cfg);
        let sel = solve_milp(&g, MilpOptions::default()).unwrap();
        prop_assert!(check_selection(&g, &sel).is_empty());
        let plan = repair_subtours(&sel, &g).unwrap();
        let mut visited: Vec<usize> = plan.routes.iter().flat_map(|r| r.tasks().to_vec()).collect();
        visited.sort_unstable();
        // every vehicle must leave its depot, so with fewer tasks than vehicles some are shared
        visited.dedup();
        prop_assert_eq!(visited, g.tasks().collect::<Vec<_>>());
        let seed = seed_trajectories(&plan, &g, &cfg).unwrap();
        for (d, t) in seed.trajectories.iter().enumerate() {
            t.check_consistency().unwrap();
            prop_assert!(check_feasible(t, &cfg.vehicles[d]).unwrap().is_feasible());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimizer_keeps_bounds_and_never_regresses(target in (3.0..13.0f64, 9.0..14.0f64, 2.0..8.0f64)) {
        let cfg = small_mission([target.0, target.1, target.2], 60.0);
        let phi = build_formula(&cfg).unwrap();
        let g = build_graph(&cfg);
        let plan = repair_subtours(&solve_milp(&g, MilpOptions::default()).unwrap(), &g).unwrap();
        let seed = seed_trajectories(&plan, &g, &cfg).unwrap();
        let opts = OptimizerOptions { max_iters: 60, ..Default::default() };
        let out = optimize(&cfg, &phi, &seed.trajectories, &opts).unwrap();
        let seed_rho = rho(&phi, &to_signal(&seed.trajectories).unwrap(), 0).unwrap();
        let s = to_signal(&out.trajectories).unwrap();
        prop_assert!(rho(&phi, &s, 0).unwrap() >= seed_rho);
        prop_assert_eq!(rho(&phi, &s, 0).unwrap(), out.rho);
        if out.zeta_satisfied {
            prop_assert!(rho_smooth(&phi, &s, 0, out.beta).unwrap() >= cfg.params.zeta - 1e-9);
        }
        if out.rho > 0.0 {
            prop_assert!(phi.eval_bool(&s, 0).unwrap());
        }
        for (d, t) in out.trajectories.iter().enumerate() {
            let v = &cfg.vehicles[d];
            for a in &t.a {
                for j in 0..3 {
                    prop_assert!(v.a_min[j] <= a[j] && a[j] <= v.a_max[j]);
                }
            }
        }
    }
}
