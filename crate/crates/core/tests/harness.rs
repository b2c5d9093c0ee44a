use hypersketch::harness::{
    binomial_lower_bound, cascade_work, gen_ball, gen_close_pairs, gen_sphere, run_trials_with_plan,
    shrink_final_dim, target_rate, true_sq_dists, HarnessError,
};
use hypersketch::planner::{measure, CascadePlan};
use hypersketch::points::norm;
use hypersketch::Mode;

/// `P(X >= k)` for `X ~ Bin(n, p)`, by direct summation.
fn upper_tail(k: usize, n: usize, p: f64) -> f64 {
    let mut total = 0.0;
    for i in k..=n {
        let mut c = 1.0;
        for t in 0..i {
            c *= (n - t) as f64 / (t + 1) as f64;
        }
        total += c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32);
    }
    total
}

/// Clopper-Pearson lower limit: the `p` with `P(X >= k | p) = alpha`.
fn lower_limit_oracle(k: usize, n: usize, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if upper_tail(k, n, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[test]
fn binomial_bound_matches_tail_oracle() {
    for (k, n) in [(50, 50), (49, 50), (45, 50), (30, 30), (1, 10), (7, 20)] {
        let got = binomial_lower_bound(k, n, 0.95);
        let want = lower_limit_oracle(k, n, 0.05);
        assert!((got - want).abs() < 1e-9, "{k}/{n}: {got} vs {want}");
    }
    // All successes: α^{1/n}.
    assert!((binomial_lower_bound(50, 50, 0.95) - 0.05f64.powf(1.0 / 50.0)).abs() < 1e-12);
    assert_eq!(binomial_lower_bound(0, 50, 0.95), 0.0);
}

#[test]
fn target_rate_examples() {
    assert!((target_rate(100, 2) - 0.9604).abs() < 1e-15);
    assert!((target_rate(100, 1) - 0.98).abs() < 1e-15);
}

#[test]
fn generators_are_deterministic_and_meet_constraints() {
    let a = gen_sphere(40, 16, 0.6, 5).unwrap();
    assert_eq!(a, gen_sphere(40, 16, 0.6, 5).unwrap());
    assert_ne!(a.points(), gen_sphere(40, 16, 0.6, 6).unwrap().points());
    assert!(measure(&a).unwrap().raw_min_dist >= 0.6);

    let c = gen_close_pairs(30, 16, 0.01, 2).unwrap();
    assert_eq!(c, gen_close_pairs(30, 16, 0.01, 2).unwrap());
    let meas = measure(&c).unwrap();
    assert!((meas.m - 0.01).abs() < 1e-12, "m = {}", meas.m);
    assert_eq!(meas.closest_pair, (0, 29));
    let x = c.point(0);
    let y = c.point(29);
    let d: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    assert!((d - 0.01).abs() < 1e-12);

    let b = gen_ball(30, 8, 0.25, 0.5, 4).unwrap();
    assert_eq!(b, gen_ball(30, 8, 0.25, 0.5, 4).unwrap());
    assert_eq!(b.mode(), Mode::Ball);
    for p in b.points() {
        let r = norm(p);
        assert!((0.5 - 1e-12..=1.0 + 1e-12).contains(&r), "norm {r}");
    }
    let meas = measure(&b).unwrap();
    assert!(meas.rho >= 0.25 - 1e-12);
    assert!(meas.m >= 0.5 - 1e-12);
}

#[test]
fn impossible_packing_reports_infeasible() {
    assert!(matches!(gen_sphere(10, 2, 1.4, 0), Err(HarnessError::Infeasible { .. })));
    assert!(matches!(gen_sphere(10, 2, 0.0, 0), Err(HarnessError::InvalidArgument(_))));
    assert!(matches!(gen_close_pairs(10, 4, 0.6, 0), Err(HarnessError::InvalidArgument(_))));
}

#[test]
fn true_distances_match_hand_values() {
    let p = hypersketch::PointSet::new(Mode::Ball, 2, vec![vec![0.6, 0.0], vec![0.0, 0.8]]).unwrap();
    let t = true_sq_dists(&p);
    assert!((t[0][1] - 1.0).abs() < 1e-15);
    assert_eq!(t[0][1], t[1][0]);
    assert_eq!(t[0][0], 0.0);
}

#[test]
fn trial_report_and_budget_guard() {
    let pts = gen_sphere(8, 6, 1.0, 1).unwrap();
    let meas = measure(&pts).unwrap();
    let plan = CascadePlan::from_parts(8, 6, Mode::Sphere, 0.2, meas.m, meas.r, 1.0, vec![20_000], None, 0).unwrap();
    assert_eq!(cascade_work(&plan), 6.0 * 20_000.0 * 9.0);

    let report = run_trials_with_plan(&pts, &plan, 6, 40, 1e12).unwrap();
    assert_eq!(report.trials, 6);
    let seeds: Vec<u64> = report.per_trial.iter().map(|t| t.seed).collect();
    assert_eq!(seeds, (40..46).collect::<Vec<_>>());
    assert_eq!(report.success_rate, Some(report.successes() as f64 / 6.0));

    let empty = run_trials_with_plan(&pts, &plan, 0, 0, 1e12).unwrap();
    assert_eq!(empty.success_rate, None);
    assert!(!empty.accepted());

    assert!(matches!(
        run_trials_with_plan(&pts, &plan, 6, 0, 1e3),
        Err(HarnessError::ComputeBudget { .. })
    ));

    let small = shrink_final_dim(&plan, 4).unwrap();
    assert_eq!(small.dims, vec![5_000]);
    assert_eq!(small.bit_budget, 8 * 5_000);
}
