use hypersketch::harness::{gen_ball, gen_sphere, true_sq_dists};
use hypersketch::planner::CascadePlan;
use hypersketch::recovery::{ball_formula, estimate_pair, pair_estimates};
use hypersketch::{estimate_all, plan, sketch_set, Mode, PointSet};

#[test]
fn estimates_are_symmetric() {
    let pts = gen_ball(6, 5, 0.3, 0.4, 2).unwrap();
    let p = CascadePlan::from_parts(6, 5, Mode::Ball, 0.2, 0.4, 3.0, 0.3, vec![2000, 500], Some(1e-4), 4).unwrap();
    let bundle = sketch_set(&pts, &p).unwrap();
    for i in 0..6 {
        for j in 0..6 {
            let a = estimate_pair(&bundle, i, j).unwrap();
            let b = estimate_pair(&bundle, j, i).unwrap();
            assert_eq!(a.est_sq_dist, b.est_sq_dist);
            assert!(a.est_sq_dist >= 0.0);
        }
    }
    assert!(estimate_pair(&bundle, 0, 6).is_err());
}

#[test]
fn lazy_and_eager_agree() {
    let pts = gen_sphere(7, 4, 0.5, 1).unwrap();
    let p = CascadePlan::from_parts(7, 4, Mode::Sphere, 0.2, 0.5, 3.0, 1.0, vec![640], None, 8).unwrap();
    let bundle = sketch_set(&pts, &p).unwrap();
    let lazy: Vec<_> = pair_estimates(&bundle).collect::<Result<_, _>>().unwrap();
    assert_eq!(lazy, estimate_all(&bundle).unwrap());
    assert_eq!(lazy.len(), 21);
    assert_eq!((lazy[0].i, lazy[0].j), (0, 1));
}

#[test]
fn ball_formula_is_polarization() {
    // ‖x-y‖² = |x|² + |y|² - 2|x||y|cos θ
    let x = [0.3, 0.4];
    let y = [-0.1, 0.6];
    let nx = 0.5f64;
    let ny = (0.01f64 + 0.36).sqrt();
    let cos = (x[0] * y[0] + x[1] * y[1]) / (nx * ny);
    let truth = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
    assert!((ball_formula(cos, nx, ny).unwrap() - truth).abs() < 1e-15);
}

#[test]
fn small_sphere_instance_meets_guarantee() {
    let s = -(1.0f64 / 3.0).sqrt();
    let pts = PointSet::new(
        Mode::Sphere,
        3,
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![s, s, s]],
    )
    .unwrap();
    let p = plan(&pts, 0.2, 3).unwrap();
    assert_eq!(p.ell, 1);
    let truth = true_sq_dists(&pts);
    let bundle = sketch_set(&pts, &p).unwrap();
    for e in estimate_all(&bundle).unwrap() {
        let t = truth[e.i][e.j];
        assert!((e.est_sq_dist - t).abs() <= 0.2 * t, "pair ({}, {}): {} vs {t}", e.i, e.j, e.est_sq_dist);
    }
}
