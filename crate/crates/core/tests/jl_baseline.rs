use hypersketch::harness::{gen_sphere, run_jl_trials};
use hypersketch::jl_baseline::{
    bits_per_coordinate, bits_per_point, grid_step, jl_dimension, jl_estimate_sq_dist, jl_quantize, project_vectors,
    COORD_RANGE,
};
use proptest::prelude::*;

#[test]
fn bit_count_from_first_principles() {
    let (n, m, eps) = (100usize, 0.3f64, 0.2f64);
    let e = eps / 2.0;
    let k = (12.0 * (n as f64).ln() / (e * e - e * e * e)).ceil();
    let s = m * m * e / (3.0 * k.sqrt());
    let per_coord = (2.0 * COORD_RANGE / s + 1.0).log2().ceil();
    assert_eq!(jl_dimension(n, eps) as f64, k);
    assert_eq!(bits_per_point(n, m, eps) as f64, k * per_coord);
}

proptest! {
    #[test]
    fn quantization_error_within_half_step(
        v in prop::collection::vec(-2.0f64..2.0, 1..40),
        m in 0.01f64..1.4,
        eps in 0.01f64..0.9,
    ) {
        let s = jl_quantize(std::slice::from_ref(&v), m, eps).unwrap();
        prop_assert_eq!(s.step, grid_step(v.len(), m, eps));
        for (x, y) in v.iter().zip(s.decode(0)) {
            prop_assert!((x - y).abs() <= s.step / 2.0 * (1.0 + 1e-12));
        }
        prop_assert_eq!(s.bits, v.len() as u64 * u64::from(bits_per_coordinate(s.step)));
    }

    #[test]
    fn bits_per_point_grows_as_min_distance_shrinks(m in 0.01f64..1.0) {
        prop_assert!(bits_per_point(100, m / 2.0, 0.2) >= bits_per_point(100, m, 0.2));
    }
}

#[test]
fn projection_preserves_norm_on_average() {
    let k = 4000;
    let u = vec![vec![0.6, 0.8, 0.0, 0.0]];
    let v = project_vectors(&u, 4, k, 1);
    let sq: f64 = v[0].iter().map(|x| x * x).sum();
    // Mean 1, standard deviation √(2/k) ≈ 0.022.
    assert!((sq - 1.0).abs() < 4.0 * (2.0 / k as f64).sqrt(), "{sq}");
}

#[test]
fn baseline_end_to_end_small() {
    let pts = gen_sphere(10, 8, 0.8, 3).unwrap();
    let (report, bits) = run_jl_trials(&pts, 0.3, 5, 0).unwrap();
    assert_eq!(report.successes(), 5, "{}", report.summary());
    let meas = hypersketch::planner::measure(&pts).unwrap();
    assert_eq!(bits, 10 * bits_per_point(10, meas.raw_min_dist, 0.3));
}

#[test]
fn identical_codes_give_zero_distance() {
    let s = jl_quantize(&[vec![0.1, 0.2], vec![0.1, 0.2]], 0.5, 0.2).unwrap();
    assert_eq!(jl_estimate_sq_dist(&s, 0, 1).unwrap(), 0.0);
}
