//! Decoding squared distances from sketches.
//!
//! On the sphere, `‖x-y‖² ≈ 2 - 2·g_ℓ(⟨φ_ℓ(x), φ_ℓ(y)⟩)`. In the ball the
//! stored norms enter through the polarization identity:
//! `n_x² + n_y² - 2·n_x·n_y·g_ℓ(⟨φ_ℓ(x̂), φ_ℓ(ŷ)⟩)`.

use thiserror::Error;

use crate::cascade::SketchBundle;
use crate::iterates::{g_iter, IterateError, IterateLevel};
use crate::points::Mode;
use crate::signsketch::{PackedSignVector, SignError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecoveryError {
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Iterate(#[from] IterateError),
    #[error("norm {0} is not positive")]
    NonPositiveNorm(f64),
    #[error("point index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
}

/// One recovered pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEstimate {
    pub i: usize,
    pub j: usize,
    /// Reported squared distance (clamped at 0).
    pub est_sq_dist: f64,
    /// Decoded inner product of the normalized points.
    pub est_inner: f64,
    /// Squared distance before clamping.
    pub raw_sq_dist: f64,
}

/// `g_ℓ(⟨a, b⟩)`.
pub fn estimate_inner_sphere(
    a: &PackedSignVector,
    b: &PackedSignVector,
    ell: IterateLevel,
) -> Result<f64, RecoveryError> {
    Ok(g_iter(a.inner_product(b)?, ell)?)
}

/// `2 - 2·g_ℓ(⟨a, b⟩)`.
pub fn estimate_sq_dist_sphere(
    a: &PackedSignVector,
    b: &PackedSignVector,
    ell: IterateLevel,
) -> Result<f64, RecoveryError> {
    Ok(2.0 - 2.0 * estimate_inner_sphere(a, b, ell)?)
}

/// Ball estimator from an already decoded inner product; returns the raw
/// (possibly slightly negative) value.
pub fn ball_formula(inner: f64, n_x: f64, n_y: f64) -> Result<f64, RecoveryError> {
    for v in [n_x, n_y] {
        if v.is_nan() || v <= 0.0 {
            return Err(RecoveryError::NonPositiveNorm(v));
        }
    }
    Ok(n_x * n_x + n_y * n_y - 2.0 * (n_x * n_y) * inner)
}

/// `n_x² + n_y² - 2·n_x·n_y·g_ℓ(⟨a, b⟩)`, clamped at 0.
pub fn estimate_sq_dist_ball(
    a: &PackedSignVector,
    b: &PackedSignVector,
    ell: IterateLevel,
    n_x: f64,
    n_y: f64,
) -> Result<f64, RecoveryError> {
    let inner = estimate_inner_sphere(a, b, ell)?;
    Ok(ball_formula(inner, n_x, n_y)?.max(0.0))
}

/// Estimate for one pair of a bundle.
pub fn estimate_pair(bundle: &SketchBundle, i: usize, j: usize) -> Result<PairEstimate, RecoveryError> {
    let n = bundle.len();
    for index in [i, j] {
        if index >= n {
            return Err(RecoveryError::IndexOutOfRange { index, n });
        }
    }
    let plan = bundle.plan();
    let ell = IterateLevel::new(plan.ell)?;
    let sk = bundle.sketches();
    let est_inner = estimate_inner_sphere(&sk[i], &sk[j], ell)?;
    let raw_sq_dist = match plan.mode {
        Mode::Sphere => 2.0 - 2.0 * est_inner,
        Mode::Ball => {
            let n_x = bundle.norm(i).expect("ball bundle stores norms");
            let n_y = bundle.norm(j).expect("ball bundle stores norms");
            ball_formula(est_inner, n_x, n_y)?
        }
    };
    Ok(PairEstimate { i, j, est_sq_dist: raw_sq_dist.max(0.0), est_inner, raw_sq_dist })
}

/// Lazily yields every pair `i < j` in row-major order.
pub fn pair_estimates(bundle: &SketchBundle) -> impl Iterator<Item = Result<PairEstimate, RecoveryError>> + '_ {
    let n = bundle.len();
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| estimate_pair(bundle, i, j)))
}

/// All `n(n-1)/2` pair estimates.
pub fn estimate_all(bundle: &SketchBundle) -> Result<Vec<PairEstimate>, RecoveryError> {
    pair_estimates(bundle).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iterates::f_iter;

    fn lvl(l: u32) -> IterateLevel {
        IterateLevel::new(l).unwrap()
    }

    /// Two vectors of length `n` whose inner product is `(n - 2k)/n`.
    fn pair_with_hamming(n: usize, k: usize) -> (PackedSignVector, PackedSignVector) {
        let a = PackedSignVector::from_fn(n, |_| true).unwrap();
        let b = PackedSignVector::from_fn(n, |i| i >= k).unwrap();
        (a, b)
    }

    #[test]
    fn sphere_examples() {
        let (a, _) = pair_with_hamming(64, 0);
        assert_eq!(estimate_inner_sphere(&a, &a, lvl(3)).unwrap(), 1.0);
        assert_eq!(estimate_sq_dist_sphere(&a, &a, lvl(3)).unwrap(), 0.0);

        let (a, b) = pair_with_hamming(64, 32);
        assert_eq!(estimate_inner_sphere(&a, &b, lvl(2)).unwrap(), 0.0);

        let (a, b) = pair_with_hamming(64, 64);
        assert_eq!(estimate_sq_dist_sphere(&a, &b, lvl(2)).unwrap(), 4.0);
    }

    #[test]
    fn inverse_identity_through_hamming() {
        // f_1(0.5) = 1/3 = (N - 2k)/N with N = 96, k = 32.
        let (a, b) = pair_with_hamming(96, 32);
        assert!((a.inner_product(&b).unwrap() - f_iter(0.5, lvl(1)).unwrap()).abs() < 1e-15);
        assert!((estimate_inner_sphere(&a, &b, lvl(1)).unwrap() - 0.5).abs() < 1e-15);
        assert!((estimate_sq_dist_sphere(&a, &b, lvl(1)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ball_examples() {
        assert!((ball_formula(0.5, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let (a, b) = pair_with_hamming(128, 40);
        let sphere = estimate_sq_dist_sphere(&a, &b, lvl(2)).unwrap();
        let ball = estimate_sq_dist_ball(&a, &b, lvl(2), 1.0, 1.0).unwrap();
        assert!((sphere - ball).abs() < 1e-15);
        assert_eq!(estimate_sq_dist_ball(&a, &a, lvl(2), 0.5, 0.5).unwrap(), 0.0);
        assert_eq!(ball_formula(0.5, 0.0, 1.0), Err(RecoveryError::NonPositiveNorm(0.0)));
    }
}
