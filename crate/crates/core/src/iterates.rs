//! The arcsine kernel `f(t) = (2/π)·asin(t)`, its inverse `g(t) = sin(πt/2)`,
//! their ℓ-fold compositions, and the derivative of the iterated sine.
//!
//! `f_ℓ` is the expected inner product of two cascade sketches as a function
//! of the input inner product; `g_ℓ` decodes it back. Iterates are evaluated
//! as literal step-by-step compositions in double precision.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};
use std::fmt;

use thiserror::Error;

/// Inputs this far outside `[-1, 1]` are snapped to the boundary.
pub const DOMAIN_SLACK: f64 = 1e-12;

/// Tolerance used when checking the inequality oracles.
pub const INEQUALITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum IterateError {
    #[error("argument {0} lies outside [-1, 1]")]
    Domain(f64),
    #[error("iterate level must be at least 1")]
    ZeroLevel,
}

/// Number of compositions ℓ ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IterateLevel(u32);

impl IterateLevel {
    pub fn new(ell: u32) -> Result<Self, IterateError> {
        if ell == 0 {
            Err(IterateError::ZeroLevel)
        } else {
            Ok(Self(ell))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for IterateLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn check_domain(t: f64) -> Result<f64, IterateError> {
    if t.is_nan() || t.abs() > 1.0 + DOMAIN_SLACK {
        return Err(IterateError::Domain(t));
    }
    Ok(t.clamp(-1.0, 1.0))
}

#[inline]
fn f_unchecked(t: f64) -> f64 {
    (FRAC_2_PI * t.asin()).clamp(-1.0, 1.0)
}

#[inline]
fn g_unchecked(t: f64) -> f64 {
    (FRAC_PI_2 * t).sin().clamp(-1.0, 1.0)
}

#[inline]
fn g_prime_unchecked(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (FRAC_PI_2 * (FRAC_PI_2 * t).cos()).max(0.0)
    }
}

/// `f(t) = (2/π)·asin(t)`.
pub fn f(t: f64) -> Result<f64, IterateError> {
    check_domain(t).map(f_unchecked)
}

/// `g(t) = sin(πt/2)`, the inverse of [`f`] on `[-1, 1]`.
pub fn g(t: f64) -> Result<f64, IterateError> {
    check_domain(t).map(g_unchecked)
}

/// ℓ-fold composition of [`f`].
pub fn f_iter(t: f64, level: IterateLevel) -> Result<f64, IterateError> {
    let mut v = check_domain(t)?;
    for _ in 0..level.get() {
        v = f_unchecked(v);
    }
    Ok(v)
}

/// ℓ-fold composition of [`g`]; inverse of [`f_iter`] at the same level.
pub fn g_iter(t: f64, level: IterateLevel) -> Result<f64, IterateError> {
    let mut v = check_domain(t)?;
    for _ in 0..level.get() {
        v = g_unchecked(v);
    }
    Ok(v)
}

/// Derivative of `g_ℓ` by the chain rule `g_ℓ'(t) = Π_k g'(g_k(t))`.
///
/// Returns the one-sided limit 0 at `t = ±1`. The result lies in
/// `[0, (π/2)^ℓ]`.
pub fn g_iter_derivative(t: f64, level: IterateLevel) -> Result<f64, IterateError> {
    let mut v = check_domain(t)?;
    if v.abs() == 1.0 {
        return Ok(0.0);
    }
    let mut derivative = 1.0;
    for _ in 0..level.get() {
        derivative *= g_prime_unchecked(v);
        v = g_unchecked(v);
    }
    Ok(derivative)
}

/// The inequalities checked by [`check_appendix_inequalities`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InequalityId {
    /// `g_ℓ'(f_ℓ(t)) ≤ π^ℓ / 2^{(ℓ+1)/2} · (2-2t)^{1-2^{-ℓ}}`
    A,
    /// `0 ≤ g_ℓ'(t) ≤ (π/2)^ℓ`
    B,
    /// `|f_ℓ(t)| ≤ |t|`
    C,
    /// `1-|f_ℓ(t)| ≥ (1-|t|)^{(2/3)^ℓ}`
    D,
    /// `1-f(t) ≤ √(1-t)`
    E,
    /// `1-f_ℓ(t) ≤ (2-2t)^{2^{-ℓ}}`
    F,
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InequalityId::A => "a",
            InequalityId::B => "b",
            InequalityId::C => "c",
            InequalityId::D => "d",
            InequalityId::E => "e",
            InequalityId::F => "f",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub id: InequalityId,
    pub t: f64,
    pub ell: u32,
    pub lhs: f64,
    pub rhs: f64,
}

/// Evaluates every inequality at every `(t, ℓ)` with `ℓ ≤ max_ell` and
/// returns the ones that fail by more than [`INEQUALITY_TOLERANCE`].
///
/// Grid values are expected in `[0, 1]`; out-of-domain values are reported
/// as violations of every inequality with `NaN` sides.
pub fn check_appendix_inequalities(t_grid: &[f64], max_ell: u32) -> Vec<Violation> {
    let tol = INEQUALITY_TOLERANCE;
    let mut out = Vec::new();
    for &t in t_grid {
        if !(0.0..=1.0).contains(&t) {
            for id in [
                InequalityId::A,
                InequalityId::B,
                InequalityId::C,
                InequalityId::D,
                InequalityId::E,
                InequalityId::F,
            ] {
                out.push(Violation { id, t, ell: 0, lhs: f64::NAN, rhs: f64::NAN });
            }
            continue;
        }

        // (e) does not depend on the level.
        let lhs = 1.0 - f_unchecked(t);
        let rhs = (1.0 - t).sqrt();
        if lhs - rhs > tol {
            out.push(Violation { id: InequalityId::E, t, ell: 1, lhs, rhs });
        }

        for ell in 1..=max_ell {
            let level = IterateLevel(ell);
            let fl = f_iter(t, level).expect("grid value in domain");
            let l = ell as f64;

            let lhs = g_iter_derivative(fl, level).expect("f_ℓ stays in domain");
            let rhs = PI.powi(ell as i32) / 2f64.powf((l + 1.0) / 2.0)
                * (2.0 - 2.0 * t).powf(1.0 - 2f64.powf(-l));
            if lhs - rhs > tol {
                out.push(Violation { id: InequalityId::A, t, ell, lhs, rhs });
            }

            let lhs = g_iter_derivative(t, level).expect("grid value in domain");
            let rhs = FRAC_PI_2.powi(ell as i32);
            if lhs < -tol || lhs - rhs > tol {
                out.push(Violation { id: InequalityId::B, t, ell, lhs, rhs });
            }

            let lhs = fl.abs();
            let rhs = t.abs();
            if lhs - rhs > tol {
                out.push(Violation { id: InequalityId::C, t, ell, lhs, rhs });
            }

            let lhs = 1.0 - fl.abs();
            let rhs = (1.0 - t.abs()).powf((2.0f64 / 3.0).powi(ell as i32));
            if rhs - lhs > tol {
                out.push(Violation { id: InequalityId::D, t, ell, lhs, rhs });
            }

            let lhs = 1.0 - fl;
            let rhs = (2.0 - 2.0 * t).powf(2f64.powf(-l));
            if lhs - rhs > tol {
                out.push(Violation { id: InequalityId::F, t, ell, lhs, rhs });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(l: u32) -> IterateLevel {
        IterateLevel::new(l).unwrap()
    }

    #[test]
    fn base_values() {
        assert_eq!(f(0.0).unwrap(), 0.0);
        assert_eq!(f(1.0).unwrap(), 1.0);
        assert!((f(0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((g(1.0 / 3.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(g(-1.0).unwrap(), -1.0);
        assert!((g(0.5).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn domain_handling() {
        assert_eq!(f(1.0 + 5e-13).unwrap(), 1.0);
        assert_eq!(g(-1.0 - 5e-13).unwrap(), -1.0);
        assert_eq!(f(1.0 + 1e-9), Err(IterateError::Domain(1.0 + 1e-9)));
        assert!(g(f64::NAN).is_err());
        assert_eq!(IterateLevel::new(0), Err(IterateError::ZeroLevel));
    }

    #[test]
    fn iterate_examples() {
        assert_eq!(f_iter(1.0, lvl(3)).unwrap(), 1.0);
        assert!((f_iter(0.5, lvl(1)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // two-step oracle
        let once = FRAC_2_PI * 0.5f64.asin();
        let twice = FRAC_2_PI * once.asin();
        assert!((f_iter(0.5, lvl(2)).unwrap() - twice).abs() < 1e-15);
        assert!((f_iter(0.5, lvl(2)).unwrap() - FRAC_2_PI * (1.0f64 / 3.0).asin()).abs() < 1e-15);

        let y = f_iter(0.37, lvl(4)).unwrap();
        assert!((g_iter(y, lvl(4)).unwrap() - 0.37).abs() < 1e-9);
        assert_eq!(g_iter(0.0, lvl(5)).unwrap(), 0.0);
        assert_eq!(g_iter(1.0, lvl(2)).unwrap(), 1.0);
    }

    #[test]
    fn derivative_examples() {
        assert!((g_iter_derivative(0.0, lvl(1)).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(g_iter_derivative(1.0, lvl(1)).unwrap(), 0.0);
        assert_eq!(g_iter_derivative(-1.0, lvl(4)).unwrap(), 0.0);

        let h = 1e-6;
        let fd = (g_iter(0.3 + h, lvl(3)).unwrap() - g_iter(0.3 - h, lvl(3)).unwrap()) / (2.0 * h);
        assert!((g_iter_derivative(0.3, lvl(3)).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn inequality_boundary_cases() {
        // (e) holds with equality at t = 0; (a) has both sides zero at t = 1.
        assert!(check_appendix_inequalities(&[0.0], 1).is_empty());
        assert!(check_appendix_inequalities(&[1.0], 6).is_empty());
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        assert!(check_appendix_inequalities(&grid, 6).is_empty());
    }

    #[test]
    fn out_of_grid_values_are_reported() {
        let v = check_appendix_inequalities(&[1.5], 2);
        assert_eq!(v.len(), 6);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-6;
        for ell in 1..=6 {
            for i in 1..200 {
                let t = -1.0 + i as f64 / 100.0;
                if (t.abs() - 1.0).abs() < 2e-2 {
                    continue;
                }
                let fd = (g_iter(t + h, lvl(ell)).unwrap() - g_iter(t - h, lvl(ell)).unwrap()) / (2.0 * h);
                let d = g_iter_derivative(t, lvl(ell)).unwrap();
                assert!((d - fd).abs() <= 1e-5, "ell={ell} t={t} d={d} fd={fd}");
            }
        }
    }
}
