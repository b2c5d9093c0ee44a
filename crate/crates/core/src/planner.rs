//! Derives every sketch parameter from a point set and a target accuracy.
//!
//! Given `n` points with minimum normalized distance `m` and
//! `r = max 2/√(1-|⟨x̂,ŷ⟩|)`, the cascade uses
//!
//! * `ℓ = max(1, ⌈log₂ log₂ (4/m)⌉)` levels,
//! * a working accuracy `ε' = ε/4` (sphere) or `ε/32` (ball),
//! * a final-level error `δ = (ε'/√2)(√2/π)^ℓ`,
//! * `D_j = ⌈(c/2)·2^{2(ℓ-j)}·r^{6((2/3)^j-(2/3)^ℓ)}·ln n / δ²⌉` for `j = 1..ℓ`,
//!
//! where `c` is the N multiplier (48 by default, which makes
//! `N = D_ℓ = ⌈48(π/√2)^{2ℓ} ln n / ε'²⌉`).

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use thiserror::Error;

use crate::points::{dot, norm, Mode, PointSet};

/// Default multiplier in `N = ⌈c·(π/√2)^{2ℓ}·ln n / ε'²⌉`.
pub const DEFAULT_N_CONSTANT: f64 = 48.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {0} is the zero vector")]
    ZeroVector(usize),
    #[error("points {i} and {j} are coincident or antipodal after normalization (1-|<x,y>| = {gap:e})")]
    Degenerate { i: usize, j: usize, gap: f64 },
    #[error("epsilon {epsilon} must lie in (0, 1)")]
    EpsilonRange { epsilon: f64 },
    #[error("epsilon {epsilon} is not below 1-|<x,y>| = {gap} for points {i} and {j}")]
    EpsilonTooLarge { epsilon: f64, i: usize, j: usize, gap: f64 },
    #[error("internal: delta {delta} is not below 2/r^2 = {limit}")]
    DeltaTooLarge { delta: f64, limit: f64 },
    #[error("dimension D_{level} = {value:e} does not fit in 64 bits")]
    DimensionOverflow { level: usize, value: f64 },
    #[error("norm step {0:e} is too fine for 32-bit quantizer indices")]
    NormStepTooFine(f64),
    #[error("bit budget overflows 64 bits")]
    BudgetOverflow,
    #[error("N multiplier must be positive and finite, got {0}")]
    BadConstant(f64),
    #[error("plan text line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("plan is inconsistent: {0}")]
    Inconsistent(String),
}

/// Geometry of a point set as seen by the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Minimum distance between normalized points.
    pub m: f64,
    /// `max 2/√(1-|⟨x̂,ŷ⟩|)`.
    pub r: f64,
    /// Minimum squared norm (1 in sphere mode).
    pub rho: f64,
    /// `min 1-|⟨x̂,ŷ⟩|`; epsilon must be strictly below it.
    pub min_gap: f64,
    /// The pair attaining `min_gap`.
    pub gap_pair: (usize, usize),
    /// The pair attaining `m`.
    pub closest_pair: (usize, usize),
    /// Minimum distance between the raw (unnormalized) points.
    pub raw_min_dist: f64,
}

/// Brute-force O(n²) measurement of `m`, `r` and `ρ`.
pub fn measure(points: &PointSet) -> Result<Measurement, PlanError> {
    let n = points.len();
    if n < 2 {
        return Err(PlanError::TooFewPoints(n));
    }
    let mut unit = Vec::with_capacity(n);
    let mut rho = f64::INFINITY;
    for (i, p) in points.points().iter().enumerate() {
        let nrm = norm(p);
        if nrm == 0.0 {
            return Err(PlanError::ZeroVector(i));
        }
        rho = rho.min(nrm * nrm);
        unit.push(points.normalized(i));
    }
    if points.mode() == Mode::Sphere {
        rho = 1.0;
    }

    let mut m = f64::INFINITY;
    let mut closest_pair = (0, 1);
    let mut min_gap = f64::INFINITY;
    let mut gap_pair = (0, 1);
    let mut raw_min_dist = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = sq_dist(&unit[i], &unit[j]).sqrt();
            let inner = dot(&unit[i], &unit[j]).clamp(-1.0, 1.0);
            let gap = 1.0 - inner.abs();
            if dist == 0.0 || gap <= 0.0 {
                return Err(PlanError::Degenerate { i, j, gap });
            }
            if dist < m {
                m = dist;
                closest_pair = (i, j);
            }
            if gap < min_gap {
                min_gap = gap;
                gap_pair = (i, j);
            }
            raw_min_dist = raw_min_dist.min(sq_dist(points.point(i), points.point(j)).sqrt());
        }
    }
    Ok(Measurement {
        m,
        r: 2.0 / min_gap.sqrt(),
        rho,
        min_gap,
        gap_pair,
        closest_pair,
        raw_min_dist,
    })
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `ℓ = max(1, ⌈log₂ log₂ (4/m)⌉)`.
pub fn level_count(m: f64) -> u32 {
    let inner = (4.0 / m).log2().log2();
    (inner.ceil() as i64).max(1) as u32
}

/// Accuracy the cascade is planned for: `ε/4` on the sphere, `ε/32` in the ball.
pub fn working_epsilon(mode: Mode, epsilon: f64) -> f64 {
    match mode {
        Mode::Sphere => epsilon / 4.0,
        Mode::Ball => epsilon / 32.0,
    }
}

/// Final-level inner-product error `δ = (ε'/√2)(√2/π)^ℓ`.
pub fn level_delta(working_epsilon: f64, ell: u32) -> f64 {
    (working_epsilon / SQRT_2) * (SQRT_2 / PI).powi(ell as i32)
}

/// Per-level allowed deviation `δ / (2^{ℓ-j} r^{3((2/3)^j-(2/3)^ℓ)})`.
pub fn level_tolerance(delta: f64, r: f64, ell: u32, j: u32) -> f64 {
    let two_thirds = 2.0f64 / 3.0;
    let exponent = 3.0 * (two_thirds.powi(j as i32) - two_thirds.powi(ell as i32));
    delta / (2f64.powi((ell - j) as i32) * r.powf(exponent))
}

/// The dimension schedule `D_1..D_ℓ`.
pub fn dimension_schedule(
    n: usize,
    r: f64,
    delta: f64,
    ell: u32,
    n_constant: f64,
) -> Result<Vec<u64>, PlanError> {
    let two_thirds = 2.0f64 / 3.0;
    let log_n = (n as f64).ln();
    (1..=ell)
        .map(|j| {
            let exponent = 6.0 * (two_thirds.powi(j as i32) - two_thirds.powi(ell as i32));
            let value = (n_constant / 2.0) * 4f64.powi((ell - j) as i32) * r.powf(exponent) * log_n
                / (delta * delta);
            let value = value.ceil();
            // 2^64 is exactly representable; anything at or above it does not fit.
            if !value.is_finite() || value >= 18_446_744_073_709_551_616.0 {
                Err(PlanError::DimensionOverflow { level: j as usize, value })
            } else {
                Ok((value as u64).max(1))
            }
        })
        .collect()
}

/// `N = D_ℓ = ⌈(c/2)·ln n / δ²⌉` alone. Defined even when earlier levels of
/// the same schedule would overflow.
pub fn final_dimension(n: usize, delta: f64, ell: u32, n_constant: f64) -> Result<u64, PlanError> {
    let value = ((n_constant / 2.0) * (n as f64).ln() / (delta * delta)).ceil();
    if !value.is_finite() || value >= 18_446_744_073_709_551_616.0 {
        return Err(PlanError::DimensionOverflow { level: ell as usize, value });
    }
    Ok((value as u64).max(1))
}

/// Bits per stored norm index, `⌈log₂(1/Δ)⌉`.
pub fn norm_bits(step: f64) -> u32 {
    (1.0 / step).log2().ceil().max(0.0) as u32
}

/// Uniform round-to-nearest quantizer for norms in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormQuantizer {
    step: f64,
}

impl NormQuantizer {
    pub fn new(step: f64) -> Result<Self, PlanError> {
        if step.is_nan() || step <= 0.0 || (1.0 / step).round() >= u32::MAX as f64 {
            return Err(PlanError::NormStepTooFine(step));
        }
        Ok(Self { step })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn quantize(&self, norm: f64) -> u32 {
        (norm / self.step).round() as u32
    }

    pub fn reconstruct(&self, index: u32) -> f64 {
        index as f64 * self.step
    }
}

/// Planner knobs that are not derived from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanConfig {
    /// The multiplier `c` in `N = ⌈c·(π/√2)^{2ℓ}·ln n / ε'²⌉`.
    pub n_constant: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { n_constant: DEFAULT_N_CONSTANT }
    }
}

/// Every derived parameter of a sketch.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadePlan {
    pub n: usize,
    pub d: usize,
    pub mode: Mode,
    pub epsilon: f64,
    pub m: f64,
    pub r: f64,
    pub rho: f64,
    pub ell: u32,
    pub delta: f64,
    /// `D_1..D_ℓ`; the last entry is `N`.
    pub dims: Vec<u64>,
    /// Norm quantizer step (ball mode only).
    pub norm_step: Option<f64>,
    pub master_seed: u64,
    pub bit_budget: u64,
}

/// Plans with the default configuration.
pub fn plan(points: &PointSet, epsilon: f64, master_seed: u64) -> Result<CascadePlan, PlanError> {
    plan_with(points, epsilon, master_seed, &PlanConfig::default())
}

pub fn plan_with(
    points: &PointSet,
    epsilon: f64,
    master_seed: u64,
    config: &PlanConfig,
) -> Result<CascadePlan, PlanError> {
    if !(config.n_constant > 0.0 && config.n_constant.is_finite()) {
        return Err(PlanError::BadConstant(config.n_constant));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(PlanError::EpsilonRange { epsilon });
    }
    let meas = measure(points)?;
    if epsilon >= meas.min_gap {
        let (i, j) = meas.gap_pair;
        return Err(PlanError::EpsilonTooLarge { epsilon, i, j, gap: meas.min_gap });
    }

    let mode = points.mode();
    let ell = level_count(meas.m);
    let delta = level_delta(working_epsilon(mode, epsilon), ell);
    let limit = 2.0 / (meas.r * meas.r);
    assert!(delta < limit, "{}", PlanError::DeltaTooLarge { delta, limit });

    let dims = dimension_schedule(points.len(), meas.r, delta, ell, config.n_constant)?;
    let norm_step = match mode {
        Mode::Sphere => None,
        Mode::Ball => {
            let step = meas.rho * meas.m * meas.m * epsilon / 48.0;
            NormQuantizer::new(step)?;
            Some(step)
        }
    };

    let mut plan = CascadePlan {
        n: points.len(),
        d: points.dim(),
        mode,
        epsilon,
        m: meas.m,
        r: meas.r,
        rho: meas.rho,
        ell,
        delta,
        dims,
        norm_step,
        master_seed,
        bit_budget: 0,
    };
    plan.bit_budget = bit_budget(&plan)?;
    Ok(plan)
}

/// `n·N`, plus `n·⌈log₂(1/Δ)⌉` in ball mode.
pub fn bit_budget(plan: &CascadePlan) -> Result<u64, PlanError> {
    let n = plan.n as u64;
    let sketch = n.checked_mul(plan.final_dim()).ok_or(PlanError::BudgetOverflow)?;
    let norms = plan.norm_step.map_or(0, |s| n * u64::from(norm_bits(s)));
    sketch.checked_add(norms).ok_or(PlanError::BudgetOverflow)
}

impl CascadePlan {
    /// `N = D_ℓ`.
    pub fn final_dim(&self) -> u64 {
        *self.dims.last().expect("plan has at least one level")
    }

    pub fn working_epsilon(&self) -> f64 {
        working_epsilon(self.mode, self.epsilon)
    }

    pub fn norm_quantizer(&self) -> Option<NormQuantizer> {
        self.norm_step.map(|step| NormQuantizer { step })
    }

    pub fn norm_bits(&self) -> u32 {
        self.norm_step.map_or(0, norm_bits)
    }

    /// Same plan, different randomness.
    pub fn with_seed(&self, master_seed: u64) -> Self {
        Self { master_seed, ..self.clone() }
    }

    /// Rebuilds a plan from stored fields, recomputing `δ` and the bit budget.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        n: usize,
        d: usize,
        mode: Mode,
        epsilon: f64,
        m: f64,
        r: f64,
        rho: f64,
        dims: Vec<u64>,
        norm_step: Option<f64>,
        master_seed: u64,
    ) -> Result<Self, PlanError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(PlanError::Inconsistent("dimension schedule must be nonempty and positive".into()));
        }
        if n < 2 || d == 0 {
            return Err(PlanError::Inconsistent(format!("n = {n}, d = {d}")));
        }
        match (mode, norm_step) {
            (Mode::Sphere, Some(_)) => {
                return Err(PlanError::Inconsistent("sphere plan carries a norm step".into()))
            }
            (Mode::Ball, None) => return Err(PlanError::Inconsistent("ball plan lacks a norm step".into())),
            (Mode::Ball, Some(step)) => {
                NormQuantizer::new(step)?;
            }
            _ => {}
        }
        let ell = dims.len() as u32;
        let delta = level_delta(working_epsilon(mode, epsilon), ell);
        let mut plan =
            CascadePlan { n, d, mode, epsilon, m, r, rho, ell, delta, dims, norm_step, master_seed, bit_budget: 0 };
        plan.bit_budget = bit_budget(&plan)?;
        Ok(plan)
    }

    /// Human-readable `key = value` dump; [`CascadePlan::from_text`] reads it back exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# hypersketch plan\n");
        let dims: Vec<String> = self.dims.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "d = {}", self.d);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "r = {}", self.r);
        let _ = writeln!(s, "rho = {}", self.rho);
        let _ = writeln!(s, "ell = {}", self.ell);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "dims = {}", dims.join(","));
        match self.norm_step {
            Some(step) => {
                let _ = writeln!(s, "norm_step = {step}");
            }
            None => s.push_str("norm_step = none\n"),
        }
        let _ = writeln!(s, "norm_bits = {}", self.norm_bits());
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "bit_budget = {}", self.bit_budget);
        s
    }

    /// Parses [`CascadePlan::to_text`] output. Unknown keys are ignored; derived
    /// fields (`delta`, `norm_bits`, `bit_budget`) must match their recomputation.
    pub fn from_text(text: &str) -> Result<Self, PlanError> {
        let mut fields = std::collections::HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| PlanError::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            fields.insert(key.trim().to_string(), (idx + 1, value.trim().to_string()));
        }
        fn get<'a>(
            fields: &'a std::collections::HashMap<String, (usize, String)>,
            key: &str,
        ) -> Result<(usize, &'a str), PlanError> {
            fields
                .get(key)
                .map(|(l, v)| (*l, v.as_str()))
                .ok_or_else(|| PlanError::Parse { line: 0, message: format!("missing key {key}") })
        }
        fn num<T: std::str::FromStr>(
            fields: &std::collections::HashMap<String, (usize, String)>,
            key: &str,
        ) -> Result<T, PlanError> {
            let (line, v) = get(fields, key)?;
            v.parse().map_err(|_| PlanError::Parse { line, message: format!("bad value for {key}: {v:?}") })
        }

        let (mode_line, mode_str) = get(&fields, "mode")?;
        let mode: Mode = mode_str
            .parse()
            .map_err(|_| PlanError::Parse { line: mode_line, message: format!("bad mode {mode_str:?}") })?;
        let (dims_line, dims_str) = get(&fields, "dims")?;
        let dims = dims_str
            .split(',')
            .map(|v| v.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| PlanError::Parse { line: dims_line, message: format!("bad dims {dims_str:?}") })?;
        let (_, step_str) = get(&fields, "norm_step")?;
        let norm_step = if step_str == "none" { None } else { Some(num::<f64>(&fields, "norm_step")?) };

        let plan = CascadePlan::from_parts(
            num(&fields, "n")?,
            num(&fields, "d")?,
            mode,
            num(&fields, "epsilon")?,
            num(&fields, "m")?,
            num(&fields, "r")?,
            num(&fields, "rho")?,
            dims,
            norm_step,
            num(&fields, "master_seed")?,
        )?;
        if num::<u32>(&fields, "ell")? != plan.ell {
            return Err(PlanError::Inconsistent("ell does not match the number of dims".into()));
        }
        if num::<f64>(&fields, "delta")? != plan.delta {
            return Err(PlanError::Inconsistent("delta does not match epsilon and ell".into()));
        }
        if num::<u32>(&fields, "norm_bits")? != plan.norm_bits() {
            return Err(PlanError::Inconsistent("norm_bits does not match norm_step".into()));
        }
        if num::<u64>(&fields, "bit_budget")? != plan.bit_budget {
            return Err(PlanError::Inconsistent("bit_budget does not match n, N and norm_bits".into()));
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(points: Vec<Vec<f64>>) -> PointSet {
        let d = points[0].len();
        PointSet::new(Mode::Sphere, d, points).unwrap()
    }

    #[test]
    fn measure_orthogonal_pair() {
        let s = sphere(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let meas = measure(&s).unwrap();
        assert!((meas.m - 2f64.sqrt()).abs() < 1e-15);
        assert!((meas.r - 2.0).abs() < 1e-15);
        assert_eq!(meas.rho, 1.0);
    }

    #[test]
    fn measure_rejects_antipodal_and_zero() {
        let s = sphere(vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(measure(&s), Err(PlanError::Degenerate { i: 0, j: 1, .. })));

        let b = PointSet::new(Mode::Ball, 2, vec![vec![0.5, 0.0], vec![0.25, 0.0]]).unwrap();
        assert!(matches!(measure(&b), Err(PlanError::Degenerate { .. })));

        let one = sphere(vec![vec![1.0, 0.0]]);
        assert_eq!(measure(&one), Err(PlanError::TooFewPoints(1)));
    }

    #[test]
    fn level_count_examples() {
        assert_eq!(level_count(0.25), 2);
        assert_eq!(level_count(2f64.sqrt()), 1);
        assert_eq!(level_count(0.01), 4);
        assert_eq!(level_count(1.999), 1);
    }

    #[test]
    fn bit_budget_examples() {
        let p = CascadePlan::from_parts(100, 8, Mode::Sphere, 0.1, 1.0, 2.0, 1.0, vec![4096], None, 0).unwrap();
        assert_eq!(p.bit_budget, 409_600);
        let p = CascadePlan::from_parts(10, 8, Mode::Ball, 0.1, 1.0, 2.0, 1.0, vec![64], Some(2f64.powi(-10)), 0)
            .unwrap();
        assert_eq!(p.bit_budget, 740);
        assert_eq!(bit_budget(&p).unwrap(), 740);
    }

    #[test]
    fn epsilon_precondition_names_pair() {
        let c = 0.6f64;
        let s = sphere(vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![c, (1.0 - c * c).sqrt(), 0.0]]);
        match plan(&s, 0.5, 1) {
            Err(PlanError::EpsilonTooLarge { i, j, .. }) => assert_eq!((i, j), (0, 2)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(plan(&s, 0.3, 1).is_ok());
        assert!(matches!(plan(&s, 0.0, 1), Err(PlanError::EpsilonRange { .. })));
        assert!(matches!(
            plan_with(&s, 0.3, 1, &PlanConfig { n_constant: 0.0 }),
            Err(PlanError::BadConstant(_))
        ));
    }

    #[test]
    fn final_dimension_matches_closed_form() {
        let s = sphere(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let p = plan(&s, 0.3, 9).unwrap();
        assert_eq!(p.ell, 1);
        let eps = 0.3 / 4.0;
        let closed = (48.0 * (PI / SQRT_2).powi(2) * 2f64.ln() / (eps * eps)).ceil() as u64;
        assert!(p.final_dim().abs_diff(closed) <= 1, "{} vs {closed}", p.final_dim());
        assert_eq!(p.norm_step, None);
    }

    #[test]
    fn norm_quantizer_example() {
        let q = NormQuantizer::new(0.01).unwrap();
        assert_eq!(q.quantize(0.5), 50);
        assert!((q.reconstruct(50) - 0.5).abs() < 1e-15);
        assert!(NormQuantizer::new(1e-12).is_err());
        assert_eq!(norm_bits(2f64.powi(-10)), 10);
    }

    #[test]
    fn text_round_trip() {
        let b = PointSet::new(Mode::Ball, 2, vec![vec![0.5, 0.0], vec![0.0, 0.9], vec![0.3, 0.3]]).unwrap();
        let p = plan(&b, 0.2, 42).unwrap();
        let text = p.to_text();
        assert_eq!(CascadePlan::from_text(&text).unwrap(), p);
        let tampered = text.replace("bit_budget = ", "bit_budget = 1");
        assert!(CascadePlan::from_text(&tampered).is_err());
        assert!(matches!(CascadePlan::from_text("n 3"), Err(PlanError::Parse { line: 1, .. })));
    }

    #[test]
    fn overflow_is_reported() {
        let err = dimension_schedule(100, 300.0, 1e-9, 4, 48.0).unwrap_err();
        assert!(matches!(err, PlanError::DimensionOverflow { level: 1, .. }));
    }
}
