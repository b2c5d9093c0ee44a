//! Instance generators, exact distance oracles and Monte-Carlo verification
//! of the sketch guarantees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::cascade::{apply_layer, sketch_levels, sketch_set, CascadeError, CascadeLayer, LayerInput};
use crate::iterates::{f, f_iter, IterateError, IterateLevel};
use crate::jl_baseline::{jl_estimate_sq_dist, jl_project, jl_quantize, JlError};
use crate::planner::{level_tolerance, measure, plan_with, CascadePlan, PlanConfig, PlanError};
use crate::points::{dot, norm, Mode, PointSet, PointSetError};
use crate::recovery::{estimate_all, RecoveryError};

/// Consecutive rejected candidates before a generator gives up.
pub const RETRY_BUDGET: usize = 20_000;

/// Minimum `1-|⟨x,y⟩|` between the "other" points of [`gen_close_pairs`].
pub const WELL_SEPARATED_GAP: f64 = 0.25;

/// Default ceiling on Gaussian multiply-adds for one verification run.
pub const DEFAULT_WORK_BUDGET: f64 = 2.0e12;

/// Width of the acceptance band for Monte-Carlo means, in standard errors.
pub const MEAN_BAND_SE: f64 = 4.0;

/// Confidence level of the one-sided binomial lower bound.
pub const BINOMIAL_CONFIDENCE: f64 = 0.95;

/// Success-rate acceptance: lower bound must reach `target - SUCCESS_SLACK`.
pub const SUCCESS_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid generator argument: {0}")]
    InvalidArgument(String),
    #[error("could not place point {placed} of {requested} after {RETRY_BUDGET} attempts; packing infeasible")]
    Infeasible { placed: usize, requested: usize },
    #[error("plan needs {work:.3e} multiply-adds, above the budget of {budget:.3e}")]
    ComputeBudget { work: f64, budget: f64 },
    #[error(transparent)]
    Points(#[from] PointSetError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error(transparent)]
    Iterate(#[from] IterateError),
    #[error(transparent)]
    Jl(#[from] JlError),
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = norm(&v);
        if nrm > 1e-12 {
            return v.into_iter().map(|x| x / nrm).collect();
        }
    }
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Sequential rejection sampling of unit vectors.
fn rejection_sample(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    accept: impl Fn(&[f64], &[f64]) -> bool,
) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    while out.len() < n {
        let mut placed = false;
        for _ in 0..RETRY_BUDGET {
            let cand = random_unit(rng, d);
            if out.iter().all(|p| accept(p, &cand)) {
                out.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(HarnessError::Infeasible { placed: out.len(), requested: n });
        }
    }
    Ok(out)
}

fn check_common(n: usize, d: usize) -> Result<(), HarnessError> {
    if n < 2 || d < 2 {
        return Err(HarnessError::InvalidArgument(format!("need n >= 2 and d >= 2, got n = {n}, d = {d}")));
    }
    Ok(())
}

/// `n` uniform unit vectors with pairwise distance at least `m_target`.
pub fn gen_sphere(n: usize, d: usize, m_target: f64, seed: u64) -> Result<PointSet, HarnessError> {
    check_common(n, d)?;
    if !(m_target > 0.0 && m_target < 2f64.sqrt()) {
        return Err(HarnessError::InvalidArgument(format!("min distance {m_target} outside (0, sqrt 2)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = rejection_sample(&mut rng, n, d, |a, b| distance(a, b) >= m_target)?;
    Ok(PointSet::new(Mode::Sphere, d, points)?
        .with_provenance(format!("gen sphere n={n} d={d} min_dist={m_target} seed={seed}")))
}

/// Well-separated unit vectors plus one point at distance exactly `m_exact`
/// from the first, obtained by rotating it by `2·asin(m/2)`. The close
/// partner is the last point.
pub fn gen_close_pairs(n: usize, d: usize, m_exact: f64, seed: u64) -> Result<PointSet, HarnessError> {
    check_common(n, d)?;
    if !(m_exact > 0.0 && m_exact < 0.5) {
        return Err(HarnessError::InvalidArgument(format!("close-pair distance {m_exact} outside (0, 0.5)")));
    }
    let separated = |a: &[f64], b: &[f64]| 1.0 - dot(a, b).abs() >= WELL_SEPARATED_GAP;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = rejection_sample(&mut rng, n - 1, d, separated)?;

    let theta = 2.0 * (m_exact / 2.0).asin();
    let base = points[0].clone();
    for _ in 0..RETRY_BUDGET {
        let mut u = random_unit(&mut rng, d);
        let proj = dot(&u, &base);
        u.iter_mut().zip(&base).for_each(|(ui, bi)| *ui -= proj * bi);
        let un = norm(&u);
        if un < 1e-6 {
            continue;
        }
        let partner: Vec<f64> =
            base.iter().zip(&u).map(|(b, ui)| theta.cos() * b + theta.sin() * ui / un).collect();
        if points[1..].iter().all(|p| separated(p, &partner)) {
            points.push(partner);
            return Ok(PointSet::new(Mode::Sphere, d, points)?
                .with_provenance(format!("gen close-pairs n={n} d={d} m_exact={m_exact} seed={seed}")));
        }
    }
    Err(HarnessError::Infeasible { placed: n - 1, requested: n })
}

/// Points in the unit ball: directions separated by `m_target`, norms uniform
/// in `[√rho_target, 1]`.
pub fn gen_ball(n: usize, d: usize, rho_target: f64, m_target: f64, seed: u64) -> Result<PointSet, HarnessError> {
    check_common(n, d)?;
    if !(rho_target > 0.0 && rho_target <= 1.0) {
        return Err(HarnessError::InvalidArgument(format!("rho {rho_target} outside (0, 1]")));
    }
    if !(m_target > 0.0 && m_target < 2f64.sqrt()) {
        return Err(HarnessError::InvalidArgument(format!("min distance {m_target} outside (0, sqrt 2)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = rejection_sample(&mut rng, n, d, |a, b| distance(a, b) >= m_target)?;
    let lo = rho_target.sqrt();
    let points = dirs
        .into_iter()
        .map(|dir| {
            let radius = if lo >= 1.0 { 1.0 } else { lo + (1.0 - lo) * rng.random::<f64>() };
            dir.into_iter().map(|x| x * radius).collect()
        })
        .collect();
    Ok(PointSet::new(Mode::Ball, d, points)?
        .with_provenance(format!("gen ball n={n} d={d} rho={rho_target} min_dist={m_target} seed={seed}")))
}

/// Exact `‖x_i - x_j‖²` for every pair.
#[allow(clippy::needless_range_loop)]
pub fn true_sq_dists(points: &PointSet) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = points.point(i).iter().zip(points.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Gaussian multiply-adds needed to sketch `plan.n` points once.
pub fn cascade_work(plan: &CascadePlan) -> f64 {
    let mut in_dim = plan.d as f64;
    let mut work = 0.0;
    for &out in &plan.dims {
        work += in_dim * out as f64 * (plan.n as f64 + 1.0);
        in_dim = out as f64;
    }
    work
}

/// One-sided lower confidence bound (Clopper-Pearson) for a binomial rate.
pub fn binomial_lower_bound(successes: usize, trials: usize, confidence: f64) -> f64 {
    assert!(successes <= trials && trials > 0);
    if successes == 0 {
        return 0.0;
    }
    let alpha = 1.0 - confidence;
    let (a, b) = (successes as f64, (trials - successes) as f64 + 1.0);
    // Lower bound is the alpha-quantile of Beta(k, n-k+1).
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if statrs::function::beta::beta_reg(a, b, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Verification knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub plan: PlanConfig,
    /// Refuse runs needing more Gaussian multiply-adds than this.
    pub work_budget: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self { plan: PlanConfig::default(), work_budget: DEFAULT_WORK_BUDGET }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    /// Every pair within `(1 ± ε)` of its true squared distance.
    pub all_pairs_ok: bool,
    pub max_rel_error: f64,
    /// Largest `|est - true| / additive_bound` over pairs.
    pub max_additive_error_vs_bound: f64,
    /// Pair attaining `max_rel_error`.
    pub worst_pair: (usize, usize),
    /// Relative error on the closest pair of the instance.
    pub closest_pair_rel_error: f64,
}

impl TrialOutcome {
    pub fn additive_ok(&self) -> bool {
        self.max_additive_error_vs_bound <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub trials: usize,
    pub per_trial: Vec<TrialOutcome>,
    /// `None` when no trial ran.
    pub success_rate: Option<f64>,
    pub target_rate: f64,
    /// One-sided 95% Clopper-Pearson lower bound on the success rate.
    pub lower_bound: Option<f64>,
}

impl TrialReport {
    fn from_outcomes(mut per_trial: Vec<TrialOutcome>, target_rate: f64) -> Self {
        per_trial.sort_by_key(|t| t.seed);
        let trials = per_trial.len();
        let ok = per_trial.iter().filter(|t| t.all_pairs_ok).count();
        let (success_rate, lower_bound) = if trials == 0 {
            (None, None)
        } else {
            (Some(ok as f64 / trials as f64), Some(binomial_lower_bound(ok, trials, BINOMIAL_CONFIDENCE)))
        };
        Self { trials, per_trial, success_rate, target_rate, lower_bound }
    }

    pub fn successes(&self) -> usize {
        self.per_trial.iter().filter(|t| t.all_pairs_ok).count()
    }

    /// Lower bound reaches `target - SUCCESS_SLACK`.
    pub fn accepted(&self) -> bool {
        self.lower_bound.is_some_and(|lb| lb >= self.target_rate - SUCCESS_SLACK)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.per_trial.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    /// Every successful trial also met the additive bound.
    pub fn additive_bound_holds(&self) -> bool {
        self.per_trial.iter().filter(|t| t.all_pairs_ok).all(TrialOutcome::additive_ok)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,all_pairs_ok,max_rel_error,max_additive_error_vs_bound,worst_i,worst_j\n");
        for t in &self.per_trial {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.seed, t.all_pairs_ok, t.max_rel_error, t.max_additive_error_vs_bound, t.worst_pair.0, t.worst_pair.1
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
        format!(
            "trials: {}\nsuccesses: {}\nsuccess_rate: {}\nlower_bound_95: {}\ntarget_rate: {:.4}\nmax_rel_error: {:.6}\naccepted: {}\n",
            self.trials,
            self.successes(),
            fmt(self.success_rate),
            fmt(self.lower_bound),
            self.target_rate,
            self.max_rel_error(),
            self.accepted()
        )
    }
}

/// `(1 - 2/n)^ℓ`.
pub fn target_rate(n: usize, ell: u32) -> f64 {
    (1.0 - 2.0 / n as f64).powi(ell as i32)
}

/// Plans once, then sketches and checks every pair for `trials` seeds
/// `seed0, seed0 + 1, ...`.
pub fn run_trials(
    points: &PointSet,
    epsilon: f64,
    trials: usize,
    seed0: u64,
    config: &TrialConfig,
) -> Result<TrialReport, HarnessError> {
    let plan = plan_with(points, epsilon, seed0, &config.plan)?;
    run_trials_with_plan(points, &plan, trials, seed0, config.work_budget)
}

/// Like [`run_trials`] but with a caller-supplied plan (ablations).
pub fn run_trials_with_plan(
    points: &PointSet,
    plan: &CascadePlan,
    trials: usize,
    seed0: u64,
    work_budget: f64,
) -> Result<TrialReport, HarnessError> {
    let meas = measure(points)?;
    let work = cascade_work(plan) * trials as f64;
    if work > work_budget {
        return Err(HarnessError::ComputeBudget { work, budget: work_budget });
    }
    let truth = true_sq_dists(points);
    let ell_exp = 2.0 - 2f64.powi(1 - plan.ell as i32);
    let eps_work = plan.working_epsilon();
    let unit: Vec<Vec<f64>> = (0..points.len()).map(|i| points.normalized(i)).collect();
    let norms: Vec<f64> = points.points().iter().map(|p| norm(p)).collect();

    let mut outcomes = Vec::with_capacity(trials);
    for t in 0..trials {
        let seed = seed0.wrapping_add(t as u64);
        let bundle = sketch_set(points, &plan.with_seed(seed))?;
        let mut outcome = TrialOutcome {
            seed,
            all_pairs_ok: true,
            max_rel_error: 0.0,
            max_additive_error_vs_bound: 0.0,
            worst_pair: (0, 1),
            closest_pair_rel_error: 0.0,
        };
        for est in estimate_all(&bundle)? {
            let tru = truth[est.i][est.j];
            let err = (est.est_sq_dist - tru).abs();
            let rel = err / tru;
            if rel > plan.epsilon {
                outcome.all_pairs_ok = false;
            }
            if rel > outcome.max_rel_error {
                outcome.max_rel_error = rel;
                outcome.worst_pair = (est.i, est.j);
            }
            if (est.i, est.j) == meas.closest_pair {
                outcome.closest_pair_rel_error = rel;
            }
            let bound = match plan.mode {
                Mode::Sphere => eps_work * tru.sqrt().powf(ell_exp),
                Mode::Ball => {
                    let unit_sq: f64 = unit[est.i].iter().zip(&unit[est.j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    plan.epsilon * norms[est.i] * norms[est.j] * unit_sq
                }
            };
            outcome.max_additive_error_vs_bound = outcome.max_additive_error_vs_bound.max(err / bound);
        }
        outcomes.push(outcome);
    }
    Ok(TrialReport::from_outcomes(outcomes, target_rate(points.len(), plan.ell)))
}

/// Same plan with the final dimension divided by `divisor` (at least 1).
pub fn shrink_final_dim(plan: &CascadePlan, divisor: u64) -> Result<CascadePlan, PlanError> {
    let mut dims = plan.dims.clone();
    let last = dims.len() - 1;
    dims[last] = (dims[last] / divisor).max(1);
    CascadePlan::from_parts(
        plan.n,
        plan.d,
        plan.mode,
        plan.epsilon,
        plan.m,
        plan.r,
        plan.rho,
        dims,
        plan.norm_step,
        plan.master_seed,
    )
}

/// Per-level worst deviation `|⟨φ_j(x), φ_j(y)⟩ - f_j(⟨x̂,ŷ⟩)|` against its
/// allowed tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelCheck {
    pub level: u32,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl LevelCheck {
    pub fn ok(&self) -> bool {
        self.max_deviation < self.tolerance
    }
}

pub fn level_deviations(points: &PointSet, plan: &CascadePlan) -> Result<Vec<LevelCheck>, HarnessError> {
    let levels = sketch_levels(points.points(), plan)?;
    let n = points.len();
    let unit: Vec<Vec<f64>> = (0..n).map(|i| points.normalized(i)).collect();
    let mut out = Vec::with_capacity(levels.len());
    for (idx, sketches) in levels.iter().enumerate() {
        let j = idx as u32 + 1;
        let level = IterateLevel::new(j)?;
        let mut max_deviation: f64 = 0.0;
        for a in 0..n {
            for b in (a + 1)..n {
                let expected = f_iter(dot(&unit[a], &unit[b]).clamp(-1.0, 1.0), level)?;
                let got = sketches[a].inner_product(&sketches[b]).map_err(CascadeError::from)?;
                max_deviation = max_deviation.max((got - expected).abs());
            }
        }
        out.push(LevelCheck {
            level: j,
            max_deviation,
            tolerance: level_tolerance(plan.delta, plan.r, plan.ell, j),
        });
    }
    Ok(out)
}

/// Result of [`kernel_unbiasedness_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTest {
    pub inner: f64,
    pub expected: f64,
    pub mean: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// Checks `E⟨φ^D(x), φ^D(y)⟩ = f(⟨x, y⟩)` for a pair with the given inner
/// product. The mean over `trials` single-layer sketches (seeds
/// `seed, seed + 1, ...`) must fall within 4 standard errors; per-coordinate
/// products are i.i.d. `±1`, so the standard error is `√((1-mean²)/(trials·D))`.
pub fn kernel_unbiasedness_test(
    inner: f64,
    d: usize,
    big_d: usize,
    trials: usize,
    seed: u64,
) -> Result<KernelTest, HarnessError> {
    if inner.is_nan() || inner.abs() >= 1.0 || d < 2 || big_d == 0 || trials == 0 {
        return Err(HarnessError::InvalidArgument(format!(
            "need |inner| < 1, d >= 2, D > 0, trials > 0; got inner = {inner}, d = {d}, D = {big_d}, trials = {trials}"
        )));
    }
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    x[0] = 1.0;
    y[0] = inner;
    y[1] = (1.0 - inner * inner).sqrt();
    let pair = [x, y];

    let mut sum = 0.0;
    for t in 0..trials {
        let layer = CascadeLayer::new(1, d as u64, big_d as u64, seed.wrapping_add(t as u64))?;
        let out = apply_layer(&layer.rows(), d, big_d, LayerInput::Real(&pair))?;
        sum += out[0].inner_product(&out[1]).map_err(CascadeError::from)?;
    }
    let mean = sum / trials as f64;
    let expected = f(inner)?;
    let std_error = ((1.0 - mean * mean).max(0.0) / (trials as f64 * big_d as f64)).sqrt();
    let z_score = (mean - expected) / std_error;
    Ok(KernelTest { inner, expected, mean, std_error, z_score, pass: z_score.abs() <= MEAN_BAND_SE })
}

/// The grid-quantized projection baseline, checked the same way as the
/// cascade; the target is `1 - 2/n`.
#[allow(clippy::needless_range_loop)]
pub fn run_jl_trials(
    points: &PointSet,
    epsilon: f64,
    trials: usize,
    seed0: u64,
) -> Result<(TrialReport, u64), HarnessError> {
    let meas = measure(points)?;
    let truth = true_sq_dists(points);
    let mut outcomes = Vec::with_capacity(trials);
    let mut bits = 0;
    for t in 0..trials {
        let seed = seed0.wrapping_add(t as u64);
        let projected = jl_project(points, epsilon, seed)?;
        let sketch = jl_quantize(&projected, meas.raw_min_dist, epsilon)?;
        bits = sketch.bits;
        let mut outcome = TrialOutcome {
            seed,
            all_pairs_ok: true,
            max_rel_error: 0.0,
            max_additive_error_vs_bound: 0.0,
            worst_pair: (0, 1),
            closest_pair_rel_error: 0.0,
        };
        let m2 = meas.raw_min_dist * meas.raw_min_dist;
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let est = jl_estimate_sq_dist(&sketch, i, j)?;
                let tru = truth[i][j];
                let err = (est - tru).abs();
                let rel = err / tru;
                if rel > epsilon {
                    outcome.all_pairs_ok = false;
                }
                if rel > outcome.max_rel_error {
                    outcome.max_rel_error = rel;
                    outcome.worst_pair = (i, j);
                }
                outcome.max_additive_error_vs_bound = outcome.max_additive_error_vs_bound.max(err / (epsilon * m2));
            }
        }
        outcomes.push(outcome);
    }
    let target = 1.0 - 2.0 / points.len() as f64;
    Ok((TrialReport::from_outcomes(outcomes, target), bits))
}
