//! Gaussian random projection followed by a uniform coordinate grid: the
//! baseline the cascade sketch is compared against.
//!
//! The accuracy budget is split evenly. The projection preserves every squared
//! pairwise distance to `(1 ± ε/2)`; the grid moves each point by at most
//! `s√k/2 ≤ m²(ε/2)/6`, which perturbs squared distances of unit-ball points by
//! at most `m²ε/2`, i.e. relatively by `ε/2` on pairs at distance `≥ m`.

use thiserror::Error;

use crate::cascade::{GaussianRows, RowSource};
use crate::points::PointSet;

/// Projected coordinates are clamped to `[-B, B]`.
pub const COORD_RANGE: f64 = 2.0;

/// Stream tag separating projection rows from cascade layers.
const PROJECTION_TAG: u64 = 0x4A4C_5F50_524F_4A00;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JlError {
    #[error("epsilon {0} must lie in (0, 1)")]
    EpsilonRange(f64),
    #[error("minimum distance {0} must lie in (0, 2]")]
    MinDistRange(f64),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("projected vectors have inconsistent dimensions")]
    Ragged,
}

/// `k = ⌈12 ln n / ((ε/2)² - (ε/2)³)⌉`.
pub fn jl_dimension(n: usize, epsilon: f64) -> usize {
    let e = epsilon / 2.0;
    (12.0 * (n as f64).ln() / (e * e - e * e * e)).ceil().max(1.0) as usize
}

/// Grid step `s = m²(ε/2) / (3√k)`.
pub fn grid_step(k: usize, m: f64, epsilon: f64) -> f64 {
    m * m * (epsilon / 2.0) / (3.0 * (k as f64).sqrt())
}

/// `⌈log₂(2B/s + 1)⌉`.
pub fn bits_per_coordinate(step: f64) -> u32 {
    (2.0 * COORD_RANGE / step + 1.0).log2().ceil() as u32
}

/// Bits per point for `n` points at minimum distance `m`, without projecting.
pub fn bits_per_point(n: usize, m: f64, epsilon: f64) -> u64 {
    let k = jl_dimension(n, epsilon);
    k as u64 * u64::from(bits_per_coordinate(grid_step(k, m, epsilon)))
}

/// Projects arbitrary vectors with `v = (1/√k)·Rᵀu`, `R` a `d × k` Gaussian
/// matrix derived from `seed`.
pub fn project_vectors(vectors: &[Vec<f64>], d: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let source = GaussianRows::new(seed, PROJECTION_TAG);
    let scale = 1.0 / (k as f64).sqrt();
    let mut out = vec![vec![0.0; k]; vectors.len()];
    let mut column = vec![0.0; d];
    for c in 0..k {
        source.fill_row(c as u64, &mut column);
        for (u, v) in vectors.iter().zip(out.iter_mut()) {
            v[c] = scale * u.iter().zip(&column).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

/// Projects a point set to `k = jl_dimension(n, ε)` dimensions.
pub fn jl_project(points: &PointSet, epsilon: f64, seed: u64) -> Result<Vec<Vec<f64>>, JlError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(JlError::EpsilonRange(epsilon));
    }
    if points.len() < 2 {
        return Err(JlError::TooFewPoints(points.len()));
    }
    let k = jl_dimension(points.len(), epsilon);
    Ok(project_vectors(points.points(), points.dim(), k, seed))
}

/// Grid-quantized projection.
#[derive(Debug, Clone, PartialEq)]
pub struct JlSketch {
    pub k: usize,
    pub step: f64,
    pub coord_range: f64,
    /// `n × k` grid indices; coordinate value is `code · step`.
    pub codes: Vec<Vec<i64>>,
    pub bits: u64,
    /// Number of coordinates that hit the clamp.
    pub clamped: usize,
}

impl JlSketch {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn decode(&self, i: usize) -> Vec<f64> {
        self.codes[i].iter().map(|&c| c as f64 * self.step).collect()
    }

    pub fn bits_per_point(&self) -> u64 {
        self.k as u64 * u64::from(bits_per_coordinate(self.step))
    }
}

/// Clamps to `[-B, B]` and rounds to the grid of step `m²(ε/2)/(3√k)`.
pub fn jl_quantize(projected: &[Vec<f64>], m: f64, epsilon: f64) -> Result<JlSketch, JlError> {
    if !(m > 0.0 && m <= 2.0) {
        return Err(JlError::MinDistRange(m));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(JlError::EpsilonRange(epsilon));
    }
    let k = projected.first().map_or(1, Vec::len);
    if k == 0 || projected.iter().any(|v| v.len() != k) {
        return Err(JlError::Ragged);
    }
    let step = grid_step(k, m, epsilon);
    let mut clamped = 0;
    let codes = projected
        .iter()
        .map(|v| {
            v.iter()
                .map(|&x| {
                    if x.abs() > COORD_RANGE {
                        clamped += 1;
                    }
                    (x.clamp(-COORD_RANGE, COORD_RANGE) / step).round() as i64
                })
                .collect()
        })
        .collect();
    let n = projected.len() as u64;
    let bits = n * k as u64 * u64::from(bits_per_coordinate(step));
    Ok(JlSketch { k, step, coord_range: COORD_RANGE, codes, bits, clamped })
}

/// Squared distance between decoded grid points `i` and `j`.
pub fn jl_estimate_sq_dist(sketch: &JlSketch, i: usize, j: usize) -> Result<f64, JlError> {
    let n = sketch.len();
    for index in [i, j] {
        if index >= n {
            return Err(JlError::IndexOutOfRange { index, n });
        }
    }
    let sum: f64 = sketch.codes[i]
        .iter()
        .zip(&sketch.codes[j])
        .map(|(a, b)| {
            let diff = (a - b) as f64;
            diff * diff
        })
        .sum();
    Ok(sum * sketch.step * sketch.step)
}
