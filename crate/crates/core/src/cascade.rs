//! The random maps `φ_1..φ_ℓ`.
//!
//! A layer maps `x ∈ R^{D_in}` to the signs of `⟨x, Z_i⟩` for `D_out`
//! i.i.d. standard Gaussian rows `Z_i`; `φ_ℓ` chains `ℓ` layers, each consuming
//! the previous `±1` pattern. Rows are never stored: row `i` of layer `j` is
//! regenerated from `(master_seed, j, i)` by a counter-based stream, so any
//! output bit can be recomputed in isolation and the result does not depend on
//! how the work is scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::planner::{CascadePlan, PlanError};
use crate::points::{norm, Mode, PointSet};
use crate::signsketch::{words_for, PackedSignVector, SignError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CascadeError {
    #[error("input has dimension {actual}, layer expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cannot sketch the zero vector")]
    ZeroVector,
    #[error("layer dimension {0} does not fit in memory on this platform")]
    TooLarge(u64),
    #[error("plan does not match the point set: {0}")]
    PlanMismatch(String),
    #[error(transparent)]
    Sign(#[from] SignError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Source of the projection rows of one layer.
pub trait RowSource: Sync {
    /// Writes row `row` (length `out.len()`) into `out`.
    fn fill_row(&self, row: u64, out: &mut [f64]);
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard Gaussian rows keyed by `(master_seed, tag, row, column)`.
///
/// The ChaCha key is derived from `(master_seed, tag)`, the row index selects
/// the stream and columns are consecutive words within it. Uniforms are mapped
/// to normals by the inverse CDF.
#[derive(Debug, Clone)]
pub struct GaussianRows {
    key: [u8; 32],
}

impl GaussianRows {
    pub fn new(master_seed: u64, tag: u64) -> Self {
        let mut state = master_seed ^ tag.wrapping_mul(0xD605_BBB5_8C8A_BBAD);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }
}

/// Maps 53 random bits to the open interval (0, 1).
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

impl RowSource for GaussianRows {
    fn fill_row(&self, row: u64, out: &mut [f64]) {
        let normal = Normal::standard();
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(row);
        for v in out.iter_mut() {
            *v = normal.inverse_cdf(open_unit(rng.next_u64()));
        }
    }
}

/// Explicit row-major matrix, for hand-built layers.
#[derive(Debug, Clone)]
pub struct FixedRows {
    pub rows: Vec<Vec<f64>>,
}

impl RowSource for FixedRows {
    fn fill_row(&self, row: u64, out: &mut [f64]) {
        out.copy_from_slice(&self.rows[row as usize]);
    }
}

/// One sign feature map `R^{in_dim} → {±1}^{out_dim}`.
#[derive(Debug, Clone)]
pub struct CascadeLayer {
    /// 1-based position `j` in the cascade.
    pub layer_index: u32,
    pub in_dim: usize,
    pub out_dim: usize,
    pub master_seed: u64,
}

impl CascadeLayer {
    pub fn new(layer_index: u32, in_dim: u64, out_dim: u64, master_seed: u64) -> Result<Self, CascadeError> {
        let in_dim = usize::try_from(in_dim).map_err(|_| CascadeError::TooLarge(in_dim))?;
        let out_dim_usize = usize::try_from(out_dim).map_err(|_| CascadeError::TooLarge(out_dim))?;
        Ok(Self { layer_index, in_dim, out_dim: out_dim_usize, master_seed })
    }

    /// All layers of a plan, `D_0 = d`.
    pub fn for_plan(plan: &CascadePlan) -> Result<Vec<Self>, CascadeError> {
        let mut in_dim = plan.d as u64;
        plan.dims
            .iter()
            .enumerate()
            .map(|(j, &out_dim)| {
                let layer = Self::new(j as u32 + 1, in_dim, out_dim, plan.master_seed);
                in_dim = out_dim;
                layer
            })
            .collect()
    }

    pub fn rows(&self) -> GaussianRows {
        GaussianRows::new(self.master_seed, u64::from(self.layer_index))
    }
}

/// Inputs to a layer: real vectors (first layer) or sign patterns (later layers).
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Real(&'a [Vec<f64>]),
    Signs(&'a [PackedSignVector]),
}

impl LayerInput<'_> {
    fn len(&self) -> usize {
        match self {
            LayerInput::Real(v) => v.len(),
            LayerInput::Signs(v) => v.len(),
        }
    }

    fn check_dims(&self, in_dim: usize) -> Result<(), CascadeError> {
        let bad = match self {
            LayerInput::Real(v) => v.iter().map(Vec::len).find(|&l| l != in_dim),
            LayerInput::Signs(v) => v.iter().map(PackedSignVector::nbits).find(|&l| l != in_dim),
        };
        match bad {
            Some(actual) => Err(CascadeError::DimensionMismatch { expected: in_dim, actual }),
            None => Ok(()),
        }
    }
}

/// `Σ_k s_k z_k` with `s_k = ±1` read from packed words. Flipping the sign bit
/// keeps the sum of a complemented pattern the exact negation.
#[inline]
fn signed_sum(words: &[u64], z: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (w, chunk) in words.iter().zip(z.chunks(64)) {
        for (b, &v) in chunk.iter().enumerate() {
            let flip = ((!(w >> b)) & 1) << 63;
            acc += f64::from_bits(v.to_bits() ^ flip);
        }
    }
    acc
}

/// Dot product with eight independent partial sums, combined in a fixed order.
#[inline]
fn real_dot(x: &[f64], z: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let xc = x.chunks_exact(8);
    let zc = z.chunks_exact(8);
    let tail: f64 = xc.remainder().iter().zip(zc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(zc) {
        for k in 0..8 {
            acc[k] += a[k] * b[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Applies one layer to a batch of inputs. Output bit `i` is `sign(⟨x, Z_i⟩)`
/// with `sign(0) = +1`.
pub fn apply_layer(
    source: &dyn RowSource,
    in_dim: usize,
    out_dim: usize,
    inputs: LayerInput<'_>,
) -> Result<Vec<PackedSignVector>, CascadeError> {
    inputs.check_dims(in_dim)?;
    if out_dim == 0 {
        return Err(SignError::Empty.into());
    }
    let n = inputs.len();
    let nwords = words_for(out_dim);

    // One output word per input per block of 64 rows.
    let blocks: Vec<Vec<u64>> = (0..nwords)
        .into_par_iter()
        .map_init(
            || vec![0.0; in_dim],
            |z, block| {
                let mut words = vec![0u64; n];
                let start = block * 64;
                let end = (start + 64).min(out_dim);
                for row in start..end {
                    source.fill_row(row as u64, z);
                    let bit = 1u64 << (row - start);
                    match inputs {
                        LayerInput::Real(xs) => {
                            for (w, x) in words.iter_mut().zip(xs) {
                                if real_dot(x, z) >= 0.0 {
                                    *w |= bit;
                                }
                            }
                        }
                        LayerInput::Signs(ss) => {
                            for (w, s) in words.iter_mut().zip(ss) {
                                if signed_sum(s.words(), z) >= 0.0 {
                                    *w |= bit;
                                }
                            }
                        }
                    }
                }
                words
            },
        )
        .collect();

    (0..n)
        .map(|p| {
            let words = blocks.iter().map(|b| b[p]).collect();
            PackedSignVector::from_words(out_dim, words).map_err(CascadeError::from)
        })
        .collect()
}

/// `φ^D(x)` for a single nonzero `x`.
pub fn sign_feature_map(x: &[f64], layer: &CascadeLayer) -> Result<PackedSignVector, CascadeError> {
    if x.len() != layer.in_dim {
        return Err(CascadeError::DimensionMismatch { expected: layer.in_dim, actual: x.len() });
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(CascadeError::ZeroVector);
    }
    let mut out = apply_layer(&layer.rows(), layer.in_dim, layer.out_dim, LayerInput::Real(std::slice::from_ref(&x.to_vec())))?;
    Ok(out.pop().expect("one input gives one output"))
}

fn prepare_inputs(vectors: &[Vec<f64>], mode: Mode) -> Result<Vec<Vec<f64>>, CascadeError> {
    vectors
        .iter()
        .map(|x| {
            let nrm = norm(x);
            if nrm == 0.0 {
                return Err(CascadeError::ZeroVector);
            }
            Ok(match mode {
                Mode::Sphere => x.clone(),
                Mode::Ball => x.iter().map(|v| v / nrm).collect(),
            })
        })
        .collect()
}

/// Every level `φ_1(x)..φ_ℓ(x)` for a batch of vectors.
pub fn sketch_levels(vectors: &[Vec<f64>], plan: &CascadePlan) -> Result<Vec<Vec<PackedSignVector>>, CascadeError> {
    let inputs = prepare_inputs(vectors, plan.mode)?;
    let layers = CascadeLayer::for_plan(plan)?;
    let mut levels: Vec<Vec<PackedSignVector>> = Vec::with_capacity(layers.len());
    for layer in &layers {
        let input = match levels.last() {
            None => LayerInput::Real(&inputs),
            Some(prev) => LayerInput::Signs(prev),
        };
        let out = apply_layer(&layer.rows(), layer.in_dim, layer.out_dim, input)?;
        levels.push(out);
    }
    Ok(levels)
}

/// `φ_ℓ` applied to a batch of vectors (normalized first in ball mode).
pub fn sketch_vectors(vectors: &[Vec<f64>], plan: &CascadePlan) -> Result<Vec<PackedSignVector>, CascadeError> {
    let mut levels = sketch_levels(vectors, plan)?;
    Ok(levels.pop().expect("plan has at least one level"))
}

/// `φ_ℓ(x)` for a single point.
pub fn sketch_point(x: &[f64], plan: &CascadePlan) -> Result<PackedSignVector, CascadeError> {
    if x.len() != plan.d {
        return Err(CascadeError::DimensionMismatch { expected: plan.d, actual: x.len() });
    }
    let mut out = sketch_vectors(std::slice::from_ref(&x.to_vec()), plan)?;
    Ok(out.pop().expect("one input gives one output"))
}

/// A plan plus the sketch of every point (and quantized norms in ball mode).
#[derive(Debug, Clone, PartialEq)]
pub struct SketchBundle {
    plan: CascadePlan,
    sketches: Vec<PackedSignVector>,
    quantized_norms: Option<Vec<u32>>,
}

impl SketchBundle {
    pub fn new(
        plan: CascadePlan,
        sketches: Vec<PackedSignVector>,
        quantized_norms: Option<Vec<u32>>,
    ) -> Result<Self, CascadeError> {
        if sketches.len() != plan.n {
            return Err(CascadeError::PlanMismatch(format!("{} sketches for n = {}", sketches.len(), plan.n)));
        }
        let big_n = plan.final_dim();
        if let Some(bad) = sketches.iter().find(|s| s.nbits() as u64 != big_n) {
            return Err(CascadeError::PlanMismatch(format!("sketch of {} bits, N = {big_n}", bad.nbits())));
        }
        match (plan.mode, &quantized_norms) {
            (Mode::Sphere, None) => {}
            (Mode::Ball, Some(v)) if v.len() == plan.n => {}
            _ => {
                return Err(CascadeError::PlanMismatch(
                    "quantized norms must be present exactly in ball mode, one per point".into(),
                ))
            }
        }
        Ok(Self { plan, sketches, quantized_norms })
    }

    pub fn plan(&self) -> &CascadePlan {
        &self.plan
    }

    pub fn sketches(&self) -> &[PackedSignVector] {
        &self.sketches
    }

    pub fn quantized_norms(&self) -> Option<&[u32]> {
        self.quantized_norms.as_deref()
    }

    pub fn len(&self) -> usize {
        self.sketches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sketches.is_empty()
    }

    /// Reconstructed norm of point `i` (ball mode only).
    pub fn norm(&self, i: usize) -> Option<f64> {
        let q = self.plan.norm_quantizer()?;
        self.quantized_norms.as_ref().map(|v| q.reconstruct(v[i]))
    }
}

/// Sketches every point of `points` with `plan`.
pub fn sketch_set(points: &PointSet, plan: &CascadePlan) -> Result<SketchBundle, CascadeError> {
    if points.len() != plan.n || points.dim() != plan.d || points.mode() != plan.mode {
        return Err(CascadeError::PlanMismatch(format!(
            "points are {} x {} ({}), plan is {} x {} ({})",
            points.len(),
            points.dim(),
            points.mode(),
            plan.n,
            plan.d,
            plan.mode
        )));
    }
    let sketches = sketch_vectors(points.points(), plan)?;
    let norms = plan
        .norm_quantizer()
        .map(|q| points.points().iter().map(|x| q.quantize(norm(x))).collect());
    SketchBundle::new(plan.clone(), sketches, norms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_convention_with_fixed_rows() {
        let rows = FixedRows { rows: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]] };
        let out = apply_layer(&rows, 2, 3, LayerInput::Real(&[vec![1.0, 0.0]])).unwrap();
        assert_eq!(out[0].unpack(), vec![1, -1, 1]);
    }

    #[test]
    fn signed_sum_matches_dense() {
        let z: Vec<f64> = (0..130).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = PackedSignVector::from_fn(130, |i| i % 5 != 2).unwrap();
        let dense: f64 = s.unpack().iter().zip(&z).map(|(&a, b)| a as f64 * b).sum();
        assert!((signed_sum(s.words(), &z) - dense).abs() < 1e-12);
        assert_eq!(signed_sum(s.complement().words(), &z), -signed_sum(s.words(), &z));
    }

    #[test]
    fn gaussian_rows_are_reproducible_per_row() {
        let src = GaussianRows::new(5, 1);
        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        src.fill_row(3, &mut a);
        src.fill_row(4, &mut b);
        assert_ne!(a, b);
        src.fill_row(3, &mut b);
        assert_eq!(a, b);
        let mut c = vec![0.0; 16];
        GaussianRows::new(6, 1).fill_row(3, &mut c);
        assert_ne!(a, c);
        GaussianRows::new(5, 2).fill_row(3, &mut c);
        assert_ne!(a, c);
    }

    #[test]
    fn layer_rejects_bad_inputs() {
        let layer = CascadeLayer::new(1, 3, 64, 0).unwrap();
        assert!(matches!(sign_feature_map(&[1.0, 0.0], &layer), Err(CascadeError::DimensionMismatch { .. })));
        assert_eq!(sign_feature_map(&[0.0, 0.0, 0.0], &layer), Err(CascadeError::ZeroVector));
    }
}
