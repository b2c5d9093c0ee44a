//! Sign vectors in `N^{-1/2}{-1,+1}^N`, one bit per coordinate.
//!
//! Bit `i` lives in word `i / 64` at position `i % 64` (LSB first). A set bit
//! encodes `+1`, a clear bit `-1`. Padding bits past `N` are always zero so
//! that word-wise XOR + popcount counts only real coordinates. The `1/√N`
//! scale is implicit.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignError {
    #[error("sign vector length must be positive")]
    Empty,
    #[error("expected {expected} signs, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("sign value {0} is not -1 or +1")]
    InvalidSign(i8),
    #[error("dimension mismatch: {0} bits vs {1} bits")]
    DimensionMismatch(usize, usize),
    #[error("expected {expected} words for {nbits} bits, got {actual}")]
    WordCount { nbits: usize, expected: usize, actual: usize },
    #[error("padding bits past bit {0} are not zero")]
    DirtyPadding(usize),
}

#[inline]
pub fn words_for(nbits: usize) -> usize {
    nbits.div_ceil(64)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedSignVector {
    nbits: usize,
    words: Vec<u64>,
}

impl PackedSignVector {
    /// Packs a `±1` sequence of length `n`.
    pub fn pack(signs: &[i8], n: usize) -> Result<Self, SignError> {
        if n == 0 {
            return Err(SignError::Empty);
        }
        if signs.len() != n {
            return Err(SignError::LengthMismatch { expected: n, actual: signs.len() });
        }
        let mut words = vec![0u64; words_for(n)];
        for (i, &s) in signs.iter().enumerate() {
            match s {
                1 => words[i / 64] |= 1u64 << (i % 64),
                -1 => {}
                other => return Err(SignError::InvalidSign(other)),
            }
        }
        Ok(Self { nbits: n, words })
    }

    /// Wraps raw words, validating the word count and the zero-padding rule.
    pub fn from_words(nbits: usize, words: Vec<u64>) -> Result<Self, SignError> {
        if nbits == 0 {
            return Err(SignError::Empty);
        }
        let expected = words_for(nbits);
        if words.len() != expected {
            return Err(SignError::WordCount { nbits, expected, actual: words.len() });
        }
        let tail = nbits % 64;
        if tail != 0 && words[expected - 1] >> tail != 0 {
            return Err(SignError::DirtyPadding(nbits));
        }
        Ok(Self { nbits, words })
    }

    /// Builds a vector from a per-coordinate predicate (`true` is `+1`).
    pub fn from_fn(nbits: usize, mut positive: impl FnMut(usize) -> bool) -> Result<Self, SignError> {
        if nbits == 0 {
            return Err(SignError::Empty);
        }
        let mut words = vec![0u64; words_for(nbits)];
        for i in 0..nbits {
            if positive(i) {
                words[i / 64] |= 1u64 << (i % 64);
            }
        }
        Ok(Self { nbits, words })
    }

    pub fn nbits(&self) -> usize {
        self.nbits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Sign of coordinate `i` as `±1`.
    pub fn sign(&self, i: usize) -> i8 {
        assert!(i < self.nbits, "bit {i} out of range for {} bits", self.nbits);
        if (self.words[i / 64] >> (i % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn unpack(&self) -> Vec<i8> {
        (0..self.nbits).map(|i| self.sign(i)).collect()
    }

    /// Flips every sign, keeping padding clear.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        let tail = self.nbits % 64;
        if tail != 0 {
            let last = words.len() - 1;
            words[last] &= (1u64 << tail) - 1;
        }
        Self { nbits: self.nbits, words }
    }

    /// Number of coordinates where the signs differ.
    pub fn hamming(&self, other: &Self) -> Result<u64, SignError> {
        if self.nbits != other.nbits {
            return Err(SignError::DimensionMismatch(self.nbits, other.nbits));
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| u64::from((a ^ b).count_ones()))
            .sum())
    }

    /// `⟨a, b⟩` of the scaled vectors: `(N - 2·hamming) / N`.
    pub fn inner_product(&self, other: &Self) -> Result<f64, SignError> {
        let disagree = self.hamming(other)?;
        let n = self.nbits as i64;
        Ok((n - 2 * disagree as i64) as f64 / n as f64)
    }
}
