//! Deterministic text embedding via signed feature hashing.
//!
//! The pipeline is fixed so that identical text produces bit-identical
//! vectors on every platform: lowercase, split on non-alphanumeric
//! characters, collect unigrams and adjacent bigrams, hash each feature
//! with 64-bit FNV-1a into `dim` buckets (the top hash bit selects the
//! sign), then L2-normalize. Components are rounded to 9 significant
//! decimal digits, the same precision the store serializes at, so vectors
//! survive a save/load round trip bit-for-bit. The rounding bounds the
//! norm of a fresh embedding to 1 within 5e-9 (a half-ulp at 9 digits)
//! rather than exactly 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default embedding dimension.
pub const DEFAULT_DIM: usize = 256;

/// Largest n-gram collected by the tokenizer. Fixed; not configurable.
pub const NGRAM_MAX: usize = 2;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes. Used for feature hashing and for the
/// short content digests that appear in logs and reports.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Round to 9 significant decimal digits by formatting and re-parsing.
///
/// 9 digits is the store's serialization precision; a value that has been
/// through `quantize9` once maps to the same decimal string on every
/// subsequent format, which is what makes store files byte-stable.
pub fn quantize9(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float reparses")
}

/// Format at the store's 9-significant-digit serialization precision.
pub fn format9(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    dim: usize,
}

impl EmbedderConfig {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::OutOfRange {
                name: "dim",
                value: dim as f64,
                range: ">= 2",
            });
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

/// A fixed-dimension embedding. `degenerate` is true exactly when the
/// source text produced no tokens; degenerate vectors are all zeros and
/// compare as dissimilar to everything (see [`cosine`]).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    degenerate: bool,
}

impl EmbeddingVector {
    /// The degenerate all-zero vector.
    pub fn zero(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            degenerate: true,
        }
    }

    /// Wrap raw components as a non-degenerate vector. No normalization
    /// is applied; memory states produced by merging are not unit-norm.
    pub fn from_components(values: Vec<f64>) -> Self {
        Self {
            values,
            degenerate: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance to another vector of the same dimension.
    pub fn l2_distance(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sum.sqrt())
    }

    /// Copy with every component rounded to serialization precision.
    pub fn quantized(&self) -> Self {
        Self {
            values: self.values.iter().map(|&v| quantize9(v)).collect(),
            degenerate: self.degenerate,
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Embed text. Empty or all-separator text yields the degenerate zero
/// vector rather than an error so ingestion never aborts on blank fields.
pub fn embed(text: &str, config: &EmbedderConfig) -> EmbeddingVector {
    let dim = config.dim();
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return EmbeddingVector::zero(dim);
    }
    let mut acc = vec![0.0f64; dim];
    let mut add = |feature: &str| {
        let h = fnv1a64(feature.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        acc[bucket] += sign;
    };
    for t in &tokens {
        add(t);
    }
    for pair in tokens.windows(2) {
        add(&format!("{} {}", pair[0], pair[1]));
    }
    // n tokens contribute 2n-1 signed units; a fully cancelled bucket takes
    // an even number of them, so the accumulator can never be all zero.
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    EmbeddingVector {
        values: acc.iter().map(|&v| quantize9(v / norm)).collect(),
        degenerate: false,
    }
}

/// Cosine similarity in [-1, 1]. Degenerate vectors have no direction and
/// score 0 against anything.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.is_degenerate() || b.is_degenerate() {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
