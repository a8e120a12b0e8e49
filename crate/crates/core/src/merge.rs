//! Folding retrieved memory back into the active context, plus the
//! structured provenance tags that accompany it.

use serde::Serialize;

use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::retrieval::RetrievalResult;

/// Longest payload prefix carried into a tag snippet, in chars.
pub const SNIPPET_MAX_CHARS: usize = 200;

/// Running context embedding of the active session. Stands in for a
/// model hidden state at desk scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextState {
    values: Vec<f64>,
}

impl ContextState {
    pub fn zero(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Residual path coefficients: `gate` in [0, 1] scales how much retrieved
/// content enters the context, `w_r_scale` is the scalar stand-in for a
/// learned projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeParams {
    gate: f64,
    w_r_scale: f64,
}

impl MergeParams {
    pub fn new(gate: f64, w_r_scale: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gate) || !gate.is_finite() {
            return Err(Error::OutOfRange {
                name: "gate",
                value: gate,
                range: "[0, 1]",
            });
        }
        if !w_r_scale.is_finite() {
            return Err(Error::OutOfRange {
                name: "w_r_scale",
                value: w_r_scale,
                range: "finite",
            });
        }
        Ok(Self { gate, w_r_scale })
    }

    /// Distance-driven gating, `gate = exp(-d)`: close retrievals push
    /// harder. Off by default; callers opt in per query.
    pub fn with_distance_gate(d: f64, w_r_scale: f64) -> Result<Self> {
        Self::new((-d).exp().min(1.0), w_r_scale)
    }

    pub fn gate(&self) -> f64 {
        self.gate
    }

    pub fn w_r_scale(&self) -> f64 {
        self.w_r_scale
    }
}

impl Default for MergeParams {
    fn default() -> Self {
        Self {
            gate: 0.5,
            w_r_scale: 1.0,
        }
    }
}

/// Residual update `H' = H + gate * w_r_scale * retrieved`, elementwise.
pub fn residual_merge(
    h: &ContextState,
    retrieved: &EmbeddingVector,
    p: &MergeParams,
) -> Result<ContextState> {
    if h.dim() != retrieved.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            actual: retrieved.dim(),
        });
    }
    let scale = p.gate * p.w_r_scale;
    Ok(ContextState {
        values: h
            .values
            .iter()
            .zip(retrieved.values())
            .map(|(&hi, &ri)| hi + scale * ri)
            .collect(),
    })
}

/// Provenance tag for one retrieved fragment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoTTag {
    /// 1-based position after time ordering.
    pub ordinal: usize,
    pub session_id: String,
    pub seq: u64,
    pub snippet: String,
    pub d: f64,
}

/// Convert ranked results into tags ordered by source timestamp (ties by
/// seq), re-numbering ordinals after the sort. This is the sequence
/// alignment step: fragments enter the reasoning trace in the order they
/// originally happened, not in retrieval-rank order.
pub fn cot_integrate(results: &[RetrievalResult]) -> Vec<CoTTag> {
    let mut ordered: Vec<&RetrievalResult> = results.iter().collect();
    ordered.sort_by_key(|r| (r.record.key.timestamp, r.record.seq));
    ordered
        .into_iter()
        .enumerate()
        .map(|(i, r)| CoTTag {
            ordinal: i + 1,
            session_id: r.record.key.session_id.clone(),
            seq: r.record.seq,
            snippet: r.record.payload_text.chars().take(SNIPPET_MAX_CHARS).collect(),
            d: r.d,
        })
        .collect()
}
