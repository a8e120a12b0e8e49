//! Surprise-gated update dynamics.
//!
//! Incoming records are compared against their nearest neighbor inside a
//! target scope. High surprise (L2 distance above the threshold) folds the
//! input into the existing memory by momentum blending; low surprise decays
//! the matched record's salience weight and inserts the input as a new
//! record, so information is never dropped.

use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::store::{AxisFilter, MemoryRecord, MemoryStore};

/// Gate and update coefficients. Construction validates ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsParams {
    alpha_momentum: f64,
    lambda_decay: f64,
    tau_surprise: f64,
}

impl DynamicsParams {
    pub fn new(alpha_momentum: f64, lambda_decay: f64, tau_surprise: f64) -> Result<Self> {
        check_unit("alpha_momentum", alpha_momentum)?;
        check_unit("lambda_decay", lambda_decay)?;
        if !tau_surprise.is_finite() || tau_surprise < 0.0 {
            return Err(Error::OutOfRange {
                name: "tau_surprise",
                value: tau_surprise,
                range: ">= 0",
            });
        }
        Ok(Self {
            alpha_momentum,
            lambda_decay,
            tau_surprise,
        })
    }

    pub fn alpha_momentum(&self) -> f64 {
        self.alpha_momentum
    }

    pub fn lambda_decay(&self) -> f64 {
        self.lambda_decay
    }

    pub fn tau_surprise(&self) -> f64 {
        self.tau_surprise
    }
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            alpha_momentum: 0.3,
            lambda_decay: 0.01,
            tau_surprise: 0.5,
        }
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(Error::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        });
    }
    Ok(())
}

/// L2 distance between an incoming vector and an existing memory vector.
pub fn surprise(delta_x: &EmbeddingVector, m: &EmbeddingVector) -> Result<f64> {
    delta_x.l2_distance(m)
}

/// Momentum blend `(1 - alpha) * m + alpha * delta_x`, elementwise.
///
/// The output is a memory state, not a fresh embedding: it is not
/// re-normalized. It is degenerate only when both inputs are.
pub fn momentum_merge(
    m: &EmbeddingVector,
    delta_x: &EmbeddingVector,
    alpha: f64,
) -> Result<EmbeddingVector> {
    check_unit("alpha", alpha)?;
    if m.dim() != delta_x.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            actual: delta_x.dim(),
        });
    }
    let values: Vec<f64> = m
        .values()
        .iter()
        .zip(delta_x.values())
        .map(|(&mi, &xi)| (1.0 - alpha) * mi + alpha * xi)
        .collect();
    if m.is_degenerate() && delta_x.is_degenerate() {
        Ok(EmbeddingVector::zero(values.len()))
    } else {
        Ok(EmbeddingVector::from_components(values))
    }
}

/// Salience decay: the weight shrinks by `(1 - lambda)`, the vector itself
/// is untouched so retrieval geometry stays stable while influence fades.
pub fn decay(m: &EmbeddingVector, weight: f64, lambda: f64) -> Result<(EmbeddingVector, f64)> {
    check_unit("lambda", lambda)?;
    check_unit("weight", weight)?;
    Ok((m.clone(), weight * (1.0 - lambda)))
}

/// What `apply_update` did with the incoming record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    /// No prior memory in scope; the record was inserted at this seq.
    Inserted(u64),
    /// High surprise: the existing record at this seq absorbed the input.
    Merged(u64),
    /// Low surprise: the record at this seq was decayed and the input
    /// inserted anyway.
    Decayed(u64),
}

impl UpdateOutcome {
    pub fn seq(&self) -> u64 {
        match self {
            UpdateOutcome::Inserted(s) | UpdateOutcome::Merged(s) | UpdateOutcome::Decayed(s) => {
                *s
            }
        }
    }
}

/// Route one incoming record through the surprise gate against the nearest
/// existing record inside `target_filter`.
///
/// The boundary is strict: `surprise == tau` takes the decay branch. The
/// whole read-decide-write cycle runs under one `&mut` borrow, so the
/// nearest lookup and the mutation cannot interleave with other writers.
pub fn apply_update(
    store: &mut MemoryStore,
    target_filter: &AxisFilter,
    delta_record: MemoryRecord,
    params: &DynamicsParams,
) -> Result<UpdateOutcome> {
    let nearest = {
        let found = store.nearest(&delta_record.embedding, target_filter, 1)?;
        found
            .first()
            .map(|(record, dist)| (record.seq, record.embedding.clone(), *dist))
    };
    match nearest {
        None => {
            let seq = store.insert(delta_record)?;
            Ok(UpdateOutcome::Inserted(seq))
        }
        Some((match_seq, match_embedding, dist)) => {
            if dist > params.tau_surprise {
                let merged = momentum_merge(
                    &match_embedding,
                    &delta_record.embedding,
                    params.alpha_momentum,
                )?;
                // store embeddings at serialization precision
                store.replace_embedding(match_seq, merged.quantized())?;
                store.bump_update_count(match_seq)?;
                Ok(UpdateOutcome::Merged(match_seq))
            } else {
                store.scale_weight(match_seq, 1.0 - params.lambda_decay)?;
                store.insert(delta_record)?;
                Ok(UpdateOutcome::Decayed(match_seq))
            }
        }
    }
}
