//! Cross-session retrieval: composite distance ranking over an
//! authorized scope.
//!
//! The ranking distance is `d = l2 + beta * h`, where `l2` is the raw
//! embedding distance and `h` penalizes mismatches along the key axes:
//!
//! ```text
//! h = w_user  * [query.user_id != record.user_id]
//!   + w_topic * (1 - cosine(query.topic, record.topic)) / 2
//!   + w_time  * min(1, |query.t - record.t| / time_horizon)
//! ```
//!
//! Each term is bounded by its weight, so `0 <= h <= w_user + w_topic +
//! w_time`. The topic term is halved to land in [0, 1]; the time term
//! saturates at `time_horizon` so ancient records are penalized boundedly.
//! Record salience weights never enter `d`; they are reporting metadata.
//! This formula is the seam to replace if a learned correction is ever
//! wanted.

use crate::embed::{cosine, embed, EmbedderConfig, EmbeddingVector};
use crate::error::{Error, Result};
use crate::store::{AxisFilter, MemoryRecord, MemoryStore};

/// A scoped retrieval request.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub origin_session: String,
    pub user_id: String,
    pub topic_text: String,
    pub query_text: String,
    pub query_embedding: EmbeddingVector,
    pub topic_embedding: EmbeddingVector,
    pub timestamp: u64,
    pub k: usize,
}

/// Weights for the composite distance. Construction validates ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalParams {
    beta_hierarchy: f64,
    w_user: f64,
    w_topic: f64,
    w_time: f64,
    time_horizon: u64,
}

impl RetrievalParams {
    pub fn new(
        beta_hierarchy: f64,
        w_user: f64,
        w_topic: f64,
        w_time: f64,
        time_horizon: u64,
    ) -> Result<Self> {
        for (name, value) in [
            ("beta_hierarchy", beta_hierarchy),
            ("w_user", w_user),
            ("w_topic", w_topic),
            ("w_time", w_time),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::OutOfRange {
                    name,
                    value,
                    range: ">= 0",
                });
            }
        }
        if time_horizon == 0 {
            return Err(Error::OutOfRange {
                name: "time_horizon",
                value: 0.0,
                range: "> 0",
            });
        }
        Ok(Self {
            beta_hierarchy,
            w_user,
            w_topic,
            w_time,
            time_horizon,
        })
    }

    pub fn beta_hierarchy(&self) -> f64 {
        self.beta_hierarchy
    }

    pub fn w_user(&self) -> f64 {
        self.w_user
    }

    pub fn w_topic(&self) -> f64 {
        self.w_topic
    }

    pub fn w_time(&self) -> f64 {
        self.w_time
    }

    pub fn time_horizon(&self) -> u64 {
        self.time_horizon
    }
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            beta_hierarchy: 0.5,
            w_user: 1.0,
            w_topic: 0.5,
            w_time: 0.25,
            time_horizon: 1000,
        }
    }
}

/// One ranked hit. `d == l2 + beta * h` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub record: MemoryRecord,
    pub l2: f64,
    pub h: f64,
    pub d: f64,
    /// 1-based rank within the returned list.
    pub rank: usize,
}

/// Assemble a query, embedding both the query text and the topic label.
pub fn build_query(
    user_id: impl Into<String>,
    topic_text: impl Into<String>,
    query_text: impl Into<String>,
    origin_session: impl Into<String>,
    timestamp: u64,
    k: usize,
    embedder: &EmbedderConfig,
) -> Result<Query> {
    let user_id = user_id.into();
    let topic_text = topic_text.into();
    let query_text = query_text.into();
    let origin_session = origin_session.into();
    if user_id.is_empty() {
        return Err(Error::Invalid {
            what: "query",
            why: "user_id is empty".into(),
        });
    }
    if query_text.is_empty() {
        return Err(Error::Invalid {
            what: "query",
            why: "query_text is empty".into(),
        });
    }
    if origin_session.is_empty() {
        return Err(Error::Invalid {
            what: "query",
            why: "origin_session is empty".into(),
        });
    }
    if k == 0 {
        return Err(Error::OutOfRange {
            name: "k",
            value: 0.0,
            range: ">= 1",
        });
    }
    Ok(Query {
        query_embedding: embed(&query_text, embedder),
        topic_embedding: embed(&topic_text, embedder),
        origin_session,
        user_id,
        topic_text,
        query_text,
        timestamp,
        k,
    })
}

/// Per-axis mismatch penalty. See the module docs for the exact formula.
pub fn hierarchy_correction(q: &Query, r: &MemoryRecord, p: &RetrievalParams) -> Result<f64> {
    let user_term = if q.user_id != r.key.user_id { p.w_user } else { 0.0 };
    let topic_cos = cosine(&q.topic_embedding, &r.key.topic_vector)?;
    let topic_term = p.w_topic * (1.0 - topic_cos) / 2.0;
    let dt = q.timestamp.abs_diff(r.key.timestamp) as f64;
    let time_term = p.w_time * (dt / p.time_horizon as f64).min(1.0);
    Ok(user_term + topic_term + time_term)
}

/// Composite distance `l2 + beta * h`.
pub fn distance(q: &Query, r: &MemoryRecord, p: &RetrievalParams) -> Result<f64> {
    let l2 = q.query_embedding.l2_distance(&r.embedding)?;
    let h = hierarchy_correction(q, r, p)?;
    Ok(l2 + p.beta_hierarchy * h)
}

/// The `q.k` records minimizing `d` within `scope`, ascending, ties broken
/// by lower seq. Returns fewer than `k` only when the candidate set is
/// smaller. Scope authorization is the caller's job; this function never
/// consults barrier state.
pub fn top_k(
    q: &Query,
    store: &MemoryStore,
    p: &RetrievalParams,
    scope: &AxisFilter,
) -> Result<Vec<RetrievalResult>> {
    let mut scored: Vec<(u64, f64, f64, f64)> = Vec::new();
    for record in store.filter(scope) {
        let l2 = q.query_embedding.l2_distance(&record.embedding)?;
        let h = hierarchy_correction(q, record, p)?;
        let d = l2 + p.beta_hierarchy * h;
        scored.push((record.seq, l2, h, d));
    }
    scored.sort_by(|a, b| a.3.partial_cmp(&b.3).expect("finite distance").then(a.0.cmp(&b.0)));
    scored.truncate(q.k);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (seq, l2, h, d))| RetrievalResult {
            record: store.get(seq).expect("seq from filter").clone(),
            l2,
            h,
            d,
            rank: i + 1,
        })
        .collect())
}

/// The single best record: `top_k` rank 1, or `NoCandidates` when the
/// scope matches nothing.
pub fn retrieve_best(
    q: &Query,
    store: &MemoryStore,
    p: &RetrievalParams,
    scope: &AxisFilter,
) -> Result<RetrievalResult> {
    top_k(q, store, p, scope)?
        .into_iter()
        .next()
        .ok_or(Error::NoCandidates)
}
