//! Multi-axis indexed memory store.
//!
//! Records are keyed by (user, topic, time, session) and searched by exact
//! L2 distance over an axis-filtered candidate set. Two search paths exist:
//! [`MemoryStore::nearest_scan`] is the plain filter-and-sort reference, and
//! [`MemoryStore::nearest`] runs off per-axis posting lists with heap-based
//! top-k selection. Both return identical results; the equivalence is part
//! of the test suite.
//!
//! # File format
//!
//! `save` writes UTF-8 text: a header line `WMMSTORE v1 dim=<d>` followed by
//! one JSON object per record in seq order. Embedding components are encoded
//! as a comma-separated list of decimal floats with 9 significant digits.
//! Topic vectors are not stored; they are re-derived from `topic_label` on
//! load, which is exact because the embedder is deterministic.

use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{embed, format9, EmbedderConfig, EmbeddingVector};
use crate::error::{Error, Result};

const STORE_MAGIC: &str = "WMMSTORE";
const STORE_VERSION: &str = "v1";

/// Multi-axis key carried by every record.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryKey {
    pub user_id: String,
    pub session_id: String,
    pub topic_label: String,
    /// Embedding of `topic_label`; degenerate when the label is empty.
    pub topic_vector: EmbeddingVector,
    /// Logical time: event count within the session, not wall clock.
    pub timestamp: u64,
}

impl MemoryKey {
    pub fn new(
        user_id: impl Into<String>,
        session_id: impl Into<String>,
        topic_label: impl Into<String>,
        topic_vector: EmbeddingVector,
        timestamp: u64,
    ) -> Self {
        Self {
            user_id: user_id.into(),
            session_id: session_id.into(),
            topic_label: topic_label.into(),
            topic_vector,
            timestamp,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.user_id.is_empty() {
            return Err(Error::Invalid {
                what: "memory key",
                why: "user_id is empty".into(),
            });
        }
        if self.session_id.is_empty() {
            return Err(Error::Invalid {
                what: "memory key",
                why: "session_id is empty".into(),
            });
        }
        Ok(())
    }
}

/// One stored memory: key, payload, embedding, and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryRecord {
    pub key: MemoryKey,
    pub payload_text: String,
    /// Gold answer carried through for evaluation.
    pub answer_text: String,
    pub embedding: EmbeddingVector,
    /// Decay-adjusted salience in [0, 1]. Does not enter retrieval distance.
    pub weight: f64,
    /// Store-assigned insertion sequence number.
    pub seq: u64,
    pub update_count: u64,
}

impl MemoryRecord {
    /// A fresh record with full weight. `seq` is assigned on insert.
    pub fn new(
        key: MemoryKey,
        payload_text: impl Into<String>,
        answer_text: impl Into<String>,
        embedding: EmbeddingVector,
    ) -> Self {
        Self {
            key,
            payload_text: payload_text.into(),
            answer_text: answer_text.into(),
            embedding,
            weight: 1.0,
            seq: 0,
            update_count: 0,
        }
    }
}

/// Conjunctive filter over the key axes. Absent fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AxisFilter {
    user_id: Option<String>,
    session_ids: Option<BTreeSet<String>>,
    time_range: Option<(u64, u64)>,
}

impl AxisFilter {
    /// Matches every record.
    pub fn any() -> Self {
        Self::default()
    }

    pub fn for_session(session_id: impl Into<String>) -> Self {
        Self {
            session_ids: Some(BTreeSet::from([session_id.into()])),
            ..Self::default()
        }
    }

    pub fn for_sessions<I, S>(session_ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            session_ids: Some(session_ids.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    pub fn with_user(mut self, user_id: impl Into<String>) -> Self {
        self.user_id = Some(user_id.into());
        self
    }

    pub fn with_time_range(mut self, lo: u64, hi: u64) -> Result<Self> {
        if lo > hi {
            return Err(Error::Invalid {
                what: "time range",
                why: format!("lo {lo} > hi {hi}"),
            });
        }
        self.time_range = Some((lo, hi));
        Ok(self)
    }

    pub fn user_id(&self) -> Option<&str> {
        self.user_id.as_deref()
    }

    pub fn session_ids(&self) -> Option<&BTreeSet<String>> {
        self.session_ids.as_ref()
    }

    pub fn time_range(&self) -> Option<(u64, u64)> {
        self.time_range
    }

    pub fn matches(&self, key: &MemoryKey) -> bool {
        if let Some(user) = &self.user_id {
            if key.user_id != *user {
                return false;
            }
        }
        if let Some(sessions) = &self.session_ids {
            if !sessions.contains(&key.session_id) {
                return false;
            }
        }
        if let Some((lo, hi)) = self.time_range {
            if key.timestamp < lo || key.timestamp > hi {
                return false;
            }
        }
        true
    }
}

/// The store proper. Seq numbers are dense: record `seq` lives at index
/// `seq` of the backing vector (there is no deletion).
#[derive(Debug, Clone)]
pub struct MemoryStore {
    dim: usize,
    records: Vec<MemoryRecord>,
    by_user: HashMap<String, Vec<u64>>,
    by_session: HashMap<String, Vec<u64>>,
}

impl MemoryStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::OutOfRange {
                name: "dim",
                value: dim as f64,
                range: ">= 2",
            });
        }
        Ok(Self {
            dim,
            records: Vec::new(),
            by_user: HashMap::new(),
            by_session: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, seq: u64) -> Option<&MemoryRecord> {
        self.records.get(seq as usize)
    }

    pub fn records(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.iter()
    }

    /// Distinct session ids, sorted.
    pub fn session_ids(&self) -> BTreeSet<String> {
        self.by_session.keys().cloned().collect()
    }

    /// Insert a record, assigning the next sequence number.
    pub fn insert(&mut self, mut record: MemoryRecord) -> Result<u64> {
        record.key.validate()?;
        if record.embedding.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: record.embedding.dim(),
            });
        }
        if record.key.topic_vector.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: record.key.topic_vector.dim(),
            });
        }
        if !(0.0..=1.0).contains(&record.weight) {
            return Err(Error::OutOfRange {
                name: "weight",
                value: record.weight,
                range: "[0, 1]",
            });
        }
        let seq = self.records.len() as u64;
        record.seq = seq;
        self.by_user
            .entry(record.key.user_id.clone())
            .or_default()
            .push(seq);
        self.by_session
            .entry(record.key.session_id.clone())
            .or_default()
            .push(seq);
        self.records.push(record);
        Ok(seq)
    }

    /// Seqs matching the filter, ascending. Uses the narrowest posting list
    /// available before falling back to a full scan.
    fn candidate_seqs(&self, filter: &AxisFilter) -> Vec<u64> {
        if let Some(sessions) = filter.session_ids() {
            let mut seqs: Vec<u64> = sessions
                .iter()
                .filter_map(|s| self.by_session.get(s))
                .flatten()
                .copied()
                .collect();
            seqs.sort_unstable();
            seqs.retain(|&s| filter.matches(&self.records[s as usize].key));
            return seqs;
        }
        if let Some(user) = filter.user_id() {
            let mut seqs: Vec<u64> = self.by_user.get(user).cloned().unwrap_or_default();
            seqs.sort_unstable();
            seqs.retain(|&s| filter.matches(&self.records[s as usize].key));
            return seqs;
        }
        (0..self.records.len() as u64)
            .filter(|&s| filter.matches(&self.records[s as usize].key))
            .collect()
    }

    /// Records matching every present field of the filter, by seq ascending.
    pub fn filter(&self, filter: &AxisFilter) -> Vec<&MemoryRecord> {
        self.candidate_seqs(filter)
            .into_iter()
            .map(|s| &self.records[s as usize])
            .collect()
    }

    /// Exact top-k by L2 distance among filtered candidates, ascending,
    /// ties broken by lower seq. Posting-list accelerated.
    pub fn nearest(
        &self,
        query: &EmbeddingVector,
        filter: &AxisFilter,
        k: usize,
    ) -> Result<Vec<(&MemoryRecord, f64)>> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        for seq in self.candidate_seqs(filter) {
            let record = &self.records[seq as usize];
            let dist = query.l2_distance(&record.embedding)?;
            heap.push(HeapEntry { dist, seq });
            if heap.len() > k {
                heap.pop();
            }
        }
        let mut out: Vec<HeapEntry> = heap.into_vec();
        out.sort_unstable();
        Ok(out
            .into_iter()
            .map(|e| (&self.records[e.seq as usize], e.dist))
            .collect())
    }

    /// Plain filter-and-sort reference path for `nearest`.
    pub fn nearest_scan(
        &self,
        query: &EmbeddingVector,
        filter: &AxisFilter,
        k: usize,
    ) -> Result<Vec<(&MemoryRecord, f64)>> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let mut scored: Vec<(u64, f64)> = Vec::new();
        for record in &self.records {
            if filter.matches(&record.key) {
                scored.push((record.seq, query.l2_distance(&record.embedding)?));
            }
        }
        scored.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distance").then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(seq, dist)| (&self.records[seq as usize], dist))
            .collect())
    }

    /// Replace a record's embedding in place (dimension-checked).
    pub fn replace_embedding(&mut self, seq: u64, embedding: EmbeddingVector) -> Result<()> {
        if embedding.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: embedding.dim(),
            });
        }
        let record = self.record_mut(seq)?;
        record.embedding = embedding;
        Ok(())
    }

    pub fn bump_update_count(&mut self, seq: u64) -> Result<()> {
        self.record_mut(seq)?.update_count += 1;
        Ok(())
    }

    /// Multiply a record's salience weight by `factor` in [0, 1].
    pub fn scale_weight(&mut self, seq: u64, factor: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&factor) {
            return Err(Error::OutOfRange {
                name: "weight factor",
                value: factor,
                range: "[0, 1]",
            });
        }
        let record = self.record_mut(seq)?;
        record.weight *= factor;
        Ok(())
    }

    fn record_mut(&mut self, seq: u64) -> Result<&mut MemoryRecord> {
        self.records.get_mut(seq as usize).ok_or(Error::Invalid {
            what: "seq",
            why: format!("no record with seq {seq}"),
        })
    }

    /// Serialize to the versioned line format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("{STORE_MAGIC} {STORE_VERSION} dim={}\n", self.dim);
        for record in &self.records {
            let line = StoreLine {
                seq: record.seq,
                session_id: &record.key.session_id,
                user_id: &record.key.user_id,
                topic_label: &record.key.topic_label,
                timestamp: record.key.timestamp,
                weight: record.weight,
                update_count: record.update_count,
                payload_text: &record.payload_text,
                answer_text: &record.answer_text,
                embedding: encode_embedding(&record.embedding),
            };
            out.push_str(&serde_json::to_string(&line).expect("store line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file_string(&fs::read_to_string(path)?)
    }

    pub fn from_file_string(content: &str) -> Result<Self> {
        let mut lines = content.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::StoreFormat {
            line: 1,
            message: "empty file, expected header".into(),
        })?;
        let dim = parse_header(header)?;
        let embedder = EmbedderConfig::new(dim)?;
        let mut store = MemoryStore::new(dim)?;
        for (idx, raw) in lines {
            let line_no = idx + 1;
            if raw.is_empty() {
                continue;
            }
            let parsed: OwnedStoreLine =
                serde_json::from_str(raw).map_err(|e| Error::StoreFormat {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if parsed.seq != store.records.len() as u64 {
                return Err(Error::StoreFormat {
                    line: line_no,
                    message: format!(
                        "seq {} out of order, expected {}",
                        parsed.seq,
                        store.records.len()
                    ),
                });
            }
            let embedding = decode_embedding(&parsed.embedding, dim, line_no)?;
            let key = MemoryKey::new(
                parsed.user_id,
                parsed.session_id,
                parsed.topic_label.clone(),
                embed(&parsed.topic_label, &embedder),
                parsed.timestamp,
            );
            let record = MemoryRecord {
                key,
                payload_text: parsed.payload_text,
                answer_text: parsed.answer_text,
                embedding,
                weight: parsed.weight,
                seq: parsed.seq,
                update_count: parsed.update_count,
            };
            store.insert(record).map_err(|e| Error::StoreFormat {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(store)
    }
}

#[derive(Serialize)]
struct StoreLine<'a> {
    seq: u64,
    session_id: &'a str,
    user_id: &'a str,
    topic_label: &'a str,
    timestamp: u64,
    weight: f64,
    update_count: u64,
    payload_text: &'a str,
    answer_text: &'a str,
    embedding: String,
}

#[derive(Deserialize)]
struct OwnedStoreLine {
    seq: u64,
    session_id: String,
    user_id: String,
    topic_label: String,
    timestamp: u64,
    weight: f64,
    update_count: u64,
    payload_text: String,
    answer_text: String,
    embedding: String,
}

fn encode_embedding(v: &EmbeddingVector) -> String {
    v.values()
        .iter()
        .map(|&x| format9(x))
        .collect::<Vec<_>>()
        .join(",")
}

fn decode_embedding(s: &str, dim: usize, line_no: usize) -> Result<EmbeddingVector> {
    let values: Vec<f64> = s
        .split(',')
        .map(|part| {
            part.parse::<f64>().map_err(|_| Error::StoreFormat {
                line: line_no,
                message: format!("bad embedding component {part:?}"),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != dim {
        return Err(Error::StoreFormat {
            line: line_no,
            message: format!("embedding has {} components, store dim is {dim}", values.len()),
        });
    }
    let degenerate = values.iter().all(|&x| x == 0.0);
    Ok(if degenerate {
        EmbeddingVector::zero(dim)
    } else {
        EmbeddingVector::from_components(values)
    })
}

fn parse_header(header: &str) -> Result<usize> {
    let bad = |message: String| Error::StoreFormat { line: 1, message };
    let mut parts = header.split(' ');
    let magic = parts.next().unwrap_or_default();
    if magic != STORE_MAGIC {
        return Err(bad(format!("bad magic {magic:?}, expected {STORE_MAGIC:?}")));
    }
    let version = parts.next().unwrap_or_default();
    if version != STORE_VERSION {
        return Err(bad(format!(
            "unsupported version {version:?}, expected {STORE_VERSION:?}"
        )));
    }
    let dim_part = parts.next().unwrap_or_default();
    let dim = dim_part
        .strip_prefix("dim=")
        .and_then(|d| d.parse::<usize>().ok())
        .ok_or_else(|| bad(format!("bad dim field {dim_part:?}")))?;
    if parts.next().is_some() {
        return Err(bad("trailing fields in header".into()));
    }
    Ok(dim)
}

/// Max-heap entry ordered by (dist, seq); the heap keeps the k smallest.
struct HeapEntry {
    dist: f64,
    seq: u64,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.seq == other.seq
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist
            .partial_cmp(&other.dist)
            .expect("finite distance")
            .then(self.seq.cmp(&other.seq))
    }
}
