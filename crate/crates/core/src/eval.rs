//! Retrieval evaluation: probe construction, scoped evaluation runs, and
//! the six report metrics.
//!
//! Metric definitions (the report is only meaningful relative to these):
//!
//! - **precision / recall / F1** — macro-averaged set retrieval. Per query,
//!   `hits = |top-k ∩ relevant|`, precision `hits / min(k, |returned|)`
//!   (0 when nothing returned), recall `hits / |relevant|`; F1 is computed
//!   from the averaged precision and recall.
//! - **memory utilization** — fraction of stored records retrieved at
//!   least once across the whole run.
//! - **accuracy** — fraction of queries whose top-1 answer text equals the
//!   gold answer after normalization (lowercase, strip punctuation,
//!   collapse whitespace, drop the articles a/an/the).
//! - **BLEU** — mean sentence-level BLEU-4 of top-1 answer against the
//!   gold answer: uniform weights, add-one smoothing on n-gram precisions
//!   for n >= 2 (unigram precision unsmoothed), standard brevity penalty,
//!   whitespace tokenization after the accuracy normalization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barrier::{authorize, BarrierMode, Decision, SessionRegistry};
use crate::corpus::{payload_question, Dialogue};
use crate::embed::EmbedderConfig;
use crate::error::{Error, Result};
use crate::retrieval::{build_query, top_k, Query, RetrievalParams};
use crate::store::{AxisFilter, MemoryStore};

/// What counts as relevant for a probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceStrategy {
    /// Only the probed turn's own record.
    Strict,
    /// Every record of the probed dialogue.
    Dialogue,
}

impl fmt::Display for RelevanceStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelevanceStrategy::Strict => "strict",
            RelevanceStrategy::Dialogue => "dialogue",
        })
    }
}

impl FromStr for RelevanceStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(RelevanceStrategy::Strict),
            "dialogue" => Ok(RelevanceStrategy::Dialogue),
            other => Err(Error::Invalid {
                what: "strategy",
                why: format!("{other:?} is not strict|dialogue"),
            }),
        }
    }
}

/// Which sessions a probe asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetPolicy {
    /// Target exactly the gold dialogue (the cross-session probe shape).
    Gold,
    /// Target every session; distractors from other dialogues compete.
    All,
}

impl FromStr for TargetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold" => Ok(TargetPolicy::Gold),
            "all" => Ok(TargetPolicy::All),
            other => Err(Error::Invalid {
                what: "target policy",
                why: format!("{other:?} is not gold|all"),
            }),
        }
    }
}

/// One probe with its ground truth.
#[derive(Debug, Clone)]
pub struct EvalQuery {
    pub query: Query,
    pub gold_session: String,
    pub gold_seq: u64,
    pub gold_answer: String,
    pub relevant: BTreeSet<(String, u64)>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub k: usize,
    pub strategy: RelevanceStrategy,
    pub target_policy: TargetPolicy,
    pub mode: BarrierMode,
    pub seed: u64,
    /// Upper bound on sampled probes; `usize::MAX` means all turns.
    pub max_queries: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: 5,
            strategy: RelevanceStrategy::Strict,
            target_policy: TargetPolicy::Gold,
            mode: BarrierMode::Gated,
            seed: 0,
            max_queries: 500,
        }
    }
}

/// The six report metrics plus run metadata.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub memory_utilization: f64,
    pub accuracy: f64,
    pub bleu: f64,
    pub n_queries: usize,
    pub config_digest: String,
    pub mode: BarrierMode,
}

/// CSV column order of the report table.
pub const CSV_HEADER: &str = "run,precision,recall,f1,memory_utilization,accuracy,bleu";

impl EvalReport {
    pub fn to_csv_row(&self, run: usize) -> String {
        format!(
            "{run},{},{},{},{},{},{}",
            self.precision, self.recall, self.f1, self.memory_utilization, self.accuracy, self.bleu
        )
    }
}

/// Per-query log record; one JSON object per line in the eval log.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EvalLogLine {
    EvalMeta {
        store_records: usize,
        mode: BarrierMode,
        strategy: RelevanceStrategy,
        target_policy: TargetPolicy,
        k: usize,
        seed: u64,
        n_queries: usize,
        config_digest: String,
    },
    EvalQuery {
        idx: usize,
        origin: String,
        targets: BTreeSet<String>,
        gold_session: String,
        gold_seq: u64,
        gold_answer: String,
        relevant: Vec<(String, u64)>,
        granted: bool,
        reason: String,
        results: Vec<EvalResultLine>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalResultLine {
    pub session_id: String,
    pub seq: u64,
    pub l2: f64,
    pub h: f64,
    pub d: f64,
    pub rank: usize,
    pub answer_text: String,
}

pub fn render_log(lines: &[EvalLogLine]) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("log line serializes"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// probe construction

/// A probe-able turn slot: the first record ingested for a given
/// (session, timestamp).
#[derive(Debug, Clone)]
struct Slot {
    session: String,
    timestamp: u64,
    seq: u64,
    question: String,
    answer: String,
    user: String,
    topic: String,
}

fn slots_from_store(store: &MemoryStore) -> Vec<Slot> {
    let mut first: BTreeMap<(String, u64), Slot> = BTreeMap::new();
    for record in store.records() {
        let key = (record.key.session_id.clone(), record.key.timestamp);
        first.entry(key).or_insert_with(|| Slot {
            session: record.key.session_id.clone(),
            timestamp: record.key.timestamp,
            seq: record.seq,
            question: payload_question(&record.payload_text, &record.answer_text),
            answer: record.answer_text.clone(),
            user: record.key.user_id.clone(),
            topic: record.key.topic_label.clone(),
        });
    }
    first.into_values().collect()
}

fn slots_from_dialogues(dialogues: &[Dialogue], store: &MemoryStore) -> Result<Vec<Slot>> {
    let mut slots = Vec::new();
    for dialogue in dialogues {
        for turn in &dialogue.turns {
            let filter = AxisFilter::for_session(dialogue.dialogue_id.clone())
                .with_time_range(turn.turn_id, turn.turn_id)?;
            // lowest seq at the slot is the canonical record
            if let Some(record) = store.filter(&filter).first() {
                slots.push(Slot {
                    session: dialogue.dialogue_id.clone(),
                    timestamp: turn.turn_id,
                    seq: record.seq,
                    question: turn.question_text.clone(),
                    answer: turn.answer_text.clone(),
                    user: record.key.user_id.clone(),
                    topic: record.key.topic_label.clone(),
                });
            }
        }
    }
    Ok(slots)
}

fn queries_from_slots(
    mut slots: Vec<Slot>,
    store: &MemoryStore,
    opts: &EvalOptions,
    embedder: &EmbedderConfig,
) -> Result<Vec<EvalQuery>> {
    let sessions: Vec<String> = slots
        .iter()
        .map(|s| s.session.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if sessions.len() < 2 {
        return Err(Error::TooFewDialogues(sessions.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    slots.shuffle(&mut rng);
    slots.truncate(opts.max_queries);
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        // deterministic pick of a different origin session
        let idx = rng.gen_range(0..sessions.len() - 1);
        let origin = if sessions[idx] == slot.session {
            sessions[sessions.len() - 1].clone()
        } else {
            sessions[idx].clone()
        };
        let query = build_query(
            slot.user.clone(),
            slot.topic.clone(),
            slot.question.clone(),
            origin,
            slot.timestamp,
            opts.k,
            embedder,
        )?;
        let relevant: BTreeSet<(String, u64)> = match opts.strategy {
            RelevanceStrategy::Strict => BTreeSet::from([(slot.session.clone(), slot.seq)]),
            RelevanceStrategy::Dialogue => store
                .filter(&AxisFilter::for_session(slot.session.clone()))
                .iter()
                .map(|r| (r.key.session_id.clone(), r.seq))
                .collect(),
        };
        out.push(EvalQuery {
            query,
            gold_session: slot.session,
            gold_seq: slot.seq,
            gold_answer: slot.answer,
            relevant,
        });
    }
    Ok(out)
}

/// Build probes from parsed dialogues. Each sampled turn is queried from a
/// different, seeded-random origin session; gold is the turn's own record.
pub fn build_eval_queries(
    dialogues: &[Dialogue],
    store: &MemoryStore,
    opts: &EvalOptions,
    embedder: &EmbedderConfig,
) -> Result<Vec<EvalQuery>> {
    if dialogues.len() < 2 {
        return Err(Error::TooFewDialogues(dialogues.len()));
    }
    queries_from_slots(slots_from_dialogues(dialogues, store)?, store, opts, embedder)
}

/// Build probes directly from a populated store, reconstructing turn slots
/// from the stored payloads.
pub fn eval_queries_from_store(
    store: &MemoryStore,
    opts: &EvalOptions,
    embedder: &EmbedderConfig,
) -> Result<Vec<EvalQuery>> {
    queries_from_slots(slots_from_store(store), store, opts, embedder)
}

// ---------------------------------------------------------------------------
// the evaluation run

/// Run every probe through authorization and scoped retrieval.
///
/// In gated mode the target sessions are opened immediately before each
/// probe and closed after it, mirroring the open-command protocol. In
/// isolated mode no opening happens, so cross-session probes are denied.
pub fn run_eval(
    store: &MemoryStore,
    queries: &[EvalQuery],
    opts: &EvalOptions,
    retrieval: &RetrievalParams,
    config_digest: &str,
) -> Result<(EvalReport, Vec<EvalLogLine>)> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let mut registry = SessionRegistry::with_sessions(store.session_ids());
    for q in queries {
        registry.register(q.query.origin_session.clone());
    }
    let mut log = vec![EvalLogLine::EvalMeta {
        store_records: store.len(),
        mode: opts.mode,
        strategy: opts.strategy,
        target_policy: opts.target_policy,
        k: opts.k,
        seed: opts.seed,
        n_queries: queries.len(),
        config_digest: config_digest.to_owned(),
    }];
    let mut id_results: Vec<Vec<(String, u64)>> = Vec::with_capacity(queries.len());
    let mut top1_answers: Vec<Option<String>> = Vec::with_capacity(queries.len());

    for (idx, eq) in queries.iter().enumerate() {
        let targets: BTreeSet<String> = match opts.target_policy {
            TargetPolicy::Gold => BTreeSet::from([eq.gold_session.clone()]),
            TargetPolicy::All => store.session_ids(),
        };
        let opened: Vec<String> = if opts.mode == BarrierMode::Gated {
            let foreign: Vec<String> = targets
                .iter()
                .filter(|t| {
                    *t != &eq.query.origin_session && registry.sessions().contains(t.as_str())
                })
                .cloned()
                .collect();
            for t in &foreign {
                registry.open_session(t)?;
            }
            foreign
        } else {
            Vec::new()
        };
        let decision = authorize(&registry, opts.mode, &eq.query.origin_session, &targets)?;
        for t in &opened {
            registry.close_session(t)?;
        }
        let (granted, reason, results) = match decision {
            Decision::Granted { scope } => {
                let hits = top_k(&eq.query, store, retrieval, &scope)?;
                (true, "authorized".to_owned(), hits)
            }
            Decision::Denied { reason } => (false, reason, Vec::new()),
        };
        id_results.push(
            results
                .iter()
                .map(|r| (r.record.key.session_id.clone(), r.record.seq))
                .collect(),
        );
        top1_answers.push(results.first().map(|r| r.record.answer_text.clone()));
        log.push(EvalLogLine::EvalQuery {
            idx,
            origin: eq.query.origin_session.clone(),
            targets,
            gold_session: eq.gold_session.clone(),
            gold_seq: eq.gold_seq,
            gold_answer: eq.gold_answer.clone(),
            relevant: eq.relevant.iter().cloned().collect(),
            granted,
            reason,
            results: results
                .iter()
                .map(|r| EvalResultLine {
                    session_id: r.record.key.session_id.clone(),
                    seq: r.record.seq,
                    l2: r.l2,
                    h: r.h,
                    d: r.d,
                    rank: r.rank,
                    answer_text: r.record.answer_text.clone(),
                })
                .collect(),
        });
    }

    let (precision, recall, f1) = precision_recall_f1(queries, &id_results, opts.k);
    let memory_utilization = memory_utilization(store, &id_results)?;
    let accuracy = accuracy(queries, &top1_answers);
    let bleu = corpus_bleu(queries, &top1_answers);
    let report = EvalReport {
        precision,
        recall,
        f1,
        memory_utilization,
        accuracy,
        bleu,
        n_queries: queries.len(),
        config_digest: config_digest.to_owned(),
        mode: opts.mode,
    };
    Ok((report, log))
}

// ---------------------------------------------------------------------------
// metrics

/// Macro-averaged precision/recall and the F1 of the averages.
pub fn precision_recall_f1(
    queries: &[EvalQuery],
    results: &[Vec<(String, u64)>],
    k: usize,
) -> (f64, f64, f64) {
    if queries.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for (eq, res) in queries.iter().zip(results) {
        let hits = res
            .iter()
            .filter(|(s, seq)| eq.relevant.contains(&(s.clone(), *seq)))
            .count() as f64;
        let denom = k.min(res.len());
        if denom > 0 {
            p_sum += hits / denom as f64;
        }
        r_sum += hits / eq.relevant.len() as f64;
    }
    let p = p_sum / queries.len() as f64;
    let r = r_sum / queries.len() as f64;
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// Fraction of stored records retrieved at least once across the run.
/// Undefined (an error) on an empty store.
pub fn memory_utilization(store: &MemoryStore, results: &[Vec<(String, u64)>]) -> Result<f64> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    let touched: BTreeSet<&(String, u64)> = results.iter().flatten().collect();
    Ok(touched.len() as f64 / store.len() as f64)
}

/// Fraction of queries whose top-1 answer normalizes equal to gold.
pub fn accuracy(queries: &[EvalQuery], top1_answers: &[Option<String>]) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let correct = queries
        .iter()
        .zip(top1_answers)
        .filter(|(eq, top1)| match top1 {
            Some(answer) => normalize_answer(answer) == normalize_answer(&eq.gold_answer),
            None => false,
        })
        .count();
    correct as f64 / queries.len() as f64
}

/// Mean sentence BLEU of top-1 answers against gold. Queries with no
/// results contribute an empty candidate.
pub fn corpus_bleu(queries: &[EvalQuery], top1_answers: &[Option<String>]) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let total: f64 = queries
        .iter()
        .zip(top1_answers)
        .map(|(eq, top1)| sentence_bleu(top1.as_deref().unwrap_or(""), &[&eq.gold_answer]))
        .sum();
    total / queries.len() as f64
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, strip punctuation, collapse whitespace, drop articles.
pub fn normalize_answer(text: &str) -> String {
    normalize_tokens(text).join(" ")
}

fn normalize_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .map(str::to_owned)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU-4. Both-empty scores 1, empty-vs-nonempty scores 0 in
/// either direction; a candidate with zero unigram overlap scores 0.
pub fn sentence_bleu(candidate: &str, references: &[&str]) -> f64 {
    let cand = normalize_tokens(candidate);
    let refs: Vec<Vec<String>> = references.iter().map(|r| normalize_tokens(r)).collect();
    if cand.is_empty() {
        return if refs.iter().all(|r| r.is_empty()) { 1.0 } else { 0.0 };
    }
    if refs.iter().all(|r| r.is_empty()) {
        return 0.0;
    }
    let c = cand.len();
    // effective reference length: closest to c, ties to the shorter
    let r = refs
        .iter()
        .map(|r| (r.len().abs_diff(c), r.len()))
        .min()
        .map(|(_, len)| len)
        .unwrap_or(0);
    let brevity_penalty = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand_counts = ngram_counts(&cand, n);
        let total: usize = cand_counts.values().sum();
        let mut clipped = 0usize;
        for (gram, &count) in &cand_counts {
            let max_ref = refs
                .iter()
                .map(|r| ngram_counts(r, n).get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(max_ref);
        }
        let p = if n == 1 {
            if clipped == 0 {
                return 0.0;
            }
            clipped as f64 / total as f64
        } else {
            // add-one smoothing; zero higher-order n-grams score (0+1)/(0+1)
            (clipped as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += 0.25 * p.ln();
    }
    brevity_penalty * log_sum.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed;
    use crate::store::{MemoryKey, MemoryRecord};

    const DIM: usize = 32;

    fn cfg() -> EmbedderConfig {
        EmbedderConfig::new(DIM).unwrap()
    }

    fn seeded_store(sessions: usize, turns: usize) -> MemoryStore {
        let mut store = MemoryStore::new(DIM).unwrap();
        for s in 0..sessions {
            let session = format!("s{s}");
            let user = format!("user-s{s}");
            for t in 1..=turns {
                let question = format!("what happened in story {s} at step {t}");
                let answer = format!("the outcome {s} {t} occurred");
                let payload = crate::corpus::turn_payload(&question, &answer);
                let key = MemoryKey::new(
                    user.clone(),
                    session.clone(),
                    "fiction",
                    embed("fiction", &cfg()),
                    t as u64,
                );
                let embedding = embed(&payload, &cfg());
                store
                    .insert(MemoryRecord::new(key, payload, answer, embedding))
                    .unwrap();
            }
        }
        store
    }

    fn make_query(text: &str, origin: &str, k: usize) -> Query {
        build_query("u1", "fiction", text, origin, 1, k, &cfg()).unwrap()
    }

    fn eq_with(relevant: &[(&str, u64)], gold: (&str, u64), answer: &str) -> EvalQuery {
        EvalQuery {
            query: make_query("anything", "s-origin", 4),
            gold_session: gold.0.to_owned(),
            gold_seq: gold.1,
            gold_answer: answer.to_owned(),
            relevant: relevant.iter().map(|(s, q)| (s.to_string(), *q)).collect(),
        }
    }

    #[test]
    fn prf_perfect_retrieval() {
        let queries = vec![eq_with(&[("s1", 0), ("s1", 1)], ("s1", 0), "x")];
        let results = vec![vec![("s1".to_owned(), 0), ("s1".to_owned(), 1)]];
        let (p, r, f1) = precision_recall_f1(&queries, &results, 2);
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn prf_total_miss() {
        let queries = vec![eq_with(&[("s1", 0)], ("s1", 0), "x")];
        let results = vec![vec![("s2".to_owned(), 5), ("s2".to_owned(), 6)]];
        let (p, r, f1) = precision_recall_f1(&queries, &results, 2);
        assert_eq!((p, r, f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn prf_direct_arithmetic() {
        // k=4 returns 4, |relevant|=5, overlap 3 -> P=0.75, R=0.6
        let queries = vec![eq_with(
            &[("s1", 0), ("s1", 1), ("s1", 2), ("s1", 3), ("s1", 4)],
            ("s1", 0),
            "x",
        )];
        let results = vec![vec![
            ("s1".to_owned(), 0),
            ("s1".to_owned(), 1),
            ("s1".to_owned(), 2),
            ("s9".to_owned(), 40),
        ]];
        let (p, r, f1) = precision_recall_f1(&queries, &results, 4);
        assert!((p - 0.75).abs() < 1e-12);
        assert!((r - 0.6).abs() < 1e-12);
        assert!((f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    #[test]
    fn utilization_full_none_partial() {
        let store = seeded_store(2, 5); // 10 records
        let all: Vec<Vec<(String, u64)>> =
            vec![store.records().map(|r| (r.key.session_id.clone(), r.seq)).collect()];
        assert_eq!(memory_utilization(&store, &all).unwrap(), 1.0);
        assert_eq!(memory_utilization(&store, &[]).unwrap(), 0.0);
        let some = vec![
            vec![("s0".to_owned(), 0)],
            vec![("s0".to_owned(), 3), ("s0".to_owned(), 3)],
            vec![("s1".to_owned(), 7)],
        ];
        assert!((memory_utilization(&store, &some).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn utilization_on_empty_store_is_an_error() {
        let store = MemoryStore::new(DIM).unwrap();
        assert!(matches!(memory_utilization(&store, &[]), Err(Error::EmptyStore)));
    }

    #[test]
    fn accuracy_normalization_matches() {
        let queries = vec![eq_with(&[("s1", 0)], ("s1", 0), "cat")];
        assert_eq!(accuracy(&queries, &[Some("The Cat.".to_owned())]), 1.0);
        assert_eq!(accuracy(&queries, &[Some("a dog".to_owned())]), 0.0);
        assert_eq!(accuracy(&queries, &[None]), 0.0);
    }

    #[test]
    fn accuracy_counts_fraction() {
        let queries: Vec<EvalQuery> =
            (0..10).map(|i| eq_with(&[("s1", i)], ("s1", i), "yes")).collect();
        let answers: Vec<Option<String>> = (0..10)
            .map(|i| Some(if i < 8 { "yes" } else { "no" }.to_owned()))
            .collect();
        assert!((accuracy(&queries, &answers) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn normalize_drops_articles_and_punctuation() {
        assert_eq!(normalize_answer("The Cat."), "cat");
        assert_eq!(normalize_answer("  An   apple, a day!  "), "apple day");
        assert_eq!(normalize_answer("the a an"), "");
    }

    // BLEU values below were frozen from an independent reference
    // implementation before this module was written.
    #[test]
    fn bleu_identical_long_candidate_is_one() {
        let v = sentence_bleu(
            "the cat sat on the mat today",
            &["the cat sat on the mat today"],
        );
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_regression_constant_article_normalized_pair() {
        // both sides normalize to "cat sat on mat"
        let v = sentence_bleu("the cat sat on the mat", &["the cat sat on a mat"]);
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bleu_regression_constant_partial_overlap() {
        let v = sentence_bleu(
            "two big dogs ran fast today",
            &["two small dogs walked fast today"],
        );
        assert!((v - 0.32466791547509893).abs() < 1e-9);
    }

    #[test]
    fn bleu_regression_constant_short_sentences() {
        let v = sentence_bleu("red green blue yellow", &["red green blue purple"]);
        assert!((v - 0.6580370064762462).abs() < 1e-9);
    }

    #[test]
    fn bleu_regression_constant_brevity_penalty() {
        let v = sentence_bleu(
            "night falls over river water",
            &["night falls over quiet river water"],
        );
        assert!((v - 0.49473859088183875).abs() < 1e-9);
    }

    #[test]
    fn bleu_zero_overlap_scores_zero() {
        let v = sentence_bleu("alpha beta gamma delta", &["one two three four"]);
        assert!(v < 0.05);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn bleu_short_identical_candidate_is_one() {
        assert!((sentence_bleu("big dogs ran", &["big dogs ran"]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_empty_cases() {
        assert_eq!(sentence_bleu("", &["something"]), 0.0);
        assert_eq!(sentence_bleu("", &[""]), 1.0);
        assert_eq!(sentence_bleu("something", &[""]), 0.0);
        // articles only: normalizes to empty on both sides
        assert_eq!(sentence_bleu("the", &["the"]), 1.0);
    }

    #[test]
    fn eval_queries_strict_are_singletons() {
        let store = seeded_store(3, 4);
        let opts = EvalOptions {
            max_queries: usize::MAX,
            ..EvalOptions::default()
        };
        let queries = eval_queries_from_store(&store, &opts, &cfg()).unwrap();
        assert_eq!(queries.len(), 12);
        for q in &queries {
            assert_eq!(q.relevant.len(), 1);
            assert!(q.relevant.contains(&(q.gold_session.clone(), q.gold_seq)));
            assert_ne!(q.query.origin_session, q.gold_session);
        }
    }

    #[test]
    fn eval_queries_dialogue_strategy_covers_session() {
        let store = seeded_store(2, 5);
        let opts = EvalOptions {
            strategy: RelevanceStrategy::Dialogue,
            max_queries: usize::MAX,
            ..EvalOptions::default()
        };
        let queries = eval_queries_from_store(&store, &opts, &cfg()).unwrap();
        for q in &queries {
            assert_eq!(q.relevant.len(), 5);
        }
    }

    #[test]
    fn eval_queries_deterministic_given_seed() {
        let store = seeded_store(4, 3);
        let opts = EvalOptions {
            seed: 42,
            max_queries: 6,
            ..EvalOptions::default()
        };
        let a = eval_queries_from_store(&store, &opts, &cfg()).unwrap();
        let b = eval_queries_from_store(&store, &opts, &cfg()).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.query, y.query);
            assert_eq!(x.relevant, y.relevant);
        }
    }

    #[test]
    fn fewer_than_two_dialogues_is_an_error() {
        let store = seeded_store(1, 5);
        let opts = EvalOptions::default();
        assert!(matches!(
            eval_queries_from_store(&store, &opts, &cfg()),
            Err(Error::TooFewDialogues(1))
        ));
    }

    #[test]
    fn run_eval_gated_retrieves_and_reports() {
        let store = seeded_store(4, 4);
        let opts = EvalOptions {
            max_queries: usize::MAX,
            ..EvalOptions::default()
        };
        let queries = eval_queries_from_store(&store, &opts, &cfg()).unwrap();
        let (report, log) =
            run_eval(&store, &queries, &opts, &RetrievalParams::default(), "digest").unwrap();
        assert_eq!(report.n_queries, 16);
        assert!(report.recall > 0.9, "recall {}", report.recall);
        assert!(report.accuracy > 0.9, "accuracy {}", report.accuracy);
        for value in [
            report.precision,
            report.recall,
            report.f1,
            report.memory_utilization,
            report.accuracy,
            report.bleu,
        ] {
            assert!((0.0..=1.0).contains(&value));
        }
        let expected_f1 = if report.precision + report.recall > 0.0 {
            2.0 * report.precision * report.recall / (report.precision + report.recall)
        } else {
            0.0
        };
        assert!((report.f1 - expected_f1).abs() < 1e-12);
        assert_eq!(log.len(), 17); // meta + one line per query
    }

    #[test]
    fn run_eval_isolated_collapses_to_zero_recall() {
        let store = seeded_store(4, 4);
        let opts = EvalOptions {
            mode: BarrierMode::Isolated,
            max_queries: usize::MAX,
            ..EvalOptions::default()
        };
        let queries = eval_queries_from_store(&store, &opts, &cfg()).unwrap();
        let (report, _) =
            run_eval(&store, &queries, &opts, &RetrievalParams::default(), "digest").unwrap();
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.memory_utilization, 0.0);
        assert_eq!(report.accuracy, 0.0);
    }

    #[test]
    fn mode_dominance_on_recall() {
        let store = seeded_store(5, 3);
        let mut recalls = Vec::new();
        for mode in [BarrierMode::Isolated, BarrierMode::Gated, BarrierMode::Open] {
            let opts = EvalOptions {
                mode,
                seed: 7,
                max_queries: usize::MAX,
                ..EvalOptions::default()
            };
            let queries = eval_queries_from_store(&store, &opts, &cfg()).unwrap();
            let (report, _) =
                run_eval(&store, &queries, &opts, &RetrievalParams::default(), "d").unwrap();
            recalls.push(report.recall);
        }
        assert!(recalls[0] <= recalls[1] && recalls[1] <= recalls[2], "{recalls:?}");
    }

    #[test]
    fn csv_row_shape() {
        let report = EvalReport {
            precision: 0.5,
            recall: 0.25,
            f1: 1.0 / 3.0,
            memory_utilization: 0.1,
            accuracy: 0.75,
            bleu: 0.2,
            n_queries: 4,
            config_digest: "abc".into(),
            mode: BarrierMode::Gated,
        };
        assert_eq!(CSV_HEADER.split(',').count(), 7);
        let row = report.to_csv_row(3);
        assert!(row.starts_with("3,0.5,0.25,"));
        assert_eq!(row.split(',').count(), 7);
    }
}
