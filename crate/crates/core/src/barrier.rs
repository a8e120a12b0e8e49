//! Session access barriers and the scripted simulation harness.
//!
//! Three access modes reproduce the experimental conditions: `isolated`
//! rejects every cross-session read, `gated` grants them only for sessions
//! explicitly opened beforehand, and `open` is the unrestricted upper
//! bound. Denial is a value, not an error: scripts keep running after a
//! denied query and every decision lands in the append-only log.
//!
//! # Script format
//!
//! Line-oriented UTF-8, `#` starts a comment. Values with spaces are
//! double-quoted; `\"` and `\\` escape inside quotes.
//!
//! ```text
//! open <session>
//! close <session>
//! say <session> user=<id> topic="..." text="..." answer="..."
//! query <origin> targets=<s1,s2|all> user=<id> topic="..." text="..." k=<n>
//! ```
//!
//! `say` ingests a turn through the update dynamics, scoped to its own
//! session. `query` runs authorization, then scoped retrieval, tag
//! emission, and a residual context merge when granted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::dynamics::{apply_update, DynamicsParams, UpdateOutcome};
use crate::embed::{embed, fnv1a64, EmbedderConfig};
use crate::error::{Error, Result};
use crate::merge::{cot_integrate, residual_merge, ContextState, CoTTag, MergeParams};
use crate::retrieval::{build_query, top_k, RetrievalParams};
use crate::store::{AxisFilter, MemoryKey, MemoryRecord, MemoryStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierMode {
    /// Cross-session reads always rejected (baseline behavior).
    Isolated,
    /// Cross-session reads require a prior `open` of every target.
    Gated,
    /// Everything granted; upper bound for comparisons.
    Open,
}

impl fmt::Display for BarrierMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BarrierMode::Isolated => "isolated",
            BarrierMode::Gated => "gated",
            BarrierMode::Open => "open",
        };
        f.write_str(s)
    }
}

impl FromStr for BarrierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isolated" => Ok(BarrierMode::Isolated),
            "gated" => Ok(BarrierMode::Gated),
            "open" => Ok(BarrierMode::Open),
            other => Err(Error::Invalid {
                what: "barrier mode",
                why: format!("{other:?} is not isolated|gated|open"),
            }),
        }
    }
}

/// Which sessions exist and which are currently opened by command.
/// `opened` is always a subset of `sessions`.
#[derive(Debug, Clone, Default)]
pub struct SessionRegistry {
    sessions: BTreeSet<String>,
    opened: BTreeSet<String>,
}

impl SessionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_sessions<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            sessions: ids.into_iter().map(Into::into).collect(),
            opened: BTreeSet::new(),
        }
    }

    pub fn register(&mut self, session_id: impl Into<String>) {
        self.sessions.insert(session_id.into());
    }

    pub fn sessions(&self) -> &BTreeSet<String> {
        &self.sessions
    }

    pub fn opened(&self) -> &BTreeSet<String> {
        &self.opened
    }

    /// Idempotent; unknown sessions are an error.
    pub fn open_session(&mut self, session_id: &str) -> Result<()> {
        if !self.sessions.contains(session_id) {
            return Err(Error::UnknownSession(session_id.to_owned()));
        }
        self.opened.insert(session_id.to_owned());
        Ok(())
    }

    /// Idempotent; closing a session that is not open is a no-op.
    pub fn close_session(&mut self, session_id: &str) -> Result<()> {
        if !self.sessions.contains(session_id) {
            return Err(Error::UnknownSession(session_id.to_owned()));
        }
        self.opened.remove(session_id);
        Ok(())
    }
}

/// Authorization verdict. A grant carries the exact store scope the query
/// may touch.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Granted { scope: AxisFilter },
    Denied { reason: String },
}

impl Decision {
    pub fn is_granted(&self) -> bool {
        matches!(self, Decision::Granted { .. })
    }
}

/// One line of the audit trail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccessEvent {
    pub event_seq: u64,
    pub origin_session: String,
    pub target_sessions: BTreeSet<String>,
    pub decision: &'static str,
    pub reason: String,
    pub query_digest: String,
}

/// Apply the mode's access rule. Self-access is always allowed; the grant
/// scope restricts retrieval to exactly the requested target sessions.
pub fn authorize(
    registry: &SessionRegistry,
    mode: BarrierMode,
    origin: &str,
    targets: &BTreeSet<String>,
) -> Result<Decision> {
    if !registry.sessions().contains(origin) {
        return Err(Error::UnknownSession(origin.to_owned()));
    }
    let foreign: Vec<&String> = targets.iter().filter(|t| t.as_str() != origin).collect();
    let decision = match mode {
        BarrierMode::Isolated => {
            if foreign.is_empty() {
                grant(targets)
            } else {
                Decision::Denied {
                    reason: "cross-session retrieval rejected in isolated mode".into(),
                }
            }
        }
        BarrierMode::Gated => {
            let unopened: Vec<&str> = foreign
                .iter()
                .filter(|t| !registry.opened().contains(t.as_str()))
                .map(|t| t.as_str())
                .collect();
            if unopened.is_empty() {
                grant(targets)
            } else {
                Decision::Denied {
                    reason: format!("sessions not opened: {}", unopened.join(", ")),
                }
            }
        }
        BarrierMode::Open => grant(targets),
    };
    Ok(decision)
}

fn grant(targets: &BTreeSet<String>) -> Decision {
    Decision::Granted {
        scope: AxisFilter::for_sessions(targets.iter().cloned()),
    }
}

/// Target list of a scripted query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSpec {
    All,
    Sessions(BTreeSet<String>),
}

impl TargetSpec {
    fn resolve(&self, registry: &SessionRegistry) -> BTreeSet<String> {
        match self {
            TargetSpec::All => registry.sessions().clone(),
            TargetSpec::Sessions(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptEvent {
    Open {
        session: String,
    },
    Close {
        session: String,
    },
    Say {
        session: String,
        user_id: String,
        topic: String,
        text: String,
        answer: String,
    },
    Query {
        origin: String,
        targets: TargetSpec,
        user_id: String,
        topic: String,
        text: String,
        k: Option<usize>,
    },
}

/// Everything a run needs beyond the store and the script.
#[derive(Debug, Clone)]
pub struct HarnessParams {
    pub embedder: EmbedderConfig,
    pub dynamics: DynamicsParams,
    pub retrieval: RetrievalParams,
    pub merge: MergeParams,
    pub default_k: usize,
    pub seed: u64,
    pub config_digest: String,
}

impl Default for HarnessParams {
    fn default() -> Self {
        Self {
            embedder: EmbedderConfig::default(),
            dynamics: DynamicsParams::default(),
            retrieval: RetrievalParams::default(),
            merge: MergeParams::default(),
            default_k: 5,
            seed: 0,
            config_digest: String::new(),
        }
    }
}

/// Structured run-log lines; serialized one JSON object per line.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Meta {
        mode: BarrierMode,
        seed: u64,
        dim: usize,
        config_digest: String,
    },
    Access(AccessEvent),
    Results {
        event_seq: u64,
        items: Vec<ResultLine>,
    },
    Cot {
        event_seq: u64,
        tags: Vec<CoTTag>,
    },
    Merge {
        event_seq: u64,
        origin_session: String,
        context_norm: f64,
    },
    Update {
        session: String,
        outcome: &'static str,
        seq: u64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultLine {
    pub session_id: String,
    pub seq: u64,
    pub l2: f64,
    pub h: f64,
    pub d: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub events: usize,
    pub queries: usize,
    pub granted: usize,
    pub denied: usize,
    pub inserted: usize,
    pub merged: usize,
    pub decayed: usize,
}

/// Output of [`run_script`].
#[derive(Debug, Clone)]
pub struct ScriptRun {
    pub log: Vec<LogLine>,
    pub access_events: Vec<AccessEvent>,
    pub summary: RunSummary,
}

impl ScriptRun {
    /// Newline-delimited JSON rendering of the log.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for line in &self.log {
            out.push_str(&serde_json::to_string(line).expect("log line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.log_text())?;
        Ok(())
    }
}

/// Parse a script file. Errors carry 1-based line numbers.
pub fn parse_script(src: &str) -> Result<Vec<ScriptEvent>> {
    let mut events = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        events.push(parse_event(line, line_no)?);
    }
    Ok(events)
}

fn parse_event(line: &str, line_no: usize) -> Result<ScriptEvent> {
    let bad = |message: String| Error::ScriptFormat {
        line: line_no,
        message,
    };
    let tokens = split_tokens(line, line_no)?;
    let mut it = tokens.into_iter();
    let command = it.next().ok_or_else(|| bad("empty event".into()))?;
    match command.as_str() {
        "open" | "close" => {
            let session = it.next().ok_or_else(|| bad(format!("{command} needs a session id")))?;
            if it.next().is_some() {
                return Err(bad(format!("{command} takes exactly one argument")));
            }
            Ok(if command == "open" {
                ScriptEvent::Open { session }
            } else {
                ScriptEvent::Close { session }
            })
        }
        "say" => {
            let session = it.next().ok_or_else(|| bad("say needs a session id".into()))?;
            let mut fields = parse_fields(it, &["user", "topic", "text", "answer"], line_no)?;
            Ok(ScriptEvent::Say {
                session,
                user_id: fields
                    .remove("user")
                    .ok_or_else(|| bad("say needs user=".into()))?,
                topic: fields.remove("topic").unwrap_or_default(),
                text: fields
                    .remove("text")
                    .ok_or_else(|| bad("say needs text=".into()))?,
                answer: fields.remove("answer").unwrap_or_default(),
            })
        }
        "query" => {
            let origin = it.next().ok_or_else(|| bad("query needs an origin session".into()))?;
            let mut fields =
                parse_fields(it, &["targets", "user", "topic", "text", "k"], line_no)?;
            let targets_raw = fields
                .remove("targets")
                .ok_or_else(|| bad("query needs targets=".into()))?;
            let targets = if targets_raw == "all" {
                TargetSpec::All
            } else {
                let set: BTreeSet<String> = targets_raw
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect();
                if set.is_empty() {
                    return Err(bad("targets= needs at least one session or 'all'".into()));
                }
                TargetSpec::Sessions(set)
            };
            let k = match fields.remove("k") {
                None => None,
                Some(v) => Some(v.parse::<usize>().map_err(|_| bad(format!("bad k value {v:?}")))?),
            };
            Ok(ScriptEvent::Query {
                origin,
                targets,
                user_id: fields
                    .remove("user")
                    .ok_or_else(|| bad("query needs user=".into()))?,
                topic: fields.remove("topic").unwrap_or_default(),
                text: fields
                    .remove("text")
                    .ok_or_else(|| bad("query needs text=".into()))?,
                k,
            })
        }
        other => Err(bad(format!("unknown command {other:?}"))),
    }
}

fn parse_fields(
    tokens: impl Iterator<Item = String>,
    allowed: &[&str],
    line_no: usize,
) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for token in tokens {
        let (key, value) = token.split_once('=').ok_or_else(|| Error::ScriptFormat {
            line: line_no,
            message: format!("expected key=value, got {token:?}"),
        })?;
        if !allowed.contains(&key) {
            return Err(Error::ScriptFormat {
                line: line_no,
                message: format!("unknown field {key:?}"),
            });
        }
        if out.insert(key.to_owned(), value.to_owned()).is_some() {
            return Err(Error::ScriptFormat {
                line: line_no,
                message: format!("duplicate field {key:?}"),
            });
        }
    }
    Ok(out)
}

/// Whitespace tokenizer honoring double quotes; quotes may appear after
/// `key=`. `\"` and `\\` escape inside quotes.
fn split_tokens(line: &str, line_no: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars();
    let mut pending = false; // current holds token content
    while let Some(c) = chars.next() {
        if in_quotes {
            match c {
                '\\' => match chars.next() {
                    Some('"') => current.push('"'),
                    Some('\\') => current.push('\\'),
                    other => {
                        return Err(Error::ScriptFormat {
                            line: line_no,
                            message: format!("bad escape {other:?} in quoted value"),
                        })
                    }
                },
                '"' => in_quotes = false,
                _ => current.push(c),
            }
        } else {
            match c {
                '"' => {
                    in_quotes = true;
                    pending = true;
                }
                c if c.is_whitespace() => {
                    if pending {
                        tokens.push(std::mem::take(&mut current));
                        pending = false;
                    }
                }
                _ => {
                    current.push(c);
                    pending = true;
                }
            }
        }
    }
    if in_quotes {
        return Err(Error::ScriptFormat {
            line: line_no,
            message: "unterminated quote".into(),
        });
    }
    if pending {
        tokens.push(current);
    }
    Ok(tokens)
}

/// Execute a script in order against the store. Deterministic given
/// (store, events, mode, params).
pub fn run_script(
    store: &mut MemoryStore,
    events: &[ScriptEvent],
    mode: BarrierMode,
    params: &HarnessParams,
) -> Result<ScriptRun> {
    let mut registry = SessionRegistry::with_sessions(store.session_ids());
    let mut log = vec![LogLine::Meta {
        mode,
        seed: params.seed,
        dim: store.dim(),
        config_digest: params.config_digest.clone(),
    }];
    let mut access_events = Vec::new();
    let mut summary = RunSummary::default();
    // per-session logical clocks, continuing after whatever the store holds
    let mut clocks: BTreeMap<String, u64> = BTreeMap::new();
    for record in store.records() {
        let clock = clocks.entry(record.key.session_id.clone()).or_insert(0);
        *clock = (*clock).max(record.key.timestamp + 1);
    }
    let mut contexts: BTreeMap<String, ContextState> = BTreeMap::new();
    let mut event_seq = 0u64;

    for event in events {
        summary.events += 1;
        match event {
            ScriptEvent::Open { session } => {
                registry.open_session(session)?;
            }
            ScriptEvent::Close { session } => {
                registry.close_session(session)?;
            }
            ScriptEvent::Say {
                session,
                user_id,
                topic,
                text,
                answer,
            } => {
                registry.register(session.clone());
                let ts = clocks.entry(session.clone()).or_insert(1);
                let timestamp = *ts;
                *ts += 1;
                let payload = format!("{text} {answer}");
                let key = MemoryKey::new(
                    user_id.clone(),
                    session.clone(),
                    topic.clone(),
                    embed(topic, &params.embedder),
                    timestamp,
                );
                let record =
                    MemoryRecord::new(key, payload.clone(), answer.clone(), embed(&payload, &params.embedder));
                let outcome = apply_update(
                    store,
                    &AxisFilter::for_session(session.clone()),
                    record,
                    &params.dynamics,
                )?;
                let (name, seq) = match outcome {
                    UpdateOutcome::Inserted(s) => {
                        summary.inserted += 1;
                        ("inserted", s)
                    }
                    UpdateOutcome::Merged(s) => {
                        summary.merged += 1;
                        ("merged", s)
                    }
                    UpdateOutcome::Decayed(s) => {
                        summary.decayed += 1;
                        ("decayed", s)
                    }
                };
                log.push(LogLine::Update {
                    session: session.clone(),
                    outcome: name,
                    seq,
                });
            }
            ScriptEvent::Query {
                origin,
                targets,
                user_id,
                topic,
                text,
                k,
            } => {
                summary.queries += 1;
                registry.register(origin.clone());
                let resolved = targets.resolve(&registry);
                let k = k.unwrap_or(params.default_k);
                let digest = query_digest(origin, user_id, topic, text, k, &resolved);
                let decision = authorize(&registry, mode, origin, &resolved)?;
                let access = AccessEvent {
                    event_seq,
                    origin_session: origin.clone(),
                    target_sessions: resolved,
                    decision: if decision.is_granted() { "granted" } else { "denied" },
                    reason: match &decision {
                        Decision::Granted { .. } => "authorized".into(),
                        Decision::Denied { reason } => reason.clone(),
                    },
                    query_digest: digest,
                };
                log.push(LogLine::Access(access.clone()));
                access_events.push(access);
                if let Decision::Granted { scope } = decision {
                    summary.granted += 1;
                    let ts = clocks.entry(origin.clone()).or_insert(1);
                    let timestamp = *ts;
                    *ts += 1;
                    let query = build_query(
                        user_id.clone(),
                        topic.clone(),
                        text.clone(),
                        origin.clone(),
                        timestamp,
                        k,
                        &params.embedder,
                    )?;
                    let results = top_k(&query, store, &params.retrieval, &scope)?;
                    log.push(LogLine::Results {
                        event_seq,
                        items: results
                            .iter()
                            .map(|r| ResultLine {
                                session_id: r.record.key.session_id.clone(),
                                seq: r.record.seq,
                                l2: r.l2,
                                h: r.h,
                                d: r.d,
                                rank: r.rank,
                            })
                            .collect(),
                    });
                    let tags = cot_integrate(&results);
                    log.push(LogLine::Cot { event_seq, tags });
                    if let Some(best) = results.first() {
                        let context = contexts
                            .entry(origin.clone())
                            .or_insert_with(|| ContextState::zero(store.dim()));
                        *context =
                            residual_merge(context, &best.record.embedding, &params.merge)?;
                        log.push(LogLine::Merge {
                            event_seq,
                            origin_session: origin.clone(),
                            context_norm: context.norm(),
                        });
                    }
                } else {
                    summary.denied += 1;
                }
                event_seq += 1;
            }
        }
    }
    Ok(ScriptRun {
        log,
        access_events,
        summary,
    })
}

fn query_digest(
    origin: &str,
    user: &str,
    topic: &str,
    text: &str,
    k: usize,
    targets: &BTreeSet<String>,
) -> String {
    let canonical = format!(
        "origin={origin}\nuser={user}\ntopic={topic}\ntext={text}\nk={k}\ntargets={}",
        targets.iter().cloned().collect::<Vec<_>>().join(",")
    );
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}
