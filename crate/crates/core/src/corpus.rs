//! Conversational QA corpus ingestion.
//!
//! Input is the published CoQA serialization: a top-level `data` array of
//! stories, each with parallel `questions` and `answers` arrays joined on
//! `turn_id`. One story becomes one dialogue/session; the story's `source`
//! field is the only topic-like metadata the corpus carries and becomes
//! the topic label; the turn id becomes the record's logical timestamp.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::dynamics::{apply_update, DynamicsParams, UpdateOutcome};
use crate::embed::{embed, EmbedderConfig};
use crate::error::{Error, Result};
use crate::store::{AxisFilter, MemoryKey, MemoryRecord, MemoryStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    /// 1-based, contiguous within a dialogue.
    pub turn_id: u64,
    pub question_text: String,
    pub answer_text: String,
    pub span_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub source: String,
    pub story_text: String,
    pub turns: Vec<Turn>,
}

/// A skipped corpus item and why it was skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedItem {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedCorpus {
    pub dialogues: Vec<Dialogue>,
    pub skipped: Vec<SkippedItem>,
}

impl ParsedCorpus {
    pub fn dialogue_count(&self) -> usize {
        self.dialogues.len()
    }

    pub fn turn_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }
}

#[derive(Deserialize)]
struct RawFile {
    data: Vec<RawItem>,
}

#[derive(Deserialize)]
struct RawItem {
    id: Option<String>,
    source: Option<String>,
    story: Option<String>,
    questions: Option<Vec<RawQuestion>>,
    answers: Option<Vec<RawAnswer>>,
}

#[derive(Deserialize)]
struct RawQuestion {
    input_text: String,
    turn_id: i64,
}

#[derive(Deserialize)]
struct RawAnswer {
    input_text: String,
    #[serde(default)]
    span_text: String,
    turn_id: i64,
}

pub fn parse_coqa(path: impl AsRef<Path>) -> Result<ParsedCorpus> {
    parse_coqa_str(&fs::read_to_string(path)?)
}

pub fn parse_coqa_str(content: &str) -> Result<ParsedCorpus> {
    let raw: RawFile = serde_json::from_str(content).map_err(|e| Error::CorpusFormat {
        message: format!("not a corpus file ({e})"),
    })?;
    let mut corpus = ParsedCorpus::default();
    for (idx, item) in raw.data.into_iter().enumerate() {
        let id = item.id.clone().unwrap_or_else(|| format!("item-{idx}"));
        match build_dialogue(item, idx) {
            Ok(dialogue) => corpus.dialogues.push(dialogue),
            Err(reason) => corpus.skipped.push(SkippedItem { id, reason }),
        }
    }
    Ok(corpus)
}

fn build_dialogue(item: RawItem, idx: usize) -> std::result::Result<Dialogue, String> {
    let id = item.id.ok_or_else(|| format!("item {idx}: missing id"))?;
    let story = item.story.ok_or("missing story")?;
    let questions = item.questions.ok_or("missing questions")?;
    let answers = item.answers.ok_or("missing answers")?;
    let mut answer_map: BTreeMap<i64, RawAnswer> = BTreeMap::new();
    for a in answers {
        if answer_map.insert(a.turn_id, a).is_some() {
            return Err("duplicate answer turn_id".into());
        }
    }
    let mut turns = Vec::with_capacity(questions.len());
    let mut sorted = questions;
    sorted.sort_by_key(|q| q.turn_id);
    for (i, q) in sorted.into_iter().enumerate() {
        if q.turn_id != i as i64 + 1 {
            return Err(format!("turn ids not contiguous from 1 at position {i}"));
        }
        if q.input_text.is_empty() {
            return Err(format!("empty question at turn {}", q.turn_id));
        }
        let a = answer_map
            .remove(&q.turn_id)
            .ok_or_else(|| format!("answer missing for turn {}", q.turn_id))?;
        turns.push(Turn {
            turn_id: q.turn_id as u64,
            question_text: q.input_text,
            answer_text: a.input_text,
            span_text: a.span_text,
        });
    }
    Ok(Dialogue {
        dialogue_id: id,
        source: item.source.unwrap_or_default(),
        story_text: story,
        turns,
    })
}

/// How dialogues map to user ids during population.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum UserStrategy {
    /// One synthetic user per dialogue: `user-<dialogue_id>`.
    #[default]
    PerDialogue,
    /// Every record belongs to this user.
    Fixed(String),
}

impl UserStrategy {
    fn user_for(&self, dialogue_id: &str) -> String {
        match self {
            UserStrategy::PerDialogue => format!("user-{dialogue_id}"),
            UserStrategy::Fixed(u) => u.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records_inserted: usize,
    pub merged: usize,
    pub decayed: usize,
}

/// Turn payload as stored: question and answer joined by one space. The
/// question is recoverable by stripping the answer suffix.
pub fn turn_payload(question: &str, answer: &str) -> String {
    format!("{question} {answer}")
}

/// Inverse of [`turn_payload`] given the stored answer text.
pub fn payload_question(payload: &str, answer: &str) -> String {
    payload
        .strip_suffix(answer)
        .and_then(|p| p.strip_suffix(' '))
        .unwrap_or(payload)
        .to_owned()
}

/// Populate the store, routing every turn through the update dynamics.
/// The update scope is the turn's own (session, timestamp) slot, so a
/// fresh corpus inserts every turn and re-ingesting the same dialogue
/// exercises the decay/merge branches instead of duplicating slots.
pub fn populate(
    store: &mut MemoryStore,
    dialogues: &[Dialogue],
    embedder: &EmbedderConfig,
    params: &DynamicsParams,
    user_strategy: &UserStrategy,
) -> Result<IngestReport> {
    if store.dim() != embedder.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: embedder.dim(),
        });
    }
    let mut report = IngestReport::default();
    for dialogue in dialogues {
        let user_id = user_strategy.user_for(&dialogue.dialogue_id);
        let topic_vector = embed(&dialogue.source, embedder);
        for turn in &dialogue.turns {
            let payload = turn_payload(&turn.question_text, &turn.answer_text);
            let key = MemoryKey::new(
                user_id.clone(),
                dialogue.dialogue_id.clone(),
                dialogue.source.clone(),
                topic_vector.clone(),
                turn.turn_id,
            );
            let record = MemoryRecord::new(
                key,
                payload.clone(),
                turn.answer_text.clone(),
                embed(&payload, embedder),
            );
            let slot = AxisFilter::for_session(dialogue.dialogue_id.clone())
                .with_time_range(turn.turn_id, turn.turn_id)?;
            match apply_update(store, &slot, record, params)? {
                UpdateOutcome::Inserted(_) => report.records_inserted += 1,
                UpdateOutcome::Merged(_) => report.merged += 1,
                UpdateOutcome::Decayed(_) => {
                    report.decayed += 1;
                    report.records_inserted += 1; // decay branch still inserts
                }
            }
        }
    }
    Ok(report)
}
