//! Seeded synthetic fixtures: dialogue corpora in the published corpus
//! serialization, and random record stores for benchmarks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{turn_payload, Dialogue, Turn};
use crate::embed::{embed, quantize9, EmbedderConfig, EmbeddingVector};
use crate::error::Result;
use crate::store::{MemoryKey, MemoryRecord, MemoryStore};

const SUBJECTS: [&str; 12] = [
    "keeper", "council", "engineer", "captain", "novelist", "farmer", "pilot", "teacher",
    "curator", "fisherman", "mayor", "astronomer",
];
const OBJECTS: [&str; 12] = [
    "lighthouse", "harbor", "archive", "bridge", "orchard", "reactor", "library", "glacier",
    "observatory", "market", "telescope", "workshop",
];
const VERBS: [&str; 8] = [
    "repaired", "described", "measured", "abandoned", "rebuilt", "catalogued", "guarded",
    "painted",
];
const PLACES: [&str; 8] = [
    "coast", "valley", "station", "village", "plateau", "island", "quarter", "ridge",
];
const SOURCES: [&str; 5] = ["literature", "news", "science", "history", "travel"];

/// Deterministic synthetic dialogues. Questions carry the dialogue and
/// turn indices as tokens, so retrieval has an unambiguous gold signal
/// while the surrounding words still collide across dialogues.
pub fn synth_dialogues(n_dialogues: usize, turns_per_dialogue: usize, seed: u64) -> Vec<Dialogue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_dialogues)
        .map(|d| {
            let source = SOURCES[rng.gen_range(0..SOURCES.len())].to_owned();
            let subject = SUBJECTS[rng.gen_range(0..SUBJECTS.len())];
            let turns = (1..=turns_per_dialogue)
                .map(|t| {
                    let object = OBJECTS[rng.gen_range(0..OBJECTS.len())];
                    let verb = VERBS[rng.gen_range(0..VERBS.len())];
                    let place = PLACES[rng.gen_range(0..PLACES.len())];
                    Turn {
                        turn_id: t as u64,
                        question_text: format!(
                            "what did the {subject} do with the {object} in story {d} step {t}"
                        ),
                        answer_text: format!("the {subject} {verb} the {object} near the {place}"),
                        span_text: format!("{verb} the {object}"),
                    }
                })
                .collect();
            Dialogue {
                dialogue_id: format!("dlg-{d:04}"),
                source,
                story_text: format!("Story {d} about a {subject}."),
                turns,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CoqaFile<'a> {
    version: &'static str,
    data: Vec<CoqaItem<'a>>,
}

#[derive(Serialize)]
struct CoqaItem<'a> {
    source: &'a str,
    id: &'a str,
    filename: &'static str,
    story: &'a str,
    questions: Vec<CoqaQuestion<'a>>,
    answers: Vec<CoqaAnswer<'a>>,
}

#[derive(Serialize)]
struct CoqaQuestion<'a> {
    input_text: &'a str,
    turn_id: u64,
}

#[derive(Serialize)]
struct CoqaAnswer<'a> {
    span_start: i64,
    span_end: i64,
    span_text: &'a str,
    input_text: &'a str,
    turn_id: u64,
}

/// Render dialogues in the published corpus serialization so they can be
/// fed back through the regular ingest path.
pub fn to_coqa_json(dialogues: &[Dialogue]) -> String {
    let file = CoqaFile {
        version: "1.0",
        data: dialogues
            .iter()
            .map(|d| CoqaItem {
                source: &d.source,
                id: &d.dialogue_id,
                filename: "synthetic",
                story: &d.story_text,
                questions: d
                    .turns
                    .iter()
                    .map(|t| CoqaQuestion {
                        input_text: &t.question_text,
                        turn_id: t.turn_id,
                    })
                    .collect(),
                answers: d
                    .turns
                    .iter()
                    .map(|t| CoqaAnswer {
                        span_start: 0,
                        span_end: t.span_text.len() as i64,
                        span_text: &t.span_text,
                        input_text: &t.answer_text,
                        turn_id: t.turn_id,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("corpus serializes")
}

/// A random point on the unit sphere, at serialization precision.
pub fn random_unit_embedding(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return EmbeddingVector::from_components(
                raw.iter().map(|&v| quantize9(v / norm)).collect(),
            );
        }
    }
}

/// A store of `n` seeded random records spread over `sessions` sessions.
pub fn synth_store(n: usize, dim: usize, sessions: usize, seed: u64) -> Result<MemoryStore> {
    let embedder = EmbedderConfig::new(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = MemoryStore::new(dim)?;
    let sessions = sessions.max(1);
    let mut clocks = vec![1u64; sessions];
    for i in 0..n {
        let s = rng.gen_range(0..sessions);
        let session = format!("bench-s{s}");
        let user = format!("bench-u{}", s % 7);
        let source = SOURCES[s % SOURCES.len()];
        let timestamp = clocks[s];
        clocks[s] += 1;
        let question = format!("synthetic record {i}");
        let answer = format!("value {}", rng.gen_range(0..1000));
        let key = MemoryKey::new(user, session, source, embed(source, &embedder), timestamp);
        let record = MemoryRecord::new(
            key,
            turn_payload(&question, &answer),
            answer,
            random_unit_embedding(&mut rng, dim),
        );
        store.insert(record)?;
    }
    Ok(store)
}
