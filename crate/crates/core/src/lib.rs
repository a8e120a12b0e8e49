//! Cross-session memory engine.
//!
//! Memories from many dialogues live in one multi-axis store (user, topic,
//! time, session) and can be retrieved from any other dialogue, subject to
//! session access barriers. The moving parts:
//!
//! - [`embed`] — deterministic hashed n-gram text embeddings
//! - [`store`] — the indexed record store with exact filtered top-k search
//! - [`dynamics`] — surprise-gated momentum merge and salience decay
//! - [`retrieval`] — composite-distance ranking across sessions
//! - [`merge`] — residual context merge and provenance tag emission
//! - [`barrier`] — session access modes, scripted runs, audit logging
//! - [`corpus`] — conversational QA corpus parsing and store population
//! - [`eval`] — probe construction and the six report metrics
//! - [`config`] / [`bench`] / [`sweep`] — run configuration, micro-bench,
//!   grid search
//!
//! Everything is deterministic given a seed: embeddings are hash-based,
//! stores serialize to a stable text format, and run logs are
//! byte-reproducible, which is what makes the evaluation harness and its
//! oracle checks possible.

pub mod barrier;
pub mod bench;
pub mod config;
pub mod corpus;
pub mod dynamics;
pub mod embed;
pub mod error;
pub mod eval;
pub mod merge;
pub mod retrieval;
pub mod store;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
