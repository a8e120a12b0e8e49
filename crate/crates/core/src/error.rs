use thiserror::Error;

/// Errors produced anywhere in the engine.
///
/// Every variant belongs to one of three categories, exposed through
/// [`Error::exit_code`]: validation (1), input format (2), runtime (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{name} out of range: {value} (expected {range})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("unknown config key: {0}")]
    UnknownKey(String),

    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("no candidate records in scope")]
    NoCandidates,

    #[error("unknown session: {0}")]
    UnknownSession(String),

    #[error("memory utilization is undefined on an empty store")]
    EmptyStore,

    #[error("cross-session evaluation needs at least 2 dialogues, got {0}")]
    TooFewDialogues(usize),

    #[error("parameter grid expands to {combos} combinations, cap is {cap}")]
    GridCapExceeded { combos: usize, cap: usize },

    #[error("store file, line {line}: {message}")]
    StoreFormat { line: usize, message: String },

    #[error("corpus file: {message}")]
    CorpusFormat { message: String },

    #[error("script, line {line}: {message}")]
    ScriptFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable process exit code contract: 0 success, 1 validation,
    /// 2 input format, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. }
            | Error::OutOfRange { .. }
            | Error::UnknownKey(_)
            | Error::Invalid { .. }
            | Error::NoCandidates
            | Error::UnknownSession(_)
            | Error::EmptyStore
            | Error::TooFewDialogues(_)
            | Error::GridCapExceeded { .. } => 1,
            Error::StoreFormat { .. }
            | Error::CorpusFormat { .. }
            | Error::ScriptFormat { .. } => 2,
            Error::Io(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
