use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("class label {class} at line {line} outside [1, 6]")]
    Range { line: usize, class: i64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("empty training data")]
    EmptyData,
    #[error("column `{0}` is constant")]
    DegenerateColumn(String),
    #[error("class {class} has {count} row(s); at least {needed} required")]
    TooFewSamples { class: i32, count: usize, needed: usize },
    #[error("class {class} has {count} row(s), fewer than the {folds} folds requested")]
    Stratification { class: i32, count: usize, folds: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("baseline of indicator {0} is not strictly positive")]
    Baseline(usize),
    #[error("unknown reference: {0}")]
    Reference(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("infeasible genome: at least one action must be selected")]
    Infeasible,
    #[error("genome length {0} too large for exhaustive enumeration (max 20)")]
    TooLarge(usize),
    #[error("empty front")]
    EmptyFront,
    #[error("empty sample")]
    EmptySample,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad user input (files, arguments) rather
    /// than by a failure inside the engine.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_)
                | Error::Parse { .. }
                | Error::Range { .. }
                | Error::Config(_)
                | Error::EmptyDataset(_)
                | Error::TooFewSamples { .. }
                | Error::Stratification { .. }
                | Error::Shape { .. }
                | Error::Version { .. }
                | Error::Reference(_)
                | Error::Io { .. }
                | Error::Json(_)
                | Error::TooLarge(_)
        )
    }
}
