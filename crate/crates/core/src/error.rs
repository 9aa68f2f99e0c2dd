use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid layer sizes {0:?}")]
    InvalidLayers(Vec<usize>),
    #[error("{loss} loss requires a {head} output head")]
    HeadMismatch {
        loss: &'static str,
        head: &'static str,
    },
    #[error("training diverged (non-finite loss or gradient){}", epoch_suffix(*.epoch))]
    Divergence { epoch: Option<usize> },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected {expected} features, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: label {token:?} is not a non-negative integer")]
    BadLabel { line: usize, token: String },
    #[error("line {line}: feature {token:?} is not a finite number")]
    BadValue { line: usize, token: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("split {0} would be empty")]
    EmptySplit(&'static str),
    #[error("geometric noise needs image-shaped rows")]
    NotImage,

    #[error("requested {requested} items but only {available} are available")]
    TooManyRequested { requested: usize, available: usize },
    #[error("margin needs at least two classes, found {0}")]
    TooFewClasses(usize),

    #[error("degenerate environment configuration: {0}")]
    DegenerateConfig(String),
    #[error("episode is terminal")]
    EpisodeTerminal,
    #[error("environment has not been reset")]
    NotReset,
    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("malformed weights file: {0}")]
    BadWeights(String),
}

fn epoch_suffix(epoch: Option<usize>) -> String {
    match epoch {
        Some(e) => format!(" at epoch {e}"),
        None => String::new(),
    }
}
