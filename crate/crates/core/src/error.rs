use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failure while reading, validating or writing a corpus file.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line} (sample {sample_id:?}): {field}: {reason}")]
    Invalid {
        line: usize,
        sample_id: String,
        field: String,
        reason: String,
    },

    #[error("line {line}: duplicate sample_id {sample_id:?}")]
    DuplicateId { line: usize, sample_id: String },
}

/// Invalid method or smoothing parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("k_percent must lie in (0, 100], got {0}")]
    KPercent(f64),
    #[error("window must be at least 1")]
    Window,
    #[error("sigma_floor must be positive and finite, got {0}")]
    SigmaFloor(f64),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("{0}")]
    Other(String),
}

/// A sample lacks an input the requested method needs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("sample {sample_id:?}: missing input `{field}` required by {method}")]
    MissingInput {
        sample_id: String,
        field: &'static str,
        method: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("method {method:?} needs both classes, got {n_member} member and {n_nonmember} non-member scores")]
    SingleClass {
        method: String,
        n_member: usize,
        n_nonmember: usize,
    },
    #[error("no scores to summarise")]
    Empty,
    #[error("histogram needs at least one bin")]
    NoBins,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("text {index} has {len} tokens but the model context needs more than {order}")]
    TextTooShort {
        index: usize,
        len: usize,
        order: usize,
    },
}

/// Anything that can stop an experiment run.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("no labeled samples")]
    NoLabels,
    #[error("method {method}: no sample could be scored ({skipped} skipped)")]
    EmptyMethod { method: String, skipped: usize },
    #[error("failed to write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}
