use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("{}:{line}: malformed record: {reason}", .path.display())]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("corpus {} contains no usable records", .0.display())]
    EmptyCorpus(PathBuf),

    #[error("gendered term '{0}' appears in more than one dictionary entry")]
    DuplicateTerm(String),

    #[error("CPS share for '{occupation}' is outside [0, 1]: {value}")]
    BadShare { occupation: String, value: f64 },

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("occupation '{occupation}' not found in '{text}'")]
    SourceNotFound { occupation: String, text: String },

    #[error("occupation '{occupation}' occurs more than once in '{text}'")]
    AmbiguousMatch { occupation: String, text: String },

    #[error("cannot fill {needed} premises for '{occupation}': only {available} usable")]
    InsufficientDonors {
        occupation: String,
        needed: usize,
        available: usize,
    },

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("invalid probe set: {0}")]
    InvalidProbeSet(String),

    #[error("endpoint unavailable for {} pair(s) [{}]: {reason}", .probe_ids.len(), .probe_ids.join(", "))]
    EndpointUnavailable {
        probe_ids: Vec<String>,
        reason: String,
    },

    #[error("endpoint response schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("no prediction for {} pair(s): [{}]", .probe_ids.len(), .probe_ids.join(", "))]
    MissingPrediction { probe_ids: Vec<String> },

    #[error("non-finite logit")]
    NonFiniteLogit,

    #[error("unknown occupation: {0}")]
    UnknownOccupation(String),

    #[error("cannot aggregate an empty outcome set")]
    EmptyOutcomeSet,

    #[error("probe-set mismatch: before={before} after={after}")]
    ProbeSetMismatch { before: String, after: String },

    #[error("missing run in {}", .0.display())]
    MissingRun(PathBuf),

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
