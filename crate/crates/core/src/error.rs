use std::path::PathBuf;

/// Errors produced while loading, validating or scoring inputs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid json in {path} (line {line}): {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    /// An interchange invariant does not hold. `sentence` is the offending
    /// sentence position when the violation is inside a sentence.
    #[error("{}", validation_message(.field, .sentence, .message))]
    Validation {
        field: String,
        sentence: Option<usize>,
        message: String,
    },

    #[error("embedding table is missing {} key(s): {}", .0.len(), format_keys(.0))]
    MissingKeys(Vec<String>),

    #[error("dimension mismatch{}: expected {expected}, got {actual}", key_suffix(.key))]
    DimensionMismatch {
        key: Option<String>,
        expected: usize,
        actual: usize,
    },

    #[error("vector for key {key:?} is not unit norm (norm = {norm})")]
    Norm { key: String, norm: f64 },

    #[error("duplicate embedding key {0:?}")]
    DuplicateKey(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mapping references unknown {side} cluster {id}")]
    DanglingCluster { side: &'static str, id: usize },

    #[error("no label for ranked pair ({0}, {1})")]
    MissingLabel(String, String),

    #[error("k must be at least 1")]
    InvalidK,

    #[error("invalid gold mapping: {0}")]
    Gold(String),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(
        field: impl Into<String>,
        sentence: Option<usize>,
        message: impl Into<String>,
    ) -> Self {
        Error::Validation {
            field: field.into(),
            sentence,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn validation_message(field: &str, sentence: &Option<usize>, message: &str) -> String {
    match sentence {
        Some(s) => format!("validation error in sentence {s}, field `{field}`: {message}"),
        None => format!("validation error, field `{field}`: {message}"),
    }
}

fn format_keys(keys: &[String]) -> String {
    const SHOWN: usize = 20;
    let mut out = keys
        .iter()
        .take(SHOWN)
        .map(|k| format!("{k:?}"))
        .collect::<Vec<_>>()
        .join(", ");
    if keys.len() > SHOWN {
        out.push_str(&format!(", ... ({} more)", keys.len() - SHOWN));
    }
    out
}

fn key_suffix(key: &Option<String>) -> String {
    key.as_ref()
        .map(|k| format!(" for key {k:?}"))
        .unwrap_or_default()
}
