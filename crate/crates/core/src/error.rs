use std::path::PathBuf;

use thiserror::Error;

use crate::data_model::Channel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: malformed row at line {line}: {reason}")]
    MalformedRow {
        file: String,
        line: u64,
        reason: String,
    },

    #[error("unknown channel at line {line}: {name:?}")]
    UnknownChannel { line: u64, name: String },

    #[error("non-finite value at line {line}")]
    NonFinite { line: u64 },

    #[error("{file}: unexpected header {found:?}, expected {expected:?}")]
    Header {
        file: String,
        found: String,
        expected: String,
    },

    #[error("no location known at t={t}")]
    NoLocation { t: f64 },

    #[error("invalid deployment {id}: {reason}")]
    InvalidDeployment { id: String, reason: String },

    #[error(
        "observation span [{start}, {end}) outside deployment span [{span_start}, {span_end})"
    )]
    Span {
        start: f64,
        end: f64,
        span_start: i64,
        span_end: i64,
    },

    #[error("{channel} missing fraction {fraction:.3} exceeds {limit:.3} on node {node}")]
    Quality {
        node: String,
        channel: Channel,
        fraction: f64,
        limit: f64,
    },

    #[error("every sample missing for node {node} channel {channel}")]
    AllMissing { node: String, channel: Channel },

    #[error("could only place {placed} of {requested} negatives after {attempts} attempts")]
    NegativeShortfall {
        requested: usize,
        placed: usize,
        attempts: usize,
    },

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("too few positive observations: {count} (need at least {required})")]
    TooFewPositives { count: usize, required: usize },

    #[error("could not build valid folds after {attempts} attempts")]
    Folds { attempts: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Best-effort name of the offending key in a TOML decoding error.
/// Best-effort dotted name of the key a TOML error points at.
pub(crate) fn toml_key(e: &toml::de::Error, text: &str) -> String {
    let msg = e.message();
    let quoted = msg.split('`').nth(1).filter(|k| !k.is_empty());
    if msg.starts_with("unknown field") {
        if let Some(k) = quoted {
            return k.to_string();
        }
    }
    let located = e.span().and_then(|span| {
        let head = text.get(..span.start)?;
        let line_start = head.rfind('\n').map_or(0, |i| i + 1);
        let line = text[line_start..].lines().next()?;
        let key = line.split_once('=')?.0.trim().trim_matches('"');
        let table = head[..line_start]
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| l.starts_with('['))
            .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
        Some(match table {
            Some(t) if !t.is_empty() => format!("{t}.{key}"),
            _ => key.to_string(),
        })
    });
    located
        .or_else(|| quoted.map(str::to_string))
        .unwrap_or_else(|| "config".to_string())
}
