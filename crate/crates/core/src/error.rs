use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-contract input (empty sets, length mismatch, bad config).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quantity fell outside its mathematical domain, e.g. a zero denominator.
    #[error("domain error: {name} = {value} ({reason})")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A distribution collapsed to a point (σ = 0).
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// The optimizer landed on a bracket end, so there is no interior optimum.
    #[error("no interior optimum in [{lo}, {hi}]: search converged to {at}")]
    NoInteriorOptimum { lo: f64, hi: f64, at: f64 },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    /// A freeze was requested but every layer is already frozen.
    #[error("all {layers} layers are already frozen")]
    LayersExhausted { layers: usize },

    /// Text input that could not be parsed; `line` is 1-based.
    #[error("{}line {line}: {msg}", source_prefix(.source_name))]
    Parse {
        source_name: Option<PathBuf>,
        line: usize,
        msg: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn source_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            source_name: None,
            line,
            msg: msg.into(),
        }
    }

    /// Attaches a file name to a parse error.
    pub fn with_source(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, msg, .. } => Error::Parse {
                source_name: Some(path.into()),
                line,
                msg,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
