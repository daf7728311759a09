use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("cycle {cycle}: {field}[{index}] = {value} outside [{lo}, {hi}]")]
    CycleBounds {
        cycle: String,
        field: &'static str,
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{what} = {value} outside [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("battery power {p_bat} W exceeds the feasible ceiling {ceiling} W")]
    InfeasiblePower { p_bat: f64, ceiling: f64 },

    #[error("battery power {p_bat} W outside limits [{lo}, {hi}] W")]
    BatteryLimit { p_bat: f64, lo: f64, hi: f64 },

    #[error("configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("incompatible parameters: {0}")]
    Incompatible(String),

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error("training aborted at iteration {iteration}: {reason}")]
    Training { iteration: usize, reason: String },

    #[error("actor {actor}: {source}")]
    Actor {
        actor: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Error::Domain { what, value, lo, hi }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error beneath actor and context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Actor { source, .. } | Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
