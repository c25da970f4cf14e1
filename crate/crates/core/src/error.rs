use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("action {action} out of range for {count} actions")]
    InvalidAction { action: usize, count: usize },

    #[error("episode has ended; call reset before stepping again")]
    EpisodeOver,

    #[error("insufficient data: need {need} stored transitions, have {have}")]
    InsufficientData { need: usize, have: usize },

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown environment `{name}`; valid options: {valid}")]
    UnknownEnv { name: String, valid: String },

    #[error("unknown quantity `{name}`; valid options: {valid}")]
    UnknownQuantity { name: String, valid: String },

    #[error("degenerate normalization range: best and worst baseline both score {0}")]
    DegenerateRange(f64),

    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
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

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            got,
        })
    }
}
