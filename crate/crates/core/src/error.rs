use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("recording `{recording}`: no valid pupil samples inside the {window_ms} ms baseline window")]
    EmptyBaseline { recording: String, window_ms: f64 },

    #[error("non-increasing timestamps at sample {index} (dt = {dt} ms)")]
    NonIncreasingTime { index: usize, dt: f64 },

    #[error("event stream detected with preset `{found}` but catalog expects `{expected}`")]
    PresetMismatch { expected: String, found: String },

    #[error("feature width mismatch: expected {expected}, got {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("epoch [{t0}, {t1}] ms lies outside recording [{start}, {end}] ms")]
    EpochOutOfRange { t0: f64, t1: f64, start: f64, end: f64 },

    #[error("only {groups} groups available for {folds} folds")]
    InsufficientGroups { groups: usize, folds: usize },

    #[error("group `{0}` mixes class labels")]
    HeterogeneousGroup(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
