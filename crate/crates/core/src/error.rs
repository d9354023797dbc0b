use thiserror::Error;

/// Errors raised by the benchmark library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("sample too small: need at least {need} rows, got {got}")]
    TooFewSamples { need: usize, got: usize },

    #[error("non-finite input")]
    NonFinite,

    #[error("rank-deficient sample covariance: m = {m} must exceed d = {d}")]
    RankDeficient { m: usize, d: usize },

    #[error("sample covariance is numerically singular")]
    NumericallySingular,

    #[error("rule `{0}` needs a forecast density, not a sample")]
    DensityRequired(String),

    #[error("rule `{0}` needs a forecast sample")]
    SampleRequired(String),

    #[error("invalid test case {case} (d = {d}, eps = {eps}): {reason}")]
    InvalidCase {
        case: String,
        d: usize,
        eps: f64,
        reason: String,
    },

    #[error("no closed form for the NLL gap of `{0}`")]
    NoClosedForm(String),

    #[error("tuning failed to bracket target power {target} on [{lo}, {hi}]")]
    BracketFailure { target: f64, lo: f64, hi: f64 },

    #[error("degenerate interpolation nodes: {0}")]
    DegenerateNodes(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
