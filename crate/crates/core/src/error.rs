use thiserror::Error;

/// Errors produced anywhere in the estimation stack.
#[derive(Debug, Error)]
pub enum EmmbError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    /// Row and column are 1-based, as a spreadsheet user would cite them.
    #[error("non-finite covariate value at ({row},{col})")]
    NonFinite { row: usize, col: usize },

    #[error("non-finite response value at row {row}")]
    NonFiniteResponse { row: usize },

    #[error("need at least 2 observations, got {n}")]
    TooFewRows { n: usize },

    #[error("dataset has no covariate columns")]
    NoCovariates,

    #[error("invalid window size n0={n0} for n={n} (need 2 <= n0 <= n)")]
    InvalidWindowSize { n0: usize, n: usize },

    #[error("invalid group layout: {0}")]
    InvalidGroups(String),

    #[error("window plan covers {plan_n} rows but the dataset has {data_n}")]
    PlanMismatch { plan_n: usize, data_n: usize },

    #[error("{context} is singular: smallest singular value {smallest:e} vs largest {largest:e}")]
    Singular {
        context: &'static str,
        smallest: f64,
        largest: f64,
    },

    #[error("residual variance of group {group} is zero")]
    ZeroGroupVariance { group: usize },

    #[error("invalid block length w={w} for n={n}")]
    InvalidBlockLength { w: usize, n: usize },

    #[error("block length w={w} must exceed the window size n0={n0}")]
    BlockNotLongerThanWindow { w: usize, n0: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-positive residual degrees of freedom: n={n}, windows={windows}, p={p}")]
    NonPositiveDf { n: usize, windows: usize, p: usize },

    #[error("total sum of squares is zero (constant response)")]
    ZeroTotalSumOfSquares,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("repetition {rep} failed: {source}")]
    RepFailed {
        rep: usize,
        #[source]
        source: Box<EmmbError>,
    },

    #[error("hourly grid error: {0}")]
    HourlyGrid(String),

    #[error("negative wind speed {speed} recovered at {timestamp}")]
    NegativeWindSpeed { timestamp: String, speed: f64 },

    #[error("date {date} lies outside the heating calendar span {start}..={end}")]
    DateOutOfSpan {
        date: String,
        start: String,
        end: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmmbError>;
