use thiserror::Error;

/// Coarse classification used by callers (the CLI maps these to exit codes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad or inconsistent input data.
    Input,
    /// A numerical routine failed (non-convergence, singular system).
    Numerical,
    /// A structural invariant was violated.
    Invariant,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Malformed(String),

    #[error("line {line}: malformed number {value:?} in column {column:?}")]
    MalformedNumber {
        line: usize,
        column: String,
        value: String,
    },

    #[error("line {line}: malformed date {value:?}")]
    MalformedDate { line: usize, value: String },

    #[error("line {line}: non-increasing dates ({date} does not follow {previous})")]
    NonIncreasingDates {
        line: usize,
        date: String,
        previous: String,
    },

    #[error("duplicate ticker {0:?}")]
    DuplicateTicker(String),

    #[error("line {line}: non-positive price {value} in column {column:?}")]
    NonPositivePrice {
        line: usize,
        column: String,
        value: f64,
    },

    #[error("line {line}: missing price in column {column:?}")]
    MissingValue { line: usize, column: String },

    #[error("line {line}: leading gap in column {column:?} (no earlier price to carry forward)")]
    LeadingGap { line: usize, column: String },

    #[error("zero-variance series: {0}")]
    ZeroVariance(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("{routine} did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate degree range: every node has degree {0}")]
    DegenerateDegreeRange(usize),

    #[error("insufficient support: {0} nonzero degree bins, need at least 3")]
    InsufficientSupport(usize),

    #[error("non-positive retained eigenvalue {value:e} at position {index}")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("degenerate loadings: loading cross-product is singular")]
    DegenerateLoadings,

    #[error("collinear factors: design matrix is rank deficient")]
    CollinearFactors,

    #[error("insufficient observations: {observations} rows for {factors} factors plus intercept")]
    InsufficientObservations { observations: usize, factors: usize },

    #[error("ticker {ticker}: {source}")]
    Ticker {
        ticker: String,
        #[source]
        source: Box<Error>,
    },

    #[error("unmapped tickers: {}", .0.join(", "))]
    UnmappedTickers(Vec<String>),

    #[error("no qualifying industries (each needs at least {0} members)")]
    NoQualifyingIndustries(usize),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::NoConvergence { .. }
            | Error::NonPositiveEigenvalue { .. }
            | Error::DegenerateLoadings
            | Error::CollinearFactors => ErrorKind::Numerical,
            Error::Invariant(_) => ErrorKind::Invariant,
            Error::Ticker { source, .. } => source.kind(),
            _ => ErrorKind::Input,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
