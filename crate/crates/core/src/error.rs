use thiserror::Error;

/// Errors raised anywhere in the learning pipeline.
///
/// Each variant carries a stable class name (see [`Error::class`]) so the
/// command line can print a machine-parsable error line.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown node name `{0}`")]
    UnknownName(String),
    #[error("invalid node name `{0}`")]
    InvalidName(String),
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("self arc on `{0}`")]
    SelfArc(String),
    #[error("graph contains a directed cycle through {0:?}")]
    CyclicInput(Vec<String>),
    #[error("node sets differ")]
    NodeSetMismatch,
    #[error("too many nodes: {0} (limit 64)")]
    TooManyNodes(usize),
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("node `{node}` retains {retained} parents but the limit is {limit}")]
    RetainedExceedsLimit {
        node: String,
        retained: usize,
        limit: usize,
    },

    #[error("column `{0}` is missing")]
    MissingColumn(String),
    #[error("column `{0}` has no declared distribution")]
    UnspecifiedColumn(String),
    #[error("binomial column `{column}` has {levels} distinct levels (need exactly 2)")]
    BadLevelCount { column: String, levels: usize },
    #[error("poisson column `{column}` has negative value at row {row}")]
    NegativeCount { column: String, row: usize },
    #[error("column `{column}` has a missing value at row {row}")]
    MissingValue { column: String, row: usize },
    #[error("column `{column}` has unparsable value `{value}` at row {row}")]
    BadValue {
        column: String,
        row: usize,
        value: String,
    },
    #[error("gaussian column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("unknown distribution `{0}`")]
    UnknownDistribution(String),
    #[error("`{0}` cannot be its own parent")]
    SelfParent(String),
    #[error("parent `{0}` listed twice")]
    DuplicateParent(String),

    #[error("no observations")]
    NoObservations,
    #[error("non-finite value in design or response")]
    NonFiniteData,
    #[error("negative Hessian is not positive definite")]
    NonPositiveDefiniteHessian,
    #[error("fit did not converge: {0}")]
    FitFailed(String),
    #[error("marginal grid too narrow for `{0}`: density at boundary exceeds 1e-3 of peak")]
    RangeTooNarrow(String),
    #[error("method/score mismatch: {0}")]
    ScoreMismatch(String),

    #[error("parent set {mask:#x} of node {node} is not in the cache")]
    NotInCache { node: usize, mask: u64 },
    #[error("cache fingerprint {found} does not match dataset fingerprint {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("cache is empty")]
    EmptyCache,
    #[error("no structure satisfies the constraints")]
    Infeasible,
    #[error("score table needs {needed} bytes, budget is {budget}")]
    MemoryLimit { needed: u64, budget: u64 },

    #[error("poisson linear predictor overflow for `{node}` (rate {rate:e})")]
    PoissonOverflow { node: String, rate: f64 },
    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyReplicateFailures { failed: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable identifier used in CLI error lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::UnknownName(_) => "UnknownName",
            Error::InvalidName(_) => "InvalidName",
            Error::DuplicateName(_) => "DuplicateName",
            Error::Syntax { .. } => "SyntaxError",
            Error::SelfArc(_) => "SelfArc",
            Error::CyclicInput(_) => "CyclicInput",
            Error::NodeSetMismatch => "NodeSetMismatch",
            Error::TooManyNodes(_) => "TooManyNodes",
            Error::InvalidConstraints(_) => "InvalidConstraints",
            Error::RetainedExceedsLimit { .. } => "RetainedExceedsLimit",
            Error::MissingColumn(_) => "MissingColumn",
            Error::UnspecifiedColumn(_) => "UnspecifiedColumn",
            Error::BadLevelCount { .. } => "BadLevelCount",
            Error::NegativeCount { .. } => "NegativeCount",
            Error::MissingValue { .. } => "MissingValue",
            Error::BadValue { .. } => "BadValue",
            Error::ZeroVariance(_) => "ZeroVariance",
            Error::UnknownDistribution(_) => "UnknownDistribution",
            Error::SelfParent(_) => "SelfParent",
            Error::DuplicateParent(_) => "DuplicateParent",
            Error::NoObservations => "NoObservations",
            Error::NonFiniteData => "NonFiniteData",
            Error::NonPositiveDefiniteHessian => "NonPositiveDefiniteHessian",
            Error::FitFailed(_) => "FitFailed",
            Error::RangeTooNarrow(_) => "RangeTooNarrow",
            Error::ScoreMismatch(_) => "ScoreMismatch",
            Error::NotInCache { .. } => "NotInCache",
            Error::FingerprintMismatch { .. } => "FingerprintMismatch",
            Error::EmptyCache => "EmptyCache",
            Error::Infeasible => "Infeasible",
            Error::MemoryLimit { .. } => "MemoryLimit",
            Error::PoissonOverflow { .. } => "PoissonOverflow",
            Error::TooManyReplicateFailures { .. } => "TooManyReplicateFailures",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
