use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("network contains a directed cycle through node `{0}`")]
    CycleDetected(String),
    #[error("node `{name}` has arity {arity}; every variable needs at least 2 values")]
    BadArity { name: String, arity: usize },
    #[error("bad parent reference: {0}")]
    BadParentIndex(String),
    #[error("invalid network: {0}")]
    InvalidStructure(String),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("evidence is missing for blanket variable `{0}`")]
    MissingEvidence(String),
    #[error("label space of {size} assignments exceeds the enumeration cap {cap}")]
    LabelSpaceTooLarge { size: u128, cap: usize },
    #[error("gamma must be positive, got {0}")]
    NonpositiveGamma(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is not strictly feasible: {0}")]
    InfeasiblePoint(String),
    #[error("Hessian factorization failed after regularization retries")]
    LinearSolveFailure,
    #[error("could not construct a strictly feasible starting point")]
    NoFeasibleStart,
    #[error("structure is not renormalizable: child `{child}` has unmoralized parents `{a}` and `{b}`")]
    NotRenormalizable { child: String, a: String, b: String },
    #[error("parameters are not subnormalized (max column residual {0:e})")]
    NotSubnormalized(f64),
    #[error("parameters are not normalized (max column residual {0:e})")]
    NotNormalized(f64),
    #[error("evidence space of {size} configurations exceeds the enumeration cap {cap}")]
    EvidenceSpaceTooLarge { size: u128, cap: usize },
    #[error("invalid label vector: {0}")]
    InvalidLabelVector(String),
    #[error("class variables do not form a chain: {0}")]
    NotAChain(String),
    #[error("beta must lie in [0.5, 1], got {0}")]
    BadBeta(f64),
    #[error("unknown structure `{0}`: not a built-in name or an existing network file")]
    BadName(String),
    #[error("bad built-in size: {0}")]
    BadSize(String),
    #[error("dataset does not match the network: {0}")]
    SchemaMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable code used when a failure is recorded in a results table.
    pub fn code(&self) -> &'static str {
        match self {
            Error::CycleDetected(_) => "CycleDetected",
            Error::BadArity { .. } => "BadArity",
            Error::BadParentIndex(_) => "BadParentIndex",
            Error::InvalidStructure(_) => "InvalidStructure",
            Error::InvalidAssignment(_) => "InvalidAssignment",
            Error::MissingEvidence(_) => "MissingEvidence",
            Error::LabelSpaceTooLarge { .. } => "LabelSpaceTooLarge",
            Error::NonpositiveGamma(_) => "NonpositiveGamma",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InfeasiblePoint(_) => "InfeasiblePoint",
            Error::LinearSolveFailure => "LinearSolveFailure",
            Error::NoFeasibleStart => "NoFeasibleStart",
            Error::NotRenormalizable { .. } => "NotRenormalizable",
            Error::NotSubnormalized(_) => "NotSubnormalized",
            Error::NotNormalized(_) => "NotNormalized",
            Error::EvidenceSpaceTooLarge { .. } => "EvidenceSpaceTooLarge",
            Error::InvalidLabelVector(_) => "InvalidLabelVector",
            Error::NotAChain(_) => "NotAChain",
            Error::BadBeta(_) => "BadBeta",
            Error::BadName(_) => "BadName",
            Error::BadSize(_) => "BadSize",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }

    /// Whether the failure is a caller/input validation problem (CLI exit 1)
    /// rather than a runtime failure (CLI exit 2).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::CycleDetected(_)
                | Error::BadArity { .. }
                | Error::BadParentIndex(_)
                | Error::InvalidStructure(_)
                | Error::InvalidAssignment(_)
                | Error::BadBeta(_)
                | Error::BadName(_)
                | Error::BadSize(_)
                | Error::SchemaMismatch(_)
                | Error::InvalidConfig(_)
                | Error::Parse { .. }
                | Error::Csv(_)
        )
    }
}
