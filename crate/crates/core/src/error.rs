use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("eigenvalue iteration did not converge within {iterations} sweeps")]
    NoConvergence { iterations: usize },

    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unsupported model family `{0}`")]
    UnsupportedFamily(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("no counterfactual satisfies the constraints")]
    Infeasible,
    #[error("program is unbounded")]
    Unbounded,
    #[error("solver subproblem failed: {0}")]
    SubproblemFailure(String),
    #[error("no prototype carries the requested label")]
    NoPrototypeForTarget,
    #[error("no leaf produces the requested prediction")]
    NoSuchPrediction,
    #[error("path conditions are inconsistent")]
    InconsistentPath,
    #[error("no counterfactual found: {0}")]
    NotFound(String),
}

impl Error {
    /// Short machine-readable name of the failure.
    pub fn reason(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::NotSymmetric => "NotSymmetric",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::Parse(_) => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::UnsupportedFamily(_) => "UnsupportedFamily",
            Error::Evaluation(_) => "EvaluationError",
            Error::EmptyDataset => "EmptyDataset",
            Error::InvalidQuery(_) => "InvalidQuery",
            Error::InvalidTarget(_) => "InvalidTarget",
            Error::Infeasible => "Infeasible",
            Error::Unbounded => "Unbounded",
            Error::SubproblemFailure(_) => "SubproblemFailure",
            Error::NoPrototypeForTarget => "NoPrototypeForTarget",
            Error::NoSuchPrediction => "NoSuchPrediction",
            Error::InconsistentPath => "InconsistentPath",
            Error::NotFound(_) => "NotFound",
        }
    }

    /// True for outcomes meaning "no counterfactual exists or none was found",
    /// as opposed to malformed input.
    pub fn is_no_counterfactual(&self) -> bool {
        matches!(
            self,
            Error::Infeasible
                | Error::Unbounded
                | Error::SubproblemFailure(_)
                | Error::NoPrototypeForTarget
                | Error::NoSuchPrediction
                | Error::NotFound(_)
                | Error::NoConvergence { .. }
        )
    }
}
