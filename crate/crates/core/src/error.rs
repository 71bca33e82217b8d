use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("index out of range for {what}: {index} >= {bound}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid group structure: {0}")]
    InvalidGroups(String),

    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperparameter { name: &'static str, reason: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("NaN encountered in {0}")]
    NotANumber(&'static str),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("non-finite gradient in block {block}")]
    NonFiniteGradient { block: &'static str },

    #[error(
        "line search failed after {shrinks} shrinkages (stepsize {stepsize:e}, \
         current risk {risk_current}, candidate risk {risk_candidate}, bound {bound})"
    )]
    LineSearchFailed {
        shrinks: usize,
        stepsize: f64,
        risk_current: f64,
        risk_candidate: f64,
        bound: f64,
    },

    #[error("objective diverged at iteration {iteration} (value {value})")]
    Diverged { iteration: usize, value: f64 },

    #[error("solver did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("{0} is undefined: the reference labels contain a single class")]
    UndefinedRate(&'static str),

    #[error("fold assignment infeasible: {0}")]
    FoldInfeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures of the optimizer itself rather than of its inputs.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::LineSearchFailed { .. }
                | Error::Diverged { .. }
                | Error::NotConverged { .. }
                | Error::NonFiniteGradient { .. }
        )
    }

    /// Short machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidGroups(_) => "invalid_groups",
            Error::InvalidHyperparameter { .. } => "invalid_hyperparameter",
            Error::EmptyDataset => "empty_dataset",
            Error::NotANumber(_) => "nan",
            Error::Parse { .. } => "parse",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::LineSearchFailed { .. } => "line_search_failed",
            Error::Diverged { .. } => "diverged",
            Error::NotConverged { .. } => "not_converged",
            Error::UndefinedRate(_) => "undefined_rate",
            Error::FoldInfeasible(_) => "fold_infeasible",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
