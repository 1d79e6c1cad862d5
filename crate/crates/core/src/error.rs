use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A cell could not be parsed as a number. `row` is the 1-based data row (header excluded).
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dataset has no usable rows")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariates missing from cohort: {}", .0.join(", "))]
    MissingCovariates(Vec<String>),

    #[error("{method} did not converge after {iterations} iterations (last objective values: {trace:?})")]
    NonConvergence {
        method: String,
        iterations: usize,
        trace: Vec<f64>,
    },

    #[error("monotone likelihood: {0}")]
    Separation(String),

    #[error("censoring survival is zero for subjects {subjects:?}; weights undefined (use a positive floor)")]
    DegenerateWeights { subjects: Vec<usize> },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("every candidate learner failed: {}", .0.join("; "))]
    AllLearnersFailed(Vec<String>),

    #[error("bootstrap: metric undefined on {failures} of {iterations} resamples")]
    BootstrapFailure { failures: usize, iterations: usize },
}

impl Error {
    /// Numerical failures (as opposed to bad input) get a distinct exit code in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Separation(_)
                | Error::DegenerateWeights { .. }
                | Error::Divergence(_)
                | Error::AllLearnersFailed(_)
                | Error::BootstrapFailure { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::EmptyDataset => "empty_dataset",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::MissingCovariates(_) => "missing_covariates",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Separation(_) => "separation",
            Error::DegenerateWeights { .. } => "degenerate_weights",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Divergence(_) => "divergence",
            Error::AllLearnersFailed(_) => "all_learners_failed",
            Error::BootstrapFailure { .. } => "bootstrap_failure",
        }
    }
}
