use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped loosely by the module that produces them. The CLI maps
/// them onto exit codes through [`Error::is_data_error`].
#[derive(Debug, Error)]
pub enum Error {
    // panel ingestion and validation
    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: usize, message: String },
    #[error("panel invariant violated: {0}")]
    InvariantViolation(String),
    #[error("panel contains no firm-period rows")]
    EmptyPanel,
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),

    // covariate processes and covariance handling
    #[error("invalid covariate process spec: {0}")]
    InvalidSpec(String),
    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("series is constant; cannot gaussianize")]
    ConstantSeries,
    #[error("value {value} outside the domain of transform `{transform}`")]
    DomainViolation { transform: String, value: f64 },
    #[error("matrix is not positive definite")]
    NonPdMatrix,

    // models and estimators
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation requires link `{expected}`, model uses `{found}`")]
    WrongLink { expected: String, found: String },
    #[error("no defaults observed")]
    NoDefaultsObserved,
    #[error("no censoring exits observed")]
    NoCensorObserved,
    #[error("class {0} has no observed defaults")]
    ClassWithoutDefaults(usize),
    #[error("schur complement of the common-factor block is singular")]
    SingularSchurComplement,
    #[error("regularizer is not concave (ascent failed)")]
    NonConcaveRegularizer,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("log-likelihood is not finite")]
    NonFiniteLikelihood,
    #[error("solver hit the iteration limit ({0} iterations) without converging")]
    IterationLimit(usize),

    // experiments
    #[error("no surviving firms in test window at period {0}")]
    NoSurvivorsInTestWindow(usize),
    #[error("infeasible asymptotic regime: {0}")]
    InfeasibleRegime(String),

    // configuration and serialization
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the input data or configuration rather than a
    /// defect in the program. These map to exit code 2 in the CLI.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::IoFailure(_) | Error::NonFiniteLikelihood)
    }
}
