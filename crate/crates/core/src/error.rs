use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate {0} is never observed")]
    CoordinateNeverObserved(usize),

    #[error("observed-block covariance is singular for record {record}")]
    SingularConditioning { record: usize },

    #[error("basis columns are not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,

    #[error("Mahalanobis Gram matrix of the basis is singular")]
    SingularGram,

    #[error("mean/median imputation requires a canonical-mask subspace")]
    NonCanonicalSubspace,

    #[error("strategy `{0}` requires fitted statistics that were not supplied")]
    MissingStatistics(&'static str),

    #[error("invalid number of components k={k} for dimension {dim}")]
    InvalidK { k: usize, dim: usize },

    #[error("basepoint lies outside the constraint (residual {residual:e})")]
    BasepointOutsideConstraint { residual: f64 },

    #[error("labels contain a single class")]
    SingleClass,

    #[error("invalid label {0}; expected -1 or +1")]
    InvalidLabel(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("non-numeric cell `{value}` at row {row}, column {column}")]
    NonNumericCell {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("removal target {target} unreachable; attainable range ({low}, {high})")]
    TargetUnreachable { target: f64, low: f64, high: f64 },

    #[error("rendering requires ambient dimension 2, found {0}")]
    NotTwoDimensional(usize),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_)
            | Error::InvalidK { .. }
            | Error::TargetUnreachable { .. }
            | Error::MissingStatistics(_)
            | Error::Toml(_) => ErrorKind::Config,
            Error::SingularConditioning { .. }
            | Error::SingularCovariance
            | Error::SingularGram => ErrorKind::Numerical,
            Error::Context { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
