use thiserror::Error;

/// Errors raised by the estimators, tests and panel loader.
#[derive(Debug, Error)]
pub enum HadError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error on line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("unbalanced panel: {0}")]
    Unbalanced(String),

    #[error("duplicate record for unit `{unit}` in period {period}")]
    DuplicateRecord { unit: String, period: i64 },

    #[error("nonzero dose before the treatment period: unit `{unit}`, period {period}")]
    DoseBeforeTreatment { unit: String, period: i64 },

    #[error("dose varies within unit `{unit}` across post-treatment periods")]
    DoseVaries { unit: String },

    #[error("period {0} is not in the panel")]
    UnknownPeriod(i64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dose has zero variance")]
    DegenerateDose,

    #[error("design is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("insufficient observations in the kernel window: {found} found, {required} required")]
    InsufficientObservations { found: usize, required: usize },

    #[error("unknown kernel `{0}` (expected epa, tri or uni)")]
    UnknownKernel(String),

    #[error("no mass point at the minimum dose; use the shifted continuous estimator instead")]
    NoMassPoint,

    #[error("the dose takes only two values: linearity holds mechanically, there is no room for testability")]
    NoRoomForTestability,

    #[error("{count} units have a zero dose: an untreated group exists, drop them before testing for a quasi-untreated group")]
    UntreatedUnits { count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl HadError {
    /// True for errors caused by the input data or arguments rather than by
    /// an internal failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, HadError::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, HadError>;
