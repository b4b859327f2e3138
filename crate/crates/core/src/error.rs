use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset is empty after dropping incomplete records")]
    EmptyData,

    #[error("rejected record: {0}")]
    RejectedRecord(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("models are not nested or the full fit did not converge: {0}")]
    Nesting(String),

    #[error("test covariance is singular (condition number {condition:.3e})")]
    SingularCovariance { condition: f64 },

    #[error("out-of-bag estimate undefined: {0}")]
    OobUndefined(String),

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("rate undefined: confusion matrix has no records")]
    UndefinedRate,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::EmptyData => "empty_data",
            Error::RejectedRecord(_) => "rejected_record",
            Error::Input(_) => "input",
            Error::Spec(_) => "spec",
            Error::Fit(_) => "fit",
            Error::Nesting(_) => "nesting",
            Error::SingularCovariance { .. } => "singular_covariance",
            Error::OobUndefined(_) => "oob_undefined",
            Error::Stratification(_) => "stratification",
            Error::UndefinedRate => "undefined_rate",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }
}
