use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },

    #[error("{file} row {row}: `{id}` does not refer to a known text")]
    DanglingReference { file: String, row: usize, id: String },

    #[error("{file} row {row}: duplicate {what} `{id}`")]
    DuplicateId { file: String, row: usize, what: &'static str, id: String },

    #[error("{file} row {row}: {message}")]
    InvariantViolation { file: String, row: usize, message: String },

    #[error("{file} row {row}: {message}")]
    Parse { file: String, row: usize, message: String },

    #[error("text `{text_id}` has no `{feature}` ratings")]
    MissingRating { text_id: String, feature: String },

    #[error("empty treatment arm: {0}")]
    EmptyArm(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("clustered standard errors need at least two clusters, found {0}")]
    SingleCluster(usize),

    #[error("vocabulary is empty after pruning tokens with document frequency below {min_df}")]
    EmptyVocabulary { min_df: usize },

    #[error("fold {fold}: training split has no {arm} units")]
    DegenerateFold { fold: usize, arm: &'static str },

    #[error("{count} propensity scores are exactly 0 or 1")]
    ExtremePropensity { count: usize },

    #[error("AIPW is not computable: {count} units have a zero weight denominator")]
    NonComputable { count: usize },

    #[error("every unit was trimmed by propensity bounds [{lo}, {hi}]")]
    AllTrimmed { lo: f64, hi: f64 },

    #[error("missing estimate for estimator `{estimator}`, outcome `{outcome}`, replica {replica}")]
    MissingEstimate { estimator: String, outcome: String, replica: usize },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: String, message: String },

    #[error("{0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid_parameter(name: &str, message: impl Into<String>) -> Self {
        Error::InvalidParameter { name: name.to_string(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Errors caused by bad inputs (as opposed to I/O or numerical failures).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn { .. }
                | Error::DanglingReference { .. }
                | Error::DuplicateId { .. }
                | Error::InvariantViolation { .. }
                | Error::Parse { .. }
                | Error::MissingRating { .. }
                | Error::InvalidParameter { .. }
                | Error::InvalidInput(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
