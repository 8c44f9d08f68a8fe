use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),

    #[error("non-physiological {field} for subject {subject}: {value}")]
    NonPhysiological {
        field: &'static str,
        subject: String,
        value: f64,
    },

    #[error("duplicate subject_id `{0}`")]
    DuplicateSubject(String),

    #[error("cohort needs at least {needed} subjects, got {got}")]
    CohortTooSmall { needed: usize, got: usize },

    #[error("invalid sampling rate {0} Hz")]
    InvalidSamplingRate(f64),

    #[error("sampling rate {0} Hz is too low for the QRS filter bank (need >= 100 Hz)")]
    SamplingRateTooLow(f64),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-positive RR interval {value} ms at position {index}")]
    NonPositiveRr { index: usize, value: f64 },

    #[error("invalid stage annotation: {0}")]
    InvalidAnnotation(String),

    #[error("ECG amplitude {max_abs} mV exceeds the physiological range of +/-{limit} mV")]
    AmplitudeOutOfRange { max_abs: f64, limit: f64 },

    #[error("record of {seconds:.3} s is shorter than the {required} s minimum")]
    RecordTooShort { seconds: f64, required: f64 },

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("feature columns do not match the fitted model: expected {expected:?}, got {got:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },

    #[error("feature selection kept no columns{0}")]
    EmptySelection(String),

    #[error("fold {fold} has {size} test rows; at least 2 are required")]
    FoldTooSmall { fold: usize, size: usize },

    #[error("ablation configuration {0} has an empty candidate pool")]
    EmptyPool(String),

    #[error("models are indistinguishable: per-fold differences have zero variance")]
    Indistinguishable,

    #[error("subject {id}: {source}")]
    Subject {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn for_subject(self, id: &str) -> Self {
        Error::Subject {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}
