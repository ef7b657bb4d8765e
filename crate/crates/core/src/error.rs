use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("{op} requires a non-empty input")]
    EmptyInput { op: &'static str },

    #[error("loss must be scalar-shaped, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("category {value} out of range for feature `{feature}` (cardinality {cardinality})")]
    CategoryOutOfRange {
        feature: String,
        value: usize,
        cardinality: usize,
    },

    #[error("missing value for feature `{feature}` on {day}")]
    MissingFeature { day: String, feature: String },

    #[error("feature window must span {expected} days, got {found}")]
    WindowLength { expected: usize, found: usize },

    #[error("expected {expected} values, got {found}")]
    Length { expected: usize, found: usize },

    #[error("series too short: need at least {required} days, have {found}")]
    SeriesTooShort { required: usize, found: usize },

    #[error("too few samples: need at least {required}, have {found}")]
    TooFewSamples { required: usize, found: usize },

    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("scaler used before it was fitted")]
    ScalerNotFitted,

    #[error("no gradient available for parameter `{0}`")]
    MissingGradient(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("checkpoint format version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("checkpoint is missing parameter `{0}`")]
    MissingParameter(String),

    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("config mismatch on `{field}`: expected {expected}, found {found}")]
    ConfigMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
