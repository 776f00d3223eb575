use thiserror::Error;

/// Errors raised by the valuation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("too few records to split")]
    TooFewRecords,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty training fold")]
    EmptyTrainingFold,

    #[error("no usable features")]
    NoUsableFeatures,

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("covers required for attribution")]
    MissingCovers,

    #[error("index {index} out of range for {len} records")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("error trace needs at least two entries, got {0}")]
    TraceTooShort(usize),

    #[error("unknown {kind} token '{token}'")]
    UnknownToken { kind: &'static str, token: String },

    #[error("unsupported model version '{0}'")]
    UnsupportedVersion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
