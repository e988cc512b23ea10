use thiserror::Error;

/// Errors produced anywhere in the staging pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path} at row {row}: {msg}")]
    Parse { path: String, row: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("no lesion voxels in mask ({0})")]
    NoLesion(String),

    #[error("feature undefined for sample {sample}: {msg}")]
    FeatureUndefined { sample: String, msg: String },

    #[error("mutual information estimation failed: class {class} has {n} samples, need at least {need}")]
    MiEstimation { class: usize, n: usize, need: usize },

    #[error("selection error: {0}")]
    Selection(String),

    #[error("training error: {0}")]
    Train(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 for configuration problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Round { source, .. } => source.exit_code(),
            _ => 2,
        }
    }

    pub fn in_round(self, round: usize) -> Error {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
