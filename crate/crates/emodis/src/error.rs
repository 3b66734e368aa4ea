use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid corpus spec: {0}")]
    CorpusSpec(String),

    #[error("unknown phone symbol `{0}`")]
    UnknownPhone(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("manifest {path}: line {line}: {msg}")]
    ManifestParse { path: PathBuf, line: usize, msg: String },

    #[error("missing feature file for utterance `{uid}` at {path}")]
    MissingFeature { uid: String, path: PathBuf },

    #[error("feature file {path}: {msg}")]
    FeatureFormat { path: PathBuf, msg: String },

    #[error("checkpoint {path}: unsupported version {found} (expected {expected})")]
    CheckpointVersion { path: PathBuf, found: u32, expected: u32 },

    #[error("checkpoint {path}: {msg}")]
    CheckpointFormat { path: PathBuf, msg: String },

    #[error("training diverged at step {step}; last finite checkpoint: {last_checkpoint:?}")]
    Diverged { step: usize, last_checkpoint: Option<PathBuf> },

    #[error("probe: class `{0}` has fewer than {1} items")]
    ProbeClassTooSmall(String, usize),

    #[error("verifier not trained to required accuracy: {reached:.3} < {required:.3}")]
    VerifierUntrained { reached: f64, required: f64 },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
