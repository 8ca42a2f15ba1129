use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("label {label} out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },

    /// A forward pass, loss, or gradient produced NaN/Inf. Training aborts
    /// instead of clipping.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("stale trace: {0}")]
    StaleTrace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature index {index} out of range for {len} features")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("unsupported model file version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("model file parse error at byte {offset}: {reason}")]
    Parse { offset: u64, reason: String },

    #[error("training aborted at epoch {epoch}, step {step}: {reason}")]
    TrainingAborted {
        epoch: usize,
        step: usize,
        reason: String,
    },

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("sample {index} failed: {source}")]
    SampleFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
