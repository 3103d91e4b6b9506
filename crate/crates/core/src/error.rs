use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: {0}")]
    InvalidRange(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("noise prediction requested at t = 0")]
    TimeZero,

    #[error("denoiser failure: {0}")]
    Denoiser(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty region")]
    EmptyRegion,

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, loss: f64 },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("invalid config value for `{key}`: {message}")]
    ConfigValue { key: String, message: String },

    #[error("missing completed images for {} sample(s): {}", .0.len(), .0.join(", "))]
    MissingSamples(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Configuration problems the user can fix by editing input; the CLI maps
    /// these to exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::ConfigParse { .. } | Error::ConfigValue { .. })
    }

    pub(crate) fn shape(expected: impl std::fmt::Debug, found: impl std::fmt::Debug) -> Self {
        Error::ShapeMismatch {
            expected: format!("{expected:?}"),
            found: format!("{found:?}"),
        }
    }
}
