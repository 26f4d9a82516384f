use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),

    #[error("empty input sequence")]
    EmptyInput,

    #[error("sample time mismatch: {0} s vs {1} s")]
    SampleTimeMismatch(f64, f64),

    #[error("H2 norm diverges: system is not asymptotically stable")]
    NormDiverges,

    /// Poles are reported as `(re, im)` pairs in the z-plane.
    #[error("closed loop is unstable, poles {poles:?}")]
    UnstableLoop { poles: Vec<(f64, f64)> },

    #[error("ill-conditioned regression, singular values {0:?}")]
    IllConditioned(Vec<f64>),

    #[error("reference model has a zero numerator")]
    ZeroNumerator,

    #[error("reference model is non-minimum-phase and cannot be inverted")]
    NonMinimumPhase,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("every sampled candidate was infeasible")]
    AllInfeasible,

    #[error("gain tuning failed for configuration {config_id}: every candidate destabilized the loop")]
    TuningFailed { config_id: u32 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
