use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty record")]
    EmptyRecord,

    #[error("non-finite sample at row {row}, channel `{channel}`")]
    NonFinite { row: usize, channel: String },

    #[error("duplicate channel name `{0}`")]
    DuplicateChannel(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error("channel `{0}` is used in more than one role")]
    ChannelCollision(String),

    #[error("lag window {lag} leaves no embedded points in a record of length {len}")]
    LagTooLong { lag: usize, len: usize },

    #[error("insufficient data: {required} samples required, {available} available")]
    InsufficientData { required: usize, available: usize },

    #[error("at least {required} points are required, got {got}")]
    TooFewPoints { required: usize, got: usize },

    #[error("neighbor order k = {k} is out of range for {n_points} points")]
    InvalidK { k: usize, n_points: usize },

    #[error("point {index} has a zero distance to its k-th neighbor (duplicate samples; enable jitter)")]
    DegenerateDistance { index: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model is not stable: spectral radius {0:.6} >= 1")]
    Unstable(f64),

    #[error("matrix is not positive definite: leading minor of order {order} is {value:.6e}")]
    NotPositiveDefinite { order: usize, value: f64 },

    #[error("rank-deficient regression: design has {columns} columns but numerical rank {rank} (condition estimate {condition:.3e})")]
    RankDeficient { columns: usize, rank: usize, condition: f64 },

    #[error("trajectory diverged at step {index} (burn-in included)")]
    Diverged { index: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateDistance { .. } | Error::RankDeficient { .. } | Error::Diverged { .. } => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
