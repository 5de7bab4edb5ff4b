use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("a delayed state is required for delay systems and forbidden otherwise")]
    DelayedStateMismatch,

    #[error("non-finite value during {context} at step {step}")]
    NonFinite { context: &'static str, step: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("component {component} has zero standard deviation")]
    ZeroVariance { component: usize },

    #[error("reservoir matrix had zero spectral radius after {attempts} draws")]
    ZeroSpectralRadius { attempts: usize },

    #[error("reservoir copies do not synchronize (fitted log-gap slope {slope})")]
    NonContracting { slope: f64 },

    #[error("normal matrix is singular (beta = {beta}); use a positive ridge parameter")]
    SingularNormalMatrix { beta: f64 },

    #[error("insufficient data: need {needed} samples, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("index {index} precedes the delay window (needs at least {warmup})")]
    IndexUnderflow { index: usize, warmup: usize },

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("map error is undefined for delay systems")]
    DelaySystem,

    #[error("persistence normalizer must be positive")]
    ZeroNormalizer,

    #[error("series of length {len} is shorter than one segment ({segment})")]
    SeriesTooShort { len: usize, segment: usize },

    #[error("non-positive Lyapunov exponent estimate {0}; increase the duration")]
    NonPositiveLyapunov(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
