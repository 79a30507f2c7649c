use thiserror::Error;

/// Errors raised by the laboratory.
///
/// Step indices in messages are 1-based, matching the chain notation used
/// throughout the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("kernel {step}, row {row}: {reason}")]
    InvalidKernel {
        step: usize,
        row: usize,
        reason: String,
    },

    #[error("zero transition density at step {step}, row {row}, column {col}")]
    EllipticityViolation { step: usize, row: usize, col: usize },

    #[error("state {state} has zero marginal mass at step {step}")]
    DegenerateMarginal { step: usize, state: usize },

    #[error("lag {lag} from step {step} leaves the horizon {horizon}")]
    LagOutOfRange {
        step: usize,
        lag: usize,
        horizon: usize,
    },

    #[error("invalid pin at step {step}: {reason}")]
    InvalidPin { step: usize, reason: String },

    #[error("pinned configuration has probability zero")]
    ImpossiblePin,

    #[error("support of S_N needs {needed} cells, cap is {cap}")]
    SupportOverflow { needed: usize, cap: usize },

    #[error("quadrature needs {needed} nodes, budget is {budget}")]
    NodeBudgetExceeded { needed: usize, budget: usize },

    #[error("logarithm of a jet with vanishing constant term ({0:e})")]
    LogOfVanishingJet(f64),

    #[error("variance {0:e} is too small to normalize")]
    DegenerateVariance(f64),

    #[error("characteristic function at t = {t} has modulus {modulus:e}; use quadrature")]
    ResonantDegenerate { t: f64, modulus: f64 },

    #[error("order mismatch: need {needed}, have {available}")]
    OrderMismatch { needed: usize, available: usize },

    #[error("discarded tail coefficient {tail:e} exceeds budget {budget:e}")]
    TailBudgetExceeded { tail: f64, budget: f64 },

    #[error("step {step} outside 1..{limit}")]
    StepOutOfRange { step: usize, limit: usize },

    #[error("normalized products did not stabilize at step {step} (last residual {residual:e})")]
    NoContraction { step: usize, residual: f64 },

    #[error("interval width {delta} must be positive and below {limit}")]
    DeltaTooLarge { delta: f64, limit: f64 },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("io error at {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
