use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario mismatch: expected {expected}, found {found}")]
    ScenarioMismatch { expected: String, found: String },

    #[error("invalid behavior: {0}")]
    InvalidBehavior(String),

    #[error("behavior is signalling (max deviation {deviation:.3e}, tolerance {tolerance:.1e})")]
    Signalling { deviation: f64, tolerance: f64 },

    #[error("operation requires a binary-outcome scenario")]
    NonBinary,

    #[error("invalid input distribution: {0}")]
    InvalidInputDistribution(String),

    #[error("deterministic strategy enumeration of {count} exceeds the limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("unsupported relaxation level: {0}")]
    UnsupportedLevel(String),

    #[error("program needs {needed} blocks, budget is {budget}")]
    BlockBudget { needed: u128, budget: usize },

    #[error("program is infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("dual solution unavailable")]
    DualUnavailable,

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("invalid counts record: {0}")]
    InvalidCounts(String),

    #[error("invalid model configuration: {0}")]
    InvalidModel(String),

    #[error("optimization did not exceed the local bound: best value {best}, bound {bound}")]
    NoViolation { best: f64, bound: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by malformed or inconsistent user input rather than by optimization.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidScenario(_)
                | Error::ScenarioMismatch { .. }
                | Error::InvalidBehavior(_)
                | Error::Signalling { .. }
                | Error::NonBinary
                | Error::InvalidInputDistribution(_)
                | Error::EnumerationTooLarge { .. }
                | Error::UnsupportedLevel(_)
                | Error::BlockBudget { .. }
                | Error::OutOfRange(_)
                | Error::InvalidCounts(_)
                | Error::InvalidModel(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
