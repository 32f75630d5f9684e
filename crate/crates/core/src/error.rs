use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("pole placement: {0}")]
    PolePlacement(String),

    #[error("mesh budget exceeded: {0}")]
    Budget(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Argument outside the domain of a closed-form expression.
    #[error("outside the domain of definition: {0}")]
    OutOfDomain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("no convergence after {iterations} iterations: {reason}")]
    Convergence {
        reason: String,
        iterations: usize,
        energy_history: Vec<f64>,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),
}

impl Error {
    /// Whether the error stems from bad input rather than a failed computation.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidDomain(_)
                | Error::PolePlacement(_)
                | Error::Budget(_)
                | Error::Precondition(_)
                | Error::OutOfDomain(_)
                | Error::Config(_)
        )
    }
}
