use thiserror::Error;

/// Errors raised by the library. Every variant is a configuration or
/// precondition problem; no operation fails once its inputs are valid.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChmError {
    #[error("{what} = {value} is outside its domain ({domain})")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("arm index {index} out of range for {arms} arms")]
    ArmOutOfRange { index: usize, arms: usize },

    #[error("degenerate query ({lower}, {upper}): {reason}")]
    DegenerateQuery {
        lower: f64,
        upper: f64,
        reason: &'static str,
    },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, ChmError>;
