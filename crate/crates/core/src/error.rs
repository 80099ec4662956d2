use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every operation in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("unknown element id `{0}`")]
    UnknownElement(String),

    #[error("subset is empty")]
    EmptySubset,

    #[error("subset has zero total mass")]
    ZeroMass,

    #[error("partition does not match the instance: {0}")]
    PartitionMismatch(String),

    #[error("predictor domain does not match the instance: {0}")]
    DomainMismatch(String),

    /// Exhaustive search refused: the domain is too large to enumerate.
    #[error("domain size {n} exceeds the enumeration cap max_n = {max_n}")]
    DomainTooLarge { n: usize, max_n: usize },

    /// A dynamic program refused: its state space exceeds the configured cap.
    #[error("state space of {states} states exceeds the cap max_states = {max_states}")]
    StateSpaceTooLarge { states: u128, max_states: u128 },

    #[error("marginal distribution is not uniform")]
    NotUniform,

    #[error("discretization degenerated: every joint mass floors to zero")]
    DegenerateInstance,

    #[error("eps = {0} is outside the valid range {1}")]
    EpsOutOfRange(f64, &'static str),

    #[error("sample is empty")]
    EmptySample,

    #[error("signature is all zero")]
    AllZero,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// True for errors that signal a feasibility refusal (a guarded limit was
    /// hit) rather than invalid input.
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::DomainTooLarge { .. } | Error::StateSpaceTooLarge { .. }
        )
    }
}
