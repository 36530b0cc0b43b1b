use thiserror::Error;

/// Errors raised by the pricing, control, vault and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// A function argument lies outside the function's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Conditioning on an event of probability zero.
    #[error("conditional expectation undefined: {0}")]
    UndefinedConditional(String),

    /// Operation not allowed in the current oracle phase.
    #[error("oracle phase error: {0}")]
    Phase(String),

    /// Operation conflicts with protocol policy (e.g. LTV above ceiling).
    #[error("policy violation: {0}")]
    Policy(String),

    /// Operation not allowed in the current vault or auction state.
    #[error("state error: {0}")]
    State(String),

    /// Repayment larger than the outstanding liability.
    #[error("over-repayment: vault {vault} owes exactly {owed}, got {offered}")]
    OverRepayment { vault: u64, owed: f64, offered: f64 },

    /// Input data failed to parse or validate.
    #[error("{context}: line {line}: {message}")]
    Data {
        context: String,
        line: u64,
        message: String,
    },

    /// Not enough history to run a replay.
    #[error("insufficient history: need at least {required} records, got {actual}")]
    InsufficientHistory { required: usize, actual: usize },

    /// Unknown scenario preset or figure name.
    #[error("unknown {what} `{name}`; expected one of: {options}")]
    UnknownName {
        what: &'static str,
        name: String,
        options: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable kind label, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter { .. } => "parameter",
            Error::Domain(_) => "domain",
            Error::UndefinedConditional(_) => "undefined_conditional",
            Error::Phase(_) => "phase",
            Error::Policy(_) => "policy",
            Error::State(_) => "state",
            Error::OverRepayment { .. } => "over_repayment",
            Error::Data { .. } => "data",
            Error::InsufficientHistory { .. } => "insufficient_history",
            Error::UnknownName { .. } => "unknown_name",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Checks that `value` is finite and satisfies `ok`, otherwise a parameter error.
pub(crate) fn check(name: &'static str, value: f64, ok: bool, expected: &str) -> Result<()> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("expected {expected}, got {value}"),
        ))
    }
}
