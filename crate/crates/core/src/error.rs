use std::fmt;

/// Errors surfaced by the toolkit. Variants carry a human-readable message;
/// callers that need to branch on the kind match on the variant.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A caller violated a documented precondition (dimension mismatch,
    /// non-finite input, empty slice, ...).
    InvalidArgument(String),
    /// Every sample in a batch was infeasible, so no weight or estimate
    /// can be formed.
    NoViableSample(String),
    /// The sampler or planner exhausted its retry budget.
    BudgetExhausted(String),
    /// Configuration file or preset problems.
    Config(String),
    /// Filesystem problems while writing reports or plots.
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::NoViableSample(m) => write!(f, "no viable sample: {m}"),
            Error::BudgetExhausted(m) => write!(f, "budget exhausted: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Shorthand for `Error::InvalidArgument` with a formatted message.
macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(format!($($arg)*))
    };
}

pub(crate) use invalid;
