use thiserror::Error;

/// Errors raised by the library. Variants carry enough context to point at
/// the offending parameter without a backtrace.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain mismatch: ({d1}, {n1}) vs ({d2}, {n2})")]
    DomainMismatch {
        d1: u32,
        n1: usize,
        d2: u32,
        n2: usize,
    },

    #[error("expected a distribution over {{0,1}}, got alphabet {d} and length {n}")]
    NotBinary { d: u32, n: usize },

    #[error("enumeration of {states} states exceeds the guard of {limit}")]
    EnumerationTooLarge { states: u128, limit: u128 },

    #[error("majority needs an odd number of inputs, got {0}")]
    EvenLength(usize),

    #[error("iterated majority needs a power-of-3 length, got {0}")]
    NotPowerOfThree(usize),

    #[error("alphabet size {0} is odd")]
    OddAlphabet(u32),

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("symbol {symbol} has mass {mass} outside the {bound}-perturbed box")]
    PerturbationViolated {
        symbol: u32,
        mass: String,
        bound: String,
    },

    #[error("bound not applicable: {0}")]
    BoundNotApplicable(String),

    #[error("simulation exceeded {0} rounds")]
    Timeout(u64),

    #[error("not a hex string: {0:?}")]
    NotHex(String),

    #[error("malformed script: {0}")]
    MalformedScript(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
