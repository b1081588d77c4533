use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("f = {f} out of range for n = {n}")]
    ByzantineBound { n: usize, f: usize },

    #[error("subset enumeration too large: n = {n}, C(n, {k}) = {count}")]
    EnumerationTooLarge { n: usize, k: usize, count: u128 },

    #[error("rule `{0}` has no certified resilience coefficient")]
    NoCertifiedCoefficient(&'static str),

    #[error("geometric median did not converge within {iterations} iterations")]
    GmNotConverged {
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("attack `{0}` is a per-worker gradient corruption, not a crafted vector")]
    NotCraftedAttack(&'static str),

    #[error("unsupported problem: {0}")]
    UnsupportedProblem(&'static str),

    #[error("theorem mode unavailable: {0}")]
    TheoremMode(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
