use thiserror::Error;

/// A candidate solution reported when the outer scan finds more than one root.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RootCandidate {
    /// Volatility-like parameter (σ for Black–Scholes, ε for the lattice).
    pub inner: f64,
    /// Rate-like parameter (ρ).
    pub rate: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate inputs: {0}")]
    DegenerateInputs(&'static str),

    #[error("the two quotes have identical strikes and kinds")]
    IdenticalStrikes,

    #[error("price {price} is outside the no-arbitrage interval ({lower}, {upper})")]
    PriceOutOfBounds { price: f64, lower: f64, upper: f64 },

    #[error("root lies outside the search bracket [{lo}, {hi}]")]
    BracketExhausted { lo: f64, hi: f64 },

    #[error("no sign change found over {valid} of {scanned} scanned rates")]
    NoRoot { scanned: usize, valid: usize },

    #[error("{} distinct roots found", roots.len())]
    MultipleRoots { roots: Vec<RootCandidate> },

    #[error("inner solve failed: {0}")]
    InnerFailure(String),

    #[error("solver stopped with residual {residual:e} above tolerance {tolerance:e}")]
    Unconverged { residual: f64, tolerance: f64 },

    #[error("lattice with {periods} periods exceeds the supported maximum of {max}")]
    TooManyPeriods { periods: usize, max: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed document: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
