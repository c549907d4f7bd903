use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{0} is not a prime")]
    NotPrime(u64),

    #[error("prime mismatch: {0} vs {1}")]
    PrimeMismatch(u32, u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("size cap exceeded: {what} needs {needed}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("refinement cannot shrink a grid (from M={from_m}, L={from_l} to M={to_m}, L={to_l})")]
    Shrink {
        from_m: i32,
        from_l: i32,
        to_m: i32,
        to_l: i32,
    },

    #[error("function is not supported in Z_p (support_exp = {0})")]
    SupportOutsideZp(i32),

    #[error("invalid norm: {0}")]
    InvalidNorm(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("witness family is zero")]
    ZeroFamily,

    #[error("resolution guard violated: {0}")]
    Resolution(String),

    #[error("budget must be positive")]
    ZeroBudget,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
