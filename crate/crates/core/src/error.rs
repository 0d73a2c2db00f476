use thiserror::Error;

/// Errors shared across the crate. Variants are grouped by the kind of
/// failure so a front end can map them onto exit codes: bad input
/// (parse/shape/hypothesis), bad artifact format, or an exceeded budget.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {position}: {msg}")]
    Parse { position: usize, msg: String },

    #[error("coefficient of t{index} is zero after aggregation")]
    ZeroCoefficient { index: usize },

    #[error("variable indices must cover 1..={max} with no gaps; t{missing} is missing")]
    IndexGap { missing: usize, max: usize },

    #[error("arity {arity} exceeds the cap of {cap} variables")]
    ArityTooLarge { arity: usize, cap: usize },

    #[error("arithmetic overflow while {context}")]
    Overflow { context: String },

    #[error("shape mismatch: {msg}")]
    ShapeMismatch { msg: String },

    #[error("coordinate {index} out of range for a module with {len} factors")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("factors are not pairwise coprime: gcd({a}, {b}) > 1")]
    NotCoprime { a: u64, b: u64 },

    #[error("hypothesis violated: {msg}")]
    HypothesisViolated { msg: String },

    #[error("budget exceeded while {what}: needs {needed}, cap is {cap}")]
    BudgetExceeded {
        what: String,
        needed: String,
        cap: String,
    },

    #[error("certificate rejected: {msg}")]
    CertificateInvalid { msg: String },

    #[error("unsupported artifact format: {msg}")]
    Format { msg: String },

    #[error("input is not certified: {msg}")]
    NotCertified { msg: String },

    #[error("undefined quantity: {msg}")]
    Undefined { msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
