//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("qubit count {0} outside supported range 1..=8")]
    SystemSize(usize),

    #[error("{context}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("site index {site} out of range for {n_qubits} qubits")]
    SiteOutOfRange { site: usize, n_qubits: usize },

    #[error("{0} is not Hermitian within tolerance")]
    NonHermitian(&'static str),

    #[error("coupling matrix must be symmetric with zero diagonal")]
    BadCouplings,

    #[error("dephasing rate {0} is negative")]
    NegativeRate(f64),

    #[error("state vector is not normalized (norm² = {0})")]
    NotNormalized(f64),

    #[error("density matrix failed validation: {0}")]
    BadDensityMatrix(&'static str),

    #[error("imaginary residue {residue:e} exceeds tolerance in {context}")]
    ImaginaryResidue { context: &'static str, residue: f64 },

    #[error("concurrence radicand {0:e} is negative beyond tolerance")]
    NegativeRadicand(f64),

    #[error("target value {target} unreachable in state family (max {max})")]
    TargetUnreachable { target: f64, max: f64 },

    #[error("state family is not monotone in its parameter")]
    NotMonotone,

    #[error("non-finite density matrix entry at step {step} (t = {t_us} µs)")]
    NonFinite { step: usize, t_us: f64 },

    #[error("empty operator basis")]
    EmptyBasis,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::NonFinite { .. } => 3,
            _ => 1,
        }
    }
}
