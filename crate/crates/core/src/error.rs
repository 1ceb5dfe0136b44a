//! Error type shared across the crate.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CraError {
    /// Two moduli that must be coprime share a factor. Unreachable when all
    /// moduli come from one [`crate::primes::PrimeGenerator`] run.
    #[error("moduli {a} and {b} are not coprime")]
    NotCoprime { a: BigUint, b: BigUint },

    /// The prime generator ran out of primes of the configured bit size.
    #[error("prime generator exhausted at {bit_size} bits")]
    Exhausted { bit_size: u32 },

    /// Collapse was requested on a ladder holding no pairs.
    #[error("cannot collapse an empty ladder")]
    EmptyLadder,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Amortized schedules require 1 < rho < 2.
    #[error("invalid rho {0}: must lie strictly between 1 and 2")]
    InvalidRho(f64),

    #[error("cost prediction is not defined for the {0} strategy")]
    UnsupportedStrategy(&'static str),

    #[error("the deterministic strategy requires a result magnitude bound")]
    MissingBound,

    #[error("worker failed: {0}")]
    Worker(String),
}

pub type Result<T> = std::result::Result<T, CraError>;
