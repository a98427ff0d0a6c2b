//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters violate an invariant (non-stochastic rows, entries
    /// outside [0,1], dimension mismatch, ...).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Malformed input to an operation (length mismatch, empty sequence, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The transition matrix does not describe an irreducible chain.
    #[error("reducible chain: {0}")]
    ReducibleChain(String),

    /// A model assumption needed by the operation does not hold
    /// (e.g. two identical connectivity columns).
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    /// The requested feasible set is empty.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The solver hit its iteration budget before meeting its tolerances.
    #[error("solver did not converge after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    NoConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    /// A required estimator entry is undefined (empty group).
    #[error("missing estimate: {0}")]
    MissingEstimate(String),

    /// The observations have probability zero under the supplied HMM.
    #[error("degenerate likelihood: {0}")]
    DegenerateLikelihood(String),

    /// Bad experiment or CLI configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
