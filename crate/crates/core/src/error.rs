//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The chain has more than one closed communicating class, so the
    /// stationary distribution is not unique.
    #[error("chain is not irreducible: {closed_classes} closed communicating classes")]
    NotIrreducible { closed_classes: usize },

    /// The dual kernel is undefined on states carrying no stationary mass.
    #[error("stationary distribution assigns zero mass to state {state}; dual undefined there")]
    ZeroMassState { state: usize },

    /// Quadrature grids are one-dimensional in this version.
    #[error("unsupported spatial dimension {dim}: quadrature grid requires d = 1")]
    UnsupportedDimension { dim: usize },

    /// A dual transition matrix is required but could not be constructed.
    #[error("no dual kernel available: {0}")]
    MissingDual(String),

    /// Equilibrium analysis requires colonisation of the form s(θ)·f̄(x;θ).
    #[error("colonisation function is not phase-structured")]
    NotPhaseStructured,

    /// The inner recursion contracts at rate sup s, which must be < 1.
    #[error("sup survival {sup_s} >= 1 on the support; inner recursion does not contract")]
    SupSurvivalOne { sup_s: f64 },

    /// Series truncation leaves a tail larger than the accepted bound.
    #[error("series tail bound {bound:e} exceeds 1e-8 at truncation {truncation}; raise the truncation or allow the tail explicitly")]
    TruncationTail { bound: f64, truncation: usize },

    /// Power iteration did not reach the requested relative tolerance.
    #[error("power iteration did not converge in {max_iter} iterations (last relative change {last_delta:e})")]
    NoConvergence { max_iter: usize, last_delta: f64 },

    /// Fixed-point iteration ran out of iterations.
    #[error("fixed-point iteration exceeded {max_iter} iterations (residual {residual:e})")]
    MaxIterExceeded { max_iter: usize, residual: f64 },

    /// A model assumption required by the requested analysis fails.
    #[error("assumption ({name}) violated: {detail}")]
    AssumptionViolated { name: char, detail: String },

    /// Malformed input (dimension mismatches, invalid probabilities, ...).
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
