//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid parameters are unusable (stencil too short, bad dimension, ...).
    #[error("invalid grid: {0}")]
    BadGrid(String),

    /// A structural bound on the model fails at a sampled point.
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// Trajectory integration produced a NaN or infinity.
    #[error("non-finite state during integration at step {step}")]
    NonFiniteState { step: usize },

    /// The implicit scheme's safety margin eps * Delta * dt < 1 fails.
    #[error("contraction violated: eps * Delta * dt = {0:.6} >= 1")]
    ContractionViolated(f64),

    /// Fixed-point iteration ran out of its iteration budget.
    #[error("no convergence after {iterations} iterations (last sup-change {last_change:.3e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    /// A meaningfully negative cycle survives; the prescribed drift of the
    /// costs (usually the critical value) is off.
    #[error("negative cycle: {0}")]
    NegativeCycle(String),

    /// Cycle canceling did not settle within its round budget.
    #[error("iteration limit reached after {0} cycle-canceling rounds")]
    IterationLimit(usize),

    /// A potential handed to the tight-subgraph machinery is not a discrete
    /// subsolution.
    #[error("not a subsolution: defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    NotSubsolution { defect: f64, tol: f64 },

    /// No path of the requested length exists.
    #[error("unreachable: no {steps}-step path from node {from} to node {to}")]
    Unreachable { from: usize, to: usize, steps: usize },

    /// A selection formula was invoked with no measures.
    #[error("empty measure list")]
    EmptyMeasureList,

    /// A measure violates a precondition (support off the Aubry set, ...).
    #[error("bad measure: {0}")]
    BadMeasure(String),

    /// The graph contains no cycle reachable from the scan root.
    #[error("no reachable cycle in graph")]
    NoCycle,

    /// Invalid configuration or parameters.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that indicate bad input (config/schema) rather than a
    /// numerical failure. The CLI maps these to exit code 2, the rest to 3.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Io(_) | Error::BadGrid(_))
    }
}
