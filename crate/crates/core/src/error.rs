use thiserror::Error;

/// Errors raised by the solvers and geometry routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point outside the interior of the action set: {0}")]
    Domain(String),

    #[error("field shape mismatch: expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("missing boundary data for value field")]
    MissingBoundary,

    #[error("inner solver did not converge at time level {level} after {iterations} sweeps (update {update:e})")]
    SolverNonConvergence {
        level: usize,
        iterations: usize,
        update: f64,
    },

    #[error("explicit step violates the stability bound: dt = {dt:e} > {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error(
        "policy iteration stalled at time level {level}, worst node {node} (change {change:e})"
    )]
    PolicyIteration {
        level: usize,
        node: usize,
        change: f64,
    },

    #[error(
        "step size underflow at s = {s} after {halvings} halvings (probe increase {increase:e})"
    )]
    StepUnderflow {
        s: f64,
        halvings: usize,
        increase: f64,
    },

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("malformed field dump: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
