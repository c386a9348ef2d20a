//! Error types shared across the simulator.

use thiserror::Error;

/// Everything that can go wrong while building, stepping, or aggregating.
#[derive(Debug, Error)]
pub enum SimError {
    /// Eigenfunction indices are 1-based; `k = 0` has no eigenpair.
    #[error("eigenfunction index must be >= 1")]
    InvalidIndex,

    /// A computation produced NaN or infinity.
    #[error("non-finite value encountered in {0}")]
    NumericalFault(&'static str),

    /// The quadrature grid is too coarse to integrate `u^(2n-1)` without
    /// aliasing at the requested polynomial exponent.
    #[error("quadrature grid with {nodes} nodes cannot dealias exponent {n_poly} at dimension {dim}")]
    DealiasViolation {
        nodes: usize,
        n_poly: u32,
        dim: usize,
    },

    /// Two coefficient vectors (or a vector and a grid) disagree in size.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// The projected initial condition has zero norm and cannot be normalized.
    #[error("initial condition vanishes after projection")]
    DegenerateInitialCondition,

    /// A trajectory left the representable range at the given step index.
    #[error("path blew up at step {0}")]
    PathBlowUp(usize),

    /// The unprojected step landed exactly at zero, so rescaling is undefined.
    #[error("state norm vanished after step")]
    ZeroNormAfterStep,

    /// A diagnostic needed the Brownian increments but the record lacks them.
    #[error("path record does not carry the increments required here")]
    IncompleteRecord,

    /// A probe time does not sit on the uniform step grid.
    #[error("time {0} is not aligned with the step grid")]
    OffGridTime(f64),

    /// A refinement study needs each step size to be exactly half the previous.
    #[error("step sizes are not dyadic refinements of each other")]
    NonNestedSteps,

    /// No path survived to the horizon, so ensemble means are undefined.
    #[error("all {0} paths blew up")]
    AllPathsBlewUp(usize),

    /// A config file line could not be parsed.
    #[error("config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A config field parsed but violates an invariant.
    #[error("invalid config field `{field}`: {msg}")]
    Validation { field: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
