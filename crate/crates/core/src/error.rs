use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operation not supported for {mode} tensors: {what}")]
    UnsupportedTensor { mode: &'static str, what: &'static str },

    #[error("point ({x}, {y}) coincides with a singularity of the field")]
    Singular { x: f64, y: f64 },

    #[error("iterative solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("mesh too coarse: {0}")]
    MeshTooCoarse(String),

    #[error("lattice enumeration exceeded the cap of {cap} elements")]
    EnumerationCap { cap: usize },

    #[error("enumeration radius {radius} insufficient: lattice vector ({x}, {y}) on the boundary shell is still efficient")]
    RadiusInsufficient { radius: f64, x: f64, y: f64 },

    #[error("relaxation infeasible: {0}")]
    Infeasible(String),

    #[error("extrapolation rejected: {0}")]
    Extrapolation(String),

    #[error("inconsistent results: {0}")]
    Inconsistent(String),

    #[error("configuration violates admissibility: {0}")]
    Inadmissible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
