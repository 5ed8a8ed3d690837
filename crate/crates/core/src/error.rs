use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left} cells per axis vs {right}")]
    GridMismatch { left: usize, right: usize },

    #[error("norm exponent p = {0} must satisfy 1 <= p < inf")]
    InvalidExponent(f64),

    #[error("field is not mean-zero: mean {mean:e} exceeds tolerance {tol:e}")]
    NotMeanZero { mean: f64, tol: f64 },

    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("value {value} outside the admissible interval (0, {upper})")]
    OutOfDomain { value: f64, upper: f64 },

    #[error("singular local 2x2 system at cell ({i}, {j}): det = {det:e}")]
    SingularLocalSystem { i: usize, j: usize, det: f64 },

    #[error("nonlinear solve did not converge after {} cycles (residual {:e})", .0.cycles, .0.final_residual())]
    NotConverged(Box<SolveReport>),

    #[error("mass drift {relative:e} (relative) exceeds {tol:e}")]
    MassDrift { relative: f64, tol: f64 },

    #[error("positivity violated: min {min}, max {max}, admissible (0, {upper})")]
    Positivity { min: f64, max: f64, upper: f64 },

    #[error("energy increased from {previous:.17e} to {current:.17e}")]
    EnergyIncrease { previous: f64, current: f64 },

    #[error("time step mismatch: {0}")]
    TimeStep(String),
}
