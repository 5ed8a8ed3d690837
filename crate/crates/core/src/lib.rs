//! Phase separation in a compressible ternary polymer mixture: a mass
//! conserving gradient flow with a logarithmic free energy and a
//! composition dependent gradient coefficient, discretized in time with a
//! regularized second order backward difference scheme and solved per step
//! by nonlinear multigrid.
//!
//! The numerics are generic over [`num::Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod grid;
pub mod initial;
pub mod num;
pub mod scheme;
pub mod solver;
pub mod spectral;

pub use diagnostics::{
    coarse_to_fine, compare_against, refinement_study, scheme_comparison, simulate, ComparisonRow,
    DiagnosticsRecord, Interpolation, RefinementResult, RunSpec, Tracker,
};
pub use energy::{discrete_energy, kappa, modified_energy, ModelParams, RegPolicy};
pub use error::{Error, Result};
pub use grid::{CellField, EdgeField, GridSpec};
pub use initial::InitialCondition;
pub use num::Real;
pub use scheme::{SchemeState, SchemeVariant, StepReport, Stepper};
pub use solver::{CycleKind, InitialGuess, SolveReport, Solver, SolverConfig};
pub use spectral::{inv_laplacian, PeriodicPoisson};

pub type Grid = GridSpec<f64>;
pub type Field = CellField<f64>;
pub type Edges = EdgeField<f64>;
pub type Params = ModelParams<f64>;
pub type State = SchemeState<f64>;
pub type Config = SolverConfig<f64>;
pub type Record = DiagnosticsRecord<f64>;
