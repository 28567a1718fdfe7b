//! Optimal control of semilinear parabolic equations with the pointwise-in-time
//! budget `‖u(t)‖_{L¹(Ω)} ≤ γ`.
//!
//! The discretization is implicit Euler in time and finite differences on the unit
//! box in space, with the adjoint built as the exact transpose of the discrete
//! linearization. On top of the solvers sit the slice-wise `L¹` ball projection,
//! a projected-gradient optimizer, first- and second-order diagnostics, and
//! `γ`-stability sweeps.

mod banded;
pub mod checks;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod l1ball;
pub mod nonlinearity;
pub mod objective;
pub mod optimizer;
pub mod pde;
pub mod problem;
pub mod stability;

pub use error::{Error, Result};
pub use grid::{
    l2_inner, slice_l1_norm, slice_linf_norm, DiffusionTensor, SliceLayout, SpaceGrid,
    SpaceTimeField, TimeGrid,
};
pub use nonlinearity::{NonlinearityKind, NonlinearitySpec, TruncationSpec};
pub use optimizer::{solve, OptimizerConfig, SolveReport};
pub use problem::{NewtonConfig, Problem, ProblemSpec};
