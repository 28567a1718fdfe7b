//! Tracking objective `J(u) = ½‖y_u − y_d‖² + (κ/2)‖u‖²` and its derivatives.

use crate::error::Result;
use crate::grid::{l2_inner, SpaceTimeField};
use crate::pde::{solve_adjoint, solve_linearized, solve_state, StateTrajectory};
use crate::problem::Problem;

pub use crate::problem::ProblemSpec;

/// Objective value from an already computed state.
pub fn objective_from_state(problem: &Problem, u: &SpaceTimeField, y: &SpaceTimeField) -> Result<f64> {
    let r = y.sub(&problem.spec().yd)?;
    Ok(0.5 * l2_inner(&r, &r)? + 0.5 * problem.kappa() * l2_inner(u, u)?)
}

pub fn eval_j(problem: &Problem, u: &SpaceTimeField) -> Result<f64> {
    let st = solve_state(problem, u)?;
    objective_from_state(problem, u, &st.y)
}

/// State, adjoint and gradient at one control.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub state: StateTrajectory,
    pub phi: SpaceTimeField,
    /// `φ + κu`, the `L²(Q)` Riesz representative of `J'(u)`.
    pub gradient: SpaceTimeField,
    pub value: f64,
}

pub fn evaluate(problem: &Problem, u: &SpaceTimeField) -> Result<Evaluation> {
    let state = solve_state(problem, u)?;
    let value = objective_from_state(problem, u, &state.y)?;
    let phi = solve_adjoint(problem, &state.y)?;
    let gradient = phi.axpy(problem.kappa(), u)?;
    Ok(Evaluation {
        state,
        phi,
        gradient,
        value,
    })
}

pub fn eval_gradient(problem: &Problem, u: &SpaceTimeField) -> Result<SpaceTimeField> {
    Ok(evaluate(problem, u)?.gradient)
}

/// `J''(u)(v, v) = ∫ (1 − a_yy(y) φ) z_v² + κ ∫ v²` given precomputed `y` and `φ`.
pub fn curvature_at(
    problem: &Problem,
    y: &SpaceTimeField,
    phi: &SpaceTimeField,
    v: &SpaceTimeField,
) -> Result<f64> {
    let z = solve_linearized(problem, y, v)?;
    let a = &problem.spec().nonlinearity;
    let mut weighted = z.clone();
    for m in 1..=problem.spec().tgrid.n_t() {
        let ys = y.slice(m);
        let ps = phi.slice(m);
        for (i, zi) in weighted.slice_mut(m).iter_mut().enumerate() {
            *zi *= 1.0 - a.reaction_second_derivative(ys[i])? * ps[i];
        }
    }
    Ok(l2_inner(&weighted, &z)? + problem.kappa() * l2_inner(v, v)?)
}

pub fn eval_curvature(problem: &Problem, u: &SpaceTimeField, v: &SpaceTimeField) -> Result<f64> {
    let y = solve_state(problem, u)?.y;
    let phi = solve_adjoint(problem, &y)?;
    curvature_at(problem, &y, &phi, v)
}
