//! Projected gradient with Armijo backtracking on the admissible set
//! `{u : ‖u(t)‖₁ ≤ γ for every t}`.
//!
//! A step of size `1/κ` from `u` lands on `P(−φ/κ)`, so the stopping test
//! `‖u − P(−φ/κ)‖ / max(1, ‖u‖) ≤ tol` measures the first-order optimality gap.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{classify_slices, default_binding_tol, SliceActivity};
use crate::error::{Error, Result};
use crate::grid::{l2_inner, slice_l1_norm, slice_linf_norm, SpaceTimeField};
use crate::l1ball::{project_field, recover_multiplier};
use crate::objective::{evaluate, objective_from_state, Evaluation};
use crate::pde::{solve_adjoint, solve_state};
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Relative fixed-point residual at which the solve stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease constant `c` in `J(u⁺) ≤ J(u) + c ⟨g, u⁺ − u⟩`.
    pub armijo: f64,
    pub backtrack: f64,
    /// First trial step and cap on step growth; `None` means `1/κ`.
    pub initial_step: Option<f64>,
    pub max_backtracks: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 2000,
            armijo: 1e-4,
            backtrack: 0.5,
            initial_step: None,
            max_backtracks: 60,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::InvalidParameter("armijo constant must lie in (0, 1)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter("backtrack factor must lie in (0, 1)".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter("initial step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// The five first-order residuals at a candidate `(u, φ, μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖u − P(−φ/κ)‖_{L²(Q)}`.
    pub stationarity: f64,
    /// `max_m (‖u(m)‖₁ − γ)⁺`.
    pub feasibility: f64,
    /// `‖ |uμ| − uμ ‖_{L²(Q)}`.
    pub sign_gap: f64,
    /// `max_m ‖μ(m)‖_∞ (γ − ‖u(m)‖₁)⁺`.
    pub slack_gap: f64,
    /// `max_m | ‖φ(m)‖₁ − κ‖u(m)‖₁ − ‖μ(m)‖₁ |`.
    pub l1_identity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.feasibility,
            self.sign_gap,
            self.slack_gap,
            self.l1_identity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn kkt_residuals(
    problem: &Problem,
    u: &SpaceTimeField,
    phi: &SpaceTimeField,
    mu: &SpaceTimeField,
) -> Result<KktResiduals> {
    u.check_same_shape(phi)?;
    u.check_same_shape(mu)?;
    let kappa = problem.kappa();
    let gamma = problem.gamma();
    let target = project_field(&phi.scaled(-1.0 / kappa), gamma)?;
    let stationarity = u.sub(&target.field)?.l2_norm();
    let sign = u.zip_map(mu, |a, b| (a * b).abs() - a * b)?.l2_norm();
    let mut feasibility = 0.0_f64;
    let mut slack_gap = 0.0_f64;
    let mut l1_identity = 0.0_f64;
    for m in u.time_indices() {
        let ul1 = slice_l1_norm(u, m)?;
        let mu_sup = slice_linf_norm(mu, m)?;
        feasibility = feasibility.max((ul1 - gamma).max(0.0));
        slack_gap = slack_gap.max(mu_sup * (gamma - ul1).max(0.0));
        let gap = slice_l1_norm(phi, m)? - kappa * ul1 - slice_l1_norm(mu, m)?;
        l1_identity = l1_identity.max(gap.abs());
    }
    Ok(KktResiduals {
        stationarity,
        feasibility,
        sign_gap: sign,
        slack_gap,
        l1_identity,
    })
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: SpaceTimeField,
    pub y: SpaceTimeField,
    pub phi: SpaceTimeField,
    pub mu: SpaceTimeField,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub step_sizes: Vec<f64>,
    /// Soft-threshold levels of `P(−φ/κ)` per slice.
    pub thresholds: Vec<f64>,
    pub activity: Vec<SliceActivity>,
    pub kkt: KktResiduals,
    pub max_abs_state: f64,
    pub truncation_inactive: bool,
    /// Why the iteration stopped (`"converged"`, `"iteration cap"`, ...).
    pub stop_reason: String,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Solves from the zero control.
pub fn solve(problem: &Problem, cfg: &OptimizerConfig) -> Result<SolveReport> {
    solve_from(problem, cfg, &problem.spec().control_zeros())
}

/// Solves from `initial`, projected onto the admissible set first.
pub fn solve_from(
    problem: &Problem,
    cfg: &OptimizerConfig,
    initial: &SpaceTimeField,
) -> Result<SolveReport> {
    cfg.validate()?;
    problem.check_control(initial)?;
    let kappa = problem.kappa();
    let gamma = problem.gamma();

    let mut u = project_field(initial, gamma)?.field;
    let mut ev = evaluate(problem, &u)?;
    let max_step = cfg.initial_step.unwrap_or(1.0 / kappa);
    let mut step = max_step;
    let mut objective_history = Vec::new();
    let mut residual_history = Vec::new();
    let mut step_sizes = Vec::new();
    let mut converged = false;
    let mut stop_reason = String::from("iteration cap");
    let mut iterations = 0;
    let mut fixed_point;

    loop {
        fixed_point = project_field(&ev.phi.scaled(-1.0 / kappa), gamma)?;
        let residual = u.sub(&fixed_point.field)?.l2_norm() / u.l2_norm().max(1.0);
        objective_history.push(ev.value);
        residual_history.push(residual);
        if residual <= cfg.tolerance {
            converged = true;
            stop_reason = "converged".into();
            break;
        }
        if iterations >= cfg.max_iterations {
            break;
        }

        let mut accepted = None;
        for attempt in 0..=cfg.max_backtracks {
            let trial = project_field(&u.axpy(-step, &ev.gradient)?, gamma)?.field;
            let d = trial.sub(&u)?;
            if d.max_abs() == 0.0 {
                break;
            }
            let decrease = l2_inner(&ev.gradient, &d)?;
            let trial_state = match solve_state(problem, &trial) {
                Ok(s) => s,
                Err(Error::NewtonFailed { .. }) | Err(Error::Range(_)) => {
                    step *= cfg.backtrack;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let value = objective_from_state(problem, &trial, &trial_state.y)?;
            // roundoff floor of J, otherwise steps stall once decrease ~ ulp(J)
            let noise = 64.0 * f64::EPSILON * ev.value.abs();
            if value <= ev.value + cfg.armijo * decrease + noise {
                accepted = Some((trial, trial_state, value, attempt == 0));
                break;
            }
            step *= cfg.backtrack;
        }
        let Some((trial, state, value, first_try)) = accepted else {
            stop_reason = "line search stalled".into();
            break;
        };
        step_sizes.push(step);
        if first_try {
            step = (2.0 * step).min(max_step);
        }
        let phi = solve_adjoint(problem, &state.y)?;
        let gradient = phi.axpy(kappa, &trial)?;
        u = trial;
        ev = Evaluation {
            state,
            phi,
            gradient,
            value,
        };
        iterations += 1;
    }

    let mu = recover_multiplier(&u, &ev.phi, kappa)?;
    let kkt = kkt_residuals(problem, &u, &ev.phi, &mu)?;
    let activity = classify_slices(&u, &mu, kappa, gamma, default_binding_tol(gamma))?;
    Ok(SolveReport {
        objective: ev.value,
        converged,
        iterations,
        objective_history,
        residual_history,
        step_sizes,
        thresholds: fixed_point.thresholds,
        activity,
        kkt,
        max_abs_state: ev.state.max_abs,
        truncation_inactive: !ev.state.truncation_active,
        stop_reason,
        y: ev.state.y,
        phi: ev.phi,
        mu,
        u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DiffusionTensor, SliceLayout, SpaceGrid, TimeGrid};
    use crate::l1ball::project_slice;
    use crate::nonlinearity::NonlinearitySpec;
    use crate::problem::{NewtonConfig, ProblemSpec};

    fn problem(gamma: f64) -> Problem {
        let grid = SpaceGrid::new(1, 9).unwrap();
        let tgrid = TimeGrid::new(1.0, 8).unwrap();
        let yd = SpaceTimeField::from_fn(grid, tgrid, SliceLayout::Nodes, |x, t| {
            (std::f64::consts::PI * x[0]).sin() * (1.0 + t)
        });
        Problem::new(ProblemSpec {
            kappa: 0.01,
            gamma,
            grid,
            tgrid,
            diffusion: DiffusionTensor::identity(1).unwrap(),
            nonlinearity: NonlinearitySpec::schloegl(-1.0, 0.0, 1.0).unwrap(),
            y0: vec![0.0; 9],
            yd,
            newton: NewtonConfig::default(),
        })
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.armijo = 1.0;
        assert!(cfg.validate().is_err());
        cfg = OptimizerConfig { backtrack: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn converges_and_descends() {
        let p = problem(0.5);
        let r = solve(&p, &OptimizerConfig::default()).unwrap();
        assert!(r.converged, "{}", r.stop_reason);
        for w in r.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
        assert!(r.kkt.max() < 1e-6, "{:?}", r.kkt);
        assert!(r.truncation_inactive || p.spec().nonlinearity.truncation().is_none());
    }

    #[test]
    fn collapsed_ball_gives_zero_control() {
        let p = problem(1e-12);
        let r = solve(&p, &OptimizerConfig::default()).unwrap();
        assert!(r.u.max_abs() < 1e-9);
        let j0 = crate::objective::eval_j(&p, &p.spec().control_zeros()).unwrap();
        assert!((r.objective - j0).abs() < 1e-9 * j0);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let p = problem(0.5);
        let y0 = solve_state(&p, &p.spec().control_zeros()).unwrap().y;
        let p = p.with_target(y0).unwrap();
        let r = solve(&p, &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 1);
        assert_eq!(r.u.max_abs(), 0.0);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let p = problem(0.5);
        let cfg = OptimizerConfig { max_iterations: 1, tolerance: 1e-14, ..Default::default() };
        let r = solve(&p, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn kkt_residuals_vanish_at_constructed_fixed_point() {
        let p = problem(0.05);
        let spec = p.spec();
        let phi = SpaceTimeField::from_fn(spec.grid, spec.tgrid, SliceLayout::Intervals, |x, t| {
            (6.0 * x[0] + t).sin() * 0.02
        });
        let w = spec.grid.cell_weight();
        let mut u = spec.control_zeros();
        for m in 1..=spec.tgrid.n_t() {
            let target: Vec<f64> = phi.slice(m).iter().map(|v| -v / p.kappa()).collect();
            let proj = project_slice(&target, w, p.gamma()).unwrap();
            u.slice_mut(m).copy_from_slice(&proj.values);
        }
        let mu = recover_multiplier(&u, &phi, p.kappa()).unwrap();
        let k = kkt_residuals(&p, &u, &phi, &mu).unwrap();
        assert!(k.max() <= 1e-10, "{k:?}");

        let interior_u = phi.scaled(-1.0 / p.kappa()).scaled(1e-3);
        let interior_phi = interior_u.scaled(-p.kappa());
        let zero_mu = spec.control_zeros();
        let k = kkt_residuals(&p, &interior_u, &interior_phi, &zero_mu).unwrap();
        assert!(k.max() <= 1e-15, "{k:?}");
    }

    #[test]
    fn feasible_arbitrary_control_has_zero_feasibility_gap() {
        let p = problem(10.0);
        let u = p.spec().control_zeros().map(|_| 0.1);
        let ev = crate::objective::evaluate(&p, &u).unwrap();
        let mu = recover_multiplier(&u, &ev.phi, p.kappa()).unwrap();
        let k = kkt_residuals(&p, &u, &ev.phi, &mu).unwrap();
        assert_eq!(k.feasibility, 0.0);
        assert!(k.stationarity > 0.0);
    }
}
