//! Slice activity, critical-cone membership and sampled coercivity of `J''`.
//!
//! The probe samples finitely many directions, so it can falsify but never certify
//! a second-order sufficient condition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{l2_inner, slice_l1_norm, slice_linf_norm, SpaceTimeField};
use crate::l1ball::{default_zero_tol, l1_directional_derivative, project_field, recover_multiplier};
use crate::objective::{curvature_at, evaluate};
use crate::problem::Problem;

/// Default width of the binding band `|‖u(t)‖₁ − γ| ≤ tol`.
pub fn default_binding_tol(gamma: f64) -> f64 {
    1e-8 * gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceActivity {
    /// Time index of the interval.
    pub m: usize,
    pub t: f64,
    pub l1_norm: f64,
    pub mu_sup: f64,
    /// `‖μ(m)‖_∞ / κ`.
    pub threshold: f64,
    /// In `I_γ`.
    pub binding: bool,
    /// In `I_γ⁺`.
    pub multiplier_active: bool,
}

pub fn classify_slices(
    u: &SpaceTimeField,
    mu: &SpaceTimeField,
    kappa: f64,
    gamma: f64,
    tol: f64,
) -> Result<Vec<SliceActivity>> {
    u.check_same_shape(mu)?;
    u.time_indices()
        .map(|m| {
            let l1_norm = slice_l1_norm(u, m)?;
            let mu_sup = slice_linf_norm(mu, m)?;
            let binding = (l1_norm - gamma).abs() <= tol;
            Ok(SliceActivity {
                m,
                t: u.tgrid().time(m),
                l1_norm,
                mu_sup,
                threshold: mu_sup / kappa,
                binding,
                multiplier_active: binding && mu_sup > tol,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    /// `J'(u) v`.
    pub derivative: f64,
    /// `j'(u(t); v(t))` per slice.
    pub slice_derivatives: Vec<f64>,
    pub v_norm: f64,
    pub tau: f64,
    pub member: bool,
}

/// Tests `v ∈ C^τ_u`: `|J'(u)v| ≤ τ‖v‖`, `|j'| ≤ τ‖v‖` on `I_γ⁺`, `j' ≤ τ‖v‖` on `I_γ \ I_γ⁺`.
pub fn cone_membership(
    problem: &Problem,
    u: &SpaceTimeField,
    phi: &SpaceTimeField,
    mu: &SpaceTimeField,
    v: &SpaceTimeField,
    tau: f64,
) -> Result<ConeReport> {
    u.check_same_shape(v)?;
    let gamma = problem.gamma();
    let activity = classify_slices(u, mu, problem.kappa(), gamma, default_binding_tol(gamma))?;
    let gradient = phi.axpy(problem.kappa(), u)?;
    let derivative = l2_inner(&gradient, v)?;
    let v_norm = v.l2_norm();
    let bound = tau * v_norm;
    let w = u.grid().cell_weight();
    let mut member = derivative.abs() <= bound;
    let mut slice_derivatives = Vec::with_capacity(activity.len());
    for act in &activity {
        let us = u.slice(act.m);
        let d = l1_directional_derivative(us, v.slice(act.m), w, default_zero_tol(us))?;
        slice_derivatives.push(d);
        if act.multiplier_active {
            member &= d.abs() <= bound;
        } else if act.binding {
            member &= d <= bound;
        }
    }
    Ok(ConeReport {
        derivative,
        slice_derivatives,
        v_norm,
        tau,
        member,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Smallest `J''(u)v² / ‖v‖²` over the accepted directions.
    pub min_quotient: Option<f64>,
    pub sampled: usize,
    pub accepted: usize,
    pub seed: u64,
    /// Sampling scheme, for reproducibility.
    pub distribution: String,
}

const PROBE_DISTRIBUTION: &str = "alternating: (even) P(uniform[-s,s]) - u with s = max(1, |u|_inf); \
     (odd) uniform[-1,1] restricted to supp(u) with the sign-weighted mean removed on binding slices";

/// Minimum sampled Rayleigh quotient of `J''(u)` over directions in `C^τ_u`.
pub fn coercivity_probe(
    problem: &Problem,
    u: &SpaceTimeField,
    sample_count: usize,
    tau: f64,
    seed: u64,
) -> Result<ProbeReport> {
    let ev = evaluate(problem, u)?;
    let mu = recover_multiplier(u, &ev.phi, problem.kappa())?;
    let gamma = problem.gamma();
    let activity = classify_slices(u, &mu, problem.kappa(), gamma, default_binding_tol(gamma))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = u.max_abs().max(1.0);
    let mut min_quotient: Option<f64> = None;
    let mut accepted = 0;
    for k in 0..sample_count {
        let mut v = u.map(|_| 0.0);
        if k % 2 == 0 {
            for x in v.values_mut() {
                *x = rng.random_range(-scale..scale);
            }
            v = project_field(&v, gamma)?.field.sub(u)?;
        } else {
            for act in &activity {
                let us = u.slice(act.m).to_vec();
                let zero_tol = default_zero_tol(&us);
                let vs = v.slice_mut(act.m);
                for (vi, ui) in vs.iter_mut().zip(&us) {
                    *vi = rng.random_range(-1.0..1.0);
                    if act.binding && ui.abs() <= zero_tol {
                        *vi = 0.0;
                    }
                }
                if act.binding {
                    let support = us.iter().filter(|x| x.abs() > zero_tol).count();
                    if support > 0 {
                        let mean = vs
                            .iter()
                            .zip(&us)
                            .map(|(vi, ui)| if ui.abs() > zero_tol { vi * ui.signum() } else { 0.0 })
                            .sum::<f64>()
                            / support as f64;
                        for (vi, ui) in vs.iter_mut().zip(&us) {
                            if ui.abs() > zero_tol {
                                *vi -= mean * ui.signum();
                            }
                        }
                    }
                }
            }
        }
        let norm = v.l2_norm();
        if norm == 0.0 {
            continue;
        }
        let v = v.scaled(1.0 / norm);
        if !cone_membership(problem, u, &ev.phi, &mu, &v, tau)?.member {
            continue;
        }
        accepted += 1;
        let q = curvature_at(problem, &ev.state.y, &ev.phi, &v)?;
        min_quotient = Some(min_quotient.map_or(q, |m| m.min(q)));
    }
    Ok(ProbeReport {
        min_quotient,
        sampled: sample_count,
        accepted,
        seed,
        distribution: PROBE_DISTRIBUTION.into(),
    })
}

impl ProbeReport {
    /// The minimum, or an error when no sampled direction passed the cone filter.
    pub fn require_min(&self) -> Result<f64> {
        self.min_quotient.ok_or_else(|| {
            Error::InsufficientData(format!("none of {} sampled directions lie in the cone", self.sampled))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SliceLayout, SpaceGrid, TimeGrid};

    fn fields(vals_u: Vec<f64>, vals_mu: Vec<f64>) -> (SpaceTimeField, SpaceTimeField) {
        let g = SpaceGrid::new(1, 2).unwrap();
        let t = TimeGrid::new(1.0, 2).unwrap();
        (
            SpaceTimeField::from_values(g, t, SliceLayout::Intervals, vals_u).unwrap(),
            SpaceTimeField::from_values(g, t, SliceLayout::Intervals, vals_mu).unwrap(),
        )
    }

    #[test]
    fn huge_budget_has_no_binding_slices() {
        let (u, mu) = fields(vec![1.0, -2.0, 0.5, 0.0], vec![0.0; 4]);
        let act = classify_slices(&u, &mu, 1.0, 1e6, 1e-2).unwrap();
        assert!(act.iter().all(|a| !a.binding && !a.multiplier_active));
    }

    #[test]
    fn binding_without_multiplier() {
        // weight 1/3: slice 1 has norm (1.5 + 1.5)/3 = 1
        let (u, mu) = fields(vec![1.5, -1.5, 0.3, 0.0], vec![0.0, 0.0, 0.0, 0.0]);
        let act = classify_slices(&u, &mu, 1.0, 1.0, 1e-12).unwrap();
        assert!(act[0].binding && !act[0].multiplier_active);
        assert!(!act[1].binding);
        let (u, mu) = fields(vec![1.5, -1.5, 0.3, 0.0], vec![0.2, -0.2, 0.0, 0.0]);
        let act = classify_slices(&u, &mu, 0.5, 1.0, 1e-12).unwrap();
        assert!(act[0].multiplier_active);
        assert!((act[0].threshold - 0.4).abs() < 1e-15);
        assert_eq!(classify_slices(&u, &mu, 0.5, 1.0, 1e-12).unwrap(), act);
    }
}
