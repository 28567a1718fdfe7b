//! Sensitivity of the optimal control to the budget `γ`: warm-started sweeps and
//! log-log rate fits of `‖u_{γ'} − u_γ‖_{L²(Q)}` against `|γ' − γ|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpaceTimeField;
use crate::optimizer::{solve_from, OptimizerConfig, SolveReport};
use crate::problem::Problem;

/// Minimum number of points and decades spanned for the sweep to report a fit.
pub const MIN_FIT_POINTS: usize = 4;
pub const MIN_FIT_DECADES: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    pub constant: f64,
    pub n_points: usize,
}

/// Least-squares fit of `log(distance) = log(L) + exponent · log(delta)`.
///
/// Pairs with a zero delta or distance are dropped; at least three must remain.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let logs: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(d, e)| *d > 0.0 && *e > 0.0)
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    if logs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs 3 positive pairs, got {}",
            logs.len()
        )));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all deltas coincide".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    Ok(RateFit {
        exponent,
        constant: (my - exponent * mx).exp(),
        n_points: logs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Some slice carries a nonzero multiplier at the base budget.
    Active,
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gamma: f64,
    pub delta: f64,
    pub distance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub truncation_inactive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub base_gamma: f64,
    pub regime: Regime,
    pub points: Vec<SweepPoint>,
    pub fit: Option<RateFit>,
    /// Why no fit was produced, if so.
    pub fit_note: Option<String>,
    /// Distances nondecreasing in `|γ' − γ|`; a violation is a warning only.
    pub monotone: bool,
    /// Set when a solve failed to converge and the sweep stopped early.
    pub aborted: Option<String>,
    pub solver_tolerance: f64,
}

/// Warm start for budget `gamma` from a solution at `from_gamma`: shrink into the
/// smaller ball by `gamma / from_gamma`, keep as is otherwise.
pub fn warm_start(u: &SpaceTimeField, from_gamma: f64, gamma: f64) -> SpaceTimeField {
    if gamma < from_gamma {
        u.scaled(gamma / from_gamma)
    } else {
        u.clone()
    }
}

/// Solves at `problem.gamma()` and at each entry of `gammas`, walking outward from
/// the base on each side with warm starts.
pub fn gamma_sweep(
    problem: &Problem,
    gammas: &[f64],
    cfg: &OptimizerConfig,
) -> Result<(StabilityReport, SolveReport)> {
    let base_gamma = problem.gamma();
    let base = solve_from(problem, cfg, &problem.spec().control_zeros())?;
    let regime = if base.activity.iter().any(|a| a.multiplier_active) {
        Regime::Active
    } else {
        Regime::Inactive
    };
    let mut report = StabilityReport {
        base_gamma,
        regime,
        points: Vec::new(),
        fit: None,
        fit_note: None,
        monotone: true,
        aborted: None,
        solver_tolerance: cfg.tolerance,
    };
    if !base.converged {
        report.aborted = Some(format!("base solve at gamma = {base_gamma} did not converge"));
        return Ok((report, base));
    }
    for g in gammas {
        if !(*g > 0.0) {
            return Err(Error::InvalidParameter(format!("sweep gamma must be positive, got {g}")));
        }
    }

    let mut below: Vec<f64> = gammas.iter().copied().filter(|g| *g < base_gamma).collect();
    let mut above: Vec<f64> = gammas.iter().copied().filter(|g| *g > base_gamma).collect();
    below.sort_by(|a, b| b.total_cmp(a));
    above.sort_by(|a, b| a.total_cmp(b));
    if gammas.contains(&base_gamma) {
        report.points.push(SweepPoint {
            gamma: base_gamma,
            delta: 0.0,
            distance: 0.0,
            iterations: 0,
            converged: true,
            truncation_inactive: base.truncation_inactive,
        });
    }

    'branches: for branch in [below, above] {
        let mut prev_u = base.u.clone();
        let mut prev_gamma = base_gamma;
        for gamma in branch {
            let sub = problem.with_gamma(gamma)?;
            let start = warm_start(&prev_u, prev_gamma, gamma);
            let r = solve_from(&sub, cfg, &start)?;
            let distance = r.u.sub(&base.u)?.l2_norm();
            report.points.push(SweepPoint {
                gamma,
                delta: (gamma - base_gamma).abs(),
                distance,
                iterations: r.iterations,
                converged: r.converged,
                truncation_inactive: r.truncation_inactive,
            });
            if !r.converged {
                report.aborted = Some(format!("solve at gamma = {gamma} did not converge"));
                break 'branches;
            }
            prev_u = r.u;
            prev_gamma = gamma;
        }
    }

    let mut by_delta: Vec<&SweepPoint> = report.points.iter().collect();
    by_delta.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let scale = base.u.l2_norm().max(1.0);
    let slack = 10.0 * cfg.tolerance * scale;
    report.monotone = by_delta.windows(2).all(|w| w[1].distance + slack >= w[0].distance);

    if report.aborted.is_none() {
        let usable: Vec<(f64, f64)> = by_delta
            .iter()
            .filter(|p| p.delta > 0.0 && p.distance > slack)
            .map(|p| (p.delta, p.distance))
            .collect();
        let decades = match (usable.first(), usable.last()) {
            (Some(a), Some(b)) => (b.0 / a.0).log10(),
            _ => 0.0,
        };
        if usable.len() < MIN_FIT_POINTS || decades < MIN_FIT_DECADES - 1e-9 {
            report.fit_note = Some(format!(
                "fit skipped: {} points above solver tolerance spanning {decades:.2} decades",
                usable.len()
            ));
        } else {
            report.fit = Some(fit_rate(&usable)?);
        }
    }
    Ok((report, base))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let lin: Vec<(f64, f64)> = [0.01, 0.1, 1.0, 3.0].iter().map(|&d| (d, 2.0 * d)).collect();
        let f = fit_rate(&lin).unwrap();
        assert!((f.exponent - 1.0).abs() < 1e-12 && (f.constant - 2.0).abs() < 1e-12);
        let sq: Vec<(f64, f64)> = [0.01_f64, 0.1, 1.0].iter().map(|&d| (d, 3.0 * d.sqrt())).collect();
        let f = fit_rate(&sq).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-12 && (f.constant - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_pairs_are_excluded() {
        let pairs = [(0.0, 0.0), (0.1, 0.2), (1.0, 2.0), (0.5, 0.0)];
        assert!(matches!(fit_rate(&pairs), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn warm_start_scales_into_smaller_ball() {
        use crate::grid::{SliceLayout, SpaceGrid, TimeGrid};
        let g = SpaceGrid::new(1, 2).unwrap();
        let t = TimeGrid::new(1.0, 1).unwrap();
        let u = SpaceTimeField::from_values(g, t, SliceLayout::Intervals, vec![2.0, -1.0]).unwrap();
        assert_eq!(warm_start(&u, 2.0, 1.0).values(), &[1.0, -0.5]);
        assert_eq!(warm_start(&u, 1.0, 2.0).values(), u.values());
    }
}
