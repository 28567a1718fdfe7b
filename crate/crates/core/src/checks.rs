//! Property suite behind the `check` subcommand: projection oracle, adjoint
//! identity, finite-difference gradient and curvature tests, and manufactured
//! solution convergence rates.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{l2_inner, DiffusionTensor, SliceLayout, SpaceGrid, SpaceTimeField, TimeGrid};
use crate::l1ball::{project_slice, soft_threshold};
use crate::nonlinearity::NonlinearitySpec;
use crate::objective::{curvature_at, eval_j};
use crate::pde::{solve_adjoint, solve_linearized, solve_state};
use crate::problem::{NewtonConfig, Problem, ProblemSpec};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (worst case over the samples).
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn at_most(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            detail,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CheckOptions {
    /// Scales the adjoint by `1 + 1e-3` before it enters derivative checks.
    /// A negative control: with it set the adjoint and gradient checks must fail.
    pub corrupt_adjoint: bool,
}

fn adjoint(problem: &Problem, y: &SpaceTimeField, opts: CheckOptions) -> Result<SpaceTimeField> {
    let phi = solve_adjoint(problem, y)?;
    Ok(if opts.corrupt_adjoint {
        phi.scaled(1.0 + 1e-3)
    } else {
        phi
    })
}

pub fn random_field(like: &SpaceTimeField, amplitude: f64, rng: &mut impl Rng) -> SpaceTimeField {
    let mut f = like.map(|_| 0.0);
    for v in f.values_mut() {
        *v = amplitude * rng.random_range(-1.0..1.0);
    }
    f
}

/// Threshold by bisection on `λ ↦ Σ w (|v_i| − λ)⁺ − γ` over `[0, max |v_i|]`.
pub fn bisection_threshold(v: &[f64], w: f64, gamma: f64) -> f64 {
    let mass = |lam: f64| w * v.iter().map(|x| (x.abs() - lam).max(0.0)).sum::<f64>();
    if mass(0.0) <= gamma {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, v.iter().fold(0.0_f64, |a, x| a.max(x.abs())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn weighted_dist(a: &[f64], b: &[f64], w: f64) -> f64 {
    (w * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).sqrt()
}

/// Projection vs bisection oracle, idempotence and nonexpansiveness.
pub fn check_projection(samples: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0_f64;
    let mut idempotence_failures = 0;
    let mut worst_expansion = f64::NEG_INFINITY;
    for _ in 0..samples {
        let n = rng.random_range(1..=50);
        let w = rng.random_range(0.01..1.0);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mass: f64 = w * v.iter().map(|x| x.abs()).sum::<f64>();
        let gamma = (mass * rng.random_range(0.05..1.5)).max(1e-6);
        let p = project_slice(&v, w, gamma)?;
        let lam = bisection_threshold(&v, w, gamma);
        for (pi, vi) in p.values.iter().zip(&v) {
            max_dev = max_dev.max((pi - soft_threshold(*vi, lam)).abs());
        }
        let again = project_slice(&p.values, w, gamma)?;
        if again.values != p.values {
            idempotence_failures += 1;
        }
        let other: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let q = project_slice(&other, w, gamma)?;
        let expansion = weighted_dist(&p.values, &q.values, w) - weighted_dist(&v, &other, w);
        worst_expansion = worst_expansion.max(expansion);
    }
    Ok(vec![
        CheckOutcome::at_most(
            "projection matches bisection oracle",
            max_dev,
            1e-10,
            format!("{samples} random slices"),
        ),
        CheckOutcome::at_most(
            "projection is idempotent",
            idempotence_failures as f64,
            0.0,
            "exact equality".into(),
        ),
        CheckOutcome::at_most(
            "projection is nonexpansive",
            worst_expansion,
            1e-12,
            "max of |Pa - Pb| - |a - b|".into(),
        ),
    ])
}

/// `⟨y − y_d, z_v⟩ = ⟨φ, v⟩` over random `(u, v)`.
pub fn check_adjoint_identity(
    problem: &Problem,
    pairs: usize,
    seed: u64,
    opts: CheckOptions,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = problem.spec().control_zeros();
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let u = random_field(&zero, 1.0, &mut rng);
        let v = random_field(&zero, 1.0, &mut rng);
        let y = solve_state(problem, &u)?.y;
        let phi = adjoint(problem, &y, opts)?;
        let z = solve_linearized(problem, &y, &v)?;
        let lhs = l2_inner(&y.sub(&problem.spec().yd)?, &z)?;
        let rhs = l2_inner(&phi, &v)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
    }
    Ok(CheckOutcome::at_most(
        "adjoint identity",
        worst,
        1e-10,
        format!("{pairs} random (u, v) pairs, relative"),
    ))
}

/// Central difference of `J` against `⟨φ + κu, v⟩`.
pub fn check_gradient(
    problem: &Problem,
    pairs: usize,
    eps: f64,
    seed: u64,
    opts: CheckOptions,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = problem.spec().control_zeros();
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let u = random_field(&zero, 1.0, &mut rng);
        let v = random_field(&zero, 1.0, &mut rng);
        let y = solve_state(problem, &u)?.y;
        let phi = adjoint(problem, &y, opts)?;
        let exact = l2_inner(&phi.axpy(problem.kappa(), &u)?, &v)?;
        let fd = (eval_j(problem, &u.axpy(eps, &v)?)? - eval_j(problem, &u.axpy(-eps, &v)?)?)
            / (2.0 * eps);
        worst = worst.max((fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
    }
    Ok(CheckOutcome::at_most(
        "gradient vs central difference",
        worst,
        1e-6,
        format!("{pairs} random (u, v) pairs, eps = {eps:e}, relative"),
    ))
}

/// Second central difference of `J` against `J''(u)(v, v)`.
pub fn check_curvature(
    problem: &Problem,
    directions: usize,
    eps: f64,
    seed: u64,
    opts: CheckOptions,
) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = problem.spec().control_zeros();
    let u = random_field(&zero, 1.0, &mut rng);
    let y = solve_state(problem, &u)?.y;
    let phi = adjoint(problem, &y, opts)?;
    let j0 = eval_j(problem, &u)?;
    let mut worst = 0.0_f64;
    for _ in 0..directions {
        let v = random_field(&zero, 1.0, &mut rng);
        let exact = curvature_at(problem, &y, &phi, &v)?;
        let fd = (eval_j(problem, &u.axpy(eps, &v)?)? - 2.0 * j0
            + eval_j(problem, &u.axpy(-eps, &v)?)?)
            / (eps * eps);
        worst = worst.max((fd - exact).abs() / exact.abs().max(f64::MIN_POSITIVE));
    }
    Ok(CheckOutcome::at_most(
        "curvature vs second difference",
        worst,
        1e-4,
        format!("{directions} random directions, eps = {eps:e}, relative"),
    ))
}

/// Problem for the manufactured solution `y* = e^{−t} Π sin(π x_i)` with
/// `a(y) = y³ − y` and `A = −Δ`; returns it with the matching control.
pub fn manufactured_problem(
    n_dim: usize,
    n_per_axis: usize,
    n_t: usize,
    t_final: f64,
) -> Result<(Problem, SpaceTimeField)> {
    let grid = SpaceGrid::new(n_dim, n_per_axis)?;
    let tgrid = TimeGrid::new(t_final, n_t)?;
    let lap = n_dim as f64 * PI * PI;
    let u = SpaceTimeField::from_fn(grid, tgrid, SliceLayout::Intervals, |x, t| {
        let y = manufactured_solution(x, t);
        -y + lap * y + y * y * y - y
    });
    let spec = ProblemSpec {
        kappa: 1.0,
        gamma: 1.0,
        grid,
        tgrid,
        diffusion: DiffusionTensor::identity(n_dim)?,
        nonlinearity: NonlinearitySpec::schloegl(-1.0, 0.0, 1.0)?,
        y0: grid.sample(|x| manufactured_solution(x, 0.0)),
        yd: SpaceTimeField::zeros(grid, tgrid, SliceLayout::Nodes),
        newton: NewtonConfig::default(),
    };
    Ok((Problem::new(spec)?, u))
}

pub fn manufactured_solution(x: &[f64], t: f64) -> f64 {
    (-t).exp() * x.iter().map(|c| (PI * c).sin()).product::<f64>()
}

/// Max nodal error of the discrete state against `y*` over all time nodes.
pub fn manufactured_error(n_dim: usize, n_per_axis: usize, n_t: usize, t_final: f64) -> Result<f64> {
    let (problem, u) = manufactured_problem(n_dim, n_per_axis, n_t, t_final)?;
    let y = solve_state(&problem, &u)?.y;
    let exact = SpaceTimeField::from_fn(
        problem.spec().grid,
        problem.spec().tgrid,
        SliceLayout::Nodes,
        manufactured_solution,
    );
    Ok(y.sub(&exact)?.max_abs())
}

/// Grids of the manufactured-solution study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceStudy {
    /// Dimension of the time refinement. One dimension lets the spatial
    /// error sit well below the time error at a modest node count.
    pub time_study_dim: usize,
    pub space_study_dim: usize,
    /// Fine spatial resolution used while refining in time.
    pub time_study_nodes: usize,
    pub time_study_steps: [usize; 3],
    pub time_study_horizon: f64,
    pub space_study_nodes: [usize; 3],
    pub space_study_steps: usize,
    pub space_study_horizon: f64,
}

impl Default for ConvergenceStudy {
    fn default() -> Self {
        Self {
            time_study_dim: 1,
            space_study_dim: 2,
            time_study_nodes: 511,
            time_study_steps: [8, 16, 32],
            time_study_horizon: 1.0,
            space_study_nodes: [3, 7, 15],
            space_study_steps: 64,
            space_study_horizon: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRates {
    pub time_errors: Vec<f64>,
    pub time_orders: Vec<f64>,
    pub space_errors: Vec<f64>,
    pub space_orders: Vec<f64>,
}

pub fn convergence_rates(study: &ConvergenceStudy) -> Result<ConvergenceRates> {
    let time_errors = study
        .time_study_steps
        .iter()
        .map(|&n_t| manufactured_error(study.time_study_dim, study.time_study_nodes, n_t, study.time_study_horizon))
        .collect::<Result<Vec<_>>>()?;
    let space_errors = study
        .space_study_nodes
        .iter()
        .map(|&n| manufactured_error(study.space_study_dim, n, study.space_study_steps, study.space_study_horizon))
        .collect::<Result<Vec<_>>>()?;
    let orders = |errs: &[f64], ratio: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (1..errs.len())
            .map(|k| (errs[k - 1] / errs[k]).ln() / ratio(k).ln())
            .collect()
    };
    let steps = study.time_study_steps;
    let nodes = study.space_study_nodes;
    Ok(ConvergenceRates {
        time_orders: orders(&time_errors, &|k| steps[k] as f64 / steps[k - 1] as f64),
        space_orders: orders(&space_errors, &|k| (nodes[k] + 1) as f64 / (nodes[k - 1] + 1) as f64),
        time_errors,
        space_errors,
    })
}

pub fn check_convergence(study: &ConvergenceStudy) -> Result<Vec<CheckOutcome>> {
    let r = convergence_rates(study)?;
    let min_t = r.time_orders.iter().copied().fold(f64::INFINITY, f64::min);
    let min_h = r.space_orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(vec![
        CheckOutcome::at_least(
            "manufactured solution order in dt",
            min_t,
            0.9,
            format!("errors {:?}", r.time_errors),
        ),
        CheckOutcome::at_least(
            "manufactured solution order in h",
            min_h,
            1.9,
            format!("errors {:?}", r.space_errors),
        ),
    ])
}

/// Runs every check. Derivative checks use `problem`.
pub fn run_suite(problem: &Problem, seed: u64, opts: CheckOptions) -> Result<Vec<CheckOutcome>> {
    let mut out = check_projection(1000, seed)?;
    out.push(check_adjoint_identity(problem, 20, seed.wrapping_add(1), opts)?);
    out.push(check_gradient(problem, 10, 1e-4, seed.wrapping_add(2), opts)?);
    out.push(check_curvature(problem, 10, 1e-3, seed.wrapping_add(3), opts)?);
    out.extend(check_convergence(&ConvergenceStudy::default())?);
    Ok(out)
}

/// Fixed-width pass/fail table.
pub fn format_table(outcomes: &[CheckOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        s.push_str(&format!(
            "{:<4}  {:<40}  value {:>12.4e}  threshold {:>10.3e}  {}\n",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.value,
            o.threshold,
            o.detail
        ));
    }
    s
}
