//! Implicit Euler solvers for the state, linearized and adjoint equations.
//!
//! All three share the step matrix `B_m = I + dt (A_h + diag(a_y(y_m)))`. The adjoint
//! sweep solves with `B_mᵀ` backward in time, which makes it the exact transpose of
//! the linearized sweep:
//!
//! ```text
//! Σ_m dt w (y_m − yd_m)·z_m  ==  Σ_m dt w φ_m·v_m
//! ```
//!
//! The adjoint `φ_m` is reported on interval `m` (it sits at the right node `t_m`).

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::grid::{linf, DiffusionTensor, SliceLayout, SpaceGrid, SpaceTimeField};
use crate::problem::Problem;

/// Finite-difference `A y = −Σ ∂_j(a_ij ∂_i y)` on the interior nodes.
///
/// Second derivatives use the 3-point stencil, mixed derivatives the centered
/// 4-point stencil.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    matrix: BandMatrix,
    /// Max absolute row sum, bounds the roundoff of `A y`.
    abs_row_sum: f64,
}

impl EllipticOperator {
    pub fn assemble(grid: &SpaceGrid, diffusion: &DiffusionTensor) -> Result<Self> {
        if grid.n_dim() != diffusion.n_dim() {
            return Err(Error::ShapeMismatch(
                "diffusion tensor dimension differs from grid dimension".into(),
            ));
        }
        let n = grid.n_per_axis();
        let h2 = grid.h() * grid.h();
        let matrix = match grid.n_dim() {
            1 => {
                let a = diffusion.get(0, 0) / h2;
                let mut m = BandMatrix::zeros(n, 1);
                for i in 0..n {
                    m.add(i, i, 2.0 * a);
                    if i > 0 {
                        m.add(i, i - 1, -a);
                    }
                    if i + 1 < n {
                        m.add(i, i + 1, -a);
                    }
                }
                m
            }
            _ => {
                let a11 = diffusion.get(0, 0) / h2;
                let a22 = diffusion.get(1, 1) / h2;
                let cross = (diffusion.get(0, 1) + diffusion.get(1, 0)) / (4.0 * h2);
                let bw = if cross != 0.0 { n + 1 } else { n };
                let mut m = BandMatrix::zeros(n * n, bw);
                let id = |i: usize, j: usize| j * n + i;
                for j in 0..n {
                    for i in 0..n {
                        let row = id(i, j);
                        m.add(row, row, 2.0 * a11 + 2.0 * a22);
                        if i > 0 {
                            m.add(row, id(i - 1, j), -a11);
                        }
                        if i + 1 < n {
                            m.add(row, id(i + 1, j), -a11);
                        }
                        if j > 0 {
                            m.add(row, id(i, j - 1), -a22);
                        }
                        if j + 1 < n {
                            m.add(row, id(i, j + 1), -a22);
                        }
                        if cross != 0.0 {
                            // −(a12 + a21) ∂x∂y
                            if i + 1 < n && j + 1 < n {
                                m.add(row, id(i + 1, j + 1), -cross);
                            }
                            if i > 0 && j > 0 {
                                m.add(row, id(i - 1, j - 1), -cross);
                            }
                            if i + 1 < n && j > 0 {
                                m.add(row, id(i + 1, j - 1), cross);
                            }
                            if i > 0 && j + 1 < n {
                                m.add(row, id(i - 1, j + 1), cross);
                            }
                        }
                    }
                }
                m
            }
        };
        let abs_row_sum = (0..matrix.dim())
            .map(|i| {
                let lo = i.saturating_sub(matrix.bandwidth());
                let hi = (i + matrix.bandwidth() + 1).min(matrix.dim());
                (lo..hi).map(|j| matrix.get(i, j).abs()).sum::<f64>()
            })
            .fold(0.0, f64::max);
        Ok(Self {
            matrix,
            abs_row_sum,
        })
    }

    pub fn abs_row_sum(&self) -> f64 {
        self.abs_row_sum
    }

    pub fn matrix(&self) -> &BandMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.matrix.matvec(x, out);
    }

    /// Factors `I + dt (A + diag(d))`.
    pub fn step_factor(&self, dt: f64, d: &[f64]) -> Result<BandLu> {
        self.matrix
            .scaled_plus_diagonal(dt, |i| 1.0 + dt * d[i])
            .factor()
    }
}

/// Result of a state solve.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub y: SpaceTimeField,
    pub max_abs: f64,
    /// `true` when some node reached the truncation level `M`.
    pub truncation_active: bool,
    pub newton_iterations: usize,
}

/// Solves `(y_m − y_{m−1})/dt + A_h y_m + a_M(y_m) = u_m` for `m = 1..=n_t`.
pub fn solve_state(problem: &Problem, u: &SpaceTimeField) -> Result<StateTrajectory> {
    problem.check_control(u)?;
    let spec = problem.spec();
    let dt = spec.tgrid.dt();
    let mut y = spec.state_zeros();
    y.slice_mut(0).copy_from_slice(&spec.y0);
    let mut total_iterations = 0;
    for m in 1..=spec.tgrid.n_t() {
        let prev = y.slice(m - 1).to_vec();
        let (next, its) = newton_step(problem, m, &prev, u.slice(m), dt)?;
        total_iterations += its;
        y.slice_mut(m).copy_from_slice(&next);
    }
    let max_abs = y.max_abs();
    let truncation_active = spec
        .nonlinearity
        .truncation()
        .is_some_and(|tr| max_abs >= tr.level());
    Ok(StateTrajectory {
        y,
        max_abs,
        truncation_active,
        newton_iterations: total_iterations,
    })
}

struct StepResidual {
    norm: f64,
    scale: f64,
    values: Vec<f64>,
}

fn step_residual(
    problem: &Problem,
    y: &[f64],
    prev: &[f64],
    u: &[f64],
    dt: f64,
    ay: &mut [f64],
) -> Result<StepResidual> {
    let a = &problem.spec().nonlinearity;
    problem.operator().apply(y, ay);
    let mut values = vec![0.0; y.len()];
    let mut scale = 0.0_f64;
    let mut a_max = 0.0_f64;
    for i in 0..y.len() {
        let r = a.reaction(y[i])?;
        a_max = a_max.max(r.abs());
        scale = scale.max(prev[i].abs() + dt * u[i].abs());
        values[i] = y[i] + dt * (ay[i] + r) - prev[i] - dt * u[i];
    }
    let y_max = linf(y);
    Ok(StepResidual {
        norm: linf(&values),
        scale: scale + y_max * (1.0 + dt * problem.operator().abs_row_sum()) + dt * a_max
            + f64::MIN_POSITIVE,
        values,
    })
}

fn newton_step(
    problem: &Problem,
    step: usize,
    prev: &[f64],
    u: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, usize)> {
    let spec = problem.spec();
    let cfg = spec.newton;
    let n = prev.len();
    let mut scratch = vec![0.0; n];
    let mut deriv = vec![0.0; n];
    let mut total = 0;
    let mut last_residual = f64::INFINITY;
    for attempt in 0..=cfg.damped_retries {
        let max_halvings = if attempt == 0 { 0 } else { 10 * attempt };
        let max_iterations = cfg.max_iterations * (attempt + 1);
        let mut y = prev.to_vec();
        let mut res = step_residual(problem, &y, prev, u, dt, &mut scratch)?;
        for _ in 0..max_iterations {
            if res.norm <= cfg.residual_tol * res.scale {
                return Ok((y, total));
            }
            total += 1;
            for i in 0..n {
                deriv[i] = spec.nonlinearity.reaction_derivative(y[i])?;
            }
            let lu = problem.operator().step_factor(dt, &deriv)?;
            let mut delta = res.values.clone();
            lu.solve_in_place(&mut delta);
            let mut theta = 1.0;
            let mut accepted = None;
            for _ in 0..=max_halvings {
                let trial: Vec<f64> = y.iter().zip(&delta).map(|(a, d)| a - theta * d).collect();
                match step_residual(problem, &trial, prev, u, dt, &mut scratch) {
                    Ok(r) if max_halvings == 0 || r.norm < res.norm => {
                        accepted = Some((trial, r));
                        break;
                    }
                    Ok(_) => theta *= 0.5,
                    Err(Error::Range(_)) if max_halvings > 0 => theta *= 0.5,
                    // undamped overflow: fall through to the damped restarts
                    Err(Error::Range(_)) => break,
                    Err(e) => return Err(e),
                }
            }
            match accepted {
                Some((trial, r)) => {
                    y = trial;
                    res = r;
                }
                None => break,
            }
            // an exact zero residual (linear steps) needs no more sweeps
            if res.norm == 0.0 {
                return Ok((y, total));
            }
        }
        last_residual = res.norm / res.scale;
        if res.norm <= cfg.residual_tol * res.scale {
            return Ok((y, total));
        }
    }
    Err(Error::NewtonFailed {
        step,
        residual: last_residual,
        iterations: total,
    })
}

fn step_derivatives(problem: &Problem, y: &[f64], out: &mut [f64]) -> Result<()> {
    let a = &problem.spec().nonlinearity;
    for (o, &v) in out.iter_mut().zip(y) {
        *o = a.reaction_derivative(v)?;
    }
    Ok(())
}

/// Solves the linearized equation `(z_m − z_{m−1})/dt + A_h z_m + a_y(y_m) z_m = v_m`, `z_0 = 0`.
pub fn solve_linearized(
    problem: &Problem,
    y: &SpaceTimeField,
    v: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    problem.check_state(y)?;
    problem.check_control(v)?;
    let spec = problem.spec();
    let dt = spec.tgrid.dt();
    let n = spec.grid.n_nodes();
    let mut z = spec.state_zeros();
    let mut d = vec![0.0; n];
    for m in 1..=spec.tgrid.n_t() {
        step_derivatives(problem, y.slice(m), &mut d)?;
        let lu = problem.operator().step_factor(dt, &d)?;
        let mut rhs: Vec<f64> = z
            .slice(m - 1)
            .iter()
            .zip(v.slice(m))
            .map(|(zp, vm)| zp + dt * vm)
            .collect();
        lu.solve_in_place(&mut rhs);
        z.slice_mut(m).copy_from_slice(&rhs);
    }
    Ok(z)
}

/// Solves the adjoint equation backward: `B_mᵀ φ_m = φ_{m+1} + dt (y_m − yd_m)`, `φ_{n_t+1} = 0`.
pub fn solve_adjoint(problem: &Problem, y: &SpaceTimeField) -> Result<SpaceTimeField> {
    problem.check_state(y)?;
    let spec = problem.spec();
    let residual = y.sub(&spec.yd)?;
    adjoint_sweep(problem, y, &residual)
}

/// Backward sweep with arbitrary node-layout source `r` in place of `y − y_d`.
pub fn adjoint_sweep(
    problem: &Problem,
    y: &SpaceTimeField,
    source: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    problem.check_state(y)?;
    problem.check_state(source)?;
    let spec = problem.spec();
    let dt = spec.tgrid.dt();
    let n = spec.grid.n_nodes();
    let mut phi = SpaceTimeField::zeros(spec.grid, spec.tgrid, SliceLayout::Intervals);
    let mut next = vec![0.0; n];
    let mut d = vec![0.0; n];
    for m in (1..=spec.tgrid.n_t()).rev() {
        step_derivatives(problem, y.slice(m), &mut d)?;
        let lu = problem.operator().step_factor(dt, &d)?;
        for (nx, r) in next.iter_mut().zip(source.slice(m)) {
            *nx += dt * r;
        }
        lu.solve_transpose_in_place(&mut next);
        phi.slice_mut(m).copy_from_slice(&next);
    }
    Ok(phi)
}
