//! Python bindings for `parabolic_l1`.
//!
//! Space-time fields cross the boundary as lists of slices, one list of nodal
//! values per time index.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use parabolic_l1::checks::{run_suite, CheckOptions};
use parabolic_l1::cli::RunConfig;
use parabolic_l1::grid::SliceLayout;
use parabolic_l1::{l1ball, objective, optimizer, stability, Error, SpaceTimeField};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::ShapeMismatch(_)
        | Error::IndexOutOfRange { .. }
        | Error::InvalidParameter(_)
        | Error::Config(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn slices(f: &SpaceTimeField) -> Vec<Vec<f64>> {
    f.time_indices().map(|m| f.slice(m).to_vec()).collect()
}

/// Projection of one slice onto `{v : w Σ|v_i| ≤ γ}`.
/// Returns `(values, threshold, active)`.
#[pyfunction]
fn project_slice(values: Vec<f64>, w: f64, gamma: f64) -> PyResult<(Vec<f64>, f64, bool)> {
    let r = l1ball::project_slice(&values, w, gamma).map_err(to_py)?;
    Ok((r.values, r.threshold, r.active))
}

#[pyfunction]
fn soft_threshold(x: f64, lam: f64) -> f64 {
    l1ball::soft_threshold(x, lam)
}

/// A discretized control problem built from a TOML run configuration.
#[pyclass(module = "parabolic_l1", frozen)]
struct Problem {
    config: RunConfig,
    inner: parabolic_l1::Problem,
}

impl Problem {
    fn from_config(config: RunConfig) -> PyResult<Self> {
        let (inner, _) = config.build_problem().map_err(to_py)?;
        Ok(Self { config, inner })
    }

    fn control(&self, u: Vec<Vec<f64>>) -> PyResult<SpaceTimeField> {
        let spec = self.inner.spec();
        if u.len() != spec.tgrid.n_t() {
            return Err(PyValueError::new_err(format!(
                "control needs {} slices, got {}",
                spec.tgrid.n_t(),
                u.len()
            )));
        }
        SpaceTimeField::from_values(
            spec.grid,
            spec.tgrid,
            SliceLayout::Intervals,
            u.into_iter().flatten().collect(),
        )
        .map_err(to_py)
    }
}

#[pymethods]
impl Problem {
    /// Built-in defaults when `toml` is omitted.
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let config = match toml {
            Some(text) => RunConfig::from_toml(text).map_err(to_py)?,
            None => RunConfig::default(),
        };
        Self::from_config(config)
    }

    /// The effective configuration as TOML.
    fn config_toml(&self) -> String {
        self.config.to_toml()
    }

    fn with_gamma(&self, gamma: f64) -> PyResult<Self> {
        let mut config = self.config.clone();
        config.problem.gamma = gamma;
        Self::from_config(config)
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn n_t(&self) -> usize {
        self.inner.spec().tgrid.n_t()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.spec().grid.n_nodes()
    }

    #[getter]
    fn cell_weight(&self) -> f64 {
        self.inner.spec().grid.cell_weight()
    }

    /// Objective at the control `u` (one list per time interval).
    fn eval_j(&self, u: Vec<Vec<f64>>) -> PyResult<f64> {
        objective::eval_j(&self.inner, &self.control(u)?).map_err(to_py)
    }

    /// Gradient `φ + κu`.
    fn eval_gradient(&self, u: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let g = objective::eval_gradient(&self.inner, &self.control(u)?).map_err(to_py)?;
        Ok(slices(&g))
    }

    /// Second derivative of the objective at `u` in direction `v`.
    fn eval_curvature(&self, u: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> PyResult<f64> {
        objective::eval_curvature(&self.inner, &self.control(u)?, &self.control(v)?).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let p = &self.config.problem;
        format!(
            "Problem(n_dim={}, n_per_axis={}, n_t={}, kappa={}, gamma={})",
            p.n_dim, p.n_per_axis, p.n_t, p.kappa, p.gamma
        )
    }
}

#[pyclass(module = "parabolic_l1", frozen, get_all)]
struct SolveResult {
    objective: f64,
    converged: bool,
    iterations: usize,
    stop_reason: String,
    u: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    mu: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
    objective_history: Vec<f64>,
    residual_history: Vec<f64>,
    max_abs_state: f64,
    truncation_inactive: bool,
    kkt: Vec<(String, f64)>,
    multiplier_active: Vec<bool>,
}

#[pymethods]
impl SolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(converged={}, iterations={}, objective={:e})",
            if self.converged { "True" } else { "False" },
            self.iterations,
            self.objective
        )
    }
}

/// Projected-gradient solve from the zero control.
#[pyfunction]
#[pyo3(signature = (problem, tolerance = None, max_iterations = None))]
fn solve(problem: &Problem, tolerance: Option<f64>, max_iterations: Option<usize>) -> PyResult<SolveResult> {
    let mut cfg = problem.config.optimizer;
    if let Some(t) = tolerance {
        cfg.tolerance = t;
    }
    if let Some(n) = max_iterations {
        cfg.max_iterations = n;
    }
    let r = optimizer::solve(&problem.inner, &cfg).map_err(to_py)?;
    let k = r.kkt;
    Ok(SolveResult {
        objective: r.objective,
        converged: r.converged,
        iterations: r.iterations,
        stop_reason: r.stop_reason.clone(),
        u: slices(&r.u),
        y: slices(&r.y),
        phi: slices(&r.phi),
        mu: slices(&r.mu),
        thresholds: r.thresholds.clone(),
        objective_history: r.objective_history.clone(),
        residual_history: r.residual_history.clone(),
        max_abs_state: r.max_abs_state,
        truncation_inactive: r.truncation_inactive,
        kkt: vec![
            ("stationarity".into(), k.stationarity),
            ("feasibility".into(), k.feasibility),
            ("sign_gap".into(), k.sign_gap),
            ("slack_gap".into(), k.slack_gap),
            ("l1_identity".into(), k.l1_identity),
        ],
        multiplier_active: r.activity.iter().map(|a| a.multiplier_active).collect(),
    })
}

/// Property suite; one dict per check with `name`, `passed`, `value`, `threshold`.
#[pyfunction]
#[pyo3(signature = (problem, seed = 1))]
fn run_checks<'py>(py: Python<'py>, problem: &Problem, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let outcomes = run_suite(&problem.inner, seed, CheckOptions::default()).map_err(to_py)?;
    outcomes
        .into_iter()
        .map(|o| {
            let d = PyDict::new(py);
            d.set_item("name", o.name)?;
            d.set_item("passed", o.passed)?;
            d.set_item("value", o.value)?;
            d.set_item("threshold", o.threshold)?;
            Ok(d)
        })
        .collect()
}

/// Budget sweep around `problem.gamma`; returns `exponent`, `constant`, `regime`
/// and the `(gamma, distance)` points.
#[pyfunction]
fn gamma_sweep<'py>(py: Python<'py>, problem: &Problem, gammas: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let (report, _) =
        stability::gamma_sweep(&problem.inner, &gammas, &problem.config.optimizer).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("exponent", report.fit.as_ref().map(|f| f.exponent))?;
    d.set_item("constant", report.fit.as_ref().map(|f| f.constant))?;
    d.set_item(
        "regime",
        match report.regime {
            stability::Regime::Active => "active",
            stability::Regime::Inactive => "inactive",
        },
    )?;
    d.set_item(
        "points",
        report.points.iter().map(|p| (p.gamma, p.distance)).collect::<Vec<_>>(),
    )?;
    d.set_item("aborted", report.aborted)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "parabolic_l1")]
fn parabolic_l1_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<SolveResult>()?;
    m.add_function(wrap_pyfunction!(project_slice, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_sweep, m)?)?;
    Ok(())
}
