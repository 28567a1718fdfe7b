//! Problem data and the assembled discrete operators shared by every solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiffusionTensor, SliceLayout, SpaceGrid, SpaceTimeField, TimeGrid};
use crate::nonlinearity::NonlinearitySpec;
use crate::pde::EllipticOperator;

/// Stopping rule for the per-step Newton iteration of the state equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    /// Relative residual tolerance.
    pub residual_tol: f64,
    pub max_iterations: usize,
    /// Number of damped restarts after an undamped failure.
    pub damped_retries: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-12,
            max_iterations: 30,
            damped_retries: 5,
        }
    }
}

/// Data of the control problem: minimize
/// `½‖y_u − y_d‖² + (κ/2)‖u‖²` subject to the state equation and `‖u(t)‖_{L¹} ≤ γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kappa: f64,
    pub gamma: f64,
    pub grid: SpaceGrid,
    pub tgrid: TimeGrid,
    pub diffusion: DiffusionTensor,
    pub nonlinearity: NonlinearitySpec,
    /// Initial datum at the interior nodes.
    pub y0: Vec<f64>,
    /// Target state, node layout.
    pub yd: SpaceTimeField,
    pub newton: NewtonConfig,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.gamma > 0.0) || self.gamma.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.diffusion.n_dim() != self.grid.n_dim() {
            return Err(Error::ShapeMismatch(
                "diffusion tensor dimension differs from grid dimension".into(),
            ));
        }
        if self.y0.len() != self.grid.n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "y0 has {} values, grid has {} nodes",
                self.y0.len(),
                self.grid.n_nodes()
            )));
        }
        if self.y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("y0 has non-finite values".into()));
        }
        let expected = SpaceTimeField::zeros(self.grid, self.tgrid, SliceLayout::Nodes);
        self.yd.check_same_shape(&expected)?;
        let n = &self.newton;
        if !(n.residual_tol > 0.0) || n.max_iterations == 0 {
            return Err(Error::InvalidParameter("newton tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn control_zeros(&self) -> SpaceTimeField {
        SpaceTimeField::zeros(self.grid, self.tgrid, SliceLayout::Intervals)
    }

    pub fn state_zeros(&self) -> SpaceTimeField {
        SpaceTimeField::zeros(self.grid, self.tgrid, SliceLayout::Nodes)
    }
}

/// A validated [`ProblemSpec`] with its assembled elliptic operator.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    operator: EllipticOperator,
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let operator = EllipticOperator::assemble(&spec.grid, &spec.diffusion)?;
        Ok(Self { spec, operator })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.operator
    }

    pub fn kappa(&self) -> f64 {
        self.spec.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    /// Same problem with a different budget `γ`.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.gamma = gamma;
        spec.validate()?;
        Ok(Self {
            spec,
            operator: self.operator.clone(),
        })
    }

    /// Same problem with a different target (operator reused).
    pub fn with_target(&self, yd: SpaceTimeField) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.yd = yd;
        spec.validate()?;
        Ok(Self {
            spec,
            operator: self.operator.clone(),
        })
    }

    pub(crate) fn check_control(&self, u: &SpaceTimeField) -> Result<()> {
        u.check_same_shape(&self.spec.control_zeros())
    }

    pub(crate) fn check_state(&self, y: &SpaceTimeField) -> Result<()> {
        y.check_same_shape(&self.spec.state_zeros())
    }
}

/// Truncation level large enough to stay inactive at the solution:
/// `10 (‖y_d‖_∞ + ‖y_0‖_∞ + γ/κ + 1)`.
pub fn default_truncation_level(kappa: f64, gamma: f64, y0: &[f64], yd: &SpaceTimeField) -> f64 {
    let y0_max = crate::grid::linf(y0);
    10.0 * (yd.max_abs() + y0_max + gamma / kappa + 1.0)
}
