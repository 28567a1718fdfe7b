//! Uniform grids on the unit box `(0,1)^n` and the space-time fields that live on them.
//!
//! Interior nodes only: homogeneous Dirichlet data is eliminated, so a field
//! vanishing on the boundary is represented by its interior values. Quadrature is
//! the lumped rectangle rule with weight `h^n` per node in space and `dt` per
//! interval in time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    n_dim: usize,
    n_per_axis: usize,
    h: f64,
    cell_weight: f64,
}

impl SpaceGrid {
    pub fn new(n_dim: usize, n_per_axis: usize) -> Result<Self> {
        if !(n_dim == 1 || n_dim == 2) {
            return Err(Error::InvalidParameter(format!(
                "n_dim must be 1 or 2, got {n_dim}"
            )));
        }
        if n_per_axis == 0 {
            return Err(Error::InvalidParameter("n_per_axis must be positive".into()));
        }
        let h = 1.0 / (n_per_axis as f64 + 1.0);
        Ok(Self {
            n_dim,
            n_per_axis,
            h,
            cell_weight: h.powi(n_dim as i32),
        })
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_weight(&self) -> f64 {
        self.cell_weight
    }

    pub fn n_nodes(&self) -> usize {
        self.n_per_axis.pow(self.n_dim as u32)
    }

    /// Multi-index of node `k` (x fastest).
    pub fn axis_indices(&self, k: usize) -> [usize; 2] {
        let n = self.n_per_axis;
        match self.n_dim {
            1 => [k, 0],
            _ => [k % n, k / n],
        }
    }

    /// Coordinates of node `k`; the unused second coordinate is 0 in 1D.
    pub fn coords(&self, k: usize) -> [f64; 2] {
        let [i, j] = self.axis_indices(k);
        let x = (i as f64 + 1.0) * self.h;
        if self.n_dim == 1 {
            [x, 0.0]
        } else {
            [x, (j as f64 + 1.0) * self.h]
        }
    }

    /// Samples `f` at all interior nodes.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|k| {
                let c = self.coords(k);
                f(&c[..self.n_dim])
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_final: f64,
    n_t: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_t: usize) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {t_final}"
            )));
        }
        if n_t == 0 {
            return Err(Error::InvalidParameter("n_t must be positive".into()));
        }
        Ok(Self {
            t_final,
            n_t,
            dt: t_final / n_t as f64,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }
}

/// Where the slices of a field sit in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceLayout {
    /// One slice per time node, `m = 0..=n_t` (states, targets).
    Nodes,
    /// One slice per interval `(t_{m-1}, t_m]`, `m = 1..=n_t` (controls, adjoints, multipliers).
    Intervals,
}

/// Values on the space-time grid, stored time-major.
///
/// Slices are addressed by their time index `m`: `0..=n_t` for
/// [`SliceLayout::Nodes`] and `1..=n_t` for [`SliceLayout::Intervals`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: SpaceGrid,
    tgrid: TimeGrid,
    layout: SliceLayout,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: SpaceGrid, tgrid: TimeGrid, layout: SliceLayout) -> Self {
        let n_slices = Self::slice_count(&tgrid, layout);
        Self {
            grid,
            tgrid,
            layout,
            values: vec![0.0; n_slices * grid.n_nodes()],
        }
    }

    pub fn from_values(
        grid: SpaceGrid,
        tgrid: TimeGrid,
        layout: SliceLayout,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::slice_count(&tgrid, layout) * grid.n_nodes();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Range(format!("non-finite value at flat index {bad}")));
        }
        Ok(Self {
            grid,
            tgrid,
            layout,
            values,
        })
    }

    /// Builds a field by evaluating `f(x, t_m)` at every node of every slice.
    pub fn from_fn(
        grid: SpaceGrid,
        tgrid: TimeGrid,
        layout: SliceLayout,
        f: impl Fn(&[f64], f64) -> f64,
    ) -> Self {
        let mut field = Self::zeros(grid, tgrid, layout);
        for m in field.time_indices() {
            let t = tgrid.time(m);
            let row = grid.sample(|x| f(x, t));
            field.slice_mut(m).copy_from_slice(&row);
        }
        field
    }

    fn slice_count(tgrid: &TimeGrid, layout: SliceLayout) -> usize {
        match layout {
            SliceLayout::Nodes => tgrid.n_t() + 1,
            SliceLayout::Intervals => tgrid.n_t(),
        }
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.grid
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn layout(&self) -> SliceLayout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn n_slices(&self) -> usize {
        Self::slice_count(&self.tgrid, self.layout)
    }

    pub fn first_index(&self) -> usize {
        match self.layout {
            SliceLayout::Nodes => 0,
            SliceLayout::Intervals => 1,
        }
    }

    /// Valid time indices for this layout.
    pub fn time_indices(&self) -> std::ops::RangeInclusive<usize> {
        self.first_index()..=self.tgrid.n_t()
    }

    fn offset(&self, m: usize) -> Result<usize> {
        let lo = self.first_index();
        let hi = self.tgrid.n_t();
        if m < lo || m > hi {
            return Err(Error::IndexOutOfRange { index: m, lo, hi });
        }
        Ok((m - lo) * self.grid.n_nodes())
    }

    pub fn try_slice(&self, m: usize) -> Result<&[f64]> {
        let off = self.offset(m)?;
        Ok(&self.values[off..off + self.grid.n_nodes()])
    }

    /// Slice at time index `m`. Panics if `m` is outside [`Self::time_indices`].
    pub fn slice(&self, m: usize) -> &[f64] {
        self.try_slice(m).expect("slice index in range")
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [f64] {
        let off = self.offset(m).expect("slice index in range");
        let n = self.grid.n_nodes();
        &mut self.values[off..off + n]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layout == other.layout
            && self.grid == other.grid
            && self.tgrid == other.tgrid
            && self.values.len() == other.values.len()
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{:?} field with {} slices vs {:?} field with {} slices",
                self.layout,
                self.n_slices(),
                other.layout,
                other.n_slices()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..self.clone()
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `L^2(Q)` norm under [`l2_inner`].
    pub fn l2_norm(&self) -> f64 {
        l2_inner(self, self).expect("same shape").max(0.0).sqrt()
    }
}

/// Discrete `∫_Q f g`: rectangle rule over the slices `m = 1..=n_t`.
///
/// For node-layout fields the initial slice `m = 0` carries the initial datum and
/// does not enter the time integral.
pub fn l2_inner(f: &SpaceTimeField, g: &SpaceTimeField) -> Result<f64> {
    f.check_same_shape(g)?;
    let weight = f.tgrid.dt() * f.grid.cell_weight();
    let skip = match f.layout {
        SliceLayout::Nodes => f.grid.n_nodes(),
        SliceLayout::Intervals => 0,
    };
    let sum: f64 = f.values[skip..]
        .iter()
        .zip(&g.values[skip..])
        .map(|(a, b)| a * b)
        .sum();
    Ok(weight * sum)
}

/// Weighted `L^1(Ω)` norm of the slice at time index `m`.
pub fn slice_l1_norm(f: &SpaceTimeField, m: usize) -> Result<f64> {
    let w = f.grid.cell_weight();
    Ok(w * f.try_slice(m)?.iter().map(|v| v.abs()).sum::<f64>())
}

pub fn slice_linf_norm(f: &SpaceTimeField, m: usize) -> Result<f64> {
    Ok(linf(f.try_slice(m)?))
}

pub(crate) fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Constant symmetric coefficient matrix of the elliptic operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTensor {
    n_dim: usize,
    coefficients: Vec<f64>,
    ellipticity: f64,
}

impl DiffusionTensor {
    /// `coefficients` is the row-major `n_dim x n_dim` matrix.
    pub fn new(n_dim: usize, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != n_dim * n_dim {
            return Err(Error::ShapeMismatch(format!(
                "diffusion tensor needs {} entries for n_dim = {n_dim}, got {}",
                n_dim * n_dim,
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite diffusion coefficient".into()));
        }
        let ellipticity = match n_dim {
            1 => coefficients[0],
            2 => {
                let (a, b, c, d) = (
                    coefficients[0],
                    coefficients[1],
                    coefficients[2],
                    coefficients[3],
                );
                if (b - c).abs() > 1e-14 * (b.abs() + c.abs()).max(1.0) {
                    return Err(Error::InvalidParameter(
                        "diffusion tensor must be symmetric".into(),
                    ));
                }
                let mean = 0.5 * (a + d);
                let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                mean - radius
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "n_dim must be 1 or 2, got {n_dim}"
                )))
            }
        };
        if ellipticity <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "diffusion tensor is not uniformly elliptic (smallest eigenvalue {ellipticity})"
            )));
        }
        Ok(Self {
            n_dim,
            coefficients,
            ellipticity,
        })
    }

    /// `-Δ` in `n_dim` dimensions.
    pub fn identity(n_dim: usize) -> Result<Self> {
        let mut c = vec![0.0; n_dim * n_dim];
        for i in 0..n_dim {
            c[i * n_dim + i] = 1.0;
        }
        Self::new(n_dim, c)
    }

    pub fn n_dim(&self) -> usize {
        self.n_dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coefficients[i * self.n_dim + j]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Smallest eigenvalue, the ellipticity constant.
    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (SpaceGrid, TimeGrid) {
        (SpaceGrid::new(1, 1).unwrap(), TimeGrid::new(1.0, 2).unwrap())
    }

    #[test]
    fn spacing_partitions_unit_interval() {
        for n in [1, 3, 7, 31] {
            let g = SpaceGrid::new(2, n).unwrap();
            assert!((g.h() * (n as f64 + 1.0) - 1.0).abs() <= f64::EPSILON);
            assert_eq!(g.n_nodes(), n * n);
        }
        let t = TimeGrid::new(0.7, 13).unwrap();
        assert!((t.dt() * 13.0 - 0.7).abs() <= f64::EPSILON);
    }

    #[test]
    fn inner_product_of_ones_on_tiny_grid() {
        let (g, t) = tiny();
        let ones = SpaceTimeField::zeros(g, t, SliceLayout::Intervals).map(|_| 1.0);
        assert!((l2_inner(&ones, &ones).unwrap() - 0.5).abs() < 1e-15);
        let zero = SpaceTimeField::zeros(g, t, SliceLayout::Intervals);
        assert_eq!(l2_inner(&zero, &zero).unwrap(), 0.0);
        let neg = ones.scaled(-1.0);
        assert_eq!(l2_inner(&neg, &ones).unwrap(), -l2_inner(&ones, &ones).unwrap());
    }

    #[test]
    fn node_layout_skips_initial_slice() {
        let (g, t) = tiny();
        let mut f = SpaceTimeField::zeros(g, t, SliceLayout::Nodes);
        f.slice_mut(0)[0] = 100.0;
        assert_eq!(l2_inner(&f, &f).unwrap(), 0.0);
        f.slice_mut(2)[0] = 2.0;
        assert!((l2_inner(&f, &f).unwrap() - 4.0 * 0.5 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let (g, t) = tiny();
        let a = SpaceTimeField::zeros(g, t, SliceLayout::Nodes);
        let b = SpaceTimeField::zeros(g, t, SliceLayout::Intervals);
        assert!(matches!(l2_inner(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn slice_norms() {
        let g = SpaceGrid::new(1, 2).unwrap();
        let t = TimeGrid::new(1.0, 1).unwrap();
        let f = SpaceTimeField::from_values(g, t, SliceLayout::Intervals, vec![3.0, -1.0]).unwrap();
        let expected = g.cell_weight() * 4.0;
        assert!((slice_l1_norm(&f, 1).unwrap() - expected).abs() < 1e-15);
        assert_eq!(slice_linf_norm(&f, 1).unwrap(), 3.0);
        assert!((slice_l1_norm(&f.scaled(-2.5), 1).unwrap() - 2.5 * expected).abs() < 1e-14);
        assert!(matches!(
            slice_l1_norm(&f, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(slice_linf_norm(&f, 2).is_err());
    }

    #[test]
    fn l1_of_half_weight_slice() {
        // cell weight 0.5 comes from n_per_axis = 1 in 1D
        let g = SpaceGrid::new(1, 1).unwrap();
        let t = TimeGrid::new(1.0, 2).unwrap();
        let f = SpaceTimeField::from_values(g, t, SliceLayout::Intervals, vec![3.0, -1.0]).unwrap();
        assert_eq!(slice_l1_norm(&f, 1).unwrap() + slice_l1_norm(&f, 2).unwrap(), 2.0);
        assert_eq!(slice_linf_norm(&f, 2).unwrap(), 1.0);
    }

    #[test]
    fn quadrature_of_one_approaches_measure() {
        let t = TimeGrid::new(1.0, 4).unwrap();
        let mut prev_err = f64::INFINITY;
        for n in [3, 7, 15, 31] {
            let g = SpaceGrid::new(2, n).unwrap();
            let one = SpaceTimeField::zeros(g, t, SliceLayout::Intervals).map(|_| 1.0);
            let err = (l2_inner(&one, &one).unwrap() - 1.0).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 0.07);
    }

    #[test]
    fn rejects_non_finite_values() {
        let (g, t) = tiny();
        let r = SpaceTimeField::from_values(g, t, SliceLayout::Intervals, vec![1.0, f64::NAN]);
        assert!(matches!(r, Err(Error::Range(_))));
    }

    #[test]
    fn diffusion_tensor_checks() {
        assert!(DiffusionTensor::new(2, vec![1.0, 0.2, 0.2, 0.5]).is_ok());
        assert!(DiffusionTensor::new(2, vec![1.0, 0.2, 0.3, 0.5]).is_err());
        assert!(DiffusionTensor::new(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
        assert!(DiffusionTensor::new(1, vec![-1.0]).is_err());
        let d = DiffusionTensor::new(2, vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        assert_eq!(d.ellipticity(), 2.0);
    }
}
