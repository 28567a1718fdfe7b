//! Report files and binary field dumps.
//!
//! A field dump is the magic `PFLD`, three little-endian `u32` (slice count,
//! nodes per axis, dimension), then the values as little-endian `f64`, slice by
//! slice, `x` fastest within a slice.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use super::config::RunConfig;
use crate::diagnostics::{ProbeReport, SliceActivity};
use crate::error::{Error, Result};
use crate::grid::{slice_l1_norm, slice_linf_norm, SliceLayout, SpaceGrid, SpaceTimeField, TimeGrid};
use crate::optimizer::{KktResiduals, SolveReport};
use crate::problem::Problem;
use crate::stability::{Regime, StabilityReport, SweepPoint};

pub const FIELD_MAGIC: &[u8; 4] = b"PFLD";

#[derive(Serialize)]
struct SolveJson<'a> {
    config: &'a RunConfig,
    truncation_level: Option<f64>,
    objective: f64,
    converged: bool,
    stop_reason: &'a str,
    iterations: usize,
    final_residual: f64,
    kkt: KktResiduals,
    max_abs_state: f64,
    truncation_inactive: bool,
    gamma: f64,
    kappa: f64,
    activity: &'a [SliceActivity],
    objective_history: &'a [f64],
    residual_history: &'a [f64],
    step_sizes: &'a [f64],
    probe: Option<ProbeReport>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub(super) fn write_solve_report(
    path: &Path,
    cfg: &RunConfig,
    truncation_level: Option<f64>,
    problem: &Problem,
    report: &SolveReport,
    probe: Option<ProbeReport>,
) -> Result<()> {
    write_json(
        path,
        &SolveJson {
            config: cfg,
            truncation_level,
            objective: report.objective,
            converged: report.converged,
            stop_reason: &report.stop_reason,
            iterations: report.iterations,
            final_residual: report.final_residual(),
            kkt: report.kkt,
            max_abs_state: report.max_abs_state,
            truncation_inactive: report.truncation_inactive,
            gamma: problem.gamma(),
            kappa: problem.kappa(),
            activity: &report.activity,
            objective_history: &report.objective_history,
            residual_history: &report.residual_history,
            step_sizes: &report.step_sizes,
            probe,
        },
    )
}

/// One row per time interval: `t,u_l1,mu_linf,lambda,sparsity_fraction`.
pub(super) fn write_timeseries(path: &Path, report: &SolveReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["t", "u_l1", "mu_linf", "lambda", "sparsity_fraction"])
        .map_err(csv_error)?;
    let u = &report.u;
    for (k, m) in u.time_indices().enumerate() {
        let slice = u.slice(m);
        let zeros = slice.iter().filter(|v| **v == 0.0).count();
        let row = [
            u.tgrid().time(m),
            slice_l1_norm(u, m)?,
            slice_linf_norm(&report.mu, m)?,
            report.thresholds[k],
            zeros as f64 / slice.len() as f64,
        ];
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StabilityJson<'a> {
    config: &'a RunConfig,
    exponent: Option<f64>,
    constant: Option<f64>,
    regime: Regime,
    base_gamma: f64,
    points: &'a [SweepPoint],
    fit_note: Option<&'a str>,
    monotone: bool,
    aborted: Option<&'a str>,
    solver_tolerance: f64,
    /// Coercivity probe at the base solution.
    probe: Option<ProbeReport>,
}

/// `stability.csv` (`gamma,distance`) and `stability.json`.
pub(super) fn write_stability(
    dir: &Path,
    cfg: &RunConfig,
    report: &StabilityReport,
    probe: Option<ProbeReport>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("stability.csv")).map_err(csv_error)?;
    w.write_record(["gamma", "distance"]).map_err(csv_error)?;
    for p in &report.points {
        w.write_record([format!("{:e}", p.gamma), format!("{:e}", p.distance)])
            .map_err(csv_error)?;
    }
    w.flush()?;
    write_json(
        &dir.join("stability.json"),
        &StabilityJson {
            config: cfg,
            exponent: report.fit.as_ref().map(|f| f.exponent),
            constant: report.fit.as_ref().map(|f| f.constant),
            regime: report.regime,
            base_gamma: report.base_gamma,
            points: &report.points,
            fit_note: report.fit_note.as_deref(),
            monotone: report.monotone,
            aborted: report.aborted.as_deref(),
            solver_tolerance: report.solver_tolerance,
            probe,
        },
    )
}

pub fn write_field_dump(path: &Path, field: &SpaceTimeField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    let header = [
        field.n_slices(),
        field.grid().n_per_axis(),
        field.grid().n_dim(),
    ];
    for v in header {
        let v = u32::try_from(v)
            .map_err(|_| Error::Range(format!("dimension {v} does not fit the dump header")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dump back onto a field with horizon `t_final`; the layout follows
/// from the slice count (`n_t + 1` nodes or `n_t` intervals, given `n_t`).
pub fn read_field_dump(path: &Path, t_final: f64, n_t: usize) -> Result<SpaceTimeField> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..4] != FIELD_MAGIC {
        return Err(Error::ShapeMismatch("not a field dump".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let (n_slices, n_per_axis, n_dim) = (word(0), word(1), word(2));
    let layout = if n_slices == n_t + 1 {
        SliceLayout::Nodes
    } else if n_slices == n_t {
        SliceLayout::Intervals
    } else {
        return Err(Error::ShapeMismatch(format!(
            "dump has {n_slices} slices, expected {n_t} or {}",
            n_t + 1
        )));
    };
    let body = &bytes[16..];
    if body.len() % 8 != 0 {
        return Err(Error::ShapeMismatch("truncated field dump".into()));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SpaceTimeField::from_values(
        SpaceGrid::new(n_dim, n_per_axis)?,
        TimeGrid::new(t_final, n_t)?,
        layout,
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = SpaceGrid::new(2, 3).unwrap();
        let tgrid = TimeGrid::new(1.0, 4).unwrap();
        for layout in [SliceLayout::Nodes, SliceLayout::Intervals] {
            let f = SpaceTimeField::from_fn(grid, tgrid, layout, |x, t| x[0] - 2.0 * x[1] + t);
            let path = dir.path().join("f.pfld");
            write_field_dump(&path, &f).unwrap();
            let bytes = std::fs::read(&path).unwrap();
            assert_eq!(&bytes[..4], b"PFLD");
            assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize, f.n_slices());
            assert_eq!(bytes.len(), 16 + 8 * f.values().len());
            assert_eq!(read_field_dump(&path, 1.0, 4).unwrap(), f);
        }
    }
}
