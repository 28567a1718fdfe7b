//! Command-line driver: `solve`, `check` and `sweep` on a TOML run configuration.
//!
//! Exit codes: 0 success, 1 configuration error, 2 nonconvergence or aborted sweep,
//! 3 failed property check.

mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{
    DiagnosticsConfig, OutputConfig, Preset, ProblemConfig, RunConfig, Truncation,
};
pub use output::{read_field_dump, write_field_dump, FIELD_MAGIC};

use crate::checks::{format_table, run_suite, CheckOptions};
use crate::diagnostics::coercivity_probe;
use crate::error::{Error, Result};
use crate::optimizer::solve;
use crate::stability::gamma_sweep;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "parabolic-l1", version, about = "L1-budget optimal control of semilinear parabolic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the control problem and write report.json and timeseries.csv.
    Solve(CommonArgs),
    /// Run the property suite and print a pass/fail table.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        /// Perturb the adjoint inside the derivative checks (negative control).
        #[arg(long, hide = true)]
        corrupt_adjoint: bool,
    },
    /// Re-solve over a list of budgets and fit the stability exponent.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated budgets; defaults to five log-spaced values below the base.
        #[arg(long, value_delimiter = ',')]
        gammas: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed, overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Solve(common) => cmd_solve(&common),
        Command::Check {
            common,
            corrupt_adjoint,
        } => cmd_check(&common, CheckOptions { corrupt_adjoint }),
        Command::Sweep { common, gammas } => cmd_sweep(&common, gammas.as_deref()),
    }
}

/// Loads the configuration and applies the command-line overrides.
pub fn effective_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_error(e: impl std::fmt::Display) -> u8 {
    eprintln!("{e}");
    EXIT_CONFIG
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

pub fn cmd_solve(args: &CommonArgs) -> u8 {
    let cfg = match effective_config(args) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let (problem, level) = match cfg.build_problem() {
        Ok(p) => p,
        Err(e) => return config_error(e),
    };
    let outcome = (|| -> Result<bool> {
        let report = solve(&problem, &cfg.optimizer)?;
        let probe = if cfg.diagnostics.probe_samples > 0 {
            Some(coercivity_probe(
                &problem,
                &report.u,
                cfg.diagnostics.probe_samples,
                cfg.diagnostics.probe_tau,
                cfg.seed,
            )?)
        } else {
            None
        };
        let dir = &cfg.output.dir;
        create_dir(dir)?;
        output::write_solve_report(&dir.join("report.json"), &cfg, level, &problem, &report, probe)?;
        output::write_timeseries(&dir.join("timeseries.csv"), &report)?;
        if cfg.output.dump_fields {
            write_field_dump(&dir.join("u.pfld"), &report.u)?;
            write_field_dump(&dir.join("y.pfld"), &report.y)?;
            write_field_dump(&dir.join("phi.pfld"), &report.phi)?;
            write_field_dump(&dir.join("mu.pfld"), &report.mu)?;
        }
        println!(
            "{} after {} iterations: J = {:.12e}, residual = {:.3e}",
            report.stop_reason,
            report.iterations,
            report.objective,
            report.final_residual()
        );
        Ok(report.converged)
    })();
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_NOT_CONVERGED,
        Err(e) => {
            eprintln!("solve failed: {e}");
            EXIT_NOT_CONVERGED
        }
    }
}

pub fn cmd_check(args: &CommonArgs, opts: CheckOptions) -> u8 {
    let cfg = match effective_config(args) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let (problem, _) = match cfg.build_problem() {
        Ok(p) => p,
        Err(e) => return config_error(e),
    };
    match run_suite(&problem, cfg.seed, opts) {
        Ok(outcomes) => {
            print!("{}", format_table(&outcomes));
            if outcomes.iter().all(|o| o.passed) {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("check failed: {e}");
            EXIT_CHECK_FAILED
        }
    }
}

/// Five budgets `γ(1 − δ)` with `δ` log-spaced over `[1e-2, 10^{-0.5}]`.
pub fn default_sweep_gammas(gamma: f64) -> Vec<f64> {
    (0..5)
        .map(|k| gamma * (1.0 - 10f64.powf(-2.0 + 1.5 * k as f64 / 4.0)))
        .collect()
}

pub fn cmd_sweep(args: &CommonArgs, gammas: Option<&[f64]>) -> u8 {
    let cfg = match effective_config(args) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let (problem, _) = match cfg.build_problem() {
        Ok(p) => p,
        Err(e) => return config_error(e),
    };
    if let Some(g) = gammas {
        if let Some(bad) = g.iter().find(|g| !(**g > 0.0)) {
            return config_error(Error::Config(format!("--gammas: budgets must be positive, got {bad}")));
        }
    }
    let gammas = gammas
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| default_sweep_gammas(problem.gamma()));
    let outcome = (|| -> Result<bool> {
        let (report, base) = gamma_sweep(&problem, &gammas, &cfg.optimizer)?;
        let probe = if cfg.diagnostics.probe_samples > 0 && base.converged {
            Some(coercivity_probe(
                &problem,
                &base.u,
                cfg.diagnostics.probe_samples,
                cfg.diagnostics.probe_tau,
                cfg.seed,
            )?)
        } else {
            None
        };
        let dir = &cfg.output.dir;
        create_dir(dir)?;
        output::write_stability(dir, &cfg, &report, probe)?;
        match &report.fit {
            Some(fit) => println!(
                "regime {:?}: exponent {:.4}, constant {:.4e}",
                report.regime, fit.exponent, fit.constant
            ),
            None => println!(
                "regime {:?}: {}",
                report.regime,
                report.fit_note.as_deref().unwrap_or("no fit")
            ),
        }
        if let Some(why) = &report.aborted {
            eprintln!("sweep aborted: {why}");
        }
        Ok(report.aborted.is_none())
    })();
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_NOT_CONVERGED,
        Err(e) => {
            eprintln!("sweep failed: {e}");
            EXIT_NOT_CONVERGED
        }
    }
}
