//! TOML run configuration and its translation into a [`Problem`].

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiffusionTensor, SliceLayout, SpaceGrid, SpaceTimeField, TimeGrid};
use crate::nonlinearity::{NonlinearityKind, NonlinearitySpec, TruncationSpec};
use crate::optimizer::OptimizerConfig;
use crate::problem::{default_truncation_level, NewtonConfig, Problem, ProblemSpec};

/// Spatial profile of `y0` or of the (time-constant) target `y_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    Zero,
    /// `Π sin(π x_i)`.
    OneMode,
    /// Gaussian centered off the middle of the box.
    Bump,
    Constant(f64),
}

const BUMP_CENTER: [f64; 2] = [0.35, 0.6];
const BUMP_WIDTH: f64 = 0.15;

impl Preset {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Preset::Zero => 0.0,
            Preset::OneMode => x.iter().map(|c| (PI * c).sin()).product(),
            Preset::Bump => {
                let r2: f64 = x
                    .iter()
                    .zip(BUMP_CENTER)
                    .map(|(c, m)| (c - m) * (c - m))
                    .sum();
                (-r2 / (2.0 * BUMP_WIDTH * BUMP_WIDTH)).exp()
            }
            Preset::Constant(c) => c,
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "zero" => Ok(Preset::Zero),
            "one-mode" => Ok(Preset::OneMode),
            "bump" => Ok(Preset::Bump),
            other => {
                let inner = other
                    .strip_prefix("constant(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| {
                        format!(
                            "unknown preset `{other}`, expected zero, one-mode, bump or constant(c)"
                        )
                    })?;
                let c: f64 = inner
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad constant in preset `{other}`"))?;
                if !c.is_finite() {
                    return Err(format!("constant in preset `{other}` must be finite"));
                }
                Ok(Preset::Constant(c))
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Zero => write!(f, "zero"),
            Preset::OneMode => write!(f, "one-mode"),
            Preset::Bump => write!(f, "bump"),
            Preset::Constant(c) => write!(f, "constant({c:?})"),
        }
    }
}

impl Serialize for Preset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Preset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `"auto"`, `"none"` or an explicit level `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Auto,
    Off,
    Level(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TruncationRepr {
    Level(f64),
    Name(String),
}

impl Serialize for Truncation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Truncation::Auto => TruncationRepr::Name("auto".into()),
            Truncation::Off => TruncationRepr::Name("none".into()),
            Truncation::Level(m) => TruncationRepr::Level(m),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Truncation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match TruncationRepr::deserialize(d)? {
            TruncationRepr::Level(m) => Ok(Truncation::Level(m)),
            TruncationRepr::Name(n) if n == "auto" => Ok(Truncation::Auto),
            TruncationRepr::Name(n) if n == "none" => Ok(Truncation::Off),
            TruncationRepr::Name(n) => Err(serde::de::Error::custom(format!(
                "truncation must be \"auto\", \"none\" or a number, got `{n}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub n_dim: usize,
    pub n_per_axis: usize,
    pub n_t: usize,
    pub t_final: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Row-major `n_dim × n_dim` coefficients; identity when absent.
    pub diffusion: Option<Vec<f64>>,
    pub nonlinearity: NonlinearityKind,
    pub truncation: Truncation,
    pub y0: Preset,
    pub yd: Preset,
    pub newton: NewtonConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            n_dim: 2,
            n_per_axis: 8,
            n_t: 10,
            t_final: 1.0,
            kappa: 1e-2,
            gamma: 1.4,
            diffusion: None,
            nonlinearity: NonlinearityKind::Schloegl {
                z: [-1.0, 0.0, 1.0],
            },
            truncation: Truncation::Auto,
            y0: Preset::Zero,
            yd: Preset::OneMode,
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write `u`, `y`, `phi` and `mu` as binary field dumps.
    pub dump_fields: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            dump_fields: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Directions sampled by the coercivity probe after a solve or sweep; 0 skips it.
    pub probe_samples: usize,
    pub probe_tau: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            probe_samples: 16,
            probe_tau: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub problem: ProblemConfig,
    pub optimizer: OptimizerConfig,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            problem: ProblemConfig::default(),
            optimizer: OptimizerConfig::default(),
            output: OutputConfig::default(),
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

fn keyed<T>(key: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn require(key: &str, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: {what}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Range checks, reported under the offending key.
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        require("problem.n_dim", p.n_dim == 1 || p.n_dim == 2, "must be 1 or 2")?;
        require("problem.n_per_axis", p.n_per_axis >= 1, "must be at least 1")?;
        require("problem.n_t", p.n_t >= 1, "must be at least 1")?;
        require(
            "problem.t_final",
            p.t_final.is_finite() && p.t_final > 0.0,
            "must be positive",
        )?;
        require("problem.kappa", p.kappa.is_finite() && p.kappa > 0.0, "must be positive")?;
        require("problem.gamma", p.gamma > 0.0, "must be positive")?;
        if let Some(d) = &p.diffusion {
            require(
                "problem.diffusion",
                d.len() == p.n_dim * p.n_dim,
                "needs n_dim * n_dim entries",
            )?;
        }
        if let Truncation::Level(m) = p.truncation {
            require("problem.truncation", m.is_finite() && m > 0.0, "level must be positive")?;
        }
        require(
            "problem.newton.residual_tol",
            p.newton.residual_tol > 0.0,
            "must be positive",
        )?;
        require(
            "problem.newton.max_iterations",
            p.newton.max_iterations >= 1,
            "must be at least 1",
        )?;
        keyed("optimizer", self.optimizer.validate())?;
        require(
            "diagnostics.probe_tau",
            self.diagnostics.probe_tau >= 0.0,
            "must be nonnegative",
        )?;
        Ok(())
    }

    /// Validates and assembles the problem; also returns the truncation level used.
    pub fn build_problem(&self) -> Result<(Problem, Option<f64>)> {
        self.validate()?;
        let p = &self.problem;
        let grid = keyed("problem.n_per_axis", SpaceGrid::new(p.n_dim, p.n_per_axis))?;
        let tgrid = keyed("problem.n_t", TimeGrid::new(p.t_final, p.n_t))?;
        let diffusion = match &p.diffusion {
            Some(d) => keyed("problem.diffusion", DiffusionTensor::new(p.n_dim, d.clone()))?,
            None => DiffusionTensor::identity(p.n_dim)?,
        };
        let y0 = grid.sample(|x| p.y0.eval(x));
        let yd_profile = grid.sample(|x| p.yd.eval(x));
        let mut yd = SpaceTimeField::zeros(grid, tgrid, SliceLayout::Nodes);
        for m in yd.time_indices() {
            yd.slice_mut(m).copy_from_slice(&yd_profile);
        }
        let level = match p.truncation {
            Truncation::Auto => Some(default_truncation_level(p.kappa, p.gamma, &y0, &yd)),
            Truncation::Off => None,
            Truncation::Level(m) => Some(m),
        };
        let truncation = level
            .map(|m| keyed("problem.truncation", TruncationSpec::new(m)))
            .transpose()?;
        let nonlinearity = keyed(
            "problem.nonlinearity",
            NonlinearitySpec::new(p.nonlinearity.clone()),
        )?
        .with_truncation(truncation);
        let spec = ProblemSpec {
            kappa: p.kappa,
            gamma: p.gamma,
            grid,
            tgrid,
            diffusion,
            nonlinearity,
            y0,
            yd,
            newton: p.newton,
        };
        Ok((keyed("problem", Problem::new(spec))?, level))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_print() {
        for s in ["zero", "one-mode", "bump", "constant(0.5)", "constant(-2.0)"] {
            let p: Preset = s.parse().unwrap();
            assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
        }
        assert_eq!("constant(0.5)".parse::<Preset>().unwrap(), Preset::Constant(0.5));
        assert!("constant(x)".parse::<Preset>().is_err());
        assert!("wave".parse::<Preset>().is_err());
    }

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_toml("[problem]\nkapa = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("kapa"), "{e}");
    }

    #[test]
    fn bad_value_is_named() {
        let c = RunConfig::from_toml("[problem]\nkappa = -1.0\n").unwrap();
        let e = c.build_problem().unwrap_err();
        assert!(e.to_string().contains("problem.kappa"), "{e}");
    }

    #[test]
    fn truncation_forms() {
        let c = RunConfig::from_toml("[problem]\ntruncation = \"none\"\n").unwrap();
        assert_eq!(c.build_problem().unwrap().1, None);
        let c = RunConfig::from_toml("[problem]\ntruncation = 40\n").unwrap();
        assert_eq!(c.build_problem().unwrap().1, Some(40.0));
        assert!(RunConfig::from_toml("[problem]\ntruncation = \"sometimes\"\n").is_err());
    }

    #[test]
    fn nonlinearity_table() {
        let c = RunConfig::from_toml(
            "[problem.nonlinearity]\nkind = \"polynomial\"\ncoefficients = [0.0, 1.0, 0.0, 2.0]\n",
        )
        .unwrap();
        let (p, _) = c.build_problem().unwrap();
        assert_eq!(p.spec().nonlinearity.derivative_lower_bound(), 1.0);
    }
}
