//! Reaction terms `a(y)` together with the `C^1` truncation `a_M(y) = a(f_M(y))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest argument for which `exp` stays finite.
const EXP_LIMIT: f64 = 709.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityKind {
    Zero,
    Linear { c: f64 },
    Exponential,
    /// `(y - z1)(y - z2)(y - z3)`.
    Schloegl { z: [f64; 3] },
    /// `Σ_k coefficients[k] y^k`, odd degree with positive leading coefficient.
    Polynomial { coefficients: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    level: f64,
}

impl TruncationSpec {
    pub fn new(level: f64) -> Result<Self> {
        if !(level.is_finite() && level > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "truncation level must be positive, got {level}"
            )));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// `f_M`: identity on `(-M, M)`, constant `±(M+1)` beyond `M+1`, cubic blends between.
    pub fn f(&self, s: f64) -> f64 {
        let m = self.level;
        if s > m + 1.0 {
            m + 1.0
        } else if s >= m {
            let t = m - s;
            s + t * t + t * t * t
        } else if s > -m {
            s
        } else if s >= -m - 1.0 {
            let t = m + s;
            s - t * t - t * t * t
        } else {
            -m - 1.0
        }
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        let m = self.level;
        if s > m + 1.0 {
            0.0
        } else if s >= m {
            let t = m - s;
            1.0 - 2.0 * t - 3.0 * t * t
        } else if s > -m {
            1.0
        } else if s >= -m - 1.0 {
            let t = m + s;
            1.0 - 2.0 * t - 3.0 * t * t
        } else {
            0.0
        }
    }

    pub fn f_second(&self, s: f64) -> f64 {
        let m = self.level;
        if s > m + 1.0 || s < -m - 1.0 || (s > -m && s < m) {
            0.0
        } else if s >= m {
            2.0 + 6.0 * (m - s)
        } else {
            -2.0 - 6.0 * (m + s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    kind: NonlinearityKind,
    derivative_lower_bound: f64,
    truncation: Option<TruncationSpec>,
}

impl NonlinearitySpec {
    pub fn new(kind: NonlinearityKind) -> Result<Self> {
        let derivative_lower_bound = match &kind {
            NonlinearityKind::Zero | NonlinearityKind::Exponential => 0.0,
            NonlinearityKind::Linear { c } => {
                check_finite("linear coefficient", *c)?;
                *c
            }
            NonlinearityKind::Schloegl { z } => {
                for zi in z {
                    check_finite("Schloegl root", *zi)?;
                }
                let s1 = z[0] + z[1] + z[2];
                let s2 = z[0] * z[1] + z[0] * z[2] + z[1] * z[2];
                s2 - s1 * s1 / 3.0
            }
            NonlinearityKind::Polynomial { coefficients } => {
                validate_polynomial(coefficients)?;
                polynomial_derivative_min(coefficients)
            }
        };
        Ok(Self {
            kind,
            derivative_lower_bound,
            truncation: None,
        })
    }

    pub fn zero() -> Self {
        Self::new(NonlinearityKind::Zero).expect("zero nonlinearity is valid")
    }

    pub fn schloegl(z1: f64, z2: f64, z3: f64) -> Result<Self> {
        Self::new(NonlinearityKind::Schloegl { z: [z1, z2, z3] })
    }

    pub fn with_truncation(mut self, truncation: Option<TruncationSpec>) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn kind(&self) -> &NonlinearityKind {
        &self.kind
    }

    /// `C_a`, a lower bound of `∂a/∂y` over ℝ.
    pub fn derivative_lower_bound(&self) -> f64 {
        self.derivative_lower_bound
    }

    pub fn truncation(&self) -> Option<&TruncationSpec> {
        self.truncation.as_ref()
    }

    pub fn eval_a(&self, y: f64) -> Result<f64> {
        Ok(match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Linear { c } => c * y,
            NonlinearityKind::Exponential => checked_exp(y)?,
            NonlinearityKind::Schloegl { z } => (y - z[0]) * (y - z[1]) * (y - z[2]),
            NonlinearityKind::Polynomial { coefficients } => horner(coefficients, y),
        })
    }

    pub fn eval_ay(&self, y: f64) -> Result<f64> {
        Ok(match &self.kind {
            NonlinearityKind::Zero => 0.0,
            NonlinearityKind::Linear { c } => *c,
            NonlinearityKind::Exponential => checked_exp(y)?,
            NonlinearityKind::Schloegl { z } => {
                let (a, b, c) = (y - z[0], y - z[1], y - z[2]);
                a * b + a * c + b * c
            }
            NonlinearityKind::Polynomial { coefficients } => {
                horner(&derivative(coefficients), y)
            }
        })
    }

    pub fn eval_ayy(&self, y: f64) -> Result<f64> {
        Ok(match &self.kind {
            NonlinearityKind::Zero | NonlinearityKind::Linear { .. } => 0.0,
            NonlinearityKind::Exponential => checked_exp(y)?,
            NonlinearityKind::Schloegl { z } => 6.0 * y - 2.0 * (z[0] + z[1] + z[2]),
            NonlinearityKind::Polynomial { coefficients } => {
                horner(&derivative(&derivative(coefficients)), y)
            }
        })
    }

    /// `a(f_M(y))`.
    pub fn eval_a_truncated(&self, y: f64) -> Result<f64> {
        let tr = self.truncation.ok_or(Error::MissingTruncation)?;
        self.eval_a(tr.f(y))
    }

    /// `a_y(f_M(y)) f_M'(y)`.
    pub fn eval_ay_truncated(&self, y: f64) -> Result<f64> {
        let tr = self.truncation.ok_or(Error::MissingTruncation)?;
        let fp = tr.f_prime(y);
        if fp == 0.0 {
            return Ok(0.0);
        }
        Ok(self.eval_ay(tr.f(y))? * fp)
    }

    /// The reaction the state solver sees: truncated when a level is set.
    pub fn reaction(&self, y: f64) -> Result<f64> {
        match self.truncation {
            Some(_) => self.eval_a_truncated(y),
            None => self.eval_a(y),
        }
    }

    pub fn reaction_derivative(&self, y: f64) -> Result<f64> {
        match self.truncation {
            Some(_) => self.eval_ay_truncated(y),
            None => self.eval_ay(y),
        }
    }

    pub fn reaction_second_derivative(&self, y: f64) -> Result<f64> {
        match self.truncation {
            Some(tr) => {
                let (f, fp, fpp) = (tr.f(y), tr.f_prime(y), tr.f_second(y));
                let mut out = 0.0;
                if fp != 0.0 {
                    out += self.eval_ayy(f)? * fp * fp;
                }
                if fpp != 0.0 {
                    out += self.eval_ay(f)? * fpp;
                }
                Ok(out)
            }
            None => self.eval_ayy(y),
        }
    }
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be finite")))
    }
}

fn checked_exp(y: f64) -> Result<f64> {
    if y > EXP_LIMIT {
        Err(Error::Range(format!("exp({y}) overflows")))
    } else {
        Ok(y.exp())
    }
}

fn horner(coefficients: &[f64], y: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * y + c)
}

fn derivative(coefficients: &[f64]) -> Vec<f64> {
    coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, c)| k as f64 * c)
        .collect()
}

fn validate_polynomial(coefficients: &[f64]) -> Result<()> {
    for c in coefficients {
        check_finite("polynomial coefficient", *c)?;
    }
    let degree = coefficients.len().checked_sub(1);
    match degree {
        Some(d) if d % 2 == 1 && coefficients[d] > 0.0 => Ok(()),
        _ => Err(Error::InvalidParameter(
            "polynomial must have odd degree and positive leading coefficient".into(),
        )),
    }
}

/// Global minimum of `p'` for an odd-degree `p` with positive leading term.
///
/// Degrees 1 and 3 are closed form. Higher degrees locate the sign changes of `p''`
/// inside its Cauchy root bound and refine them by bisection.
fn polynomial_derivative_min(coefficients: &[f64]) -> f64 {
    let d1 = derivative(coefficients);
    match coefficients.len() - 1 {
        1 => d1[0],
        3 => {
            let (b, c2, a3) = (d1[0], d1[1], d1[2]);
            b - c2 * c2 / (4.0 * a3)
        }
        _ => {
            let d2 = derivative(&d1);
            let lead = *d2.last().expect("degree >= 5");
            let bound = 1.0
                + d2[..d2.len() - 1]
                    .iter()
                    .fold(0.0_f64, |acc, c| acc.max((c / lead).abs()));
            let samples = 8192;
            let step = 2.0 * bound / samples as f64;
            let mut best = f64::INFINITY;
            let mut left = -bound;
            let mut f_left = horner(&d2, left);
            for k in 1..=samples {
                let right = -bound + k as f64 * step;
                let f_right = horner(&d2, right);
                best = best.min(horner(&d1, left));
                if f_left < 0.0 && f_right >= 0.0 {
                    let (mut lo, mut hi) = (left, right);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if horner(&d2, mid) < 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    best = best.min(horner(&d1, 0.5 * (lo + hi)));
                }
                left = right;
                f_left = f_right;
            }
            best.min(horner(&d1, bound))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, s: f64, h: f64) -> f64 {
        (f(s + h) - f(s - h)) / (2.0 * h)
    }

    #[test]
    fn cubic_values() {
        let a = NonlinearitySpec::schloegl(0.0, 0.0, 0.0).unwrap();
        assert_eq!(a.eval_a(2.0).unwrap(), 8.0);
        assert_eq!(a.eval_ay(2.0).unwrap(), 12.0);
        assert_eq!(a.eval_ayy(2.0).unwrap(), 12.0);
    }

    #[test]
    fn exponential_values_and_overflow() {
        let a = NonlinearitySpec::new(NonlinearityKind::Exponential).unwrap();
        assert_eq!(a.eval_a(0.0).unwrap(), 1.0);
        assert_eq!(a.eval_ay(0.0).unwrap(), 1.0);
        assert_eq!(a.derivative_lower_bound(), 0.0);
        assert!(matches!(a.eval_a(800.0), Err(Error::Range(_))));
        assert!(matches!(a.eval_ayy(1e6), Err(Error::Range(_))));
    }

    #[test]
    fn schloegl_lower_bound() {
        let a = NonlinearitySpec::schloegl(-1.0, 0.0, 1.0).unwrap();
        assert_eq!(a.derivative_lower_bound(), -1.0);
        assert_eq!(a.eval_ay(0.0).unwrap(), -1.0);
        for y in [-2.0, 0.5, 3.0] {
            assert!((a.eval_a(y).unwrap() - (y * y * y - y)).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_lower_bounds() {
        // y^3 - 3y: p' = 3y^2 - 3, min -3
        let p = NonlinearitySpec::new(NonlinearityKind::Polynomial {
            coefficients: vec![0.0, -3.0, 0.0, 1.0],
        })
        .unwrap();
        assert!((p.derivative_lower_bound() + 3.0).abs() < 1e-14);
        // y^5 - 5y^3: p' = 5y^4 - 15y^2, min at y^2 = 3/2 -> -45/4
        let q = NonlinearitySpec::new(NonlinearityKind::Polynomial {
            coefficients: vec![0.0, 0.0, 0.0, -5.0, 0.0, 1.0],
        })
        .unwrap();
        assert!((q.derivative_lower_bound() + 11.25).abs() < 1e-10);
        assert!(NonlinearitySpec::new(NonlinearityKind::Polynomial {
            coefficients: vec![1.0, 0.0, -1.0],
        })
        .is_err());
        assert!(NonlinearitySpec::new(NonlinearityKind::Polynomial {
            coefficients: vec![0.0, -1.0],
        })
        .is_err());
    }

    #[test]
    fn derivative_bound_holds_on_samples() {
        let specs = [
            NonlinearitySpec::schloegl(-1.0, 0.0, 1.0).unwrap(),
            NonlinearitySpec::schloegl(0.0, 0.25, 1.0).unwrap(),
            NonlinearitySpec::new(NonlinearityKind::Linear { c: -0.5 }).unwrap(),
            NonlinearitySpec::new(NonlinearityKind::Exponential).unwrap(),
            NonlinearitySpec::new(NonlinearityKind::Polynomial {
                coefficients: vec![0.3, -2.0, 0.5, -1.0, 0.0, 0.2, 0.0, 0.01],
            })
            .unwrap(),
        ];
        for a in &specs {
            for k in -400..=400 {
                let y = k as f64 * 0.01;
                assert!(a.eval_ay(y).unwrap() >= a.derivative_lower_bound() - 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let specs = [
            NonlinearitySpec::schloegl(-1.0, 0.0, 1.0).unwrap(),
            NonlinearitySpec::new(NonlinearityKind::Exponential).unwrap(),
            NonlinearitySpec::new(NonlinearityKind::Polynomial {
                coefficients: vec![0.0, 1.0, 0.0, 2.0, 0.0, 0.5],
            })
            .unwrap(),
        ];
        for a in &specs {
            for y in [-1.3, -0.2, 0.4, 1.7] {
                let fd = central(|s| a.eval_a(s).unwrap(), y, 1e-5);
                let exact = a.eval_ay(y).unwrap();
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0));
                let fd2 = central(|s| a.eval_ay(s).unwrap(), y, 1e-5);
                let exact2 = a.eval_ayy(y).unwrap();
                assert!((fd2 - exact2).abs() <= 1e-6 * exact2.abs().max(1.0));
            }
        }
    }

    #[test]
    fn truncation_branches() {
        let tr = TruncationSpec::new(2.0).unwrap();
        assert_eq!(tr.f(1.5), 1.5);
        assert_eq!(tr.f(-1.999), -1.999);
        assert_eq!(tr.f(3.5), 3.0);
        assert_eq!(tr.f(-7.0), -3.0);
        assert_eq!(tr.f(2.0), 2.0);
        assert_eq!(tr.f_prime(2.0), 1.0);
        assert_eq!(tr.f_prime(3.0), 0.0);
        assert_eq!(tr.f(3.0), 3.0);
        assert_eq!(tr.f(-3.0), -3.0);
        assert!(TruncationSpec::new(0.0).is_err());
        assert!(TruncationSpec::new(f64::NAN).is_err());
    }

    #[test]
    fn truncated_reaction() {
        let a = NonlinearitySpec::schloegl(0.0, 0.0, 0.0).unwrap();
        assert!(matches!(a.eval_a_truncated(1.0), Err(Error::MissingTruncation)));
        let a = a.with_truncation(Some(TruncationSpec::new(2.0).unwrap()));
        assert_eq!(a.eval_a_truncated(1.2).unwrap(), a.eval_a(1.2).unwrap());
        assert_eq!(a.eval_a_truncated(10.0).unwrap(), 27.0);
        assert_eq!(a.eval_ay_truncated(10.0).unwrap(), 0.0);
        assert_eq!(a.reaction(-10.0).unwrap(), -27.0);
    }
}
