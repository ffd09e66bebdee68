//! Risk distortion metrics and scoring reducers.
//!
//! A distortion `beta: [0, 1] -> [0, 1]` reweights the probabilities at which
//! a quantile function is queried; a scoring reducer `psi` turns the
//! resulting quantile vector into one decision value.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distrl::TauVector;
use crate::math::{normal_cdf, probit};
use crate::{Error, Result};

/// A distortion `beta(tau; eta)`. Written as `kind(eta)`, e.g. `wang(-0.75)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
#[derive(Default)]
pub enum RiskMetric {
    #[default]
    Neutral,
    /// Cumulative probability weighting, `eta > 0`.
    Cpw(f64),
    Wang(f64),
    /// `eta * tau` with `0 < eta <= 1`.
    Cvar(f64),
    /// Mean of `eta` fresh uniform draws.
    Norm(u32),
    Pow(f64),
}

impl RiskMetric {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidRisk(m));
        match *self {
            RiskMetric::Neutral => Ok(()),
            RiskMetric::Cpw(eta) if !(eta > 0.0 && eta.is_finite()) => {
                bad(format!("cpw needs eta > 0, got {eta}"))
            }
            RiskMetric::Cvar(eta) if !(eta > 0.0 && eta <= 1.0) => {
                bad(format!("cvar needs 0 < eta <= 1, got {eta}"))
            }
            RiskMetric::Norm(0) => bad("norm needs an integer eta >= 1".into()),
            RiskMetric::Wang(eta) | RiskMetric::Pow(eta) if !eta.is_finite() => {
                bad(format!("eta must be finite, got {eta}"))
            }
            _ => Ok(()),
        }
    }

    /// Whether `distort` consumes randomness.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, RiskMetric::Norm(_))
    }

    /// `beta(tau)`. Only [`RiskMetric::Norm`] draws from `rng`.
    pub fn distort<R: Rng + ?Sized>(&self, tau: f64, rng: &mut R) -> Result<f64> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::TauOutOfRange(tau));
        }
        self.validate()?;
        Ok(self.distort_unchecked(tau, rng))
    }

    fn distort_unchecked<R: Rng + ?Sized>(&self, tau: f64, rng: &mut R) -> f64 {
        let out = match *self {
            RiskMetric::Neutral => tau,
            RiskMetric::Cpw(eta) => {
                let a = libm::pow(tau, eta);
                let b = libm::pow(1.0 - tau, eta);
                a / libm::pow(a + b, 1.0 / eta)
            }
            RiskMetric::Wang(eta) => {
                if tau <= 0.0 {
                    0.0
                } else if tau >= 1.0 {
                    1.0
                } else {
                    normal_cdf(probit(tau) + eta)
                }
            }
            RiskMetric::Cvar(eta) => eta * tau,
            RiskMetric::Norm(eta) => {
                (0..eta).map(|_| rng.random::<f64>()).sum::<f64>() / eta as f64
            }
            RiskMetric::Pow(eta) => {
                let exponent = 1.0 / (1.0 + eta.abs());
                if eta >= 0.0 {
                    libm::pow(tau, exponent)
                } else {
                    1.0 - libm::pow(1.0 - tau, exponent)
                }
            }
        };
        out.clamp(0.0, 1.0)
    }

    /// Element-wise [`distort`](Self::distort).
    pub fn distort_vector<R: Rng + ?Sized>(
        &self,
        taus: &TauVector,
        rng: &mut R,
    ) -> Result<TauVector> {
        self.validate()?;
        let out = taus
            .iter()
            .map(|&t| self.distort_unchecked(t, rng))
            .collect();
        TauVector::new(out)
    }
}

impl fmt::Display for RiskMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskMetric::Neutral => f.write_str("neutral"),
            RiskMetric::Cpw(e) => write!(f, "cpw({e})"),
            RiskMetric::Wang(e) => write!(f, "wang({e})"),
            RiskMetric::Cvar(e) => write!(f, "cvar({e})"),
            RiskMetric::Norm(e) => write!(f, "norm({e})"),
            RiskMetric::Pow(e) => write!(f, "pow({e})"),
        }
    }
}

impl FromStr for RiskMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "neutral" {
            return Ok(RiskMetric::Neutral);
        }
        let parse_err = || Error::InvalidRisk(format!("cannot parse risk metric {s:?}"));
        let (name, rest) = s.split_once('(').ok_or_else(parse_err)?;
        let arg = rest.strip_suffix(')').ok_or_else(parse_err)?.trim();
        let eta: f64 = arg.parse().map_err(|_| parse_err())?;
        let metric = match name.trim() {
            "cpw" => RiskMetric::Cpw(eta),
            "wang" => RiskMetric::Wang(eta),
            "cvar" => RiskMetric::Cvar(eta),
            "pow" => RiskMetric::Pow(eta),
            "norm" => {
                if libm::trunc(eta) != eta || eta < 1.0 || eta > u32::MAX as f64 {
                    return Err(Error::InvalidRisk(format!(
                        "norm needs an integer eta >= 1, got {arg}"
                    )));
                }
                RiskMetric::Norm(eta as u32)
            }
            _ => return Err(parse_err()),
        };
        metric.validate()?;
        Ok(metric)
    }
}

impl TryFrom<String> for RiskMetric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RiskMetric> for String {
    fn from(m: RiskMetric) -> String {
        m.to_string()
    }
}

/// Reducer from a quantile vector to a score.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreFn {
    #[default]
    Mean,
    /// `(1/N) sum_i w_i q_i` with non-negative weights.
    Weighted { weights: Vec<f64> },
}

impl ScoreFn {
    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidRisk(
                "score weights must be finite and >= 0".into(),
            ));
        }
        Ok(ScoreFn::Weighted { weights })
    }

    pub fn score(&self, q: &[f64]) -> Result<f64> {
        let n = q.len() as f64;
        match self {
            ScoreFn::Mean => Ok(q.iter().sum::<f64>() / n),
            ScoreFn::Weighted { weights } => {
                if weights.len() != q.len() {
                    return Err(Error::DimensionMismatch {
                        what: "score weights",
                        expected: q.len(),
                        actual: weights.len(),
                    });
                }
                Ok(weights.iter().zip(q).map(|(w, v)| w * v).sum::<f64>() / n)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distrl::quantile_midpoints;
    use alloc::vec;
    use rand::SeedableRng;

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(3)
    }

    #[test]
    fn table_examples() {
        let r = &mut rng();
        assert!((RiskMetric::Cvar(0.4).distort(0.5, r).unwrap() - 0.2).abs() < 1e-15);
        assert!((RiskMetric::Wang(0.0).distort(0.37, r).unwrap() - 0.37).abs() < 1e-12);
        assert!((RiskMetric::Cpw(1.0).distort(0.8, r).unwrap() - 0.8).abs() < 1e-15);
        assert!((RiskMetric::Pow(0.0).distort(0.6, r).unwrap() - 0.6).abs() < 1e-15);
        // Pow(-2): 1 - (1 - 0.5)^(1/3)
        let p = RiskMetric::Pow(-2.0).distort(0.5, r).unwrap();
        assert!((p - (1.0 - libm::cbrt(0.5))).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        let r = &mut rng();
        assert!(RiskMetric::Cvar(0.0).distort(0.5, r).is_err());
        assert!(RiskMetric::Cvar(1.5).distort(0.5, r).is_err());
        assert!(RiskMetric::Norm(0).distort(0.5, r).is_err());
        assert!(RiskMetric::Cpw(-1.0).distort(0.5, r).is_err());
        assert!(RiskMetric::Neutral.distort(1.5, r).is_err());
    }

    #[test]
    fn vector_examples() {
        let r = &mut rng();
        let m = quantile_midpoints(4).unwrap();
        assert_eq!(RiskMetric::Neutral.distort_vector(&m, r).unwrap(), m);
        let c = RiskMetric::Cvar(0.25).distort_vector(&m, r).unwrap();
        assert_eq!(c.as_slice(), &[0.03125, 0.09375, 0.15625, 0.21875]);
    }

    #[test]
    fn norm_is_mean_of_draws() {
        let r = &mut rng();
        let n = 20_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| RiskMetric::Norm(3).distort(0.9, r).unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        // Mean of three uniforms: mean 1/2, variance 1/36.
        assert!((mean - 0.5).abs() < 0.01);
        assert!((var - 1.0 / 36.0).abs() < 0.003);
    }

    #[test]
    fn parse_and_display() {
        for s in [
            "neutral",
            "cpw(0.71)",
            "wang(-0.75)",
            "wang(0.75)",
            "cvar(0.25)",
            "norm(3)",
            "pow(-2)",
        ] {
            let m: RiskMetric = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!(
            "Wang( -0.75 )".parse::<RiskMetric>().unwrap(),
            RiskMetric::Wang(-0.75)
        );
        assert!("norm(2.5)".parse::<RiskMetric>().is_err());
        assert!("cvar(2)".parse::<RiskMetric>().is_err());
        assert!("median".parse::<RiskMetric>().is_err());
    }

    #[test]
    fn scores() {
        assert!((ScoreFn::Mean.score(&[0.2, 0.4, 0.6]).unwrap() - 0.4).abs() < 1e-15);
        let w = ScoreFn::weighted(vec![2.0, 0.0]).unwrap();
        assert!((w.score(&[0.2, 0.4]).unwrap() - 0.2).abs() < 1e-15);
        let ones = ScoreFn::weighted(vec![1.0; 3]).unwrap();
        let q = [0.1, 0.7, -0.05];
        assert!((ones.score(&q).unwrap() - ScoreFn::Mean.score(&q).unwrap()).abs() < 1e-15);
        assert!(w.score(&[0.1]).is_err());
        assert!(ScoreFn::weighted(vec![-1.0]).is_err());
    }
}
