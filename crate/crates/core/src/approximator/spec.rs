use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::fnv1a;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    LayerNorm,
    None,
}

/// Output head of a value network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Head {
    /// One sigmoid output: the scalar QT-Opt value.
    Scalar,
    /// `quantiles` outputs at the fixed quantile midpoints.
    QuantileFixed { quantiles: usize },
    /// Implicit quantile head: the trunk features are gated by a cosine
    /// embedding of each requested probability.
    Implicit { n_basis: usize, embed_dim: usize },
}

/// Closed interval the network outputs are squashed into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    /// Maps `v` from `[min, max]` onto `[0, 1]`.
    pub fn to_unit(&self, v: f64) -> f64 {
        (v - self.min) / self.width()
    }
}

impl Default for ValueRange {
    /// Worst return of a 20-step episode (19 penalised steps) up to a success.
    fn default() -> Self {
        Self::new(-0.2, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub normalization: Normalization,
    pub head: Head,
    pub value_range: ValueRange,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidSpec(msg));
        if self.state_dim + self.action_dim == 0 {
            return bad("input dimension is zero".into());
        }
        if self.hidden_layers.is_empty() {
            return bad("at least one hidden layer is required".into());
        }
        if self.hidden_layers.contains(&0) {
            return bad(format!("zero-width layer in {:?}", self.hidden_layers));
        }
        let (lo, hi) = (self.value_range.min, self.value_range.max);
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("value range [{lo}, {hi}] is empty"));
        }
        match self.head {
            Head::Scalar => {}
            Head::QuantileFixed { quantiles } => {
                if quantiles == 0 {
                    return bad("quantile head needs at least one output".into());
                }
            }
            Head::Implicit { n_basis, embed_dim } => {
                if n_basis == 0 {
                    return bad("cosine embedding needs at least one basis function".into());
                }
                if self.hidden_layers.len() < 2 {
                    return bad(
                        "implicit head needs two hidden layers (trunk and post-gate)".into(),
                    );
                }
                let gated = self.hidden_layers[self.hidden_layers.len() - 2];
                if embed_dim != gated {
                    return bad(format!(
                        "embed_dim {embed_dim} must equal the gated layer width {gated}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    /// Number of outputs per (state, action) for heads with a fixed width.
    pub fn fixed_outputs(&self) -> Option<usize> {
        match self.head {
            Head::Scalar => Some(1),
            Head::QuantileFixed { quantiles } => Some(quantiles),
            Head::Implicit { .. } => None,
        }
    }

    /// Stable digest of every field that affects the parameter layout or
    /// the meaning of the parameters.
    pub fn digest(&self) -> u64 {
        let mut words: Vec<u64> = Vec::with_capacity(12 + self.hidden_layers.len());
        words.push(self.state_dim as u64);
        words.push(self.action_dim as u64);
        words.push(self.hidden_layers.len() as u64);
        words.extend(self.hidden_layers.iter().map(|&w| w as u64));
        words.push(match self.normalization {
            Normalization::LayerNorm => 1,
            Normalization::None => 0,
        });
        match self.head {
            Head::Scalar => words.push(0),
            Head::QuantileFixed { quantiles } => words.extend([1, quantiles as u64]),
            Head::Implicit { n_basis, embed_dim } => {
                words.extend([2, n_basis as u64, embed_dim as u64])
            }
        }
        words.push(self.value_range.min.to_bits());
        words.push(self.value_range.max.to_bits());
        fnv1a(words.iter().flat_map(|w| w.to_le_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec(head: Head) -> NetworkSpec {
        NetworkSpec {
            state_dim: 3,
            action_dim: 2,
            hidden_layers: vec![4, 4],
            normalization: Normalization::LayerNorm,
            head,
            value_range: ValueRange::default(),
        }
    }

    #[test]
    fn validation() {
        assert!(spec(Head::Scalar).validate().is_ok());
        assert!(spec(Head::Implicit {
            n_basis: 8,
            embed_dim: 4
        })
        .validate()
        .is_ok());
        assert!(spec(Head::Implicit {
            n_basis: 8,
            embed_dim: 5
        })
        .validate()
        .is_err());
        assert!(spec(Head::QuantileFixed { quantiles: 0 })
            .validate()
            .is_err());
        let mut s = spec(Head::Scalar);
        s.value_range = ValueRange::new(1.0, 1.0);
        assert!(s.validate().is_err());
        s = spec(Head::Scalar);
        s.hidden_layers = vec![4, 0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn digest_tracks_fields() {
        let a = spec(Head::Scalar);
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.hidden_layers[1] = 5;
        assert_ne!(a.digest(), b.digest());
        assert_ne!(
            a.digest(),
            spec(Head::QuantileFixed { quantiles: 1 }).digest()
        );
    }
}
