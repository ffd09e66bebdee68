//! Distributional targets and losses.
//!
//! Predictions `q` and targets `q_hat` are vectors of inverse-CDF values;
//! their pairwise differences `delta[j][i] = q_hat[j] - q[i]` feed the Huber
//! quantile loss.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::ValueRange;
use crate::cem::HybridAction;
use crate::{Error, Result};

/// Probabilities in `[0, 1]` at which a quantile function is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauVector(Vec<f64>);

impl TauVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::TauOutOfRange(bad));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for TauVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Predicted or target quantile values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileVector(Vec<f64>);

impl QuantileVector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

impl Deref for QuantileVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Pairwise TD errors, indexed `[target j][prediction i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdErrorMatrix {
    targets: usize,
    predictions: usize,
    delta: Vec<f64>,
}

impl TdErrorMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.targets, self.predictions)
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.delta[j * self.predictions + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.delta[j * self.predictions..(j + 1) * self.predictions]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Width of the quadratic regime of the Huber loss.
    pub kappa: f64,
    pub gamma: f64,
    /// Targets are clamped into this range.
    pub value_range: ValueRange,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kappa: 0.002,
            gamma: 0.9,
            value_range: ValueRange::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "kappa {} must be > 0",
                self.kappa
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "gamma {} must lie in (0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// One environment step with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: HybridAction,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    pub policy_id: String,
    pub episode_id: u64,
    pub step_index: u32,
}

/// `tau_i = (2i - 1) / 2N` for `i = 1..=N`.
pub fn quantile_midpoints(n: usize) -> Result<TauVector> {
    if n == 0 {
        return Err(Error::EmptyCount("quantile midpoints"));
    }
    let denom = 2.0 * n as f64;
    Ok(TauVector(
        (1..=n).map(|i| (2 * i - 1) as f64 / denom).collect(),
    ))
}

/// `n` independent `U[0, 1)` probabilities.
pub fn sample_taus<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<TauVector> {
    if n == 0 {
        return Err(Error::EmptyCount("sampled taus"));
    }
    Ok(TauVector((0..n).map(|_| rng.random::<f64>()).collect()))
}

/// `r * 1 + gamma * v`, or `r * 1` on terminal steps, clamped to the value
/// range.
pub fn bellman_target(reward: f64, terminal: bool, v: &[f64], cfg: &LossConfig) -> QuantileVector {
    let range = cfg.value_range;
    QuantileVector(
        v.iter()
            .map(|&vi| {
                let t = if terminal {
                    reward
                } else {
                    reward + cfg.gamma * vi
                };
                range.clamp(t)
            })
            .collect(),
    )
}

pub fn td_errors(q_hat: &[f64], q: &[f64]) -> TdErrorMatrix {
    let mut delta = Vec::with_capacity(q_hat.len() * q.len());
    for &t in q_hat {
        delta.extend(q.iter().map(|&p| t - p));
    }
    TdErrorMatrix {
        targets: q_hat.len(),
        predictions: q.len(),
        delta,
    }
}

fn huber(delta: f64, kappa: f64) -> f64 {
    let a = delta.abs();
    if a <= kappa {
        0.5 * delta * delta
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

fn huber_grad(delta: f64, kappa: f64) -> f64 {
    if delta.abs() <= kappa {
        delta
    } else {
        kappa * delta.signum()
    }
}

fn asymmetry(delta: f64, tau: f64) -> f64 {
    if delta < 0.0 {
        (tau - 1.0).abs()
    } else {
        tau
    }
}

/// `|tau - 1{delta < 0}| * L_kappa(delta)`.
pub fn huber_quantile_loss(delta: f64, tau: f64, kappa: f64) -> f64 {
    asymmetry(delta, tau) * huber(delta, kappa)
}

/// Derivative of [`huber_quantile_loss`] with respect to `delta`; zero at
/// `delta = 0`.
pub fn huber_quantile_loss_grad(delta: f64, tau: f64, kappa: f64) -> f64 {
    asymmetry(delta, tau) * huber_grad(delta, kappa)
}

/// `sum_i mean_j rho_{tau_i}(q_hat[j] - q[i])` and its gradient with respect
/// to `q`.
pub fn qr_loss(
    q: &[f64],
    q_hat: &[f64],
    taus: &[f64],
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    if taus.len() != q.len() {
        return Err(Error::DimensionMismatch {
            what: "taus",
            expected: q.len(),
            actual: taus.len(),
        });
    }
    if q.is_empty() || q_hat.is_empty() {
        return Err(Error::EmptyCount("quantile vectors"));
    }
    let inv_j = 1.0 / q_hat.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(q.len());
    for (&qi, &tau) in q.iter().zip(taus) {
        let mut li = 0.0;
        let mut gi = 0.0;
        for &tj in q_hat {
            let d = tj - qi;
            li += huber_quantile_loss(d, tau, cfg.kappa);
            gi -= huber_quantile_loss_grad(d, tau, cfg.kappa);
        }
        loss += li * inv_j;
        grad.push(gi * inv_j);
    }
    Ok((loss, grad))
}

const CE_CLIP: f64 = 1e-12;

/// Binary cross-entropy `-t ln p - (1 - t) ln (1 - p)`.
pub fn scalar_ce_loss(p: f64, t: f64) -> f64 {
    let p = p.clamp(CE_CLIP, 1.0 - CE_CLIP);
    -t * libm::log(p) - (1.0 - t) * libm::log(1.0 - p)
}

/// Cross-entropy between a network value `q` and a target, both in return
/// units, after mapping the value range onto the unit interval. Returns the
/// loss and its derivative with respect to `q`.
pub fn scalar_ce_loss_on_range(q: f64, target: f64, range: ValueRange) -> (f64, f64) {
    let p = range.to_unit(q).clamp(CE_CLIP, 1.0 - CE_CLIP);
    let t = range.to_unit(target).clamp(0.0, 1.0);
    let loss = scalar_ce_loss(p, t);
    let dp = (p - t) / (p * (1.0 - p));
    (loss, dp / range.width())
}
