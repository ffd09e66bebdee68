use q2opt_core::approximator::{Network, ParamSnapshot};
use q2opt_core::cem::{CemConfig, GreedyPolicy, HybridAction};
use q2opt_core::distrl::{quantile_midpoints, LossConfig, TauVector};
use q2opt_core::risk::{RiskMetric, ScoreFn};
use rand::Rng;

use crate::config::{AgentKind, ExperimentConfig};
use crate::Result;

/// Everything a role needs to act, label or train for one agent kind.
#[derive(Debug, Clone)]
pub struct Agent {
    pub kind: AgentKind,
    pub network: Network,
    pub loss: LossConfig,
    pub cem: CemConfig,
    pub risk: RiskMetric,
    pub score: ScoreFn,
    pub policy_taus: usize,
    pub prediction_taus: usize,
    pub target_taus: usize,
    pub clipped_min: bool,
    /// Fixed probabilities of the quantile head.
    pub midpoints: Option<TauVector>,
}

impl Agent {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let network = Network::new(cfg.network_spec())?;
        let score = if cfg.run.score_weights.is_empty() {
            ScoreFn::Mean
        } else {
            ScoreFn::weighted(cfg.run.score_weights.clone())?
        };
        let midpoints = match cfg.run.agent {
            AgentKind::Q2rOpt => Some(quantile_midpoints(cfg.run.quantiles)?),
            _ => None,
        };
        Ok(Self {
            kind: cfg.run.agent,
            network,
            loss: cfg.loss,
            cem: cfg.cem,
            risk: cfg.run.risk,
            score,
            policy_taus: cfg.run.policy_taus,
            prediction_taus: cfg.run.prediction_taus,
            target_taus: cfg.run.target_taus,
            clipped_min: cfg.run.clipped_min,
            midpoints,
        })
    }

    /// The same agent acting under a different distortion.
    pub fn with_risk(&self, risk: RiskMetric) -> Result<Self> {
        risk.validate()?;
        let mut a = self.clone();
        a.risk = risk;
        Ok(a)
    }

    pub fn policy(&self) -> GreedyPolicy<'_> {
        GreedyPolicy {
            network: &self.network,
            risk: self.risk,
            score: &self.score,
            cem: &self.cem,
            policy_taus: self.policy_taus,
        }
    }

    pub fn act<R: Rng + ?Sized>(
        &self,
        params: &ParamSnapshot,
        state: &[f64],
        rng: &mut R,
    ) -> Result<HybridAction> {
        Ok(self.policy().act(params, state, rng)?)
    }

    /// Length of every target vector this agent produces.
    pub fn target_len(&self) -> usize {
        match self.kind {
            AgentKind::QtOpt => 1,
            AgentKind::Q2rOpt => self.midpoints.as_ref().map_or(0, |m| m.len()),
            AgentKind::Q2fOpt => self.target_taus,
        }
    }
}
