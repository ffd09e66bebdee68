use std::sync::Arc;

use q2opt_core::distrl::{bellman_target, sample_taus, QuantileVector, TauVector, Transition};
use rand::Rng;

use super::{Agent, TargetNets};
use crate::config::AgentKind;
use crate::Result;

/// A transition with its distributional target attached.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTransition {
    pub transition: Arc<Transition>,
    pub target: QuantileVector,
    /// Prediction-side probabilities (implicit head only).
    pub tau: Option<TauVector>,
    /// Live parameter version the target nets had caught up to.
    pub label_version: u64,
}

/// `v(s')`: the action is chosen under `theta_bar_2` and evaluated under
/// `theta_bar_1` (optionally min-clipped against `theta_bar_2`).
fn next_value<R: Rng + ?Sized>(
    agent: &Agent,
    nets: &TargetNets,
    next_state: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let action = agent.act(&nets.theta_bar_2, next_state, rng)?.encode();
    let taus = match agent.kind {
        AgentKind::Q2fOpt => Some(sample_taus(agent.target_taus, rng)?),
        _ => None,
    };
    let mut v = agent
        .network
        .forward(&nets.theta_bar_1, next_state, &action, taus.as_ref())?
        .into_vec();
    if agent.clipped_min {
        let w = agent
            .network
            .forward(&nets.theta_bar_2, next_state, &action, taus.as_ref())?;
        for (a, b) in v.iter_mut().zip(w.iter()) {
            *a = a.min(*b);
        }
    }
    Ok(v)
}

pub fn label_one<R: Rng + ?Sized>(
    transition: Arc<Transition>,
    nets: &TargetNets,
    agent: &Agent,
    rng: &mut R,
) -> Result<LabeledTransition> {
    let v = if transition.terminal {
        vec![0.0; agent.target_len()]
    } else {
        next_value(agent, nets, &transition.next_state, rng)?
    };
    let target = bellman_target(transition.reward, transition.terminal, &v, &agent.loss);
    let tau = match agent.kind {
        AgentKind::Q2fOpt => Some(sample_taus(agent.prediction_taus, rng)?),
        _ => None,
    };
    Ok(LabeledTransition {
        transition,
        target,
        tau,
        label_version: nets.theta_bar_1.version(),
    })
}

/// Attaches targets to a batch of transitions.
pub fn bellman_label<R: Rng + ?Sized>(
    batch: &[Arc<Transition>],
    nets: &TargetNets,
    agent: &Agent,
    rng: &mut R,
) -> Result<Vec<LabeledTransition>> {
    batch
        .iter()
        .map(|t| label_one(t.clone(), nets, agent, rng))
        .collect()
}
