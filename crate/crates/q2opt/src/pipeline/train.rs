use q2opt_core::approximator::{adam_step, AdamState, GradVector, ParamSnapshot};
use q2opt_core::distrl::{qr_loss, scalar_ce_loss_on_range};
use rand::Rng;

use super::{Agent, LabeledTransition, ReplayBuffer};
use crate::config::AgentKind;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainStatus {
    /// Too few labelled transitions for a batch.
    Waiting { have: usize, need: usize },
    Trained {
        params: ParamSnapshot,
        loss: f64,
        mean_q: f64,
    },
}

/// Loss of one labelled transition; its parameter gradient is added to
/// `grad`. Returns `(loss, mean predicted value)`.
pub fn sample_loss(
    agent: &Agent,
    params: &ParamSnapshot,
    label: &LabeledTransition,
    grad: &mut GradVector,
) -> Result<(f64, f64)> {
    let t = &label.transition;
    let action = t.action.encode();
    let mut loss = 0.0;
    let out = agent.network.forward_backward(
        params,
        &t.state,
        &action,
        label.tau.as_ref(),
        grad,
        |q| match agent.kind {
            AgentKind::QtOpt => {
                let (l, d) = scalar_ce_loss_on_range(q[0], label.target[0], agent.loss.value_range);
                loss = l;
                Ok(vec![d])
            }
            AgentKind::Q2rOpt | AgentKind::Q2fOpt => {
                let taus = match agent.kind {
                    AgentKind::Q2rOpt => agent.midpoints.as_deref(),
                    _ => label.tau.as_deref(),
                }
                .expect("quantile agents carry probabilities");
                let (l, d) = qr_loss(q, &label.target, taus, &agent.loss)?;
                loss = l;
                Ok(d)
            }
        },
    )?;
    let mean_q = out.iter().sum::<f64>() / out.len() as f64;
    Ok((loss, mean_q))
}

/// One Adam step on a uniformly sampled batch.
pub fn train_step<R: Rng + ?Sized>(
    buffer: &ReplayBuffer<LabeledTransition>,
    params: &ParamSnapshot,
    opt: &mut AdamState,
    agent: &Agent,
    batch_size: usize,
    lr: f64,
    rng: &mut R,
) -> Result<TrainStatus> {
    if buffer.len() < batch_size || batch_size == 0 {
        return Ok(TrainStatus::Waiting {
            have: buffer.len(),
            need: batch_size.max(1),
        });
    }
    let mut grad = GradVector::zeros(params.len());
    let (mut loss, mut mean_q) = (0.0, 0.0);
    for _ in 0..batch_size {
        let label = buffer.sample(rng).expect("buffer is non-empty");
        let (l, q) = sample_loss(agent, params, label, &mut grad)?;
        loss += l;
        mean_q += q;
    }
    let n = batch_size as f64;
    grad.scale(1.0 / n);
    let params = adam_step(params, &grad, opt, lr)?;
    Ok(TrainStatus::Trained {
        params,
        loss: loss / n,
        mean_q: mean_q / n,
    })
}
