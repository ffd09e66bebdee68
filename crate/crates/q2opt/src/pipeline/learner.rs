use std::sync::Arc;

use q2opt_core::approximator::{AdamConfig, AdamState, ParamSnapshot};
use q2opt_core::distrl::Transition;
use q2opt_core::rng::{derive_seed, rng_from_seed, Rng};

use super::collect::streams;
use super::{
    label_one, train_step, update_targets, Agent, LabeledTransition, ReplayBuffer, TargetNets,
    TrainStatus,
};
use crate::config::RunConfig;
use crate::metrics::Accumulator;
use crate::Result;

/// Trainer state plus the train buffer it consumes from.
pub struct Trainer<'a> {
    pub agent: &'a Agent,
    pub cfg: &'a RunConfig,
    pub params: ParamSnapshot,
    pub targets: TargetNets,
    pub opt: AdamState,
    pub train_buffer: ReplayBuffer<LabeledTransition>,
    pub global_step: u64,
    pub accumulator: Accumulator,
    /// Largest `live version - label_version` of any label trained on.
    pub max_staleness: u64,
    /// Labels rejected for exceeding the staleness bound.
    pub dropped_stale: u64,
    rng: Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(agent: &'a Agent, cfg: &'a RunConfig, seed: u64) -> Self {
        let params = agent
            .network
            .init_params(derive_seed(seed, streams::INIT, 0));
        Self::resume(agent, cfg, seed, params)
    }

    /// Starts from given parameters instead of a fresh initialization.
    pub fn resume(agent: &'a Agent, cfg: &'a RunConfig, seed: u64, params: ParamSnapshot) -> Self {
        Self {
            agent,
            cfg,
            targets: TargetNets::new(&params, cfg.ema_decay, cfg.lag_period),
            opt: AdamState::new(params.len(), AdamConfig::default()),
            params,
            train_buffer: ReplayBuffer::new(cfg.train_buffer_capacity),
            global_step: 0,
            accumulator: Accumulator::default(),
            max_staleness: 0,
            dropped_stale: 0,
            rng: rng_from_seed(derive_seed(seed, streams::TRAIN, 0)),
        }
    }

    fn staleness(&self, label: &LabeledTransition) -> u64 {
        self.params.version().saturating_sub(label.label_version)
    }

    /// Adds a label unless it is already too stale.
    pub fn admit(&mut self, label: LabeledTransition) {
        if self.staleness(&label) > self.cfg.max_label_staleness {
            self.dropped_stale += 1;
        } else {
            self.train_buffer.push(label);
        }
    }

    /// One trainer step; `false` while the buffer is still filling.
    pub fn step(&mut self) -> Result<bool> {
        let bound = self.cfg.max_label_staleness;
        let version = self.params.version();
        if self
            .train_buffer
            .iter()
            .any(|l| version.saturating_sub(l.label_version) > bound)
        {
            let before = self.train_buffer.len();
            self.train_buffer
                .retain(|l| version.saturating_sub(l.label_version) <= bound);
            self.dropped_stale += (before - self.train_buffer.len()) as u64;
        }
        let status = train_step(
            &self.train_buffer,
            &self.params,
            &mut self.opt,
            self.agent,
            self.cfg.batch_size,
            self.cfg.lr,
            &mut self.rng,
        )?;
        match status {
            TrainStatus::Waiting { .. } => Ok(false),
            TrainStatus::Trained {
                params,
                loss,
                mean_q,
            } => {
                let oldest = self
                    .train_buffer
                    .iter()
                    .map(|l| l.label_version)
                    .min()
                    .unwrap_or(version);
                self.max_staleness = self.max_staleness.max(version - oldest.min(version));
                self.params = params;
                self.targets = update_targets(&self.targets, &self.params)?;
                self.global_step += 1;
                self.accumulator.add(loss, mean_q);
                Ok(true)
            }
        }
    }
}

/// Bellman updater: samples stored transitions and labels them under the
/// current target nets.
pub struct Updater<'a> {
    pub agent: &'a Agent,
    pub sim_buffer: ReplayBuffer<Arc<Transition>>,
    rng: Rng,
}

impl<'a> Updater<'a> {
    pub fn new(agent: &'a Agent, capacity: usize, seed: u64, index: u64) -> Self {
        Self {
            agent,
            sim_buffer: ReplayBuffer::new(capacity),
            rng: rng_from_seed(derive_seed(seed, streams::LABEL, index)),
        }
    }

    /// Up to `count` labels; none while the sim buffer is empty.
    pub fn label(&mut self, nets: &TargetNets, count: usize) -> Result<Vec<LabeledTransition>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let Some(t) = self.sim_buffer.sample(&mut self.rng).cloned() else {
                break;
            };
            out.push(label_one(t, nets, self.agent, &mut self.rng)?);
        }
        Ok(out)
    }
}
