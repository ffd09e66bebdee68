use std::path::Path;
use std::sync::Arc;

use super::collect::{evaluate_greedy, EvalReport};
use super::online::{metrics_row, RunOutcome};
use super::{Agent, Trainer, Updater};
use crate::config::ExperimentConfig;
use crate::dataset::TransitionCycle;
use crate::metrics::Clock;
use crate::{Error, Result};

/// Batch training from the dataset at `cfg.run.dataset`. The offline buffer
/// is filled by streaming the file; datasets larger than the buffer keep
/// streaming `labels_per_step` transitions per step, wrapping around at the
/// end. Every sampled transition is relabelled under the current target
/// nets. Evaluation only uses fresh simulator seeds.
pub fn run_offline(cfg: &ExperimentConfig, seed: u64, clock: Clock) -> Result<RunOutcome> {
    if cfg.run.dataset.is_empty() {
        return Err(Error::Config(
            "run.dataset: offline runs need a dataset path".into(),
        ));
    }
    let agent = Agent::from_config(cfg)?;
    let run = &cfg.run;
    let mut cycle = TransitionCycle::open(Path::new(&run.dataset))?;
    let mut trainer = Trainer::new(&agent, run, seed);
    let mut updater = Updater::new(&agent, run.sim_buffer_capacity, seed, 0);
    while updater.sim_buffer.len() < run.sim_buffer_capacity {
        let t = cycle.next_transition()?;
        if cycle.passes() > 0 {
            break;
        }
        updater.sim_buffer.push(Arc::new(t));
    }
    let streaming = cycle.passes() == 0;
    let mut metrics = Vec::new();
    while trainer.global_step < run.max_train_steps {
        if streaming {
            for _ in 0..run.labels_per_step {
                updater.sim_buffer.push(Arc::new(cycle.next_transition()?));
            }
        }
        for label in updater.label(&trainer.targets, run.labels_per_step)? {
            trainer.admit(label);
        }
        if trainer.step()? && trainer.global_step.is_multiple_of(run.eval_every) {
            let r = evaluate_greedy(&agent, &cfg.sim, &trainer.params, seed, run.eval_episodes)?;
            metrics.push(metrics_row(
                &clock,
                &mut trainer,
                0,
                updater.sim_buffer.len(),
                r.success_rate,
            ));
        }
    }
    let fin = evaluate_greedy(
        &agent,
        &cfg.sim,
        &trainer.params,
        seed,
        run.final_eval_episodes,
    )?;
    metrics.push(metrics_row(
        &clock,
        &mut trainer,
        0,
        updater.sim_buffer.len(),
        fin.success_rate,
    ));
    Ok(RunOutcome {
        params: trainer.params,
        targets: trainer.targets,
        metrics,
        final_eval: EvalReport::pooled(vec![fin]),
        global_step: trainer.global_step,
        env_episodes: 0,
        max_staleness: trainer.max_staleness,
        episodes: Vec::new(),
    })
}
