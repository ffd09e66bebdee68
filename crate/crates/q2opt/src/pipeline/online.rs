use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use q2opt_core::approximator::ParamSnapshot;
use q2opt_core::rng::derive_seed;
use q2opt_core::sim::EpisodeRecord;

use super::collect::{collect_episode, evaluate_greedy, streams, Behavior, EvalReport};
use super::{Agent, LabeledTransition, TargetNets, Trainer, Updater};
use crate::config::{ExperimentConfig, RunConfig};
use crate::metrics::{buffer_sizes, Clock, MetricsRow};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub params: ParamSnapshot,
    pub targets: TargetNets,
    pub metrics: Vec<MetricsRow>,
    pub final_eval: EvalReport,
    pub global_step: u64,
    pub env_episodes: u64,
    /// Largest label staleness the trainer ever saw in its buffer.
    pub max_staleness: u64,
    /// Collected episodes, when `record_episodes` is set.
    pub episodes: Vec<EpisodeRecord>,
}

/// Trainer steps an online run performs.
pub fn online_step_budget(run: &RunConfig) -> u64 {
    if run.max_train_steps > 0 {
        run.max_train_steps
    } else {
        run.max_episodes * run.train_steps_per_episode as u64
    }
}

pub(crate) fn metrics_row(
    clock: &Clock,
    trainer: &mut Trainer<'_>,
    env_episodes: u64,
    sim_size: usize,
    success: f64,
) -> MetricsRow {
    let (loss, mean_q) = trainer.accumulator.take();
    MetricsRow {
        wall_time: clock.seconds(),
        global_step: trainer.global_step,
        env_episodes,
        success_rate_eval: success,
        loss,
        mean_q,
        buffer_sizes: buffer_sizes(sim_size, trainer.train_buffer.len()),
    }
}

/// Online training for one seed. The sequential schedule (one episode,
/// then `train_steps_per_episode` rounds of labelling and training) is
/// bit-reproducible; the concurrent one runs every role on its own thread.
pub fn run_online(cfg: &ExperimentConfig, seed: u64, clock: Clock) -> Result<RunOutcome> {
    let agent = Agent::from_config(cfg)?;
    if cfg.run.concurrent {
        run_concurrent(cfg, &agent, seed, clock)
    } else {
        run_sequential(cfg, &agent, seed, clock)
    }
}

fn behavior<'p>(
    agent: &'p Agent,
    run: &RunConfig,
    global_step: u64,
    params: &'p ParamSnapshot,
) -> Behavior<'p> {
    if global_step < run.scripted_steps {
        Behavior::Scripted
    } else {
        Behavior::EpsilonGreedy {
            agent,
            params,
            epsilon: run.epsilon,
        }
    }
}

fn run_sequential(
    cfg: &ExperimentConfig,
    agent: &Agent,
    seed: u64,
    clock: Clock,
) -> Result<RunOutcome> {
    let run = &cfg.run;
    let mut trainer = Trainer::new(agent, run, seed);
    let mut updater = Updater::new(agent, run.sim_buffer_capacity, seed, 0);
    let budget = online_step_budget(run);
    let mut metrics = Vec::new();
    let mut recorded = Vec::new();
    let mut episodes = 0u64;
    while episodes < run.max_episodes && trainer.global_step < budget {
        let b = behavior(agent, run, trainer.global_step, &trainer.params);
        let env = derive_seed(seed, streams::ACTOR_ENV, episodes);
        let pol = derive_seed(seed, streams::ACTOR_POLICY, episodes);
        let record = collect_episode(&cfg.sim, b, env, pol, episodes)?;
        episodes += 1;
        for t in &record.transitions {
            updater.sim_buffer.push(Arc::new(t.clone()));
        }
        if run.record_episodes {
            recorded.push(record);
        }
        for _ in 0..run.train_steps_per_episode {
            for label in updater.label(&trainer.targets, run.labels_per_step)? {
                trainer.admit(label);
            }
            if trainer.step()? && trainer.global_step.is_multiple_of(run.eval_every) {
                let r = evaluate_greedy(agent, &cfg.sim, &trainer.params, seed, run.eval_episodes)?;
                let row = metrics_row(
                    &clock,
                    &mut trainer,
                    episodes,
                    updater.sim_buffer.len(),
                    r.success_rate,
                );
                metrics.push(row);
            }
            if trainer.global_step >= budget {
                break;
            }
        }
    }
    let fin = evaluate_greedy(
        agent,
        &cfg.sim,
        &trainer.params,
        seed,
        run.final_eval_episodes,
    )?;
    let row = metrics_row(
        &clock,
        &mut trainer,
        episodes,
        updater.sim_buffer.len(),
        fin.success_rate,
    );
    metrics.push(row);
    Ok(RunOutcome {
        params: trainer.params,
        targets: trainer.targets,
        metrics,
        final_eval: EvalReport::pooled(vec![fin]),
        global_step: trainer.global_step,
        env_episodes: episodes,
        max_staleness: trainer.max_staleness,
        episodes: recorded,
    })
}

/// Latest published snapshots plus run-wide counters. Snapshots are only
/// ever replaced, never mutated.
struct ParamStore {
    params: Mutex<Arc<ParamSnapshot>>,
    targets: Mutex<Arc<TargetNets>>,
    global_step: AtomicU64,
    episodes_claimed: AtomicU64,
    episodes_done: AtomicU64,
    sim_sizes: Vec<AtomicUsize>,
    stop: AtomicBool,
}

impl ParamStore {
    fn params(&self) -> Arc<ParamSnapshot> {
        self.params.lock().expect("store lock").clone()
    }

    fn targets(&self) -> Arc<TargetNets> {
        self.targets.lock().expect("store lock").clone()
    }

    fn publish(&self, params: &ParamSnapshot, targets: &TargetNets, step: u64) {
        *self.params.lock().expect("store lock") = Arc::new(params.clone());
        *self.targets.lock().expect("store lock") = Arc::new(targets.clone());
        self.global_step.store(step, Ordering::Release);
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }
}

fn role_error(role: String, e: impl std::fmt::Display) -> Error {
    Error::Role {
        role,
        message: e.to_string(),
    }
}

fn actor_loop(
    cfg: &ExperimentConfig,
    agent: &Agent,
    seed: u64,
    store: &ParamStore,
    out: SyncSender<EpisodeRecord>,
) -> Result<()> {
    loop {
        if store.stopped() {
            return Ok(());
        }
        let e = store.episodes_claimed.fetch_add(1, Ordering::AcqRel);
        if e >= cfg.run.max_episodes {
            return Ok(());
        }
        let params = store.params();
        let b = behavior(
            agent,
            &cfg.run,
            store.global_step.load(Ordering::Acquire),
            &params,
        );
        let env = derive_seed(seed, streams::ACTOR_ENV, e);
        let pol = derive_seed(seed, streams::ACTOR_POLICY, e);
        let record = collect_episode(&cfg.sim, b, env, pol, e)?;
        if out.send(record).is_err() {
            return Ok(());
        }
        store.episodes_done.fetch_add(1, Ordering::AcqRel);
    }
}

fn updater_loop(
    run: &RunConfig,
    agent: &Agent,
    seed: u64,
    index: usize,
    store: &ParamStore,
    episodes: Receiver<EpisodeRecord>,
    out: SyncSender<Vec<LabeledTransition>>,
) -> Result<Vec<EpisodeRecord>> {
    let mut updater = Updater::new(agent, run.sim_buffer_capacity, seed, index as u64);
    let mut recorded = Vec::new();
    let mut actors_done = false;
    loop {
        if store.stopped() {
            return Ok(recorded);
        }
        loop {
            let next = if updater.sim_buffer.is_empty() && !actors_done {
                episodes
                    .recv_timeout(Duration::from_millis(50))
                    .map_err(|e| match e {
                        RecvTimeoutError::Timeout => TryRecvError::Empty,
                        RecvTimeoutError::Disconnected => TryRecvError::Disconnected,
                    })
            } else {
                episodes.try_recv()
            };
            match next {
                Ok(record) => {
                    for t in &record.transitions {
                        updater.sim_buffer.push(Arc::new(t.clone()));
                    }
                    if run.record_episodes {
                        recorded.push(record);
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    actors_done = true;
                    break;
                }
            }
        }
        store.sim_sizes[index].store(updater.sim_buffer.len(), Ordering::Release);
        if updater.sim_buffer.is_empty() {
            if actors_done {
                return Ok(recorded);
            }
            continue;
        }
        let nets = store.targets();
        let labels = updater.label(&nets, run.labels_per_step)?;
        if out.send(labels).is_err() {
            return Ok(recorded);
        }
    }
}

fn run_concurrent(
    cfg: &ExperimentConfig,
    agent: &Agent,
    seed: u64,
    clock: Clock,
) -> Result<RunOutcome> {
    let run = &cfg.run;
    let mut trainer = Trainer::new(agent, run, seed);
    let store = ParamStore {
        params: Mutex::new(Arc::new(trainer.params.clone())),
        targets: Mutex::new(Arc::new(trainer.targets.clone())),
        global_step: AtomicU64::new(0),
        episodes_claimed: AtomicU64::new(0),
        episodes_done: AtomicU64::new(0),
        sim_sizes: (0..run.updaters).map(|_| AtomicUsize::new(0)).collect(),
        stop: AtomicBool::new(false),
    };
    let budget = online_step_budget(run);
    let (label_tx, label_rx) = sync_channel::<Vec<LabeledTransition>>(run.queue_capacity);

    let (trained, role_results) = std::thread::scope(|scope| {
        let mut episode_txs = Vec::new();
        let mut updaters = Vec::new();
        for u in 0..run.updaters {
            let (tx, rx) = sync_channel::<EpisodeRecord>(run.queue_capacity);
            episode_txs.push(tx);
            let out = label_tx.clone();
            let store = &store;
            updaters.push(scope.spawn(move || updater_loop(run, agent, seed, u, store, rx, out)));
        }
        drop(label_tx);
        let mut actors = Vec::new();
        for a in 0..run.actors {
            let tx = episode_txs[a % run.updaters].clone();
            let store = &store;
            actors.push(scope.spawn(move || actor_loop(cfg, agent, seed, store, tx)));
        }
        drop(episode_txs);

        let trained = trainer_loop(
            cfg,
            agent,
            seed,
            &clock,
            &store,
            &mut trainer,
            label_rx,
            budget,
        );
        store.stop.store(true, Ordering::Release);

        let mut results: Vec<(String, Result<Vec<EpisodeRecord>>)> = Vec::new();
        for (i, h) in actors.into_iter().enumerate() {
            let r = h
                .join()
                .unwrap_or_else(|_| Err(role_error(format!("actor {i}"), "panicked")));
            results.push((format!("actor {i}"), r.map(|_| Vec::new())));
        }
        for (i, h) in updaters.into_iter().enumerate() {
            let r = h
                .join()
                .unwrap_or_else(|_| Err(role_error(format!("updater {i}"), "panicked")));
            results.push((format!("updater {i}"), r));
        }
        (trained, results)
    });

    let mut recorded = Vec::new();
    for (role, r) in role_results {
        match r {
            Ok(mut eps) => recorded.append(&mut eps),
            Err(e) => return Err(role_error(role, e)),
        }
    }
    let mut metrics = trained.map_err(|e| role_error("trainer".into(), e))?;
    recorded.sort_by_key(|r| r.episode_id);
    let episodes = store.episodes_done.load(Ordering::Acquire);
    let sim_size = store
        .sim_sizes
        .iter()
        .map(|s| s.load(Ordering::Acquire))
        .sum();
    let fin = evaluate_greedy(
        agent,
        &cfg.sim,
        &trainer.params,
        seed,
        run.final_eval_episodes,
    )?;
    metrics.push(metrics_row(
        &clock,
        &mut trainer,
        episodes,
        sim_size,
        fin.success_rate,
    ));
    Ok(RunOutcome {
        params: trainer.params,
        targets: trainer.targets,
        metrics,
        final_eval: EvalReport::pooled(vec![fin]),
        global_step: trainer.global_step,
        env_episodes: episodes,
        max_staleness: trainer.max_staleness,
        episodes: recorded,
    })
}

#[allow(clippy::too_many_arguments)]
fn trainer_loop(
    cfg: &ExperimentConfig,
    agent: &Agent,
    seed: u64,
    clock: &Clock,
    store: &ParamStore,
    trainer: &mut Trainer<'_>,
    labels: Receiver<Vec<LabeledTransition>>,
    budget: u64,
) -> Result<Vec<MetricsRow>> {
    let run = &cfg.run;
    let mut metrics = Vec::new();
    let mut upstream_open = true;
    while trainer.global_step < budget {
        loop {
            match labels.try_recv() {
                Ok(batch) => batch.into_iter().for_each(|l| trainer.admit(l)),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    upstream_open = false;
                    break;
                }
            }
        }
        if trainer.step()? {
            store.publish(&trainer.params, &trainer.targets, trainer.global_step);
            if trainer.global_step.is_multiple_of(run.eval_every) {
                let r = evaluate_greedy(agent, &cfg.sim, &trainer.params, seed, run.eval_episodes)?;
                let episodes = store.episodes_done.load(Ordering::Acquire);
                let sim_size = store
                    .sim_sizes
                    .iter()
                    .map(|s| s.load(Ordering::Acquire))
                    .sum();
                metrics.push(metrics_row(
                    clock,
                    trainer,
                    episodes,
                    sim_size,
                    r.success_rate,
                ));
            }
        } else if !upstream_open {
            break;
        } else {
            match labels.recv_timeout(Duration::from_millis(50)) {
                Ok(batch) => batch.into_iter().for_each(|l| trainer.admit(l)),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => upstream_open = false,
            }
        }
    }
    Ok(metrics)
}
