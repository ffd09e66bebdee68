use q2opt_core::approximator::ParamSnapshot;
use q2opt_core::cem::{epsilon_greedy, HybridAction};
use q2opt_core::rng::{derive_seed, rng_from_seed};
use q2opt_core::sim::{run_episode, EpisodeRecord, Observation, ScriptedPolicy, SimConfig};
use serde::{Deserialize, Serialize};

use super::Agent;
use crate::Result;

/// Seed streams. Every random draw of a run descends from the run seed
/// through one of these.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const ACTOR_ENV: u64 = 2;
    pub const ACTOR_POLICY: u64 = 3;
    pub const LABEL: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const EVAL_ENV: u64 = 6;
    pub const EVAL_POLICY: u64 = 7;
    pub const DATASET_ENV: u64 = 8;
    pub const DATASET_POLICY: u64 = 9;
    pub const OFFLINE: u64 = 10;
}

/// How an actor chooses actions for one episode.
#[derive(Debug, Clone, Copy)]
pub enum Behavior<'a> {
    Scripted,
    EpsilonGreedy {
        agent: &'a Agent,
        params: &'a ParamSnapshot,
        epsilon: f64,
    },
}

impl Behavior<'_> {
    pub fn policy_id(&self) -> String {
        match self {
            Behavior::Scripted => "scripted".into(),
            Behavior::EpsilonGreedy {
                params, epsilon, ..
            } if *epsilon == 0.0 => {
                format!("greedy@{}", params.version())
            }
            Behavior::EpsilonGreedy {
                params, epsilon, ..
            } => format!("eps{epsilon}@{}", params.version()),
        }
    }
}

/// Runs one episode on `env_seed` with policy noise from `policy_seed`.
pub fn collect_episode(
    sim: &SimConfig,
    behavior: Behavior<'_>,
    env_seed: u64,
    policy_seed: u64,
    episode_id: u64,
) -> Result<EpisodeRecord> {
    let mut rng = rng_from_seed(policy_seed);
    let scripted = ScriptedPolicy::new(sim);
    let policy_id = behavior.policy_id();
    let act = |obs: &Observation| -> q2opt_core::Result<HybridAction> {
        match behavior {
            Behavior::Scripted => Ok(scripted.act(obs, &mut rng)),
            Behavior::EpsilonGreedy {
                agent,
                params,
                epsilon,
            } => {
                let greedy = |r: &mut _| agent.policy().act(params, obs.as_slice(), r);
                Ok(epsilon_greedy(greedy, epsilon, &mut rng)?.0)
            }
        }
    };
    Ok(run_episode(sim, env_seed, episode_id, &policy_id, act)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub per_seed: Vec<SeedReport>,
}

impl EvalReport {
    /// Pools per-seed reports, weighting by episode count.
    pub fn pooled(per_seed: Vec<SeedReport>) -> Self {
        let episodes: usize = per_seed.iter().map(|s| s.episodes).sum();
        let w = |f: fn(&SeedReport) -> f64| {
            if episodes == 0 {
                0.0
            } else {
                per_seed
                    .iter()
                    .map(|s| f(s) * s.episodes as f64)
                    .sum::<f64>()
                    / episodes as f64
            }
        };
        let success_rate = w(|s| s.success_rate);
        let mean_return = w(|s| s.mean_return);
        Self {
            episodes,
            success_rate,
            mean_return,
            per_seed,
        }
    }
}

/// Runs `episodes` fresh evaluation episodes for `seed`; the environment
/// seeds come from a stream no training or dataset episode uses.
pub fn evaluate(
    sim: &SimConfig,
    behavior: Behavior<'_>,
    seed: u64,
    episodes: usize,
) -> Result<SeedReport> {
    let (mut wins, mut ret) = (0usize, 0.0);
    for i in 0..episodes as u64 {
        let env = derive_seed(seed, streams::EVAL_ENV, i);
        let pol = derive_seed(seed, streams::EVAL_POLICY, i);
        let rec = collect_episode(sim, behavior, env, pol, i)?;
        wins += usize::from(rec.success);
        ret += rec.episode_return();
    }
    let n = episodes.max(1) as f64;
    Ok(SeedReport {
        seed,
        episodes,
        success_rate: wins as f64 / n,
        mean_return: ret / n,
    })
}

pub fn evaluate_greedy(
    agent: &Agent,
    sim: &SimConfig,
    params: &ParamSnapshot,
    seed: u64,
    episodes: usize,
) -> Result<SeedReport> {
    let greedy = Behavior::EpsilonGreedy {
        agent,
        params,
        epsilon: 0.0,
    };
    evaluate(sim, greedy, seed, episodes)
}
