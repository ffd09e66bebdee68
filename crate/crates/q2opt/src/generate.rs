//! Dataset generation for batch training.

use std::path::{Path, PathBuf};

use q2opt_core::approximator::ParamSnapshot;
use q2opt_core::rng::derive_seed;
use q2opt_core::sim::SimConfig;

use crate::dataset::{DatasetReader, DatasetSummary, DatasetWriter};
use crate::pipeline::collect::streams;
use crate::pipeline::{collect_episode, Agent, Behavior};
use crate::Result;

/// File an online run writes its collected episodes to when
/// `record_episodes` is set.
pub const REPLAY_FILE: &str = "episodes.ndjson";

pub enum PolicySpec<'a> {
    Scripted,
    /// A trained agent acting epsilon-greedily (0 for greedy).
    Snapshot {
        agent: &'a Agent,
        params: &'a ParamSnapshot,
        epsilon: f64,
    },
    /// Every episode recorded by an earlier online run.
    Replay {
        run_dir: PathBuf,
    },
}

/// Writes `episodes` fresh episodes (all recorded ones for a replay) to
/// `out` and reports the measured success rate.
pub fn generate_dataset(
    policy: &PolicySpec<'_>,
    episodes: u64,
    sim: &SimConfig,
    seed: u64,
    out: &Path,
) -> Result<DatasetSummary> {
    let mut w = DatasetWriter::create(out)?;
    match policy {
        PolicySpec::Replay { run_dir } => {
            for record in DatasetReader::open(&run_dir.join(REPLAY_FILE))? {
                w.write(&record?)?;
            }
        }
        PolicySpec::Scripted | PolicySpec::Snapshot { .. } => {
            let behavior = match policy {
                PolicySpec::Snapshot {
                    agent,
                    params,
                    epsilon,
                } => Behavior::EpsilonGreedy {
                    agent,
                    params,
                    epsilon: *epsilon,
                },
                _ => Behavior::Scripted,
            };
            for i in 0..episodes {
                let env = derive_seed(seed, streams::DATASET_ENV, i);
                let pol = derive_seed(seed, streams::DATASET_POLICY, i);
                w.write(&collect_episode(sim, behavior, env, pol, i)?)?;
            }
        }
    }
    w.finish()
}
