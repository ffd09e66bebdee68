//! Actors, Bellman updaters and the trainer, wired either as a
//! deterministic sequential schedule or as threads joined by bounded
//! queues.

mod agent;
pub mod collect;
mod label;
mod learner;
mod offline;
mod online;
mod replay;
mod targets;
mod train;

pub use agent::Agent;
pub use collect::{collect_episode, evaluate, evaluate_greedy, Behavior, EvalReport, SeedReport};
pub use label::{bellman_label, label_one, LabeledTransition};
pub use learner::{Trainer, Updater};
pub use offline::run_offline;
pub use online::{online_step_budget, run_online, RunOutcome};
pub use replay::ReplayBuffer;
pub use targets::{update_targets, TargetNets};
pub use train::{sample_loss, train_step, TrainStatus};
