//! Distributional Q-learning primitives for continuous-action grasping.
//!
//! This crate is `no_std` (it needs `alloc`) and holds everything that is
//! pure computation:
//!
//! * [`approximator`]: state-action value networks with scalar, fixed-quantile
//!   and implicit-quantile heads, exact reverse-mode gradients and Adam.
//! * [`distrl`]: quantile midpoints, sampled probabilities, Bellman targets,
//!   pairwise TD errors and the Huber quantile loss.
//! * [`risk`]: distortion metrics and scoring reducers.
//! * [`cem`]: the cross-entropy method over the hybrid action space and the
//!   risk-scored greedy policy.
//! * [`sim`]: a low-dimensional planar bin-grasping MDP and its scripted
//!   exploration policy.
//!
//! IO, file formats, the actor/learner pipeline and the CLI live in the
//! companion `q2opt` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod approximator;
pub mod cem;
pub mod distrl;
mod error;
pub mod math;
pub mod risk;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
