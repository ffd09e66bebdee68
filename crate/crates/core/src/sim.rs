//! Planar bin-grasping MDP.
//!
//! A gripper hovers over a square bin holding circular objects. It moves
//! with bounded displacements, closes to attempt a grasp (only at bin
//! level), and terminates the episode; a terminated episode pays
//! `success_reward` when an object is held and nothing otherwise. All other
//! steps pay `step_penalty`. Grasps succeed stochastically, decaying with the
//! distance from the gripper to the object's rim.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cem::{HybridAction, Mode};
use crate::distrl::Transition;
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Rejections allowed while placing objects in one reset.
pub const MAX_PLACEMENT_REJECTIONS: usize = 10_000;
/// Sentinel written into empty object slots of an observation.
pub const EMPTY_SLOT: f64 = -2.0;
/// Pose (4) + gripper closed + holding.
pub const OBS_HEADER: usize = 6;
pub const OBS_SLOT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Inclusive range of the object count.
    pub num_objects: (usize, usize),
    /// The bin spans `[-h, h]^2` in x and y.
    pub bin_half_extent: f64,
    /// Inclusive range object radii are drawn from.
    pub object_radius: (f64, f64),
    /// Gripper height at reset; also the ceiling.
    pub home_height: f64,
    /// Grasps are only possible at or below this height.
    pub grasp_height: f64,
    /// Distance beyond an object's rim at which a grasp can still succeed.
    pub grasp_radius: f64,
    /// Grasp probabilities are lowered by `grasp_noise * U[0, 1]`.
    pub grasp_noise: f64,
    /// Chance per lifting move of dropping a held object.
    pub slip_prob: f64,
    pub max_steps: usize,
    pub obs_noise_sigma: f64,
    pub step_penalty: f64,
    pub success_reward: f64,
    /// Displacement per unit action in x, y, z and phi.
    pub move_scale: [f64; 4],
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_objects: (8, 12),
            bin_half_extent: 0.5,
            object_radius: (0.07, 0.11),
            home_height: 1.0,
            grasp_height: 0.1,
            grasp_radius: 0.085,
            grasp_noise: 0.1,
            slip_prob: 0.05,
            max_steps: 20,
            obs_noise_sigma: 0.005,
            step_penalty: -0.01,
            success_reward: 1.0,
            move_scale: [0.5, 0.5, 1.0, PI / 4.0],
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let (lo, hi) = self.num_objects;
        if lo > hi || hi == 0 {
            return bad(format!("object count range ({lo}, {hi}) is empty"));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be >= 1".into());
        }
        for (name, p) in [
            ("grasp_noise", self.grasp_noise),
            ("slip_prob", self.slip_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        let (rlo, rhi) = self.object_radius;
        if !(rlo > 0.0 && rlo <= rhi && rhi < self.bin_half_extent) {
            return bad(format!(
                "object radius range ({rlo}, {rhi}) invalid for the bin"
            ));
        }
        if !(self.grasp_radius > 0.0 && self.obs_noise_sigma >= 0.0) {
            return bad("grasp_radius must be > 0 and obs_noise_sigma >= 0".into());
        }
        if !(self.grasp_height >= 0.0 && self.grasp_height < self.home_height) {
            return bad("grasp height must lie below the home height".into());
        }
        Ok(())
    }

    pub fn max_objects(&self) -> usize {
        self.num_objects.1
    }

    pub fn observation_dim(&self) -> usize {
        OBS_HEADER + OBS_SLOT * self.max_objects()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Object {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    /// `x, y, z, phi`.
    pub gripper: [f64; 4],
    pub gripper_closed: bool,
    pub held_object: Option<usize>,
    pub objects: Vec<Object>,
    pub steps_elapsed: usize,
    pub done: bool,
}

/// Fixed-length feature vector: gripper pose (phi scaled to `[-1, 1]`),
/// closed and holding flags, then one `(dx, dy, radius)` slot per object
/// relative to the gripper, nearest first, padded with [`EMPTY_SLOT`].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn height(&self) -> f64 {
        self.0[2]
    }

    pub fn gripper_closed(&self) -> bool {
        self.0[4] > 0.5
    }

    pub fn holding(&self) -> bool {
        self.0[5] > 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepInfo {
    pub grasp_attempted: bool,
    pub grasped: bool,
    pub slipped: bool,
    pub timed_out: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

impl WorldState {
    /// Fresh bin for `seed`: object count uniform in the configured range,
    /// non-overlapping objects placed uniformly by rejection sampling, and
    /// the gripper open at its home pose above the bin centre.
    pub fn reset(cfg: &SimConfig, seed: u64) -> Result<(Self, Observation)> {
        cfg.validate()?;
        let mut rng = rng_from_seed(seed);
        let (lo, hi) = cfg.num_objects;
        let count = rng.random_range(lo..=hi);
        let mut objects: Vec<Object> = Vec::with_capacity(count);
        let mut rejections = 0;
        while objects.len() < count {
            let (rlo, rhi) = cfg.object_radius;
            let radius = if rlo == rhi {
                rlo
            } else {
                rng.random_range(rlo..=rhi)
            };
            let lim = cfg.bin_half_extent - radius;
            let x = rng.random_range(-lim..=lim);
            let y = rng.random_range(-lim..=lim);
            let overlaps = objects.iter().any(|o| {
                let (dx, dy) = (o.x - x, o.y - y);
                dx * dx + dy * dy < (o.radius + radius) * (o.radius + radius)
            });
            if overlaps {
                rejections += 1;
                if rejections >= MAX_PLACEMENT_REJECTIONS {
                    return Err(Error::PlacementFailed {
                        attempts: rejections,
                    });
                }
                continue;
            }
            objects.push(Object {
                x,
                y,
                radius,
                alive: true,
            });
        }
        let state = WorldState {
            gripper: [0.0, 0.0, cfg.home_height, 0.0],
            gripper_closed: false,
            held_object: None,
            objects,
            steps_elapsed: 0,
            done: false,
        };
        let obs = state.observe(cfg, &mut rng);
        Ok((state, obs))
    }

    pub fn live_objects(&self) -> usize {
        self.objects.iter().filter(|o| o.alive).count()
    }

    /// Nearest live, unheld object and the gap from the gripper to its rim.
    pub fn nearest_object(&self) -> Option<(usize, f64)> {
        let (gx, gy) = (self.gripper[0], self.gripper[1]);
        self.objects
            .iter()
            .enumerate()
            .filter(|(i, o)| o.alive && Some(*i) != self.held_object)
            .map(|(i, o)| {
                let d = libm::hypot(o.x - gx, o.y - gy);
                (i, (d - o.radius).max(0.0))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn observe<R: Rng + ?Sized>(&self, cfg: &SimConfig, rng: &mut R) -> Observation {
        let mut v = Vec::with_capacity(cfg.observation_dim());
        let [x, y, z, phi] = self.gripper;
        v.extend_from_slice(&[x, y, z, phi / PI]);
        v.push(if self.gripper_closed { 1.0 } else { 0.0 });
        v.push(if self.held_object.is_some() { 1.0 } else { 0.0 });
        let mut slots: Vec<(f64, [f64; 3])> = self
            .objects
            .iter()
            .enumerate()
            .filter(|(i, o)| o.alive && Some(*i) != self.held_object)
            .map(|(_, o)| {
                let (dx, dy) = (o.x - x, o.y - y);
                (dx * dx + dy * dy, [dx, dy, o.radius])
            })
            .collect();
        slots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, [dx, dy, r]) in slots.into_iter().take(cfg.max_objects()) {
            let (nx, ny) = if cfg.obs_noise_sigma > 0.0 {
                let ex: f64 = rng.sample(StandardNormal);
                let ey: f64 = rng.sample(StandardNormal);
                (cfg.obs_noise_sigma * ex, cfg.obs_noise_sigma * ey)
            } else {
                (0.0, 0.0)
            };
            v.extend_from_slice(&[dx + nx, dy + ny, r]);
        }
        v.resize(cfg.observation_dim(), EMPTY_SLOT);
        Observation(v)
    }

    fn drop_held(&mut self, cfg: &SimConfig) {
        if let Some(i) = self.held_object.take() {
            let o = &mut self.objects[i];
            let lim = cfg.bin_half_extent - o.radius;
            o.x = self.gripper[0].clamp(-lim, lim);
            o.y = self.gripper[1].clamp(-lim, lim);
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        action: &HybridAction,
        cfg: &SimConfig,
        rng: &mut R,
    ) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        self.steps_elapsed += 1;
        let mut info = StepInfo::default();
        let mut reward = cfg.step_penalty;
        match action.mode {
            Mode::Move => {
                let a = HybridAction::new(action.cont, Mode::Move).cont;
                let h = cfg.bin_half_extent;
                let g = &mut self.gripper;
                g[0] = (g[0] + a[0] * cfg.move_scale[0]).clamp(-h, h);
                g[1] = (g[1] + a[1] * cfg.move_scale[1]).clamp(-h, h);
                g[2] = (g[2] + a[2] * cfg.move_scale[2]).clamp(0.0, cfg.home_height);
                let phi = g[3] + a[3] * cfg.move_scale[3];
                g[3] = phi - 2.0 * PI * libm::floor((phi + PI) / (2.0 * PI));
                if a[2] > 0.0 && self.held_object.is_some() && rng.random::<f64>() < cfg.slip_prob {
                    info.slipped = true;
                    self.drop_held(cfg);
                }
            }
            Mode::CloseGripper => {
                if self.held_object.is_none() {
                    self.gripper_closed = true;
                    if self.gripper[2] <= cfg.grasp_height {
                        if let Some((i, gap)) = self.nearest_object() {
                            if gap <= cfg.grasp_radius {
                                info.grasp_attempted = true;
                                let p = (1.0 - gap / cfg.grasp_radius).max(0.0);
                                let noise: f64 = rng.random();
                                let p = (p - cfg.grasp_noise * noise).clamp(0.0, 1.0);
                                if rng.random::<f64>() < p {
                                    info.grasped = true;
                                    self.held_object = Some(i);
                                }
                            }
                        }
                    }
                }
            }
            Mode::OpenGripper => {
                self.gripper_closed = false;
                self.drop_held(cfg);
            }
            Mode::Terminate => {
                self.done = true;
                reward = 0.0;
                if let Some(i) = self.held_object.take() {
                    self.objects[i].alive = false;
                    reward = cfg.success_reward;
                    info.success = true;
                }
            }
        }
        if !self.done && self.steps_elapsed >= cfg.max_steps {
            self.done = true;
            info.timed_out = true;
            reward = 0.0;
        }
        let observation = self.observe(cfg, rng);
        Ok(StepOutcome {
            observation,
            reward,
            done: self.done,
            info,
        })
    }
}

/// Random-position grasping: descend to a uniformly random point of the
/// bin, close, terminate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedPolicy {
    pub grasp_height: f64,
}

impl ScriptedPolicy {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            grasp_height: cfg.grasp_height,
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &Observation, rng: &mut R) -> HybridAction {
        if obs.gripper_closed() || obs.holding() {
            return HybridAction::new([0.0; 4], Mode::Terminate);
        }
        if obs.height() > self.grasp_height {
            let dx = rng.random_range(-1.0..=1.0);
            let dy = rng.random_range(-1.0..=1.0);
            let dphi = rng.random_range(-1.0..=1.0);
            return HybridAction::new([dx, dy, -1.0, dphi], Mode::Move);
        }
        HybridAction::new([0.0; 4], Mode::CloseGripper)
    }
}

/// One episode's transitions with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode_id: u64,
    pub seed: u64,
    pub policy_id: String,
    pub transitions: Vec<Transition>,
    pub success: bool,
}

impl EpisodeRecord {
    pub fn episode_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Seed of the step-noise stream belonging to an episode seed.
pub fn step_seed(episode_seed: u64) -> u64 {
    derive_seed(episode_seed, 0x5354_4550, 0)
}

/// Runs one episode from `reset(cfg, seed)` with step noise drawn from the
/// seed's step stream. `policy` maps each observation to an action and
/// brings its own randomness.
pub fn run_episode<F>(
    cfg: &SimConfig,
    seed: u64,
    episode_id: u64,
    policy_id: &str,
    mut policy: F,
) -> Result<EpisodeRecord>
where
    F: FnMut(&Observation) -> Result<HybridAction>,
{
    let (mut state, mut obs) = WorldState::reset(cfg, seed)?;
    let mut rng = rng_from_seed(step_seed(seed));
    let mut transitions = Vec::new();
    let mut success = false;
    while !state.done {
        let action = policy(&obs)?;
        let out = state.step(&action, cfg, &mut rng)?;
        success |= out.info.success;
        transitions.push(Transition {
            state: core::mem::take(&mut obs.0),
            action,
            reward: out.reward,
            next_state: out.observation.0.clone(),
            terminal: out.done,
            policy_id: policy_id.into(),
            episode_id,
            step_index: transitions.len() as u32,
        });
        obs = out.observation;
    }
    Ok(EpisodeRecord {
        episode_id,
        seed,
        policy_id: policy_id.into(),
        transitions,
        success,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    fn rng(seed: u64) -> crate::rng::Rng {
        crate::rng::Rng::seed_from_u64(seed)
    }

    #[test]
    fn reset_is_deterministic_and_bounded() {
        let c = cfg();
        assert_eq!(
            WorldState::reset(&c, 7).unwrap(),
            WorldState::reset(&c, 7).unwrap()
        );
        for seed in 0..10_000 {
            let (s, obs) = WorldState::reset(&c, seed).unwrap();
            assert!((8..=12).contains(&s.objects.len()));
            assert_eq!(obs.0.len(), c.observation_dim());
            for o in &s.objects {
                assert!(o.x.abs() + o.radius <= c.bin_half_extent + 1e-12);
                assert!(o.y.abs() + o.radius <= c.bin_half_extent + 1e-12);
            }
        }
    }

    #[test]
    fn impossible_placement_fails() {
        let c = SimConfig {
            num_objects: (200, 200),
            object_radius: (0.2, 0.2),
            ..cfg()
        };
        assert!(matches!(
            WorldState::reset(&c, 1),
            Err(Error::PlacementFailed { .. })
        ));
    }

    fn single_object_world(c: &SimConfig) -> WorldState {
        WorldState {
            gripper: [0.0, 0.0, 0.0, 0.0],
            gripper_closed: false,
            held_object: None,
            objects: alloc::vec![Object {
                x: 0.0,
                y: 0.0,
                radius: 0.05,
                alive: true
            }],
            steps_elapsed: 0,
            done: c.max_steps == 0,
        }
    }

    #[test]
    fn close_on_object_without_noise_grasps() {
        let c = SimConfig {
            grasp_noise: 0.0,
            ..cfg()
        };
        for seed in 0..200 {
            let mut s = single_object_world(&c);
            let out = s
                .step(
                    &HybridAction::new([0.0; 4], Mode::CloseGripper),
                    &c,
                    &mut rng(seed),
                )
                .unwrap();
            assert!(out.info.grasped);
            assert_eq!(out.reward, -0.01);
            let out = s
                .step(
                    &HybridAction::new([0.0; 4], Mode::Terminate),
                    &c,
                    &mut rng(seed),
                )
                .unwrap();
            assert_eq!(out.reward, 1.0);
            assert!(out.done);
            assert!(!s.objects[0].alive);
            assert_eq!(s.live_objects(), 0);
        }
    }

    #[test]
    fn penalties_and_termination() {
        let c = cfg();
        let mut s = single_object_world(&c);
        s.objects[0].x = 0.4;
        s.gripper = [-0.4, -0.4, 0.5, 0.0];
        let out = s
            .step(
                &HybridAction::new([0.1, 0.0, 0.1, 0.0], Mode::Move),
                &c,
                &mut rng(0),
            )
            .unwrap();
        assert_eq!(out.reward, -0.01);
        assert!(!out.done);
        let out = s
            .step(
                &HybridAction::new([0.0; 4], Mode::Terminate),
                &c,
                &mut rng(0),
            )
            .unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.done);
        assert_eq!(
            s.step(&HybridAction::new([0.0; 4], Mode::Move), &c, &mut rng(0)),
            Err(Error::EpisodeDone)
        );
    }

    #[test]
    fn timeout_carries_no_penalty() {
        let c = cfg();
        let mut s = WorldState::reset(&c, 3).unwrap().0;
        let mut total = 0.0;
        let mut r = rng(1);
        let mut steps = 0;
        while !s.done {
            let out = s
                .step(
                    &HybridAction::new([0.0, 0.0, 0.0, 0.1], Mode::Move),
                    &c,
                    &mut r,
                )
                .unwrap();
            total += out.reward;
            steps += 1;
            if out.done {
                assert!(out.info.timed_out);
                assert_eq!(out.reward, 0.0);
            }
        }
        assert_eq!(steps, c.max_steps);
        assert!((total + 0.19).abs() < 1e-12);
    }

    #[test]
    fn scripted_policy_terminates_quickly() {
        let c = cfg();
        let policy = ScriptedPolicy::new(&c);
        for seed in 0..500 {
            let mut r = rng(seed + 1000);
            let ep =
                run_episode(&c, seed, seed, "scripted", |o| Ok(policy.act(o, &mut r))).unwrap();
            assert!(ep.transitions.len() <= c.max_steps);
            assert_eq!(ep.transitions.last().unwrap().action.mode, Mode::Terminate);
            assert!(ep.transitions.iter().rev().skip(1).all(|t| !t.terminal));
        }
    }

    #[test]
    fn episodes_are_reproducible() {
        let c = cfg();
        let policy = ScriptedPolicy::new(&c);
        let run = |seed| {
            let mut r = rng(99);
            run_episode(&c, seed, 0, "scripted", |o| Ok(policy.act(o, &mut r))).unwrap()
        };
        assert_eq!(run(5), run(5));
    }
}
