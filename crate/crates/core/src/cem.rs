//! Cross-entropy method over the hybrid action space and the risk-scored
//! greedy policy built on it.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::approximator::{Network, ParamSnapshot};
use crate::distrl::{quantile_midpoints, sample_taus, TauVector};
use crate::risk::{RiskMetric, ScoreFn};
use crate::{Error, Result};

/// Continuous action dimensions: `dx, dy, dz, dphi`.
pub const CONT_DIM: usize = 4;
pub const NUM_MODES: usize = 4;
/// Width of the network encoding of a [`HybridAction`].
pub const ACTION_DIM: usize = CONT_DIM + NUM_MODES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Mode {
    Move = 0,
    CloseGripper = 1,
    OpenGripper = 2,
    Terminate = 3,
}

impl Mode {
    pub const ALL: [Mode; NUM_MODES] = [
        Mode::Move,
        Mode::CloseGripper,
        Mode::OpenGripper,
        Mode::Terminate,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl From<Mode> for u8 {
    fn from(m: Mode) -> u8 {
        m as u8
    }
}

impl TryFrom<u8> for Mode {
    type Error = Error;

    fn try_from(v: u8) -> Result<Mode> {
        Mode::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown action mode {v}")))
    }
}

/// Continuous displacement in `[-1, 1]^4` plus a discrete mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridAction {
    pub cont: [f64; CONT_DIM],
    pub mode: Mode,
}

impl HybridAction {
    /// Builds an action with every continuous entry clamped to `[-1, 1]`.
    pub fn new(cont: [f64; CONT_DIM], mode: Mode) -> Self {
        Self {
            cont: cont.map(|c| c.clamp(-1.0, 1.0)),
            mode,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.cont.iter().all(|c| (-1.0..=1.0).contains(c))
    }

    /// Continuous part followed by a one-hot mode.
    pub fn encode(&self) -> [f64; ACTION_DIM] {
        let mut out = [0.0; ACTION_DIM];
        out[..CONT_DIM].copy_from_slice(&self.cont);
        out[CONT_DIM + self.mode.index()] = 1.0;
        out
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let cont = [(); CONT_DIM].map(|_| rng.random_range(-1.0..=1.0));
        let mode = Mode::ALL[rng.random_range(0..NUM_MODES)];
        Self { cont, mode }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CemConfig {
    pub iterations: usize,
    pub samples: usize,
    pub elite_fraction: f64,
    pub init_sigma: f64,
    pub sigma_floor: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            samples: 64,
            elite_fraction: 0.1,
            init_sigma: 0.5,
            sigma_floor: 1e-3,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.samples == 0 {
            return Err(Error::InvalidConfig(
                "cem needs iterations >= 1 and samples >= 1".into(),
            ));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "elite fraction {} outside (0, 1]",
                self.elite_fraction
            )));
        }
        if !(self.init_sigma > 0.0 && self.sigma_floor > 0.0) {
            return Err(Error::InvalidConfig("cem sigmas must be positive".into()));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        let n = libm::round(self.samples as f64 * self.elite_fraction) as usize;
        n.clamp(1, self.samples)
    }
}

/// Sampling distribution refit each CEM iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CemState {
    pub mean: [f64; CONT_DIM],
    pub sigma: [f64; CONT_DIM],
    pub mode_probs: [f64; NUM_MODES],
}

impl CemState {
    pub fn initial(cfg: &CemConfig) -> Self {
        Self {
            mean: [0.0; CONT_DIM],
            sigma: [cfg.init_sigma.max(cfg.sigma_floor); CONT_DIM],
            mode_probs: [1.0 / NUM_MODES as f64; NUM_MODES],
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HybridAction {
        let mut cont = [0.0; CONT_DIM];
        for (d, c) in cont.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *c = self.mean[d] + self.sigma[d] * z;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut mode = Mode::ALL[NUM_MODES - 1];
        for (m, p) in Mode::ALL.iter().zip(&self.mode_probs) {
            acc += p;
            if u < acc {
                mode = *m;
                break;
            }
        }
        HybridAction::new(cont, mode)
    }

    fn refit(&mut self, elites: &[HybridAction], floor: f64) {
        let n = elites.len() as f64;
        for d in 0..CONT_DIM {
            let mean = elites.iter().map(|a| a.cont[d]).sum::<f64>() / n;
            let var = elites
                .iter()
                .map(|a| (a.cont[d] - mean) * (a.cont[d] - mean))
                .sum::<f64>()
                / n;
            self.mean[d] = mean;
            self.sigma[d] = libm::sqrt(var).max(floor);
        }
        let mut counts = [1.0; NUM_MODES];
        for a in elites {
            counts[a.mode.index()] += 1.0;
        }
        let total = n + NUM_MODES as f64;
        self.mode_probs = counts.map(|c| c / total);
    }
}

/// Maximizes `score` over hybrid actions.
///
/// Each iteration draws `samples` candidates (Gaussian continuous part,
/// clamped to the box; categorical mode), scores them in one batch call,
/// and refits the distribution to the top `elite_fraction`. The best
/// candidate seen in any iteration is returned. Candidate sampling depends
/// on scores only through their ranking.
pub fn cem_optimize<F, R>(mut score: F, cfg: &CemConfig, rng: &mut R) -> Result<HybridAction>
where
    F: FnMut(&[HybridAction]) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut state = CemState::initial(cfg);
    let elite_n = cfg.elite_count();
    let mut best: Option<(f64, HybridAction)> = None;
    let mut candidates = Vec::with_capacity(cfg.samples);
    let mut order: Vec<usize> = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.iterations {
        candidates.clear();
        candidates.extend((0..cfg.samples).map(|_| state.sample(rng)));
        let mut scores = score(&candidates)?;
        if scores.len() != candidates.len() {
            return Err(Error::DimensionMismatch {
                what: "cem scores",
                expected: candidates.len(),
                actual: scores.len(),
            });
        }
        scores
            .iter_mut()
            .filter(|s| s.is_nan())
            .for_each(|s| *s = f64::NEG_INFINITY);
        order.clear();
        order.extend(0..candidates.len());
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let top = order[0];
        if best.is_none_or(|(s, _)| scores[top] > s) {
            best = Some((scores[top], candidates[top]));
        }
        let elites: Vec<HybridAction> = order[..elite_n].iter().map(|&i| candidates[i]).collect();
        state.refit(&elites, cfg.sigma_floor);
    }
    Ok(best
        .map(|(_, a)| a)
        .unwrap_or_else(|| HybridAction::new([0.0; CONT_DIM], Mode::Move)))
}

/// Greedy policy `argmax_a psi(q(s, a, beta(tau)))` with CEM as the argmax.
#[derive(Debug, Clone, Copy)]
pub struct GreedyPolicy<'a> {
    pub network: &'a Network,
    pub risk: RiskMetric,
    pub score: &'a ScoreFn,
    pub cem: &'a CemConfig,
    /// Probabilities drawn per decision for the implicit head.
    pub policy_taus: usize,
}

impl GreedyPolicy<'_> {
    /// Probabilities for one decision: fresh distorted draws for the
    /// implicit head, fixed midpoints for the quantile head, none for the
    /// scalar head.
    pub fn decision_taus<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Option<TauVector>> {
        if self.network.is_implicit() {
            let raw = sample_taus(self.policy_taus, rng)?;
            return Ok(Some(self.risk.distort_vector(&raw, rng)?));
        }
        if self.risk != RiskMetric::Neutral {
            return Err(Error::InvalidRisk(format!(
                "distortion {} needs the implicit-quantile head",
                self.risk
            )));
        }
        Ok(None)
    }

    /// Scores of `actions` in `state` under fixed decision probabilities.
    pub fn score_actions(
        &self,
        params: &ParamSnapshot,
        state: &[f64],
        taus: Option<&TauVector>,
        actions: &[HybridAction],
    ) -> Result<Vec<f64>> {
        let mut flat = Vec::with_capacity(actions.len() * ACTION_DIM);
        for a in actions {
            flat.extend_from_slice(&a.encode());
        }
        let out =
            self.network
                .forward_batch(params, state, &flat, taus.map(TauVector::as_slice))?;
        let width = out.len() / actions.len();
        out.chunks(width).map(|q| self.score.score(q)).collect()
    }

    /// CEM argmax of the score. A stochastic distortion redraws its
    /// probabilities for every candidate it evaluates.
    pub fn act<R: Rng + ?Sized>(
        &self,
        params: &ParamSnapshot,
        state: &[f64],
        rng: &mut R,
    ) -> Result<HybridAction> {
        if self.network.is_implicit() && self.risk.is_stochastic() {
            let mut draws = crate::rng::rng_from_seed(rng.random());
            let per_candidate = |actions: &[HybridAction]| {
                actions
                    .iter()
                    .map(|a| {
                        let taus = self.decision_taus(&mut draws)?;
                        Ok(self.score_actions(
                            params,
                            state,
                            taus.as_ref(),
                            core::slice::from_ref(a),
                        )?[0])
                    })
                    .collect()
            };
            return cem_optimize(per_candidate, self.cem, rng);
        }
        let taus = self.decision_taus(rng)?;
        cem_optimize(
            |actions| self.score_actions(params, state, taus.as_ref(), actions),
            self.cem,
            rng,
        )
    }
}

/// Midpoints used by the fixed-quantile head of `network`, if it has one.
pub fn head_midpoints(network: &Network) -> Option<TauVector> {
    match network.spec().head {
        crate::approximator::Head::QuantileFixed { quantiles } => {
            quantile_midpoints(quantiles).ok()
        }
        _ => None,
    }
}

/// With probability `epsilon` a uniformly random action (flagged `true`),
/// otherwise the result of `greedy`, which is only evaluated in that case.
pub fn epsilon_greedy<R, F>(greedy: F, epsilon: f64, rng: &mut R) -> Result<(HybridAction, bool)>
where
    R: Rng + ?Sized,
    F: FnOnce(&mut R) -> Result<HybridAction>,
{
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "epsilon {epsilon} outside [0, 1]"
        )));
    }
    let u: f64 = rng.random();
    if u < epsilon {
        Ok((HybridAction::random(rng), true))
    } else {
        Ok((greedy(rng)?, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    type TestRng = rand_chacha::ChaCha8Rng;

    fn quadratic(target: [f64; 4]) -> impl FnMut(&[HybridAction]) -> Result<Vec<f64>> {
        move |acts| {
            Ok(acts
                .iter()
                .map(|a| {
                    -a.cont
                        .iter()
                        .zip(&target)
                        .map(|(c, t)| (c - t) * (c - t))
                        .sum::<f64>()
                })
                .collect())
        }
    }

    #[test]
    fn finds_quadratic_optimum() {
        let cfg = CemConfig {
            iterations: 10,
            samples: 256,
            ..CemConfig::default()
        };
        let mut rng = TestRng::seed_from_u64(0);
        for trial in 0..100 {
            let target = [(); 4].map(|_| rng.random_range(-0.9..0.9));
            let mut r = TestRng::seed_from_u64(trial);
            let a = cem_optimize(quadratic(target), &cfg, &mut r).unwrap();
            for d in 0..4 {
                assert!(
                    (a.cont[d] - target[d]).abs() < 0.05,
                    "trial {trial}: {a:?} vs {target:?}"
                );
            }
        }
    }

    #[test]
    fn constant_score_gives_valid_action() {
        let mut rng = TestRng::seed_from_u64(1);
        let a = cem_optimize(
            |acts| Ok(alloc::vec![0.5; acts.len()]),
            &CemConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(a.is_valid());
    }

    #[test]
    fn returns_best_sample() {
        let mut seen = Vec::new();
        let mut rng = TestRng::seed_from_u64(2);
        let f = |acts: &[HybridAction]| {
            let s: Vec<f64> = acts
                .iter()
                .map(|a| a.cont[0] * a.cont[1] + a.cont[2])
                .collect();
            seen.extend(acts.iter().copied().zip(s.iter().copied()));
            Ok(s)
        };
        let best = cem_optimize(f, &CemConfig::default(), &mut rng).unwrap();
        let best_score = best.cont[0] * best.cont[1] + best.cont[2];
        let max = seen
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best_score, max);
        assert_eq!(seen.len(), 128);
    }

    #[test]
    fn monotone_transform_invariance() {
        let target = [0.3, -0.2, 0.7, 0.0];
        let cfg = CemConfig::default();
        for seed in 0..20 {
            let a =
                cem_optimize(quadratic(target), &cfg, &mut TestRng::seed_from_u64(seed)).unwrap();
            let mut base = quadratic(target);
            let b = cem_optimize(
                |acts| {
                    Ok(base(acts)?
                        .into_iter()
                        .map(|s| libm::exp(3.0 * s) - 7.0)
                        .collect())
                },
                &cfg,
                &mut TestRng::seed_from_u64(seed),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mode_is_learned() {
        let mut rng = TestRng::seed_from_u64(4);
        let a = cem_optimize(
            |acts| {
                Ok(acts
                    .iter()
                    .map(|a| if a.mode == Mode::Terminate { 1.0 } else { 0.0 })
                    .collect())
            },
            &CemConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(a.mode, Mode::Terminate);
    }

    #[test]
    fn epsilon_greedy_frequencies() {
        let greedy = HybridAction::new([0.1, 0.2, 0.3, 0.4], Mode::CloseGripper);
        let mut rng = TestRng::seed_from_u64(5);
        for _ in 0..100 {
            let (a, explored) = epsilon_greedy(|_| Ok(greedy), 0.0, &mut rng).unwrap();
            assert!(!explored);
            assert_eq!(a, greedy);
        }
        let mut modes = [0usize; 4];
        for _ in 0..4000 {
            let (a, explored) = epsilon_greedy(|_| Ok(greedy), 1.0, &mut rng).unwrap();
            assert!(explored && a.is_valid());
            modes[a.mode.index()] += 1;
        }
        assert!(modes
            .iter()
            .all(|&c| (c as f64 / 4000.0 - 0.25).abs() < 0.03));
        let n = 100_000;
        let explored = (0..n)
            .filter(|_| epsilon_greedy(|_| Ok(greedy), 0.2, &mut rng).unwrap().1)
            .count();
        assert!((explored as f64 / n as f64 - 0.2).abs() < 0.01);
        assert!(epsilon_greedy(|_| Ok(greedy), 1.5, &mut rng).is_err());
    }

    #[test]
    fn action_encoding() {
        let a = HybridAction::new([2.0, -3.0, 0.5, 0.0], Mode::Terminate);
        assert_eq!(a.cont, [1.0, -1.0, 0.5, 0.0]);
        assert_eq!(a.encode(), [1.0, -1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(Mode::try_from(2u8).unwrap(), Mode::OpenGripper);
        assert!(Mode::try_from(4u8).is_err());
    }

    #[test]
    fn stochastic_risk_policy_is_seeded() {
        use crate::approximator::{Head, NetworkSpec, Normalization, ValueRange};
        let net = Network::new(NetworkSpec {
            state_dim: 3,
            action_dim: ACTION_DIM,
            hidden_layers: alloc::vec![8, 6],
            normalization: Normalization::LayerNorm,
            head: Head::Implicit {
                n_basis: 4,
                embed_dim: 8,
            },
            value_range: ValueRange::default(),
        })
        .unwrap();
        let params = net.init_params(3);
        let cem = CemConfig::default();
        let policy = GreedyPolicy {
            network: &net,
            risk: RiskMetric::Norm(3),
            score: &ScoreFn::Mean,
            cem: &cem,
            policy_taus: 4,
        };
        let act = |seed| {
            policy
                .act(&params, &[0.1, 0.2, 0.3], &mut TestRng::seed_from_u64(seed))
                .unwrap()
        };
        assert_eq!(act(9), act(9));
        assert!(act(9).is_valid());
    }
}
