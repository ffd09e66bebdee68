//! Experiment configuration: one TOML document covering the run, the
//! simulator, the network, the loss, CEM and the seed list.

use std::fmt;
use std::path::Path;

use q2opt_core::approximator::{Head, NetworkSpec, Normalization};
use q2opt_core::cem::{CemConfig, ACTION_DIM};
use q2opt_core::distrl::LossConfig;
use q2opt_core::risk::RiskMetric;
use q2opt_core::sim::SimConfig;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    /// Scalar sigmoid head with cross-entropy loss.
    QtOpt,
    /// Fixed-midpoint quantile head.
    Q2rOpt,
    /// Implicit quantile head with sampled probabilities.
    Q2fOpt,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::QtOpt, AgentKind::Q2rOpt, AgentKind::Q2fOpt];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::QtOpt => "qt-opt",
            AgentKind::Q2rOpt => "q2r-opt",
            AgentKind::Q2fOpt => "q2f-opt",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: RunMode,
    pub agent: AgentKind,
    pub risk: RiskMetric,
    /// Empty means the plain mean; otherwise one weight per quantile.
    pub score_weights: Vec<f64>,
    pub batch_size: usize,
    pub lr: f64,
    /// Trainer steps during which actors follow the scripted policy.
    pub scripted_steps: u64,
    pub epsilon: f64,
    /// Output size of the fixed-quantile head.
    pub quantiles: usize,
    /// Cosine basis size of the implicit head.
    pub n_basis: usize,
    /// Probabilities sampled for the prediction side of the implicit loss.
    pub prediction_taus: usize,
    /// Probabilities sampled when evaluating a target.
    pub target_taus: usize,
    /// Probabilities sampled per policy decision.
    pub policy_taus: usize,
    pub ema_decay: f64,
    pub lag_period: u64,
    /// Take the element-wise minimum over both target nets.
    pub clipped_min: bool,
    /// Run roles on threads instead of the sequential schedule.
    pub concurrent: bool,
    pub actors: usize,
    pub updaters: usize,
    pub sim_buffer_capacity: usize,
    pub train_buffer_capacity: usize,
    /// Transitions labelled by the updater per trainer step.
    pub labels_per_step: usize,
    /// Trainer steps scheduled after each collected episode.
    pub train_steps_per_episode: usize,
    /// Environment episode budget of an online run.
    pub max_episodes: u64,
    /// Trainer step budget; 0 means unbounded (online) and is rejected
    /// offline.
    pub max_train_steps: u64,
    /// Trainer steps between evaluations.
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    /// Capacity of each inter-role queue in concurrent mode.
    pub queue_capacity: usize,
    /// Labels older than this many trainer steps are dropped on arrival.
    pub max_label_staleness: u64,
    /// Dataset read by offline runs.
    pub dataset: String,
    /// Keep every collected episode so the run can be replayed as a dataset.
    pub record_episodes: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Online,
            agent: AgentKind::Q2fOpt,
            risk: RiskMetric::Neutral,
            score_weights: Vec::new(),
            batch_size: 256,
            lr: 1e-4,
            scripted_steps: 5000,
            epsilon: 0.2,
            quantiles: 100,
            n_basis: 64,
            prediction_taus: 32,
            target_taus: 32,
            policy_taus: 32,
            ema_decay: 0.999,
            lag_period: 500,
            clipped_min: false,
            concurrent: false,
            actors: 1,
            updaters: 1,
            sim_buffer_capacity: 100_000,
            train_buffer_capacity: 10_000,
            labels_per_step: 32,
            train_steps_per_episode: 1,
            max_episodes: 20_000,
            max_train_steps: 0,
            eval_every: 1000,
            eval_episodes: 100,
            final_eval_episodes: 500,
            queue_capacity: 256,
            max_label_staleness: 1000,
            dataset: String::new(),
            record_episodes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden_layers: Vec<usize>,
    pub normalization: Normalization,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64, 64],
            normalization: Normalization::LayerNorm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub run: RunConfig,
    pub sim: SimConfig,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub cem: CemConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1],
            run: RunConfig::default(),
            sim: SimConfig::default(),
            network: NetworkConfig::default(),
            loss: LossConfig::default(),
            cem: CemConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    /// The reference configuration with every default spelled out.
    pub fn reference_toml() -> String {
        Self::default().to_toml()
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let head = match self.run.agent {
            AgentKind::QtOpt => Head::Scalar,
            AgentKind::Q2rOpt => Head::QuantileFixed {
                quantiles: self.run.quantiles,
            },
            AgentKind::Q2fOpt => {
                let h = &self.network.hidden_layers;
                Head::Implicit {
                    n_basis: self.run.n_basis,
                    embed_dim: if h.len() >= 2 { h[h.len() - 2] } else { 0 },
                }
            }
        };
        NetworkSpec {
            state_dim: self.sim.observation_dim(),
            action_dim: ACTION_DIM,
            hidden_layers: self.network.hidden_layers.clone(),
            normalization: self.network.normalization,
            head,
            value_range: self.loss.value_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        self.sim.validate()?;
        self.loss.validate()?;
        self.cem.validate()?;
        self.run.risk.validate()?;
        self.network_spec().validate()?;
        let r = &self.run;
        if self.seeds.is_empty() {
            return bad("seeds: at least one seed is required");
        }
        let counts = [
            ("run.batch_size", r.batch_size),
            ("run.quantiles", r.quantiles),
            ("run.n_basis", r.n_basis),
            ("run.prediction_taus", r.prediction_taus),
            ("run.target_taus", r.target_taus),
            ("run.policy_taus", r.policy_taus),
            ("run.actors", r.actors),
            ("run.updaters", r.updaters),
            ("run.sim_buffer_capacity", r.sim_buffer_capacity),
            ("run.train_buffer_capacity", r.train_buffer_capacity),
            ("run.labels_per_step", r.labels_per_step),
            ("run.train_steps_per_episode", r.train_steps_per_episode),
            ("run.eval_episodes", r.eval_episodes),
            ("run.final_eval_episodes", r.final_eval_episodes),
            ("run.queue_capacity", r.queue_capacity),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if r.eval_every == 0 || r.lag_period == 0 {
            return bad("run.eval_every and run.lag_period must be positive");
        }
        if !(r.lr > 0.0 && r.lr.is_finite()) {
            return bad("run.lr must be positive");
        }
        if !(0.0..=1.0).contains(&r.epsilon) || !(0.0..=1.0).contains(&r.ema_decay) {
            return bad("run.epsilon and run.ema_decay must lie in [0, 1]");
        }
        if r.agent != AgentKind::Q2fOpt && r.risk != RiskMetric::Neutral {
            return bad("run.risk: distortions need the q2f-opt agent");
        }
        if !r.score_weights.is_empty() {
            let n = match r.agent {
                AgentKind::QtOpt => 1,
                AgentKind::Q2rOpt => r.quantiles,
                AgentKind::Q2fOpt => r.policy_taus,
            };
            if r.score_weights.len() != n {
                return Err(Error::Config(format!(
                    "run.score_weights: expected {n} weights, got {}",
                    r.score_weights.len()
                )));
            }
        }
        if r.mode == RunMode::Offline && r.max_train_steps == 0 {
            return bad("run.max_train_steps must be positive for offline runs");
        }
        Ok(())
    }
}

/// The bundled experiment recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// QT-Opt, Q2R-Opt and Q2F-Opt trained online on the same seeds.
    OnlineComparison,
    /// Q2F-Opt under each bundled risk distortion.
    RiskSweep,
    /// Offline training on scripted-policy episodes.
    BatchScripted,
    /// Offline training on episodes of a near-optimal policy.
    BatchNearOptimal,
    /// Offline training on the replay of an online run.
    BatchReplay,
}

/// Distortions bundled by the risk sweep.
pub fn risk_sweep() -> Vec<RiskMetric> {
    vec![
        RiskMetric::Neutral,
        RiskMetric::Cpw(0.71),
        RiskMetric::Wang(-0.75),
        RiskMetric::Wang(0.75),
        RiskMetric::Cvar(0.25),
        RiskMetric::Cvar(0.4),
        RiskMetric::Norm(3),
        RiskMetric::Pow(-2.0),
    ]
}

/// One named run variant of a recipe.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    pub config: ExperimentConfig,
}

impl Recipe {
    /// Expands `base` into the recipe's variants. Batch recipes take the
    /// dataset path from `base.run.dataset`.
    pub fn variants(self, base: &ExperimentConfig) -> Vec<Variant> {
        let with = |name: String, f: &dyn Fn(&mut ExperimentConfig)| {
            let mut config = base.clone();
            f(&mut config);
            Variant { name, config }
        };
        match self {
            Recipe::OnlineComparison => AgentKind::ALL
                .iter()
                .map(|&a| {
                    with(a.name().into(), &|c| {
                        c.run.mode = RunMode::Online;
                        c.run.agent = a;
                        c.run.risk = RiskMetric::Neutral;
                    })
                })
                .collect(),
            Recipe::RiskSweep => risk_sweep()
                .into_iter()
                .map(|risk| {
                    with(risk.to_string(), &|c| {
                        c.run.mode = RunMode::Online;
                        c.run.agent = AgentKind::Q2fOpt;
                        c.run.risk = risk;
                    })
                })
                .collect(),
            Recipe::BatchScripted | Recipe::BatchNearOptimal | Recipe::BatchReplay => {
                AgentKind::ALL
                    .iter()
                    .map(|&a| {
                        with(a.name().into(), &|c| {
                            c.run.mode = RunMode::Offline;
                            c.run.agent = a;
                            c.run.risk = RiskMetric::Neutral;
                        })
                    })
                    .collect()
            }
        }
    }
}
