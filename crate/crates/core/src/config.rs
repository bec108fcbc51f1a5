//! Run configuration files.
//!
//! A run config is a TOML document with one table per concern. It is laid
//! over a preset (desk scale by default), so a file only needs the keys it
//! changes. Unknown keys are rejected after merging.
//!
//! ```toml
//! seeds = [0, 1, 2]
//!
//! [env]
//! name = "chain"
//! length = 10
//!
//! [estimator]
//! mode = "fixed"
//! lambda = 0.8
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{EpsilonSchedule, TrainConfig};
use crate::env::{
    make_partially_observable, Chain, CliffWalk, ClipReward, Environment, GridWorld, MaskSpec,
    TimeLimit, VelocityChain, DEFAULT_TIME_LIMIT,
};
use crate::error::{Error, Result};
use crate::qfunc::{AdamConfig, LinearQ, MlpQ, OptimizerConfig, QFunction, TabularQ};
use crate::returns::{LambdaMode, ReturnEstimatorConfig, TraceVariant};

pub const AVAILABLE_ENVIRONMENTS: &[&str] = &["chain", "gridworld", "cliff-walk", "velocity-chain"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Every ratio of the Atari setup at roughly 1/50 of the scale.
    Desk,
    /// The Atari hyperparameters themselves.
    AtariRatios,
}

impl std::str::FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "atari-ratios" => Ok(Self::AtariRatios),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected desk or atari-ratios"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub q: QConfig,
    pub optimizer: OptimizerSection,
    pub estimator: EstimatorSection,
    pub train: TrainSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_speed: Option<usize>,
    pub history_len: usize,
    pub time_limit: usize,
    pub clip_rewards: bool,
    /// "velocity" hides the velocity features of the velocity chain;
    /// "single-frame" restricts φ to the current observation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_features: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    DqnLambda,
    NstepBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Return horizon of the baseline.
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QKind {
    Tabular,
    Linear,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QConfig {
    pub kind: QKind,
    pub hidden: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMode {
    Fixed,
    Median,
    ErrorBounded,
    Nstep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Peng,
    Watkins,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub gamma: f64,
    pub mode: EstimatorMode,
    pub variant: Variant,
    pub lambda: f64,
    pub k: usize,
    pub max_error: f64,
    pub max_depth: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub total_steps: usize,
    pub refresh_every: usize,
    pub minibatch: usize,
    pub train_every: usize,
    /// Must equal `cache_scale · refresh_every · minibatch / train_every`
    /// when given; derived otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_size: Option<usize>,
    /// Multiplier on the derived cache size, for cache-size ablations.
    pub cache_scale: usize,
    pub block: usize,
    pub replay_start: usize,
    pub replay_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: usize,
    pub priority: f64,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = Self {
            name: None,
            seeds: vec![0],
            out: None,
            env: EnvConfig {
                name: None,
                length: None,
                size: None,
                step_cost: None,
                slip: None,
                max_speed: None,
                history_len: 1,
                time_limit: DEFAULT_TIME_LIMIT,
                clip_rewards: false,
                mask: None,
                keep_features: None,
            },
            agent: AgentConfig {
                kind: AgentKind::DqnLambda,
                n: 3,
            },
            q: QConfig {
                kind: QKind::Tabular,
                hidden: vec![64, 64],
            },
            optimizer: OptimizerSection {
                kind: OptimizerKind::Adam,
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-4,
            },
            estimator: EstimatorSection {
                gamma: 0.99,
                mode: EstimatorMode::Median,
                variant: Variant::Peng,
                lambda: 0.8,
                k: 20,
                max_error: 0.025,
                max_depth: 7,
                n: 3,
            },
            train: TrainSection {
                total_steps: 200_000,
                refresh_every: 1000,
                minibatch: 32,
                train_every: 4,
                cache_size: None,
                cache_scale: 1,
                block: 100,
                replay_start: 5000,
                replay_capacity: 50_000,
                epsilon_start: 1.0,
                epsilon_end: 0.1,
                epsilon_anneal_steps: 20_000,
                priority: 0.1,
            },
        };
        match preset {
            Preset::Desk => desk,
            Preset::AtariRatios => Self {
                env: EnvConfig {
                    history_len: 4,
                    ..desk.env
                },
                q: QConfig {
                    kind: QKind::Mlp,
                    ..desk.q
                },
                optimizer: OptimizerSection {
                    lr: 1e-4,
                    ..desk.optimizer
                },
                train: TrainSection {
                    total_steps: 10_000_000,
                    refresh_every: 10_000,
                    replay_start: 50_000,
                    replay_capacity: 1_000_000,
                    epsilon_anneal_steps: 1_000_000,
                    ..desk.train
                },
                ..desk
            },
        }
    }

    /// Parses `text` laid over `preset` and validates the result.
    pub fn from_toml_str(text: &str, preset: Preset) -> Result<Self> {
        let overrides: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut base = toml::Table::try_from(Self::preset(preset))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, overrides);
        let cfg: Self = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. The run name defaults to the file stem.
    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, preset)?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("run")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        self.env_name()?;
        self.train_config(self.seeds[0])?;
        if self.agent.kind == AgentKind::NstepBaseline && self.agent.n == 0 {
            return Err(Error::Config("agent.n must be >= 1".into()));
        }
        if self.q.kind == QKind::Mlp && self.q.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        // Build once to surface bad environment parameters and masks early.
        let env = self.build_env(0)?;
        self.build_q(env.as_ref(), 0)?;
        Ok(())
    }

    fn env_name(&self) -> Result<&str> {
        let list = AVAILABLE_ENVIRONMENTS.join(", ");
        match self.env.name.as_deref() {
            None => Err(Error::Config(format!(
                "env.name is missing; available environments: {list}"
            ))),
            Some(n) if AVAILABLE_ENVIRONMENTS.contains(&n) => Ok(n),
            Some(n) => Err(Error::Config(format!(
                "unknown environment {n:?}; available environments: {list}"
            ))),
        }
    }

    /// Cache size under the minibatch-ratio sizing identity
    /// `S = cache_scale · F · M / train_every`.
    pub fn derived_cache_size(&self) -> usize {
        let t = &self.train;
        t.cache_scale * TrainConfig::derived_cache_size(t.refresh_every, t.minibatch, t.train_every)
    }

    pub fn estimator_config(&self) -> ReturnEstimatorConfig {
        let e = &self.estimator;
        let mode = match e.mode {
            EstimatorMode::Fixed => LambdaMode::Fixed(e.lambda),
            EstimatorMode::Median => LambdaMode::MedianDynamic { k: e.k },
            EstimatorMode::ErrorBounded => LambdaMode::ErrorBounded {
                max_error: e.max_error,
                max_depth: e.max_depth,
            },
            EstimatorMode::Nstep => LambdaMode::NStep(e.n),
        };
        let variant = match e.variant {
            Variant::Peng => TraceVariant::Peng,
            Variant::Watkins => TraceVariant::Watkins,
        };
        ReturnEstimatorConfig {
            gamma: e.gamma,
            mode,
            variant,
        }
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let t = &self.train;
        if t.train_every == 0 || t.cache_scale == 0 {
            return Err(Error::Config(
                "train_every and cache_scale must be positive".into(),
            ));
        }
        if (t.refresh_every * t.minibatch) % t.train_every != 0 {
            return Err(Error::Config(format!(
                "refresh_every · minibatch = {} is not divisible by train_every {}",
                t.refresh_every * t.minibatch,
                t.train_every
            )));
        }
        let derived = self.derived_cache_size();
        if let Some(s) = t.cache_size {
            if s != derived {
                return Err(Error::Config(format!(
                    "cache_size {s} violates the sizing identity S = cache_scale · F · M / train_every \
                     (one minibatch of M samples per {} steps): F = {}, M = {}, cache_scale = {} give S = {derived}",
                    t.train_every, t.refresh_every, t.minibatch, t.cache_scale
                )));
            }
        }
        let o = &self.optimizer;
        let optimizer = match o.kind {
            OptimizerKind::Adam => OptimizerConfig::Adam(AdamConfig {
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                epsilon: o.epsilon,
            }),
            OptimizerKind::Sgd => OptimizerConfig::Sgd { lr: o.lr },
        };
        let cfg = TrainConfig {
            total_steps: t.total_steps,
            refresh_every: t.refresh_every,
            minibatch: t.minibatch,
            train_every: t.train_every,
            cache_size: derived,
            block: t.block,
            replay_start: t.replay_start,
            replay_capacity: t.replay_capacity,
            history_len: self.env.history_len,
            epsilon: EpsilonSchedule {
                start: t.epsilon_start,
                end: t.epsilon_end,
                anneal_steps: t.epsilon_anneal_steps,
            },
            estimator: self.estimator_config(),
            priority: t.priority,
            optimizer,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the configured environment, time limit and wrappers included.
    pub fn build_env(&self, seed: u64) -> Result<Box<dyn Environment>> {
        let e = &self.env;
        let positive = |v: Option<usize>, default: usize, key: &str, min: usize| -> Result<usize> {
            let v = v.unwrap_or(default);
            if v < min {
                return Err(Error::Config(format!("env.{key} must be >= {min}")));
            }
            Ok(v)
        };
        let slip = e.slip.unwrap_or(0.0);
        if !(0.0..=1.0).contains(&slip) {
            return Err(Error::Config("env.slip must lie in [0, 1]".into()));
        }
        if e.time_limit == 0 {
            return Err(Error::Config("env.time_limit must be positive".into()));
        }
        let env_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
        let name = self.env_name()?;
        let mut velocity_mask = None;
        let base: Box<dyn Environment> = match name {
            "chain" => Box::new(Chain::new(positive(e.length, 10, "length", 2)?)),
            "gridworld" => Box::new(GridWorld::new(
                positive(e.size, 5, "size", 2)?,
                e.step_cost.unwrap_or(0.01),
                slip,
                env_seed,
            )),
            "cliff-walk" => Box::new(CliffWalk::new()),
            "velocity-chain" => {
                let env = VelocityChain::new(
                    positive(e.length, 20, "length", 2)?,
                    positive(e.max_speed, 2, "max_speed", 1)?,
                    e.step_cost.unwrap_or(0.01),
                );
                velocity_mask = Some(env.velocity_features());
                Box::new(env)
            }
            _ => unreachable!("validated by env_name"),
        };
        let masked: Box<dyn Environment> = match (e.mask.as_deref(), &e.keep_features) {
            (None, None) => base,
            (None, Some(keep)) => Box::new(make_partially_observable(
                base,
                MaskSpec::Keep(keep.clone()),
            )?),
            (Some("velocity"), None) => match velocity_mask {
                Some(drop) => Box::new(make_partially_observable(base, MaskSpec::Drop(drop))?),
                None => {
                    return Err(Error::Config(
                        "mask = \"velocity\" needs the velocity-chain environment".into(),
                    ))
                }
            },
            (Some("single-frame"), None) => {
                Box::new(make_partially_observable(base, MaskSpec::SingleFrame)?)
            }
            (Some(m), None) => {
                return Err(Error::Config(format!(
                    "unknown mask {m:?}; expected \"velocity\" or \"single-frame\""
                )))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set either env.mask or env.keep_features".into(),
                ))
            }
        };
        let clipped: Box<dyn Environment> = if e.clip_rewards {
            Box::new(ClipReward::new(masked))
        } else {
            masked
        };
        Ok(Box::new(TimeLimit::new(clipped, e.time_limit)))
    }

    pub fn build_q(&self, env: &dyn Environment, seed: u64) -> Result<Box<dyn QFunction>> {
        let actions = env.num_actions();
        let h = env
            .max_history_len()
            .map_or(self.env.history_len, |m| m.min(self.env.history_len));
        let inputs = env.observation_dim() * h;
        Ok(match self.q.kind {
            QKind::Tabular => {
                let states = env.num_states().filter(|_| h == 1).ok_or_else(|| {
                    Error::Config(
                        "tabular Q needs a fully observed tabular environment with history_len = 1"
                            .into(),
                    )
                })?;
                Box::new(TabularQ::new(states, actions))
            }
            QKind::Linear => Box::new(LinearQ::new(inputs, actions)),
            QKind::Mlp => Box::new(MlpQ::new(inputs, &self.q.hidden, actions, seed)),
        })
    }
}

/// Recursively overlays `over` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"
seeds = [1, 2, 3]
[env]
name = "chain"
length = 10
"#;

    #[test]
    fn minimal_file_over_desk_preset() {
        let cfg = RunConfig::from_toml_str(CHAIN, Preset::Desk).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.train.refresh_every, 1000);
        let t = cfg.train_config(1).unwrap();
        assert_eq!(t.cache_size, 8000);
        assert_eq!(t.minibatches_per_refresh(), 250);
        assert_eq!(t.estimator.mode, LambdaMode::MedianDynamic { k: 20 });
    }

    #[test]
    fn sizing_identity_derives_atari_cache() {
        let text = "[env]\nname = \"chain\"\n[train]\nrefresh_every = 10000\nminibatch = 32\n";
        let cfg = RunConfig::from_toml_str(text, Preset::Desk).unwrap();
        assert_eq!(cfg.derived_cache_size(), 80_000);
        assert_eq!(cfg.train_config(0).unwrap().cache_size, 80_000);

        let atari =
            RunConfig::from_toml_str("[env]\nname = \"chain\"", Preset::AtariRatios).unwrap();
        assert_eq!(atari.derived_cache_size(), 80_000);
    }

    #[test]
    fn sizing_violation_names_identity() {
        let text = format!("{CHAIN}[train]\ncache_size = 9000\n");
        let err = RunConfig::from_toml_str(&text, Preset::Desk)
            .unwrap_err()
            .to_string();
        assert!(err.contains("sizing identity"), "{err}");
        assert!(err.contains("S = 8000"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{CHAIN}[train]\nrefresh_evry = 10\n");
        assert!(matches!(
            RunConfig::from_toml_str(&text, Preset::Desk),
            Err(Error::Config(_))
        ));
        assert!(
            RunConfig::from_toml_str("bogus = 1\n[env]\nname = \"chain\"", Preset::Desk).is_err()
        );
    }

    #[test]
    fn missing_or_unknown_env_lists_choices() {
        let err = RunConfig::from_toml_str("seeds = [0]", Preset::Desk)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("chain, gridworld, cliff-walk, velocity-chain"),
            "{err}"
        );
        let err = RunConfig::from_toml_str("[env]\nname = \"atari\"", Preset::Desk)
            .unwrap_err()
            .to_string();
        assert!(err.contains("available environments"), "{err}");
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::from_toml_str(CHAIN, Preset::Desk).unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(
            RunConfig::from_toml_str(&text, Preset::AtariRatios).unwrap(),
            cfg
        );
    }

    #[test]
    fn masks_and_q_kinds() {
        let text =
            "[env]\nname = \"velocity-chain\"\nmask = \"velocity\"\n[q]\nkind = \"linear\"\n";
        let cfg = RunConfig::from_toml_str(text, Preset::Desk).unwrap();
        let env = cfg.build_env(0).unwrap();
        assert_eq!(env.observation_dim(), 20);
        assert_eq!(env.num_states(), None);

        let text = "[env]\nname = \"velocity-chain\"\nmask = \"velocity\"\n";
        let err = RunConfig::from_toml_str(text, Preset::Desk)
            .unwrap_err()
            .to_string();
        assert!(err.contains("tabular"), "{err}");

        let text = "[env]\nname = \"chain\"\nmask = \"velocity\"\n";
        assert!(RunConfig::from_toml_str(text, Preset::Desk).is_err());

        let text = "[env]\nname = \"chain\"\nkeep_features = []\n[q]\nkind = \"linear\"\n";
        assert!(matches!(
            RunConfig::from_toml_str(text, Preset::Desk),
            Err(Error::InvalidMask(_))
        ));

        let text =
            "[env]\nname = \"gridworld\"\nhistory_len = 4\n[q]\nkind = \"mlp\"\nhidden = [8]\n";
        let cfg = RunConfig::from_toml_str(text, Preset::Desk).unwrap();
        let env = cfg.build_env(0).unwrap();
        let q = cfg.build_q(env.as_ref(), 0).unwrap();
        assert_eq!(
            q.architecture(),
            crate::qfunc::Architecture::Mlp {
                layers: vec![100, 8, 4]
            }
        );
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("desk".parse::<Preset>().unwrap(), Preset::Desk);
        assert_eq!(
            "atari-ratios".parse::<Preset>().unwrap(),
            Preset::AtariRatios
        );
        assert!("atari".parse::<Preset>().is_err());
    }
}
