//! Training configuration as a `key = value` text file.
//!
//! Blank lines and `#` comments are ignored. Every key is optional and
//! falls back to the desk-scale default. The full key list, in file order,
//! is [`TrainConfig::KEYS`]; `docs/config.md` describes each one.

use std::fmt::Write as _;

use bslab_core::ppo::PpoConfig;
use bslab_core::rollout::TrainMode;
use bslab_core::shaping::{BehaviorEntry, BehaviorId, BehaviorSpec, WeightDistribution};
use bslab_core::PolicyConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layout: String,
    pub mode: TrainMode,
    pub seed: u64,
    pub total_env_steps: u64,
    pub episode_length: u32,
    pub workers: usize,
    pub envs_per_worker: usize,
    pub rollout_length: usize,
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub hidden_dim: usize,
    pub mlp_layers: usize,
    pub recurrent: bool,
    pub seq_len: usize,
    /// Env steps between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
    pub eval_episodes: usize,
    pub eval_greedy: bool,
    pub behaviors: BehaviorSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layout: "cramped_room".into(),
            mode: TrainMode::BehaviorShaping,
            seed: 0,
            total_env_steps: 5_000_000,
            episode_length: 400,
            workers: 4,
            envs_per_worker: 4,
            rollout_length: 400,
            lr: 0.0008,
            gamma: 0.99,
            gae_lambda: 0.99,
            clip_eps: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.01,
            max_grad_norm: 0.5,
            epochs: 4,
            minibatches: 4,
            hidden_dim: 64,
            mlp_layers: 2,
            recurrent: false,
            seq_len: 64,
            checkpoint_every: 250_000,
            eval_episodes: 10,
            eval_greedy: false,
            behaviors: BehaviorSpec::overcooked(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid training config:\n  {}", .problems.join("\n  "))]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl TrainConfig {
    pub const KEYS: [&'static str; 25] = [
        "layout",
        "mode",
        "seed",
        "total_env_steps",
        "episode_length",
        "workers",
        "envs_per_worker",
        "rollout_length",
        "lr",
        "gamma",
        "gae_lambda",
        "clip_eps",
        "vf_coef",
        "ent_coef",
        "max_grad_norm",
        "epochs",
        "minibatches",
        "hidden_dim",
        "mlp_layers",
        "recurrent",
        "seq_len",
        "checkpoint_every",
        "eval_episodes",
        "eval_greedy",
        "behaviors",
    ];

    /// Parses a config file on top of the defaults. All problems are
    /// reported together.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut problems = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`, got {line:?}", n + 1));
                continue;
            };
            if let Err(e) = cfg.set(key.trim(), value.trim()) {
                problems.push(format!("line {}: {e}", n + 1));
            }
        }
        problems.extend(cfg.check());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError { problems })
        }
    }

    /// Applies `key=value` overrides (flags win over the file).
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        for pair in pairs {
            match pair.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v.trim()) {
                        problems.push(e);
                    }
                }
                None => problems.push(format!("override {pair:?} is not `key=value`")),
            }
        }
        problems.extend(self.check());
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems })
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.replace('_', "").parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        fn flag(key: &str, v: &str) -> Result<bool, String> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(format!("{key}: expected true or false, got {v:?}")),
            }
        }
        match key {
            "layout" => self.layout = value.to_string(),
            "mode" => {
                self.mode = match value {
                    "SP" | "sp" => TrainMode::SelfPlay,
                    "BS" | "bs" => TrainMode::BehaviorShaping,
                    _ => return Err(format!("mode: expected SP or BS, got {value:?}")),
                }
            }
            "seed" => self.seed = num(key, value)?,
            "total_env_steps" => self.total_env_steps = num(key, value)?,
            "episode_length" => self.episode_length = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "envs_per_worker" => self.envs_per_worker = num(key, value)?,
            "rollout_length" => self.rollout_length = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "gae_lambda" => self.gae_lambda = num(key, value)?,
            "clip_eps" => self.clip_eps = num(key, value)?,
            "vf_coef" => self.vf_coef = num(key, value)?,
            "ent_coef" => self.ent_coef = num(key, value)?,
            "max_grad_norm" => self.max_grad_norm = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "minibatches" => self.minibatches = num(key, value)?,
            "hidden_dim" => self.hidden_dim = num(key, value)?,
            "mlp_layers" => self.mlp_layers = num(key, value)?,
            "recurrent" => self.recurrent = flag(key, value)?,
            "seq_len" => self.seq_len = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "eval_greedy" => self.eval_greedy = flag(key, value)?,
            "behaviors" => self.behaviors = parse_behaviors(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Range checks; empty when valid.
    pub fn check(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                p.push(msg.to_string());
            }
        };
        need(self.lr > 0.0 && self.lr.is_finite(), "lr must be positive");
        need(self.gamma > 0.0 && self.gamma <= 1.0, "gamma must be in (0, 1]");
        need(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0, "gae_lambda must be in (0, 1]");
        need(self.clip_eps > 0.0 && self.clip_eps < 1.0, "clip_eps must be in (0, 1)");
        need(self.vf_coef > 0.0, "vf_coef must be positive");
        need(self.ent_coef > 0.0, "ent_coef must be positive");
        need(self.max_grad_norm > 0.0, "max_grad_norm must be positive");
        need(self.workers > 0, "workers must be positive");
        need(self.envs_per_worker > 0, "envs_per_worker must be positive");
        need(self.rollout_length > 0, "rollout_length must be positive");
        need(self.episode_length > 0, "episode_length must be positive");
        need(self.epochs > 0, "epochs must be positive");
        need(self.minibatches > 0, "minibatches must be positive");
        need(self.hidden_dim > 0, "hidden_dim must be positive");
        need(self.seq_len > 0, "seq_len must be positive");
        need(self.eval_episodes > 0, "eval_episodes must be positive");
        need(!self.layout.is_empty(), "layout must be set");
        let per_iter = self.workers as u64 * self.envs_per_worker as u64 * self.rollout_length as u64;
        need(self.total_env_steps >= per_iter, "total_env_steps must cover at least one iteration (workers × envs_per_worker × rollout_length)");
        p
    }

    /// Canonical text form; `parse(to_text())` gives back the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }

    fn get(&self, key: &str) -> String {
        match key {
            "layout" => self.layout.clone(),
            "mode" => mode_name(self.mode).into(),
            "seed" => self.seed.to_string(),
            "total_env_steps" => self.total_env_steps.to_string(),
            "episode_length" => self.episode_length.to_string(),
            "workers" => self.workers.to_string(),
            "envs_per_worker" => self.envs_per_worker.to_string(),
            "rollout_length" => self.rollout_length.to_string(),
            "lr" => self.lr.to_string(),
            "gamma" => self.gamma.to_string(),
            "gae_lambda" => self.gae_lambda.to_string(),
            "clip_eps" => self.clip_eps.to_string(),
            "vf_coef" => self.vf_coef.to_string(),
            "ent_coef" => self.ent_coef.to_string(),
            "max_grad_norm" => self.max_grad_norm.to_string(),
            "epochs" => self.epochs.to_string(),
            "minibatches" => self.minibatches.to_string(),
            "hidden_dim" => self.hidden_dim.to_string(),
            "mlp_layers" => self.mlp_layers.to_string(),
            "recurrent" => self.recurrent.to_string(),
            "seq_len" => self.seq_len.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "eval_greedy" => self.eval_greedy.to_string(),
            "behaviors" => format_behaviors(&self.behaviors),
            _ => String::new(),
        }
    }

    /// Joint env steps gathered per iteration.
    pub fn steps_per_iteration(&self) -> u64 {
        (self.workers * self.envs_per_worker * self.rollout_length) as u64
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip_eps: self.clip_eps,
            vf_coef: self.vf_coef,
            ent_coef: self.ent_coef,
            epochs: self.epochs,
            minibatches: self.minibatches,
            max_grad_norm: self.max_grad_norm,
            normalize_advantages: true,
        }
    }

    pub fn policy(&self, input_dim: usize) -> PolicyConfig {
        PolicyConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            mlp_layers: self.mlp_layers,
            recurrent: self.recurrent,
            action_count: 6,
        }
    }
}

pub fn mode_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::SelfPlay => "SP",
        TrainMode::BehaviorShaping => "BS",
    }
}

fn behavior_name(id: BehaviorId) -> &'static str {
    match id {
        BehaviorId::DeliveryAct => "delivery_act",
        BehaviorId::OnionInPot => "onion_in_pot",
        BehaviorId::Plating => "plating",
    }
}

/// `delivery_act:normal(0,1), onion_in_pot:uniform(-1,1), plating:constant(0)`
pub fn parse_behaviors(text: &str) -> Result<BehaviorSpec, String> {
    let mut entries = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let (name, after) = rest.split_once(':').ok_or_else(|| format!("behaviors: missing ':' in {rest:?}"))?;
        let id = match name.trim() {
            "delivery_act" => BehaviorId::DeliveryAct,
            "onion_in_pot" => BehaviorId::OnionInPot,
            "plating" => BehaviorId::Plating,
            other => return Err(format!("behaviors: unknown behavior {other:?}")),
        };
        let close = after.find(')').ok_or_else(|| format!("behaviors: unclosed distribution after {name:?}"))?;
        let (dist_text, tail) = after.split_at(close + 1);
        entries.push(BehaviorEntry { id, distribution: parse_distribution(dist_text.trim())? });
        rest = tail.trim_start().trim_start_matches(',').trim_start();
    }
    BehaviorSpec::new(entries).map_err(|e| format!("behaviors: {e}"))
}

fn parse_distribution(text: &str) -> Result<WeightDistribution, String> {
    let bad = || format!("behaviors: cannot parse distribution {text:?}");
    let (kind, args) = text.strip_suffix(')').and_then(|t| t.split_once('(')).ok_or_else(bad)?;
    let args: Vec<f64> = args.split(',').map(|a| a.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    match (kind.trim(), args.as_slice()) {
        ("normal", [mean, std_dev]) => Ok(WeightDistribution::Normal { mean: *mean, std_dev: *std_dev }),
        ("uniform", [low, high]) => Ok(WeightDistribution::Uniform { low: *low, high: *high }),
        ("constant", [value]) => Ok(WeightDistribution::Constant { value: *value }),
        _ => Err(bad()),
    }
}

fn format_behaviors(spec: &BehaviorSpec) -> String {
    let parts: Vec<String> = spec
        .behaviors()
        .iter()
        .map(|b| {
            let d = match b.distribution {
                WeightDistribution::Normal { mean, std_dev } => format!("normal({mean},{std_dev})"),
                WeightDistribution::Uniform { low, high } => format!("uniform({low},{high})"),
                WeightDistribution::Constant { value } => format!("constant({value})"),
            };
            format!("{}:{d}", behavior_name(b.id))
        })
        .collect();
    parts.join(", ")
}
