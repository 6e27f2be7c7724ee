//! The PPO self-play training loop with checkpointing and resume.
//!
//! Each iteration fans rollout collection out over `workers` (each owning
//! `envs_per_worker` environments), concatenates the batches in worker
//! order, then runs one sequential PPO update. A run directory holds:
//!
//! * `config.txt`, the resolved training config;
//! * `step_<env steps>/`, one checkpoint each (see [`crate::checkpoint`]);
//! * `learning_curve.csv`, one row per checkpoint;
//! * `BEST`, the name of the best checkpoint directory once marked.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bslab_core::optim::Adam;
use bslab_core::ppo::{ppo_update, PpoError, PpoStats};
use bslab_core::rng;
use bslab_core::rollout::{collect_rollouts, RolloutEnv, TrajectoryBatch};
use bslab_core::{observation_len, Layout, PolicyParameters};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, quantize, Checkpoint, CheckpointError, CheckpointMeta};
use crate::config::TrainConfig;
use crate::eval;
use crate::layouts;

const PPO_STREAM: u64 = 0x9907;
const ENV_STREAM: u64 = 0xE4F5;
const EVAL_SEED_LABEL: u64 = 0xE5C0;

pub const CURVE_FILE: &str = "learning_curve.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const BEST_FILE: &str = "BEST";

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Layout(#[from] layouts::LoadError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("update aborted at iteration {iteration}: {source}")]
    Update { iteration: u64, source: PpoError },
    #[error("policy: {0}")]
    Policy(#[from] bslab_core::policy::PolicyError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("resume checkpoint does not match the config: {0}")]
    ResumeMismatch(String),
    #[error("no checkpoints to choose from")]
    NoCheckpoints,
}

/// One learning-curve row, written at every checkpoint. Losses are means
/// over the iterations since the previous row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub mean_deliveries: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub layout: Arc<Layout>,
    pub params: PolicyParameters,
    pub optimizer: Adam,
    pub env_steps: u64,
    pub iteration: u64,
    pub curve: Vec<CurveRow>,
    workers: Vec<Vec<RolloutEnv>>,
    pending: Vec<PpoStats>,
    last_checkpoint_step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        let layout = layouts::with_horizon(&cfg.layout, cfg.episode_length)?;
        let input_dim = observation_len(&layout) + cfg.behaviors.len();
        let params = PolicyParameters::init(cfg.policy(input_dim), cfg.seed)?;
        let optimizer = Adam::new(params.num_params(), cfg.lr);
        let workers = make_envs(&cfg, &layout, 0);
        Ok(Self { cfg, layout, params, optimizer, env_steps: 0, iteration: 0, curve: Vec::new(), workers, pending: Vec::new(), last_checkpoint_step: 0 })
    }

    /// Continues from a checkpoint written by a run with the same config.
    /// Environments restart at fresh episodes on streams keyed by the
    /// resumed iteration.
    pub fn resume(cfg: TrainConfig, ckpt: Checkpoint, curve: Vec<CurveRow>) -> Result<Self, TrainError> {
        let mut t = Self::new(cfg)?;
        if ckpt.params.config != t.params.config {
            return Err(TrainError::ResumeMismatch(format!("policy {:?} vs {:?}", ckpt.params.config, t.params.config)));
        }
        if ckpt.meta.layout != t.layout.name() || ckpt.meta.mode != t.cfg.mode {
            return Err(TrainError::ResumeMismatch(format!("{} {:?} vs {} {:?}", ckpt.meta.layout, ckpt.meta.mode, t.layout.name(), t.cfg.mode)));
        }
        t.params = ckpt.params;
        t.optimizer = ckpt.optimizer.unwrap_or_else(|| Adam::new(t.params.num_params(), t.cfg.lr));
        t.env_steps = ckpt.meta.env_steps;
        t.iteration = ckpt.meta.iteration;
        t.last_checkpoint_step = t.env_steps;
        t.curve = curve.into_iter().filter(|r| r.step <= t.env_steps).collect();
        t.workers = make_envs(&t.cfg, &t.layout, t.iteration);
        Ok(t)
    }

    /// True once another iteration would exceed the step budget.
    pub fn is_finished(&self) -> bool {
        self.env_steps + self.cfg.steps_per_iteration() > self.cfg.total_env_steps
    }

    /// Collect, update, count steps.
    pub fn iterate(&mut self) -> Result<PpoStats, TrainError> {
        let (cfg, params) = (&self.cfg, &self.params);
        let seq_len = if cfg.recurrent { cfg.seq_len } else { cfg.rollout_length };
        let parts: Vec<TrajectoryBatch> = self
            .workers
            .par_iter_mut()
            .map(|envs| collect_rollouts(params, envs, &cfg.behaviors, cfg.mode, cfg.rollout_length, seq_len))
            .collect();
        let batch = TrajectoryBatch::concat(parts);
        let mut r = rng::stream(cfg.seed, &[PPO_STREAM, self.iteration]);
        let (next, stats) = ppo_update(&self.params, &mut self.optimizer, &batch, &cfg.ppo(), &mut r)
            .map_err(|source| TrainError::Update { iteration: self.iteration, source })?;
        self.params = next;
        self.iteration += 1;
        self.env_steps += cfg.steps_per_iteration();
        self.params.meta.train_steps = self.env_steps;
        self.pending.push(stats);
        Ok(stats)
    }

    /// Episodes finished since the last call, across all envs.
    pub fn drain_episodes(&mut self) -> Vec<bslab_core::rollout::EpisodeSummary> {
        self.workers.iter_mut().flatten().flat_map(|e| std::mem::take(&mut e.finished)).collect()
    }

    pub fn checkpoint_due(&self) -> bool {
        let every = self.cfg.checkpoint_every;
        self.is_finished() || (every > 0 && self.env_steps - self.last_checkpoint_step >= every)
    }

    pub fn eval_score(&self) -> f64 {
        let seed = rng::derive_seed(self.cfg.seed, &[EVAL_SEED_LABEL]);
        eval::eval_score(&self.params, &self.layout, &self.cfg.behaviors, self.cfg.eval_episodes, self.cfg.eval_greedy, seed)
    }

    /// Rounds the live state to checkpoint precision, evaluates, saves
    /// under `run_dir` and appends a curve row.
    pub fn checkpoint(&mut self, run_dir: &Path) -> Result<PathBuf, TrainError> {
        quantize(self.params.values_mut());
        quantize(&mut self.optimizer.m);
        quantize(&mut self.optimizer.v);
        let score = self.eval_score();
        let ckpt = Checkpoint { meta: self.meta(Some(score)), params: self.params.clone(), optimizer: Some(self.optimizer.clone()) };
        let dir = run_dir.join(checkpoint::step_dir_name(self.env_steps));
        ckpt.save(&dir)?;
        let n = self.pending.len().max(1) as f64;
        let avg = |f: fn(&PpoStats) -> f64| self.pending.iter().map(f).sum::<f64>() / n;
        self.curve.push(CurveRow {
            step: self.env_steps,
            mean_deliveries: score,
            policy_loss: avg(|s| s.policy_loss),
            value_loss: avg(|s| s.value_loss),
            entropy: avg(|s| s.entropy),
            clip_fraction: avg(|s| s.clip_fraction),
        });
        self.pending.clear();
        self.last_checkpoint_step = self.env_steps;
        write_curve(&self.curve, &run_dir.join(CURVE_FILE))?;
        Ok(dir)
    }

    pub fn meta(&self, eval_score: Option<f64>) -> CheckpointMeta {
        CheckpointMeta {
            layout: self.layout.name().to_string(),
            mode: self.cfg.mode,
            seed: self.cfg.seed,
            env_steps: self.env_steps,
            iteration: self.iteration,
            eval_score,
            policy: self.params.config,
            behaviors: self.cfg.behaviors.clone(),
            train: Some(self.cfg.clone()),
            adam_step: self.optimizer.step,
            adam_lr: self.optimizer.lr,
        }
    }

    /// Trains to `total_env_steps`, checkpointing along the way, and marks
    /// the best checkpoint of the run.
    pub fn run(&mut self, run_dir: &Path) -> Result<PathBuf, TrainError> {
        fs::create_dir_all(run_dir)?;
        fs::write(run_dir.join(CONFIG_FILE), self.cfg.to_text())?;
        while !self.is_finished() {
            self.iterate()?;
            let episodes = self.drain_episodes();
            if self.checkpoint_due() {
                let dir = self.checkpoint(run_dir)?;
                let row = self.curve.last().expect("row just pushed");
                tracing::info!(
                    step = row.step,
                    eval = row.mean_deliveries,
                    train_episodes = episodes.len(),
                    entropy = row.entropy,
                    "checkpoint {}",
                    dir.display()
                );
            }
        }
        let best = select_best_checkpoint(&[scan_run(run_dir)?])?;
        mark_best(run_dir, &best.path)?;
        Ok(best.path)
    }
}

fn make_envs(cfg: &TrainConfig, layout: &Arc<Layout>, iteration: u64) -> Vec<Vec<RolloutEnv>> {
    let seed = if iteration == 0 { cfg.seed } else { rng::derive_seed(cfg.seed, &[ENV_STREAM, iteration]) };
    (0..cfg.workers)
        .map(|w| (0..cfg.envs_per_worker).map(|e| RolloutEnv::new(layout, seed, w * cfg.envs_per_worker + e)).collect())
        .collect()
}

pub fn write_curve(rows: &[CurveRow], path: &Path) -> Result<(), TrainError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["step", "mean_deliveries", "policy_loss", "value_loss", "entropy", "clip_fraction"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>, TrainError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<CurveRow>, _>>()?)
}

/// A checkpoint's location and score, enough to rank it.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRef {
    pub path: PathBuf,
    pub env_steps: u64,
    pub eval_score: f64,
}

/// Every scored checkpoint in a run directory, in step order.
pub fn scan_run(run_dir: &Path) -> Result<Vec<CheckpointRef>, TrainError> {
    let mut out = Vec::new();
    for dir in checkpoint::list_run(run_dir)? {
        let meta: CheckpointMeta = serde_json::from_slice(&fs::read(dir.join(checkpoint::META))?)
            .map_err(|source| CheckpointError::Meta { path: dir.join(checkpoint::META), source })?;
        if let Some(score) = meta.eval_score {
            out.push(CheckpointRef { path: dir, env_steps: meta.env_steps, eval_score: score });
        }
    }
    Ok(out)
}

/// Highest eval score across all runs; ties go to the later training step.
pub fn select_best_checkpoint(runs: &[Vec<CheckpointRef>]) -> Result<CheckpointRef, TrainError> {
    runs.iter()
        .flatten()
        .fold(None::<&CheckpointRef>, |best, c| match best {
            Some(b) if (c.eval_score, c.env_steps) <= (b.eval_score, b.env_steps) => Some(b),
            _ => Some(c),
        })
        .cloned()
        .ok_or(TrainError::NoCheckpoints)
}

pub fn mark_best(run_dir: &Path, best: &Path) -> Result<(), TrainError> {
    let name = best.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(run_dir.join(BEST_FILE), name + "\n")?;
    Ok(())
}
