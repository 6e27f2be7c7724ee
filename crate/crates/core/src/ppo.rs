//! Clipped-surrogate PPO with an analytic gradient.
//!
//! ```text
//! L = −mean(min(ρÂ, clip(ρ, 1−ε, 1+ε)Â)) + c_v·mean((V − R)²) − c_e·mean(H[π])
//! ```
//!
//! Advantages are normalized once per batch. Every gradient step clips the
//! global gradient norm and applies one Adam update.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{self, log_softmax};
use crate::optim::{clip_grad_norm, Adam};
use crate::policy::{BatchInput, PolicyError, PolicyParameters, Sequence};
use crate::rollout::TrajectoryBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.99,
            clip_eps: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.01,
            epochs: 4,
            minibatches: 4,
            max_grad_norm: 0.5,
            normalize_advantages: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpoError {
    #[error("non-finite loss at epoch {epoch}, minibatch {minibatch}: {detail}")]
    NonFiniteLoss { epoch: usize, minibatch: usize, detail: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("empty batch")]
    EmptyBatch,
}

/// Averages over the gradient steps of one update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
}

/// Loss terms of one minibatch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Rows gathered for one gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub obs: Vec<f64>,
    pub rows: usize,
    pub actions: Vec<u8>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episode_start: Vec<bool>,
    pub sequences: Vec<Sequence>,
}

impl Minibatch {
    pub fn input(&self) -> BatchInput<'_> {
        BatchInput { obs: &self.obs, rows: self.rows, episode_start: &self.episode_start, sequences: &self.sequences }
    }
}

/// Loss value only (no backward pass).
pub fn ppo_loss(params: &PolicyParameters, mb: &Minibatch, cfg: &PpoConfig) -> Result<LossParts, PolicyError> {
    let cache = params.forward_batch(&mb.input())?;
    Ok(loss_terms(params, mb, cfg, &cache.logits, &cache.values, None))
}

/// Loss and `∂L/∂θ` for one minibatch.
pub fn ppo_loss_and_grad(
    params: &PolicyParameters,
    mb: &Minibatch,
    cfg: &PpoConfig,
) -> Result<(LossParts, Vec<f64>), PolicyError> {
    let input = mb.input();
    let cache = params.forward_batch(&input)?;
    let a = params.config.action_count;
    let mut d_logits = vec![0.0; mb.rows * a];
    let mut d_values = vec![0.0; mb.rows];
    let parts = loss_terms(params, mb, cfg, &cache.logits, &cache.values, Some((&mut d_logits, &mut d_values)));
    let mut grads = vec![0.0; params.num_params()];
    params.backward_batch(&input, &cache, &d_logits, &d_values, &mut grads);
    Ok((parts, grads))
}

fn loss_terms(
    params: &PolicyParameters,
    mb: &Minibatch,
    cfg: &PpoConfig,
    logits: &[f64],
    values: &[f64],
    mut grads: Option<(&mut [f64], &mut [f64])>,
) -> LossParts {
    let a = params.config.action_count;
    let n = mb.rows as f64;
    let (lo, hi) = (1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let mut parts = LossParts::default();
    let mut logp = vec![0.0; a];
    for r in 0..mb.rows {
        let z = &logits[r * a..(r + 1) * a];
        log_softmax(z, &mut logp);
        let act = mb.actions[r] as usize;
        let log_ratio = logp[act] - mb.old_log_probs[r];
        let ratio = libm::exp(log_ratio);
        let adv = mb.advantages[r];
        let surr1 = ratio * adv;
        let surr2 = ratio.clamp(lo, hi) * adv;
        parts.policy_loss -= surr1.min(surr2);
        let entropy: f64 = -logp.iter().map(|l| libm::exp(*l) * l).sum::<f64>();
        parts.entropy += entropy;
        let err = values[r] - mb.returns[r];
        parts.value_loss += err * err;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            parts.clip_fraction += 1.0;
        }
        parts.approx_kl += (ratio - 1.0) - log_ratio;

        if let Some((dl, dv)) = grads.as_mut() {
            // d(−min(surr1, surr2))/d log π(a): the clipped branch is constant in θ
            let g_logp = if surr1 <= surr2 { -adv * ratio / n } else { 0.0 };
            let row = &mut dl[r * a..(r + 1) * a];
            for j in 0..a {
                let p = libm::exp(logp[j]);
                let onehot = if j == act { 1.0 } else { 0.0 };
                row[j] = g_logp * (onehot - p) + cfg.ent_coef * p * (logp[j] + entropy) / n;
            }
            dv[r] = 2.0 * cfg.vf_coef * err / n;
        }
    }
    parts.policy_loss /= n;
    parts.entropy /= n;
    parts.value_loss /= n;
    parts.clip_fraction /= n;
    parts.approx_kl /= n;
    parts.total = parts.policy_loss + cfg.vf_coef * parts.value_loss - cfg.ent_coef * parts.entropy;
    parts
}

/// Batch-level standardization to mean 0, std 1.
pub fn normalize(v: &mut [f64]) {
    let m = math::mean(v);
    let s = math::std_dev(v);
    for x in v.iter_mut() {
        *x = (*x - m) / (s + 1e-8);
    }
}

/// A trajectory batch with advantages and returns attached.
#[derive(Debug, Clone)]
pub struct PreparedBatch<'a> {
    pub batch: &'a TrajectoryBatch,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl<'a> PreparedBatch<'a> {
    pub fn new(batch: &'a TrajectoryBatch, cfg: &PpoConfig) -> Self {
        let (mut advantages, returns) = batch.advantages(cfg.gamma, cfg.gae_lambda);
        if cfg.normalize_advantages {
            normalize(&mut advantages);
        }
        Self { batch, advantages, returns }
    }

    fn gather_rows(&self, rows: &[usize]) -> Minibatch {
        let b = self.batch;
        let d = b.obs_dim;
        let mut mb = Minibatch {
            obs: Vec::with_capacity(rows.len() * d),
            rows: rows.len(),
            actions: Vec::with_capacity(rows.len()),
            old_log_probs: Vec::with_capacity(rows.len()),
            advantages: Vec::with_capacity(rows.len()),
            returns: Vec::with_capacity(rows.len()),
            episode_start: Vec::with_capacity(rows.len()),
            sequences: Vec::new(),
        };
        for &r in rows {
            mb.obs.extend_from_slice(&b.obs[r * d..(r + 1) * d]);
            mb.actions.push(b.actions[r]);
            mb.old_log_probs.push(b.log_probs[r]);
            mb.advantages.push(self.advantages[r]);
            mb.returns.push(self.returns[r]);
            mb.episode_start.push(b.episode_start[r]);
        }
        mb
    }

    /// Whole segments (recurrent training); `segments` index `stream * per_stream + k`.
    fn gather_segments(&self, segments: &[usize]) -> Minibatch {
        let b = self.batch;
        let per = b.segments_per_stream();
        let mut rows = Vec::new();
        let mut sequences = Vec::with_capacity(segments.len());
        for &s in segments {
            let (stream, k) = (s / per, s % per);
            let t0 = k * b.seq_len;
            let len = b.seq_len.min(b.steps - t0);
            sequences.push(Sequence { start: rows.len(), len, initial: b.segment_states[s].clone() });
            rows.extend((t0..t0 + len).map(|t| stream * b.steps + t));
        }
        let mut mb = self.gather_rows(&rows);
        mb.sequences = sequences;
        mb
    }

    /// Shuffled minibatches for one epoch.
    pub fn minibatches<R: Rng + ?Sized>(&self, recurrent: bool, count: usize, rng: &mut R) -> Vec<Minibatch> {
        let units = if recurrent { self.batch.streams * self.batch.segments_per_stream() } else { self.batch.rows() };
        let mut order: Vec<usize> = (0..units).collect();
        order.shuffle(rng);
        let count = count.clamp(1, units.max(1));
        let size = units.div_ceil(count);
        order
            .chunks(size.max(1))
            .map(|chunk| if recurrent { self.gather_segments(chunk) } else { self.gather_rows(chunk) })
            .collect()
    }
}

/// `epochs × minibatches` clipped-surrogate steps. Returns the updated
/// parameters; `params` is left untouched.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &PolicyParameters,
    optimizer: &mut Adam,
    batch: &TrajectoryBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<(PolicyParameters, PpoStats), PpoError> {
    if batch.rows() == 0 {
        return Err(PpoError::EmptyBatch);
    }
    let prepared = PreparedBatch::new(batch, cfg);
    let mut next = params.clone();
    let mut stats = PpoStats::default();
    let mut steps = 0usize;
    for epoch in 0..cfg.epochs {
        for (m, mb) in prepared.minibatches(params.config.recurrent, cfg.minibatches, rng).iter().enumerate() {
            let (parts, mut grads) = ppo_loss_and_grad(&next, mb, cfg)?;
            if !parts.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(PpoError::NonFiniteLoss {
                    epoch,
                    minibatch: m,
                    detail: format!(
                        "policy {} value {} entropy {}",
                        parts.policy_loss, parts.value_loss, parts.entropy
                    ),
                });
            }
            stats.grad_norm += clip_grad_norm(&mut grads, cfg.max_grad_norm);
            optimizer.update(next.values_mut(), &grads);
            stats.policy_loss += parts.policy_loss;
            stats.value_loss += parts.value_loss;
            stats.entropy += parts.entropy;
            stats.clip_fraction += parts.clip_fraction;
            stats.approx_kl += parts.approx_kl;
            steps += 1;
        }
    }
    let n = steps.max(1) as f64;
    stats.policy_loss /= n;
    stats.value_loss /= n;
    stats.entropy /= n;
    stats.clip_fraction /= n;
    stats.approx_kl /= n;
    stats.grad_norm /= n;
    Ok((next, stats))
}
