//! Conditional actor-critic `π(a | o, ω)` with a value head.
//!
//! ```text
//! input ──► core ──► [affine ► ReLU] × mlp_layers ──┬─► actor affine ► softmax
//!                                                    └─► critic affine
//! ```
//!
//! The core is either a dense encoder (`affine ► ReLU`) or an LSTM cell.
//! Matrices are stored `[fan_in, fan_out]` row-major in one flat buffer so
//! the optimizer can treat the whole policy as a single vector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Action;
use crate::math::{self, affine, affine_input_grad, affine_param_grad, dot, sigmoid};
use crate::rng;

const HIDDEN_GAIN: f64 = core::f64::consts::SQRT_2;
const ACTOR_GAIN: f64 = 0.01;
const CRITIC_GAIN: f64 = 1.0;
const LSTM_GAIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub mlp_layers: usize,
    pub recurrent: bool,
    pub action_count: usize,
}

impl PolicyConfig {
    /// Feedforward, 64 wide, two body layers.
    pub fn desk(input_dim: usize) -> Self {
        Self { input_dim, hidden_dim: 64, mlp_layers: 2, recurrent: false, action_count: Action::COUNT }
    }

    /// LSTM-256 core followed by three 256-wide body layers.
    pub fn full_scale(input_dim: usize) -> Self {
        Self { input_dim, hidden_dim: 256, mlp_layers: 3, recurrent: true, action_count: Action::COUNT }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.action_count == 0 {
            return Err(PolicyError::BadConfig(format!("dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("invalid policy config: {0}")]
    BadConfig(String),
    #[error("input has {found} features, policy expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("recurrent state has size {found}, expected {expected}")]
    StateDim { expected: usize, found: usize },
    #[error("parameter array `{name}`: {reason}")]
    BadArray { name: String, reason: String },
}

/// Name, shape and position of one array inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    at: usize,
    len: usize,
}

impl Slot {
    fn of(self, v: &[f64]) -> &[f64] {
        &v[self.at..self.at + self.len]
    }

    fn of_mut(self, v: &mut [f64]) -> &mut [f64] {
        &mut v[self.at..self.at + self.len]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: Slot,
    b: Slot,
    fan_in: usize,
    fan_out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Core {
    Encoder(Dense),
    Lstm { wx: Slot, wh: Slot, b: Slot },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Index {
    core: Core,
    body: Vec<Dense>,
    actor: Dense,
    critic: Dense,
}

fn build_index(config: &PolicyConfig) -> (Index, Vec<ParamSpec>, usize) {
    let mut specs = Vec::new();
    let mut at = 0;
    let mut push = |name: String, shape: Vec<usize>| {
        let len = shape.iter().product();
        specs.push(ParamSpec { name, shape, offset: at });
        let slot = Slot { at, len };
        at += len;
        slot
    };
    let h = config.hidden_dim;
    let dense = |name: &str, fan_in: usize, fan_out: usize, push: &mut dyn FnMut(String, Vec<usize>) -> Slot| Dense {
        w: push(format!("{name}.weight"), vec![fan_in, fan_out]),
        b: push(format!("{name}.bias"), vec![fan_out]),
        fan_in,
        fan_out,
    };
    let core = if config.recurrent {
        Core::Lstm {
            wx: push("lstm.input_weight".into(), vec![config.input_dim, 4 * h]),
            wh: push("lstm.hidden_weight".into(), vec![h, 4 * h]),
            b: push("lstm.bias".into(), vec![4 * h]),
        }
    } else {
        Core::Encoder(dense("encoder", config.input_dim, h, &mut push))
    };
    let body = (0..config.mlp_layers).map(|l| dense(&format!("mlp.{l}"), h, h, &mut push)).collect();
    let actor = dense("actor", h, config.action_count, &mut push);
    let critic = dense("critic", h, 1, &mut push);
    (Index { core, body, actor, critic }, specs, at)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub seed: u64,
    pub train_steps: u64,
}

/// All weights of one policy in a flat buffer plus their names and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParameters {
    pub config: PolicyConfig,
    pub meta: ParamMeta,
    specs: Vec<ParamSpec>,
    values: Vec<f64>,
    index: Index,
}

/// LSTM hidden and cell vectors; zeros for feedforward policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self { hidden: vec![0.0; hidden_dim], cell: vec![0.0; hidden_dim] }
    }

    pub fn is_zero(&self) -> bool {
        self.hidden.iter().chain(&self.cell).all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut log_probs = vec![0.0; logits.len()];
        math::log_softmax(logits, &mut log_probs);
        let probs = log_probs.iter().map(|l| libm::exp(*l)).collect();
        Self { probs, log_probs }
    }

    /// Builds a distribution from explicit probabilities (normalized here).
    pub fn from_probs(probs: &[f64]) -> Self {
        let total: f64 = probs.iter().sum();
        let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
        let log_probs = probs.iter().map(|p| libm::log(*p)).collect();
        Self { probs, log_probs }
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().zip(&self.log_probs).filter(|(p, _)| **p > 0.0).map(|(p, l)| p * l).sum::<f64>()
    }

    /// Inverse-CDF draw.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > 0.0 {
                last_positive = i;
            }
            acc += p;
            if u < acc {
                return i;
            }
        }
        last_positive
    }

    /// Highest-probability index, lowest index on ties.
    pub fn argmax_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> Action {
    Action::from_index(dist.sample_index(rng)).unwrap_or(Action::Stay)
}

pub fn argmax_action(dist: &ActionDistribution) -> Action {
    Action::from_index(dist.argmax_index()).unwrap_or(Action::Stay)
}

/// Orthogonal matrix `[rows, cols]` scaled by `gain` (modified Gram–Schmidt on
/// the shorter side of a Gaussian draw).
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (n, d) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    // n vectors of length d
    let mut vecs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect();
    for i in 0..n {
        for j in 0..i {
            let (done, rest) = vecs.split_at_mut(i);
            let proj = dot(&rest[0], &done[j]);
            math::axpy(-proj, &done[j], &mut rest[0]);
        }
        let norm = libm::sqrt(dot(&vecs[i], &vecs[i]));
        if norm > 1e-12 {
            vecs[i].iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if rows >= cols { vecs[c][r] } else { vecs[r][c] };
        }
    }
    out
}

/// One step of the LSTM cell; returns `(i, f, g, o)` activations, new cell and new hidden.
struct LstmStep {
    gates: Vec<f64>,
    cell: Vec<f64>,
    tanh_cell: Vec<f64>,
    hidden: Vec<f64>,
}

impl PolicyParameters {
    /// Seeded initialization: orthogonal hidden layers, 0.01-gain actor head, zero biases.
    pub fn init(config: PolicyConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let (index, specs, total) = build_index(&config);
        let mut values = vec![0.0; total];
        let mut rng = rng::stream(seed, &[0x1417]);
        let fill = |d: &Dense, gain: f64, values: &mut [f64], rng: &mut rng::Rng| {
            d.w.of_mut(values).copy_from_slice(&orthogonal(d.fan_in, d.fan_out, gain, rng));
        };
        match index.core {
            Core::Encoder(d) => fill(&d, HIDDEN_GAIN, &mut values, &mut rng),
            Core::Lstm { wx, wh, .. } => {
                let h4 = 4 * config.hidden_dim;
                wx.of_mut(&mut values).copy_from_slice(&orthogonal(config.input_dim, h4, LSTM_GAIN, &mut rng));
                wh.of_mut(&mut values).copy_from_slice(&orthogonal(config.hidden_dim, h4, LSTM_GAIN, &mut rng));
            }
        }
        for d in &index.body {
            fill(d, HIDDEN_GAIN, &mut values, &mut rng);
        }
        fill(&index.actor, ACTOR_GAIN, &mut values, &mut rng);
        fill(&index.critic, CRITIC_GAIN, &mut values, &mut rng);
        Ok(Self { config, meta: ParamMeta { seed, train_steps: 0 }, specs, values, index })
    }

    /// Rebuilds parameters from named arrays (any order); every array the
    /// config requires must be present with the right shape.
    pub fn from_named<'a>(
        config: PolicyConfig,
        meta: ParamMeta,
        arrays: impl IntoIterator<Item = (&'a str, &'a [usize], &'a [f64])>,
    ) -> Result<Self, PolicyError> {
        config.validate()?;
        let (index, specs, total) = build_index(&config);
        let mut values = vec![0.0; total];
        let mut seen = vec![false; specs.len()];
        for (name, shape, data) in arrays {
            let Some(k) = specs.iter().position(|s| s.name == name) else {
                return Err(PolicyError::BadArray { name: name.into(), reason: "not part of this architecture".into() });
            };
            let spec = &specs[k];
            if spec.shape != shape || data.len() != spec.len() {
                return Err(PolicyError::BadArray {
                    name: name.into(),
                    reason: format!("shape {:?} does not match expected {:?}", shape, spec.shape),
                });
            }
            values[spec.offset..spec.offset + spec.len()].copy_from_slice(data);
            seen[k] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(PolicyError::BadArray { name: specs[k].name.clone(), reason: "missing".into() });
        }
        Ok(Self { config, meta, specs, values, index })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn array(&self, name: &str) -> Option<&[f64]> {
        self.specs.iter().find(|s| s.name == name).map(|s| &self.values[s.offset..s.offset + s.len()])
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn zero_state(&self) -> RecurrentState {
        RecurrentState::zeros(self.config.hidden_dim)
    }

    fn lstm_step(&self, x: &[f64], prev: &RecurrentState) -> LstmStep {
        let Core::Lstm { wx, wh, b } = self.index.core else { unreachable!("lstm_step on feedforward policy") };
        let h = self.config.hidden_dim;
        let v = &self.values;
        let mut gates = b.of(v).to_vec();
        affine(x, 1, self.config.input_dim, wx.of(v), b.of(v), &mut gates);
        for (p, &hv) in prev.hidden.iter().enumerate() {
            if hv != 0.0 {
                math::axpy(hv, &wh.of(v)[p * 4 * h..(p + 1) * 4 * h], &mut gates);
            }
        }
        for (k, g) in gates.iter_mut().enumerate() {
            *g = if k / h == 2 { libm::tanh(*g) } else { sigmoid(*g) };
        }
        let mut cell = vec![0.0; h];
        let mut tanh_cell = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            cell[j] = f * prev.cell[j] + i * g;
            tanh_cell[j] = libm::tanh(cell[j]);
            hidden[j] = o * tanh_cell[j];
        }
        LstmStep { gates, cell, tanh_cell, hidden }
    }

    fn body_and_heads(&self, core_out: Vec<f64>, rows: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let h = self.config.hidden_dim;
        let v = &self.values;
        let mut acts = Vec::with_capacity(self.index.body.len() + 1);
        acts.push(core_out);
        for d in &self.index.body {
            let mut out = vec![0.0; rows * h];
            affine(acts.last().unwrap(), rows, h, d.w.of(v), d.b.of(v), &mut out);
            math::relu_inplace(&mut out);
            acts.push(out);
        }
        let last = acts.last().unwrap();
        let a = self.config.action_count;
        let mut logits = vec![0.0; rows * a];
        affine(last, rows, h, self.index.actor.w.of(v), self.index.actor.b.of(v), &mut logits);
        let mut values = vec![0.0; rows];
        affine(last, rows, h, self.index.critic.w.of(v), self.index.critic.b.of(v), &mut values);
        (acts, logits, values)
    }

    fn check_input(&self, obs: &[f64]) -> Result<(), PolicyError> {
        if obs.len() != self.config.input_dim {
            return Err(PolicyError::InputDim { expected: self.config.input_dim, found: obs.len() });
        }
        Ok(())
    }

    /// Single-observation inference.
    pub fn forward(
        &self,
        obs: &[f64],
        state: &RecurrentState,
    ) -> Result<(ActionDistribution, f64, RecurrentState), PolicyError> {
        self.check_input(obs)?;
        let h = self.config.hidden_dim;
        if state.hidden.len() != h || state.cell.len() != h {
            return Err(PolicyError::StateDim { expected: h, found: state.hidden.len() });
        }
        let (core_out, next) = match self.index.core {
            Core::Encoder(d) => {
                let mut out = vec![0.0; h];
                affine(obs, 1, d.fan_in, d.w.of(&self.values), d.b.of(&self.values), &mut out);
                math::relu_inplace(&mut out);
                (out, RecurrentState::zeros(h))
            }
            Core::Lstm { .. } => {
                let s = self.lstm_step(obs, state);
                (s.hidden.clone(), RecurrentState { hidden: s.hidden, cell: s.cell })
            }
        };
        let (_, logits, value) = self.body_and_heads(core_out, 1);
        Ok((ActionDistribution::from_logits(&logits), value[0], next))
    }

    /// Batched forward keeping everything the backward pass needs.
    pub fn forward_batch(&self, input: &BatchInput<'_>) -> Result<ForwardCache, PolicyError> {
        let rows = input.rows;
        let d_in = self.config.input_dim;
        if input.obs.len() != rows * d_in {
            return Err(PolicyError::InputDim { expected: rows * d_in, found: input.obs.len() });
        }
        let h = self.config.hidden_dim;
        let (core_out, lstm) = match self.index.core {
            Core::Encoder(d) => {
                let mut out = vec![0.0; rows * h];
                affine(input.obs, rows, d_in, d.w.of(&self.values), d.b.of(&self.values), &mut out);
                math::relu_inplace(&mut out);
                (out, None)
            }
            Core::Lstm { .. } => {
                let mut cache = LstmCache::new(rows, h);
                let mut out = vec![0.0; rows * h];
                for seq in input.sequences {
                    let mut state = seq.initial.clone();
                    for r in seq.start..seq.start + seq.len {
                        if input.episode_start[r] {
                            state = RecurrentState::zeros(h);
                        }
                        let s = self.lstm_step(&input.obs[r * d_in..(r + 1) * d_in], &state);
                        cache.h_prev[r * h..(r + 1) * h].copy_from_slice(&state.hidden);
                        cache.c_prev[r * h..(r + 1) * h].copy_from_slice(&state.cell);
                        cache.gates[r * 4 * h..(r + 1) * 4 * h].copy_from_slice(&s.gates);
                        cache.tanh_c[r * h..(r + 1) * h].copy_from_slice(&s.tanh_cell);
                        out[r * h..(r + 1) * h].copy_from_slice(&s.hidden);
                        state = RecurrentState { hidden: s.hidden, cell: s.cell };
                    }
                }
                (out, Some(cache))
            }
        };
        let (acts, logits, values) = self.body_and_heads(core_out, rows);
        Ok(ForwardCache { rows, acts, lstm, logits, values })
    }

    /// Accumulates `∂L/∂θ` into `grads` given `∂L/∂logits` and `∂L/∂values`.
    pub fn backward_batch(
        &self,
        input: &BatchInput<'_>,
        cache: &ForwardCache,
        d_logits: &[f64],
        d_values: &[f64],
        grads: &mut [f64],
    ) {
        let rows = cache.rows;
        let h = self.config.hidden_dim;
        let a = self.config.action_count;
        let v = &self.values;
        let last = cache.acts.last().unwrap();

        let (actor, critic) = (self.index.actor, self.index.critic);
        let mut d_hidden = vec![0.0; rows * h];
        {
            let (dw, db) = split_pair(grads, actor.w, actor.b);
            affine_param_grad(last, h, d_logits, a, dw, db);
        }
        {
            let (dw, db) = split_pair(grads, critic.w, critic.b);
            affine_param_grad(last, h, d_values, 1, dw, db);
        }
        affine_input_grad(d_logits, a, actor.w.of(v), h, &mut d_hidden);
        let wc = critic.w.of(v);
        for (row, dv) in d_hidden.chunks_exact_mut(h).zip(d_values) {
            math::axpy(*dv, wc, row);
        }

        for (l, d) in self.index.body.iter().enumerate().rev() {
            let out = &cache.acts[l + 1];
            for (g, o) in d_hidden.iter_mut().zip(out) {
                if *o <= 0.0 {
                    *g = 0.0;
                }
            }
            let (dw, db) = split_pair(grads, d.w, d.b);
            affine_param_grad(&cache.acts[l], h, &d_hidden, h, dw, db);
            let mut d_prev = vec![0.0; rows * h];
            affine_input_grad(&d_hidden, h, d.w.of(v), h, &mut d_prev);
            d_hidden = d_prev;
        }

        match self.index.core {
            Core::Encoder(d) => {
                for (g, o) in d_hidden.iter_mut().zip(&cache.acts[0]) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
                let (dw, db) = split_pair(grads, d.w, d.b);
                affine_param_grad(input.obs, d.fan_in, &d_hidden, h, dw, db);
            }
            Core::Lstm { wx, wh, b } => {
                let lstm = cache.lstm.as_ref().expect("lstm cache");
                self.lstm_backward(input, lstm, &d_hidden, wx, wh, b, grads);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        input: &BatchInput<'_>,
        cache: &LstmCache,
        d_out: &[f64],
        wx: Slot,
        wh: Slot,
        b: Slot,
        grads: &mut [f64],
    ) {
        let h = self.config.hidden_dim;
        let h4 = 4 * h;
        let d_in = self.config.input_dim;
        let wh_vals = wh.of(&self.values);
        let mut dz = vec![0.0; h4];
        for seq in input.sequences {
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for r in (seq.start..seq.start + seq.len).rev() {
                let g = &cache.gates[r * h4..(r + 1) * h4];
                let tc = &cache.tanh_c[r * h..(r + 1) * h];
                let c_prev = &cache.c_prev[r * h..(r + 1) * h];
                for j in 0..h {
                    let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let dh = d_out[r * h + j] + dh_next[j];
                    let dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
                    dz[j] = dc * gg * i * (1.0 - i);
                    dz[h + j] = dc * c_prev[j] * f * (1.0 - f);
                    dz[2 * h + j] = dc * i * (1.0 - gg * gg);
                    dz[3 * h + j] = dh * tc[j] * o * (1.0 - o);
                    dc_next[j] = dc * f;
                }
                let x = &input.obs[r * d_in..(r + 1) * d_in];
                let h_prev = &cache.h_prev[r * h..(r + 1) * h];
                {
                    let dwx = wx.of_mut(grads);
                    for (p, &xv) in x.iter().enumerate() {
                        if xv != 0.0 {
                            math::axpy(xv, &dz, &mut dwx[p * h4..(p + 1) * h4]);
                        }
                    }
                }
                {
                    let dwh = wh.of_mut(grads);
                    for (p, &hv) in h_prev.iter().enumerate() {
                        if hv != 0.0 {
                            math::axpy(hv, &dz, &mut dwh[p * h4..(p + 1) * h4]);
                        }
                    }
                }
                math::axpy(1.0, &dz, b.of_mut(grads));
                if input.episode_start[r] {
                    dh_next.iter_mut().for_each(|v| *v = 0.0);
                    dc_next.iter_mut().for_each(|v| *v = 0.0);
                } else {
                    for (p, out) in dh_next.iter_mut().enumerate() {
                        *out = dot(&dz, &wh_vals[p * h4..(p + 1) * h4]);
                    }
                }
            }
        }
    }
}

fn split_pair(grads: &mut [f64], w: Slot, b: Slot) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(w.at + w.len, b.at);
    let (left, right) = grads[w.at..b.at + b.len].split_at_mut(w.len);
    (left, right)
}

/// One contiguous run of rows processed through the recurrent core.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub start: usize,
    pub len: usize,
    pub initial: RecurrentState,
}

/// Rows of observations for a batched pass. `sequences` and `episode_start`
/// are only read by recurrent policies.
#[derive(Debug, Clone, Copy)]
pub struct BatchInput<'a> {
    pub obs: &'a [f64],
    pub rows: usize,
    pub episode_start: &'a [bool],
    pub sequences: &'a [Sequence],
}

impl<'a> BatchInput<'a> {
    pub fn feedforward(obs: &'a [f64], rows: usize) -> Self {
        Self { obs, rows, episode_start: &[], sequences: &[] }
    }
}

#[derive(Debug, Clone)]
struct LstmCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCache {
    fn new(rows: usize, h: usize) -> Self {
        Self { h_prev: vec![0.0; rows * h], c_prev: vec![0.0; rows * h], gates: vec![0.0; rows * 4 * h], tanh_c: vec![0.0; rows * h] }
    }
}

/// Activations from [`PolicyParameters::forward_batch`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub rows: usize,
    acts: Vec<Vec<f64>>,
    lstm: Option<LstmCache>,
    pub logits: Vec<f64>,
    pub values: Vec<f64>,
}
