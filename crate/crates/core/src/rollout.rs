//! Rollout collection: the per-episode weight sampling, augmented
//! observations and shaped rewards of behavior-shaping self-play.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{reset, Action, AgentEvents, WorldState};
use crate::features::{observation_len, observe_into};
use crate::gae::compute_gae;
use crate::layout::Layout;
use crate::policy::{ActionDistribution, PolicyParameters, RecurrentState};
use crate::rng::{self, Rng};
use crate::shaping::{BehaviorSpec, BehaviorWeights};

const WEIGHT_STREAM: u64 = 0x5745;
const ACTION_STREAM: u64 = 0x4143;

/// Self-play baseline or behavior-shaped training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainMode {
    /// ω pinned to zero, no behavioral rewards.
    #[serde(rename = "SP")]
    SelfPlay,
    /// ω drawn per agent per episode, shaped rewards.
    #[serde(rename = "BS")]
    BehaviorShaping,
}

/// Where an action is being chosen; scripted test policies key on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActContext {
    pub env: usize,
    pub agent: usize,
    pub t: u32,
}

/// Anything that can drive an agent during collection.
pub trait RolloutPolicy {
    fn evaluate(&self, ctx: ActContext, obs: &[f64], state: &RecurrentState) -> (ActionDistribution, f64, RecurrentState);
    fn initial_state(&self) -> RecurrentState;
}

impl RolloutPolicy for PolicyParameters {
    fn evaluate(&self, _ctx: ActContext, obs: &[f64], state: &RecurrentState) -> (ActionDistribution, f64, RecurrentState) {
        self.forward(obs, state).expect("observation width fixed by layout and behavior spec")
    }

    fn initial_state(&self) -> RecurrentState {
        self.zero_state()
    }
}

/// Behavior counts for one finished episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub deliveries: u32,
    pub delivered_by: [u32; 2],
    pub onions_in_pot: [u32; 2],
    pub platings: [u32; 2],
    pub shaped_return: [f64; 2],
    pub weights: [BehaviorWeights; 2],
}

impl EpisodeSummary {
    fn record(&mut self, events: &[AgentEvents; 2], shaped: [f64; 2]) {
        for i in 0..2 {
            self.delivered_by[i] += events[i].delivered as u32;
            self.onions_in_pot[i] += events[i].onion_in_pot as u32;
            self.platings[i] += events[i].plated as u32;
            self.shaped_return[i] += shaped[i];
        }
        self.deliveries = self.delivered_by[0] + self.delivered_by[1];
    }
}

/// One environment instance with its own random streams.
#[derive(Debug, Clone)]
pub struct RolloutEnv {
    pub index: usize,
    pub state: WorldState,
    pub weights: [BehaviorWeights; 2],
    pub recurrent: [RecurrentState; 2],
    fresh: bool,
    weight_rngs: [Rng; 2],
    action_rng: Rng,
    current: EpisodeSummary,
    pub finished: Vec<EpisodeSummary>,
}

impl RolloutEnv {
    pub fn new(layout: &Arc<Layout>, seed: u64, index: usize) -> Self {
        let i = index as u64;
        Self {
            index,
            state: reset(layout),
            weights: [BehaviorWeights::default(), BehaviorWeights::default()],
            recurrent: [RecurrentState::zeros(0), RecurrentState::zeros(0)],
            fresh: true,
            weight_rngs: [rng::stream(seed, &[WEIGHT_STREAM, i, 0]), rng::stream(seed, &[WEIGHT_STREAM, i, 1])],
            action_rng: rng::stream(seed, &[ACTION_STREAM, i]),
            current: EpisodeSummary::default(),
            finished: Vec::new(),
        }
    }

    fn begin_episode(&mut self, spec: &BehaviorSpec, mode: TrainMode, policy: &impl RolloutPolicy) {
        if !self.fresh {
            return;
        }
        self.state = reset(&self.state.layout);
        for agent in 0..2 {
            self.weights[agent] = match mode {
                TrainMode::SelfPlay => spec.zero_weights(),
                TrainMode::BehaviorShaping => spec.sample_weights(&mut self.weight_rngs[agent]),
            };
            self.recurrent[agent] = policy.initial_state();
        }
        self.current = EpisodeSummary { weights: self.weights.clone(), ..Default::default() };
    }
}

/// Per-(env, agent) experience. Streams are ordered `env * 2 + agent`,
/// rows within a stream by time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub obs_dim: usize,
    pub num_weights: usize,
    pub steps: usize,
    pub streams: usize,
    pub seq_len: usize,
    /// Augmented observations, `rows × obs_dim`.
    pub obs: Vec<f64>,
    pub weights: Vec<f64>,
    pub actions: Vec<u8>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Shaped rewards `r'`.
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub episode_start: Vec<bool>,
    /// Recurrent state at the start of every `seq_len` segment, per stream.
    pub segment_states: Vec<RecurrentState>,
    pub bootstrap_values: Vec<f64>,
}

impl TrajectoryBatch {
    fn with_capacity(obs_dim: usize, num_weights: usize, steps: usize, streams: usize, seq_len: usize) -> Self {
        let rows = steps * streams;
        Self {
            obs_dim,
            num_weights,
            steps,
            streams,
            seq_len,
            obs: vec![0.0; rows * obs_dim],
            weights: vec![0.0; rows * num_weights],
            actions: vec![0; rows],
            log_probs: vec![0.0; rows],
            values: vec![0.0; rows],
            rewards: vec![0.0; rows],
            dones: vec![false; rows],
            episode_start: vec![false; rows],
            segment_states: Vec::with_capacity(streams * steps.div_ceil(seq_len.max(1))),
            bootstrap_values: vec![0.0; streams],
        }
    }

    pub fn rows(&self) -> usize {
        self.steps * self.streams
    }

    pub fn segments_per_stream(&self) -> usize {
        self.steps.div_ceil(self.seq_len.max(1))
    }

    /// Joins worker batches in order.
    pub fn concat(parts: Vec<TrajectoryBatch>) -> TrajectoryBatch {
        let mut iter = parts.into_iter();
        let mut out = iter.next().expect("at least one batch");
        for b in iter {
            assert_eq!((b.obs_dim, b.steps, b.seq_len), (out.obs_dim, out.steps, out.seq_len), "incompatible batches");
            out.streams += b.streams;
            out.obs.extend(b.obs);
            out.weights.extend(b.weights);
            out.actions.extend(b.actions);
            out.log_probs.extend(b.log_probs);
            out.values.extend(b.values);
            out.rewards.extend(b.rewards);
            out.dones.extend(b.dones);
            out.episode_start.extend(b.episode_start);
            out.segment_states.extend(b.segment_states);
            out.bootstrap_values.extend(b.bootstrap_values);
        }
        out
    }

    /// GAE per stream, flattened in row order.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let mut adv = Vec::with_capacity(self.rows());
        let mut ret = Vec::with_capacity(self.rows());
        for s in 0..self.streams {
            let r = s * self.steps..(s + 1) * self.steps;
            let (a, g) = compute_gae(
                &self.rewards[r.clone()],
                &self.values[r.clone()],
                &self.dones[r],
                self.bootstrap_values[s],
                gamma,
                lambda,
            );
            adv.extend(a);
            ret.extend(g);
        }
        (adv, ret)
    }
}

/// Runs every env for `rollout_length` joint steps with `policy` acting for
/// both seats, resetting and resampling ω at each episode boundary.
pub fn collect_rollouts(
    policy: &impl RolloutPolicy,
    envs: &mut [RolloutEnv],
    spec: &BehaviorSpec,
    mode: TrainMode,
    rollout_length: usize,
    seq_len: usize,
) -> TrajectoryBatch {
    let Some(first) = envs.first() else {
        return TrajectoryBatch::with_capacity(0, spec.len(), rollout_length, 0, seq_len);
    };
    let obs_dim = observation_len(&first.state.layout) + spec.len();
    let k = spec.len();
    let seq_len = seq_len.max(1);
    let mut batch = TrajectoryBatch::with_capacity(obs_dim, k, rollout_length, envs.len() * 2, seq_len);
    let mut obs_buf = Vec::with_capacity(obs_dim);
    let mut segment_states: Vec<Vec<RecurrentState>> = vec![Vec::new(); envs.len() * 2];

    for (e, env) in envs.iter_mut().enumerate() {
        for t in 0..rollout_length {
            env.begin_episode(spec, mode, policy);
            let episode_start = env.fresh;
            env.fresh = false;
            let mut joint = [Action::Stay; 2];
            for (agent, slot) in joint.iter_mut().enumerate() {
                let stream = e * 2 + agent;
                let row = stream * rollout_length + t;
                if t % seq_len == 0 {
                    segment_states[stream].push(env.recurrent[agent].clone());
                }
                obs_buf.clear();
                observe_into(&env.state, agent, &mut obs_buf);
                obs_buf.extend_from_slice(env.weights[agent].as_slice());
                let ctx = ActContext { env: env.index, agent, t: env.state.t };
                let (dist, value, next) = policy.evaluate(ctx, &obs_buf, &env.recurrent[agent]);
                let a = dist.sample_index(&mut env.action_rng);
                *slot = Action::from_index(a).unwrap_or(Action::Stay);
                env.recurrent[agent] = next;

                batch.obs[row * obs_dim..(row + 1) * obs_dim].copy_from_slice(&obs_buf);
                batch.weights[row * k..(row + 1) * k].copy_from_slice(env.weights[agent].as_slice());
                batch.actions[row] = a as u8;
                batch.log_probs[row] = dist.log_probs[a];
                batch.values[row] = value;
                batch.episode_start[row] = episode_start;
            }
            let tr = env.state.advance(joint).expect("env reset before reaching its horizon");
            let shaped = spec.shaped_reward(tr.base_reward, &tr.events, [&env.weights[0], &env.weights[1]]);
            env.current.record(&tr.events, shaped);
            for (agent, &r) in shaped.iter().enumerate() {
                let row = (e * 2 + agent) * rollout_length + t;
                batch.rewards[row] = r;
                batch.dones[row] = tr.done;
            }
            if tr.done {
                env.finished.push(core::mem::take(&mut env.current));
                env.fresh = true;
            }
        }
        for agent in 0..2 {
            let stream = e * 2 + agent;
            batch.bootstrap_values[stream] = if env.fresh {
                0.0
            } else {
                obs_buf.clear();
                observe_into(&env.state, agent, &mut obs_buf);
                obs_buf.extend_from_slice(env.weights[agent].as_slice());
                let ctx = ActContext { env: env.index, agent, t: env.state.t };
                policy.evaluate(ctx, &obs_buf, &env.recurrent[agent]).1
            };
        }
    }
    batch.segment_states = segment_states.into_iter().flatten().collect();
    batch
}
