//! Evaluation: single episodes, self-play scoring, the ω sweep and
//! agent-agent cross-play, with CSV export.

use std::io;
use std::path::Path;
use std::sync::Arc;

use bslab_core::features::observe_into;
use bslab_core::policy::RecurrentState;
use bslab_core::rng::{self, Rng};
use bslab_core::rollout::{EpisodeSummary, TrainMode};
use bslab_core::shaping::{BehaviorSpec, BehaviorWeights};
use bslab_core::{reset, Action, Layout, PolicyParameters};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;

const EVAL_STREAM: u64 = 0xE7A1;
const SWEEP_STREAM: u64 = 0x5EE9;
const CROSS_STREAM: u64 = 0xC055;
const RANDOM_STREAM: u64 = 0x7A4D;

/// Plays one episode with `policies[i]` in seat `i`, each seeing its own weights.
pub fn run_episode(
    layout: &Arc<Layout>,
    policies: [&PolicyParameters; 2],
    weights: &[BehaviorWeights; 2],
    spec: &BehaviorSpec,
    greedy: bool,
    rng: &mut Rng,
) -> EpisodeSummary {
    let mut state = reset(layout);
    let mut rec: [RecurrentState; 2] = [policies[0].zero_state(), policies[1].zero_state()];
    let mut summary = EpisodeSummary { weights: weights.clone(), ..Default::default() };
    let mut obs = Vec::new();
    while !state.is_done() {
        let mut joint = [Action::Stay; 2];
        for agent in 0..2 {
            obs.clear();
            observe_into(&state, agent, &mut obs);
            obs.extend_from_slice(weights[agent].as_slice());
            let (dist, _, next) = policies[agent].forward(&obs, &rec[agent]).expect("policy input matches layout");
            let a = if greedy { dist.argmax_index() } else { dist.sample_index(rng) };
            joint[agent] = Action::from_index(a).unwrap_or(Action::Stay);
            rec[agent] = next;
        }
        let tr = state.advance(joint).expect("loop stops at the horizon");
        let shaped = spec.shaped_reward(tr.base_reward, &tr.events, [&weights[0], &weights[1]]);
        for (i, ev) in tr.events.iter().enumerate() {
            summary.delivered_by[i] += ev.delivered as u32;
            summary.onions_in_pot[i] += ev.onion_in_pot as u32;
            summary.platings[i] += ev.plated as u32;
            summary.shaped_return[i] += shaped[i];
        }
    }
    summary.deliveries = summary.delivered_by[0] + summary.delivered_by[1];
    summary
}

/// Self-play episodes at ω = 0, seeded per episode and run in parallel.
pub fn self_play_eval(
    params: &PolicyParameters,
    layout: &Arc<Layout>,
    spec: &BehaviorSpec,
    episodes: usize,
    greedy: bool,
    seed: u64,
) -> Vec<EpisodeSummary> {
    let zero = [spec.zero_weights(), spec.zero_weights()];
    (0..episodes)
        .into_par_iter()
        .map(|ep| run_episode(layout, [params, params], &zero, spec, greedy, &mut rng::stream(seed, &[EVAL_STREAM, ep as u64])))
        .collect()
}

/// Mean deliveries per episode; the training-time checkpoint score.
pub fn eval_score(params: &PolicyParameters, layout: &Arc<Layout>, spec: &BehaviorSpec, episodes: usize, greedy: bool, seed: u64) -> f64 {
    let eps = self_play_eval(params, layout, spec, episodes, greedy, seed);
    mean(&eps.iter().map(|e| e.deliveries as f64).collect::<Vec<_>>())
}

/// Deliveries per episode when both chefs pick uniformly random actions.
pub fn random_baseline(layout: &Arc<Layout>, episodes: usize, seed: u64) -> Vec<u32> {
    (0..episodes)
        .into_par_iter()
        .map(|ep| {
            let mut r = rng::stream(seed, &[RANDOM_STREAM, ep as u64]);
            let mut state = reset(layout);
            let mut delivered = 0;
            while !state.is_done() {
                let joint = [0, 1].map(|_| Action::from_index(r.random_range(0..Action::COUNT)).unwrap_or(Action::Stay));
                let tr = state.advance(joint).expect("loop stops at the horizon");
                delivered += tr.events.iter().filter(|e| e.delivered).count() as u32;
            }
            delivered
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Normal-approximation 95% interval for a mean.
pub fn ci95(mean: f64, sd: f64, n: usize) -> (f64, f64) {
    let half = 1.96 * sd / (n.max(1) as f64).sqrt();
    (mean - half, mean + half)
}

pub fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// One cell of the ω sweep. Counts are for the manipulated agent (seat 1)
/// except `score`, the team's deliveries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub layout: String,
    pub omega_dishes: f64,
    pub omega_onions: f64,
    pub episodes: usize,
    pub deliveries_mean: f64,
    pub deliveries_sd: f64,
    pub onions_mean: f64,
    pub onions_sd: f64,
    pub platings_mean: f64,
    pub platings_sd: f64,
    pub score_mean: f64,
    pub score_sd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn cell(&self, omega_dishes: f64, omega_onions: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.omega_dishes == omega_dishes && r.omega_onions == omega_onions)
    }
}

/// Seat that receives the swept weights; seat 0 stays at ω = 0.
pub const MANIPULATED_SEAT: usize = 1;

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub grid: Vec<f64>,
    pub episodes: usize,
    pub greedy: bool,
    pub seed: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { grid: vec![-1.0, 0.0, 1.0], episodes: 25, greedy: false, seed: 0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("checkpoint trained on {found} but evaluation layout is {expected}")]
    LayoutMismatch { expected: String, found: String },
    #[error("checkpoint input width {found} does not fit layout {layout} (needs {expected})")]
    InputDim { layout: String, expected: usize, found: usize },
    #[error("the ω sweep needs the three kitchen behaviors, found {0}")]
    SweepSpec(usize),
    #[error("cross-play needs at least one checkpoint")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

fn check_fits(ckpt: &Checkpoint, layout: &Layout) -> Result<(), EvalError> {
    if ckpt.meta.layout != layout.name() {
        return Err(EvalError::LayoutMismatch { expected: layout.name().into(), found: ckpt.meta.layout.clone() });
    }
    let expected = bslab_core::observation_len(layout) + ckpt.meta.behaviors.len();
    if ckpt.input_dim() != expected {
        return Err(EvalError::InputDim { layout: layout.name().into(), expected, found: ckpt.input_dim() });
    }
    Ok(())
}

/// The ω sweep: for every (dishes, onions) grid cell, seat 1 plays with
/// ω = (dishes, onions, dishes) and seat 0 with ω = 0.
pub fn weight_sweep(ckpt: &Checkpoint, layout: &Arc<Layout>, opts: &SweepOptions) -> Result<SweepResult, EvalError> {
    check_fits(ckpt, layout)?;
    let spec = &ckpt.meta.behaviors;
    if spec.len() != 3 {
        return Err(EvalError::SweepSpec(spec.len()));
    }
    if ckpt.meta.mode == TrainMode::SelfPlay {
        tracing::warn!("sweeping a self-play checkpoint: it never saw nonzero ω, the sweep is vacuous");
    }
    let cells: Vec<(f64, f64)> = opts.grid.iter().flat_map(|&d| opts.grid.iter().map(move |&o| (d, o))).collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..opts.episodes).map(move |e| (c, e))).collect();
    let p = &ckpt.params;
    let summaries: Vec<EpisodeSummary> = jobs
        .par_iter()
        .map(|&(c, e)| {
            let (d, o) = cells[c];
            let mut weights = [spec.zero_weights(), spec.zero_weights()];
            weights[MANIPULATED_SEAT] = BehaviorWeights(vec![d, o, d]);
            let mut r = rng::stream(opts.seed, &[SWEEP_STREAM, c as u64, e as u64]);
            run_episode(layout, [p, p], &weights, spec, opts.greedy, &mut r)
        })
        .collect();
    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, &(d, o))| {
            let eps = &summaries[c * opts.episodes..(c + 1) * opts.episodes];
            let col = |f: &dyn Fn(&EpisodeSummary) -> u32| eps.iter().map(|e| f(e) as f64).collect::<Vec<_>>();
            let deliveries = col(&|e| e.delivered_by[MANIPULATED_SEAT]);
            let onions = col(&|e| e.onions_in_pot[MANIPULATED_SEAT]);
            let platings = col(&|e| e.platings[MANIPULATED_SEAT]);
            let score = col(&|e| e.deliveries);
            SweepRow {
                layout: layout.name().to_string(),
                omega_dishes: d,
                omega_onions: o,
                episodes: opts.episodes,
                deliveries_mean: mean(&deliveries),
                deliveries_sd: sample_sd(&deliveries),
                onions_mean: mean(&onions),
                onions_sd: sample_sd(&onions),
                platings_mean: mean(&platings),
                platings_sd: sample_sd(&platings),
                score_mean: mean(&score),
                score_sd: sample_sd(&score),
            }
        })
        .collect();
    Ok(SweepResult { rows })
}

pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<(), EvalError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(SWEEP_COLUMNS)?;
    for row in &result.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "layout",
    "omega_dishes",
    "omega_onions",
    "episodes",
    "deliveries_mean",
    "deliveries_sd",
    "onions_mean",
    "onions_sd",
    "platings_mean",
    "platings_sd",
    "score_mean",
    "score_sd",
];

pub fn read_sweep_csv(path: &Path) -> Result<SweepResult, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<SweepRow>, _>>()?;
    Ok(SweepResult { rows })
}

/// Best-scoring cell of each layout; the first such row wins ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub layout: String,
    pub best_omega_dishes: f64,
    pub best_omega_onions: f64,
    pub best_score_mean: f64,
    pub cells: usize,
}

pub fn summarize_sweep(result: &SweepResult) -> Vec<SweepSummaryRow> {
    let mut out: Vec<SweepSummaryRow> = Vec::new();
    for row in &result.rows {
        match out.iter_mut().find(|s| s.layout == row.layout) {
            Some(s) => {
                s.cells += 1;
                if row.score_mean > s.best_score_mean {
                    s.best_omega_dishes = row.omega_dishes;
                    s.best_omega_onions = row.omega_onions;
                    s.best_score_mean = row.score_mean;
                }
            }
            None => out.push(SweepSummaryRow {
                layout: row.layout.clone(),
                best_omega_dishes: row.omega_dishes,
                best_omega_onions: row.omega_onions,
                best_score_mean: row.score_mean,
                cells: 1,
            }),
        }
    }
    out
}

pub fn write_summary_csv(summary: &[SweepSummaryRow], path: &Path) -> Result<(), EvalError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["layout", "best_omega_dishes", "best_omega_onions", "best_score_mean", "cells"])?;
    for row in summary {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean team score for each (blue seat, green seat) pairing at ω = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossplayMatrix {
    pub layout: String,
    pub labels: Vec<String>,
    pub episodes: usize,
    /// `scores[row][col]`: row policy in seat 0, column policy in seat 1.
    pub scores: Vec<Vec<f64>>,
}

pub fn crossplay(
    ckpts: &[(String, &Checkpoint)],
    layout: &Arc<Layout>,
    episodes: usize,
    greedy: bool,
    seed: u64,
) -> Result<CrossplayMatrix, EvalError> {
    if ckpts.is_empty() {
        return Err(EvalError::Empty);
    }
    for (_, c) in ckpts {
        check_fits(c, layout)?;
    }
    let n = ckpts.len();
    let jobs: Vec<(usize, usize, usize)> =
        (0..n).flat_map(|r| (0..n).flat_map(move |c| (0..episodes).map(move |e| (r, c, e)))).collect();
    let deliveries: Vec<f64> = jobs
        .par_iter()
        .map(|&(r, c, e)| {
            let (a, b) = (ckpts[r].1, ckpts[c].1);
            let weights = [a.meta.behaviors.zero_weights(), b.meta.behaviors.zero_weights()];
            // streams keyed by the pair's labels so permuting the list permutes the matrix
            let key = rng::derive_seed(label_key(&ckpts[r].0), &[label_key(&ckpts[c].0)]);
            let mut rg = rng::stream(seed, &[CROSS_STREAM, key, e as u64]);
            run_episode(layout, [&a.params, &b.params], &weights, &a.meta.behaviors, greedy, &mut rg).deliveries as f64
        })
        .collect();
    let scores = (0..n).map(|r| (0..n).map(|c| mean(&deliveries[(r * n + c) * episodes..(r * n + c + 1) * episodes])).collect()).collect();
    Ok(CrossplayMatrix { layout: layout.name().into(), labels: ckpts.iter().map(|(l, _)| l.clone()).collect(), episodes, scores })
}

fn label_key(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

pub fn write_crossplay_csv(m: &CrossplayMatrix, path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["seat0\\seat1".to_string()];
    header.extend(m.labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in m.labels.iter().zip(&m.scores) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|s| s.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
