//! Monte Carlo and property checks on sampling and shaping.

mod support;

use std::sync::Arc;

use bslab_core::env::AgentEvents;
use bslab_core::policy::{argmax_action, ActionDistribution, BatchInput};
use bslab_core::rollout::{collect_rollouts, ActContext, RolloutEnv, RolloutPolicy, TrainMode};
use bslab_core::shaping::augment_observation;
use bslab_core::{parse_layout, Action, BehaviorSpec, BehaviorWeights, PolicyConfig, PolicyParameters, RecurrentState};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Uniform;

impl RolloutPolicy for Uniform {
    fn evaluate(&self, _: ActContext, _: &[f64], s: &RecurrentState) -> (ActionDistribution, f64, RecurrentState) {
        (ActionDistribution::from_probs(&[1.0 / 6.0; 6]), 0.0, s.clone())
    }
    fn initial_state(&self) -> RecurrentState {
        RecurrentState::zeros(0)
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn the_two_seats_draw_from_independent_streams() {
    // one-step episodes: every step starts a new episode with fresh ω
    let layout = Arc::new(parse_layout("name cramped_room\n##P##\nO  2O\n#1  #\n#D#S#\n").unwrap().with_episode_length(1));
    let spec = BehaviorSpec::overcooked();
    let mut envs = vec![RolloutEnv::new(&layout, 77, 0)];
    let batch = collect_rollouts(&Uniform, &mut envs, &spec, TrainMode::BehaviorShaping, 10_000, 10_000);
    assert_eq!(envs[0].finished.len(), 10_000);
    for k in 0..3 {
        let seat = |s: usize| (0..10_000).map(|t| batch.weights[(s * 10_000 + t) * 3 + k]).collect::<Vec<_>>();
        let r = pearson(&seat(0), &seat(1));
        assert!(r.abs() < 0.03, "behavior {k}: correlation {r}");
    }
    // and within one episode ω is what the summary recorded
    let e = &envs[0].finished[17];
    assert_eq!(e.weights[1].as_slice(), &batch.weights[(10_000 + 17) * 3..(10_000 + 18) * 3]);
}

#[test]
fn uniform_sampling_frequencies() {
    let dist = ActionDistribution::from_probs(&[1.0 / 6.0; 6]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0usize; 6];
    for _ in 0..60_000 {
        counts[dist.sample_index(&mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / 60_000.0 - 1.0 / 6.0).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn sampling_passes_chi_square_for_a_skewed_distribution() {
    let p = [0.05, 0.1, 0.4, 0.15, 0.2, 0.1];
    let dist = ActionDistribution::from_probs(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0usize; 6];
    for _ in 0..10_000 {
        counts[dist.sample_index(&mut rng)] += 1;
    }
    let chi2: f64 = counts.iter().zip(p).map(|(&c, q)| (c as f64 - 10_000.0 * q).powi(2) / (10_000.0 * q)).sum();
    // 0.999 quantile of χ² with 5 degrees of freedom
    assert!(chi2 < 20.515, "χ² = {chi2}");
}

#[test]
fn argmax_ties_and_one_hot() {
    let d = ActionDistribution::from_probs(&[0.1, 0.1, 0.3, 0.1, 0.3, 0.1]);
    assert_eq!(argmax_action(&d), Action::East);
    assert_eq!(d.argmax_index(), 2);
    let one = ActionDistribution::from_probs(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!((0..1000).all(|_| one.sample_index(&mut rng) == 4));
}

#[test]
fn feedforward_outputs_do_not_depend_on_batch_order() {
    let p = PolicyParameters::init(PolicyConfig::desk(38), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows = 64;
    let obs: Vec<f64> = (0..rows * 38).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut rng);
    let shuffled: Vec<f64> = order.iter().flat_map(|&i| obs[i * 38..(i + 1) * 38].iter().copied()).collect();
    let a = p.forward_batch(&BatchInput::feedforward(&obs, rows)).unwrap();
    let b = p.forward_batch(&BatchInput::feedforward(&shuffled, rows)).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(a.values[i], b.values[k]);
        assert_eq!(a.logits[i * 6..i * 6 + 6], b.logits[k * 6..k * 6 + 6]);
    }
}

fn events() -> impl Strategy<Value = AgentEvents> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(delivered, onion_in_pot, plated)| AgentEvents { delivered, onion_in_pot, plated })
}

fn weights() -> impl Strategy<Value = BehaviorWeights> {
    prop::collection::vec(-3.0f64..3.0, 3).prop_map(BehaviorWeights)
}

proptest! {
    #[test]
    fn neutral_weights_return_base_exactly(traj in prop::collection::vec((0u8..3, events(), events()), 0..200)) {
        let spec = BehaviorSpec::overcooked();
        let zero = spec.zero_weights();
        let (mut shaped, mut base) = (0.0, 0.0);
        for (d, e0, e1) in traj {
            let b = d as f64;
            let r = spec.shaped_reward([b, b], &[e0, e1], [&zero, &zero]);
            shaped += r[0] + r[1];
            base += 2.0 * b;
        }
        prop_assert_eq!(shaped, base);
    }

    #[test]
    fn behavior_term_is_linear_in_weights(e in events(), w in weights(), scale in -4.0f64..4.0) {
        let spec = BehaviorSpec::overcooked();
        let scaled = BehaviorWeights(w.0.iter().map(|x| x * scale).collect());
        let one = spec.behavior_reward(&e, &w);
        let many = spec.behavior_reward(&e, &scaled);
        prop_assert!((many - scale * one).abs() < 1e-9);
        let base = 1.0;
        let r = spec.shaped_reward([base, base], &[e, e], [&w, &w]);
        prop_assert!((r[0] - base - one).abs() < 1e-12);
    }

    #[test]
    fn reward_and_observation_ignore_partner_weights(e0 in events(), e1 in events(), w0 in weights(), w1 in weights(), w1b in weights()) {
        let spec = BehaviorSpec::overcooked();
        let a = spec.shaped_reward([0.0, 0.0], &[e0, e1], [&w0, &w1]);
        let b = spec.shaped_reward([0.0, 0.0], &[e0, e1], [&w0, &w1b]);
        prop_assert_eq!(a[0], b[0]);
        let feats = vec![0.5; 35];
        let obs = augment_observation(feats.clone(), &w0);
        prop_assert_eq!(obs.len(), 38);
        prop_assert_eq!(&obs[35..], w0.as_slice());
    }
}

#[test]
fn omega_draws_match_standard_normal_moments() {
    support::dist::omega_moments();
}

#[test]
fn condition_sampler_skips_double_discourage_and_is_uniform() {
    support::dist::condition_sampler();
}
