//! Numerical oracles shared by the core tests and the acceptance run.

use bslab_core::gae::compute_gae;
use bslab_core::policy::{BatchInput, RecurrentState, Sequence};
use bslab_core::ppo::{ppo_loss, ppo_loss_and_grad, Minibatch, PpoConfig};
use bslab_core::{PolicyConfig, PolicyParameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;


/// `A_t = Σ_l (γλ)^l δ_{t+l}`, the sum cut after the first done.
fn gae_by_sum(r: &[f64], v: &[f64], d: &[bool], boot: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let value_after = |t: usize| if t + 1 < n { v[t + 1] } else { boot };
    let delta = |t: usize| r[t] + if d[t] { 0.0 } else { gamma * value_after(t) } - v[t];
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut coef = 1.0;
            for k in t..n {
                total += coef * delta(k);
                if d[k] {
                    break;
                }
                coef *= gamma * lambda;
            }
            total
        })
        .collect()
}

fn random_stream(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, Vec<bool>, f64) {
    let n = rng.random_range(1..200);
    let r = (0..n).map(|_| if rng.random_bool(0.2) { rng.random_range(-3.0..3.0) } else { 0.0 }).collect();
    let v = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let d = (0..n).map(|_| rng.random_bool(0.03)).collect();
    (r, v, d, rng.random_range(-2.0..2.0))
}

pub fn gae_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (r, v, d, boot) = random_stream(&mut rng);
        let gamma = rng.random_range(0.8..1.0);
        let lambda = rng.random_range(0.5..1.0);
        let (adv, ret) = compute_gae(&r, &v, &d, boot, gamma, lambda);
        let oracle = gae_by_sum(&r, &v, &d, boot, gamma, lambda);
        for t in 0..r.len() {
            assert!((adv[t] - oracle[t]).abs() <= 1e-10, "t={t}: {} vs {}", adv[t], oracle[t]);
            assert!((ret[t] - (oracle[t] + v[t])).abs() <= 1e-10);
        }
    }
}

pub fn gae_lambda_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (r, v, d, boot) = random_stream(&mut rng);
        let gamma = 0.97;
        let (adv, _) = compute_gae(&r, &v, &d, boot, gamma, 1.0);
        // discounted return to the episode end (or the bootstrap at the cut)
        let mut g = boot;
        for t in (0..r.len()).rev() {
            g = r[t] + if d[t] { 0.0 } else { gamma * g };
            assert!((adv[t] - (g - v[t])).abs() <= 1e-10);
        }
    }
}

pub fn gae_lambda_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let (r, v, d, boot) = random_stream(&mut rng);
        let (adv, _) = compute_gae(&r, &v, &d, boot, 0.9, 0.0);
        for t in 0..r.len() {
            let next = if d[t] { 0.0 } else if t + 1 < r.len() { v[t + 1] } else { boot };
            assert!((adv[t] - (r[t] + 0.9 * next - v[t])).abs() <= 1e-10);
        }
    }
}

pub fn toy(recurrent: bool) -> PolicyParameters {
    let cfg = PolicyConfig { input_dim: 4, hidden_dim: 5, mlp_layers: 2, recurrent, action_count: 6 };
    let mut p = PolicyParameters::init(cfg, 21).unwrap();
    // random biases and a larger actor head so every path carries gradient
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for v in p.values_mut() {
        *v += rng.random_range(-0.3..0.3);
    }
    p
}


/// 12 rows; for the recurrent policy two 6-row segments, the second with a
/// nonzero start state and an episode boundary at row 9.
pub fn toy_batch(p: &PolicyParameters, seed: u64) -> Minibatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = 12;
    let obs: Vec<f64> = (0..rows * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut episode_start = vec![false; rows];
    let mut sequences = Vec::new();
    if p.config.recurrent {
        episode_start[9] = true;
        let h = p.config.hidden_dim;
        let initial = RecurrentState {
            hidden: (0..h).map(|_| rng.random_range(-0.5..0.5)).collect(),
            cell: (0..h).map(|_| rng.random_range(-0.5..0.5)).collect(),
        };
        sequences.push(Sequence { start: 0, len: 6, initial: p.zero_state() });
        sequences.push(Sequence { start: 6, len: 6, initial });
    }
    let input = BatchInput { obs: &obs, rows, episode_start: &episode_start, sequences: &sequences };
    let cache = p.forward_batch(&input).unwrap();
    let actions: Vec<u8> = (0..rows).map(|_| rng.random_range(0..6)).collect();
    // old policy shifted so ratios land on both sides of the clip range,
    // but never within 0.02 of a kink
    let old_log_probs = (0..rows)
        .map(|i| {
            let z = &cache.logits[i * 6..i * 6 + 6];
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
            let shift = [0.0, 0.1, -0.1, 0.4, -0.4, 0.05][i % 6];
            z[actions[i] as usize] - lse - shift
        })
        .collect();
    Minibatch {
        obs,
        rows,
        actions,
        old_log_probs,
        advantages: (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect(),
        returns: (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect(),
        episode_start,
        sequences,
    }
}

pub fn central_difference(p: &PolicyParameters, f: impl Fn(&PolicyParameters) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut probe = p.clone();
    (0..p.num_params())
        .map(|i| {
            let orig = probe.values()[i];
            probe.values_mut()[i] = orig + h;
            let up = f(&probe);
            probe.values_mut()[i] = orig - h;
            let down = f(&probe);
            probe.values_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn assert_close(analytic: &[f64], numeric: &[f64], rel: f64) {
    let scale = numeric.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale);
        assert!(err <= rel, "param {i}: analytic {a} numeric {n} rel {err}");
    }
}

pub fn ppo_gradient_check() {
    let cfg = PpoConfig::default();
    for recurrent in [false, true] {
        let p = toy(recurrent);
        let mb = toy_batch(&p, 8);
        let (parts, grads) = ppo_loss_and_grad(&p, &mb, &cfg).unwrap();
        assert!(parts.clip_fraction > 0.0 && parts.clip_fraction < 1.0, "batch exercises both branches");
        let numeric = central_difference(&p, |q| ppo_loss(q, &mb, &cfg).unwrap().total);
        assert_close(&grads, &numeric, 1e-4);
    }
}
