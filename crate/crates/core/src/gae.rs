//! Generalized advantage estimation over one (env, agent) stream.

use alloc::vec;
use alloc::vec::Vec;

/// Backward recursion
///
/// ```text
/// δ_t = r_t + γ·V_{t+1}·(1 − done_t) − V_t
/// A_t = δ_t + γλ·(1 − done_t)·A_{t+1}
/// ```
///
/// with `V_T = bootstrap_value`. Returns `(advantages, advantages + values)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "gae streams must have equal length");
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}
