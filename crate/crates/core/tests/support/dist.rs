//! Monte Carlo checks on the ω and condition samplers.

use bslab_core::shaping::{sample_condition_weights, ControlLevel::*};
use bslab_core::{BehaviorSpec, BehaviorWeights, ControlSetting};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 100k training draws: each component has mean within 0.02 of 0 and
/// variance within 0.03 of 1.
pub fn omega_moments() {
    let spec = BehaviorSpec::overcooked();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws: Vec<BehaviorWeights> = (0..100_000).map(|_| spec.sample_weights(&mut rng)).collect();
    for k in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|w| w.as_slice()[k]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.02, "behavior {k}: mean {mean}");
        assert!((0.97..=1.03).contains(&var), "behavior {k}: variance {var}");
    }
}

/// 100k draws never hit (Discourage, Discourage); each of the other 8
/// settings turns up within ±0.01 of 1/8.
pub fn condition_sampler() {
    let options = ControlSetting::condition_options();
    assert_eq!(options.len(), 8);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = [0usize; 8];
    for _ in 0..100_000 {
        let c = sample_condition_weights(&mut rng);
        assert!(!(c.dishes == Discourage && c.onions == Discourage));
        counts[options.iter().position(|o| *o == c).expect("sample is one of the options")] += 1;
    }
    for (o, c) in options.iter().zip(counts) {
        let f = c as f64 / 100_000.0;
        assert!((f - 0.125).abs() <= 0.01, "{o:?}: {f}");
    }
}
