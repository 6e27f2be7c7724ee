//! Behavioral reward functions, their weights, and the human-facing
//! three-point controls.
//!
//! Each behavior is an event-triggered bonus `ω_k · [event_k]` paid only
//! to the agent that performed the event. Weights are drawn once per
//! episode and appended to the agent's own observation.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::env::AgentEvents;

/// Behaviors in canonical weight order (ω₁, ω₂, ω₃).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorId {
    /// The acting agent delivered a soup.
    DeliveryAct,
    /// The acting agent put an onion in a pot.
    OnionInPot,
    /// The acting agent picked up a finished soup with a dish.
    Plating,
}

impl BehaviorId {
    pub fn fired(self, events: &AgentEvents) -> bool {
        match self {
            BehaviorId::DeliveryAct => events.delivered,
            BehaviorId::OnionInPot => events.onion_in_pot,
            BehaviorId::Plating => events.plated,
        }
    }
}

/// Sampling distribution for one weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    Normal { mean: f64, std_dev: f64 },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

impl WeightDistribution {
    pub const STANDARD_NORMAL: Self = WeightDistribution::Normal { mean: 0.0, std_dev: 1.0 };

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            WeightDistribution::Normal { mean, std_dev } => {
                // std_dev is validated non-negative and finite
                Normal::new(mean, std_dev).map(|d| d.sample(rng)).unwrap_or(mean)
            }
            WeightDistribution::Uniform { low, high } => {
                Uniform::new_inclusive(low, high).map(|d| d.sample(rng)).unwrap_or(low)
            }
            WeightDistribution::Constant { value } => value,
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            WeightDistribution::Normal { mean, std_dev } => mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0,
            WeightDistribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            WeightDistribution::Constant { value } => value.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEntry {
    pub id: BehaviorId,
    pub distribution: WeightDistribution,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("behavior {0:?} listed twice")]
    Duplicate(BehaviorId),
    #[error("behavior {0:?} has an invalid weight distribution")]
    BadDistribution(BehaviorId),
}

/// Ordered catalog of behaviors with their weight distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSpec {
    behaviors: Vec<BehaviorEntry>,
}

impl Default for BehaviorSpec {
    /// The three kitchen behaviors, each weighted by a standard normal.
    fn default() -> Self {
        Self::overcooked()
    }
}

impl BehaviorSpec {
    pub fn new(behaviors: Vec<BehaviorEntry>) -> Result<Self, SpecError> {
        for (i, b) in behaviors.iter().enumerate() {
            if behaviors[..i].iter().any(|o| o.id == b.id) {
                return Err(SpecError::Duplicate(b.id));
            }
            if !b.distribution.is_valid() {
                return Err(SpecError::BadDistribution(b.id));
            }
        }
        Ok(Self { behaviors })
    }

    pub fn overcooked() -> Self {
        let entry = |id| BehaviorEntry { id, distribution: WeightDistribution::STANDARD_NORMAL };
        Self { behaviors: vec![entry(BehaviorId::DeliveryAct), entry(BehaviorId::OnionInPot), entry(BehaviorId::Plating)] }
    }

    pub fn len(&self) -> usize {
        self.behaviors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.behaviors.is_empty()
    }

    pub fn behaviors(&self) -> &[BehaviorEntry] {
        &self.behaviors
    }

    pub fn zero_weights(&self) -> BehaviorWeights {
        BehaviorWeights(vec![0.0; self.len()])
    }

    /// One episode's weights for one agent. Each agent must use its own stream.
    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> BehaviorWeights {
        BehaviorWeights(self.behaviors.iter().map(|b| b.distribution.sample(rng)).collect())
    }

    /// Behavioral part of one agent's reward.
    pub fn behavior_reward(&self, events: &AgentEvents, w: &BehaviorWeights) -> f64 {
        self.behaviors.iter().zip(&w.0).filter(|(b, _)| b.id.fired(events)).map(|(_, w)| *w).sum()
    }

    /// Shaped reward `r'[i] = base[i] + Σ_k ω_k[i]·event_k[i]`; behavioral terms are not shared.
    pub fn shaped_reward(&self, base: [f64; 2], events: &[AgentEvents; 2], weights: [&BehaviorWeights; 2]) -> [f64; 2] {
        [
            base[0] + self.behavior_reward(&events[0], weights[0]),
            base[1] + self.behavior_reward(&events[1], weights[1]),
        ]
    }
}

/// One agent's weight vector, in [`BehaviorSpec`] order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorWeights(pub Vec<f64>);

impl BehaviorWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|w| *w == 0.0)
    }
}

/// Appends the agent's own weights to its features.
pub fn augment_observation(mut features: Vec<f64>, w: &BehaviorWeights) -> Vec<f64> {
    features.extend_from_slice(&w.0);
    features
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControlLevel {
    Discourage,
    Neutral,
    Encourage,
}

impl ControlLevel {
    pub const ALL: [ControlLevel; 3] = [ControlLevel::Discourage, ControlLevel::Neutral, ControlLevel::Encourage];

    pub fn weight(self) -> f64 {
        match self {
            ControlLevel::Discourage => -1.0,
            ControlLevel::Neutral => 0.0,
            ControlLevel::Encourage => 1.0,
        }
    }

    pub fn from_weight(w: f64) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.weight() == w)
    }
}

/// The two user-facing behavior groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ControlSetting {
    /// "Delivering Dishes": drives both the delivery act and plating weights.
    pub dishes: ControlLevel,
    /// "Onions in Pot".
    pub onions: ControlLevel,
}

impl ControlSetting {
    pub const NEUTRAL: Self = ControlSetting { dishes: ControlLevel::Neutral, onions: ControlLevel::Neutral };

    pub fn new(dishes: ControlLevel, onions: ControlLevel) -> Self {
        Self { dishes, onions }
    }

    /// `(dishes, onions) -> (ω₁, ω₂, ω₃) = (dishes, onions, dishes)`.
    pub fn to_weights(self) -> BehaviorWeights {
        let d = self.dishes.weight();
        BehaviorWeights(vec![d, self.onions.weight(), d])
    }

    /// Settings allowed for the Fixed and Hidden partners: every pair except
    /// discouraging both groups.
    pub fn condition_options() -> [ControlSetting; 8] {
        let mut out = [Self::NEUTRAL; 8];
        let mut n = 0;
        for dishes in ControlLevel::ALL {
            for onions in ControlLevel::ALL {
                if (dishes, onions) != (ControlLevel::Discourage, ControlLevel::Discourage) {
                    out[n] = ControlSetting { dishes, onions };
                    n += 1;
                }
            }
        }
        out
    }

    /// Uniform draw over [`ControlSetting::condition_options`].
    pub fn sample_condition<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::condition_options()[rng.random_range(0..8)]
    }
}

pub fn settings_to_weights(controls: ControlSetting) -> BehaviorWeights {
    controls.to_weights()
}

pub fn sample_condition_weights<R: Rng + ?Sized>(rng: &mut R) -> ControlSetting {
    ControlSetting::sample_condition(rng)
}
