//! Core of the behavior-shaping lab.
//!
//! Everything here is pure computation over owned data: the two-chef
//! cooking gridworld, the behavioral reward functions and their weights,
//! the conditional actor-critic, advantage estimation, the clipped PPO
//! objective with its analytic gradient, and rollout collection. IO,
//! threads, file formats and networking live in the `bslab` crate.
#![no_std]

extern crate alloc;

pub mod env;
pub mod features;
pub mod gae;
pub mod layout;
pub mod math;
pub mod optim;
pub mod policy;
pub mod ppo;
pub mod rng;
pub mod rollout;
pub mod shaping;

pub use env::{reset, score, step, Action, AgentEvents, AgentState, Direction, Item, PotPhase, PotState, StepError, StepOutcome, WorldState};
pub use features::{observation_len, observe};
pub use layout::{parse_layout, Layout, LayoutError, Pos, Tile};
pub use policy::{ActionDistribution, PolicyConfig, PolicyParameters, RecurrentState};
pub use shaping::{BehaviorId, BehaviorSpec, BehaviorWeights, ControlLevel, ControlSetting};
