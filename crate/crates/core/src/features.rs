//! Per-agent feature vector.
//!
//! | block            | width | contents                                              |
//! |------------------|-------|-------------------------------------------------------|
//! | own              | 10    | position (2), orientation one-hot (4), held one-hot (4) |
//! | partner          | 12    | same 10 as above, then delta to partner (2)           |
//! | pots (per pot)   | 6     | onions/3, cooking, ready, timer/cook_time, delta (2)  |
//! | nearest statics  | 6     | delta to nearest onion pile, dish pile, delivery zone |
//! | time             | 1     | steps remaining / episode length                      |
//!
//! Positions are scaled to `[0, 1]` by `(w - 1, h - 1)`, deltas to `[-1, 1]`
//! by the same factors. Pots are ordered row-major.

use alloc::vec::Vec;

use crate::env::{AgentState, Item, PotPhase, WorldState};
use crate::layout::{Layout, Pos, Tile};

pub const AGENT_BLOCK: usize = 10;
pub const PARTNER_BLOCK: usize = 12;
pub const POT_BLOCK: usize = 6;
pub const STATIC_BLOCK: usize = 6;

pub fn observation_len(layout: &Layout) -> usize {
    AGENT_BLOCK + PARTNER_BLOCK + POT_BLOCK * layout.pots().len() + STATIC_BLOCK + 1
}

struct Scale {
    x: f64,
    y: f64,
}

impl Scale {
    fn new(layout: &Layout) -> Self {
        Self { x: (layout.width().max(2) - 1) as f64, y: (layout.height().max(2) - 1) as f64 }
    }

    fn pos(&self, out: &mut Vec<f64>, p: Pos) {
        out.push(p.x as f64 / self.x);
        out.push(p.y as f64 / self.y);
    }

    fn delta(&self, out: &mut Vec<f64>, from: Pos, to: Pos) {
        out.push((to.x - from.x) as f64 / self.x);
        out.push((to.y - from.y) as f64 / self.y);
    }
}

fn push_agent(out: &mut Vec<f64>, scale: &Scale, a: &AgentState) {
    scale.pos(out, a.position);
    let mut orient = [0.0; 4];
    orient[a.orientation.index()] = 1.0;
    out.extend_from_slice(&orient);
    let held = match a.held {
        None => 0,
        Some(Item::Onion) => 1,
        Some(Item::CleanDish) => 2,
        Some(Item::SoupDish) => 3,
    };
    let mut held_hot = [0.0; 4];
    held_hot[held] = 1.0;
    out.extend_from_slice(&held_hot);
}

fn nearest(layout: &Layout, from: Pos, kind: Tile) -> Pos {
    // parse_layout guarantees at least one cell of each required kind
    layout.cells_of(kind).min_by_key(|p| p.manhattan(from)).unwrap_or(from)
}

/// Feature vector for `agent` (0 or 1). Length is [`observation_len`].
pub fn observe(state: &WorldState, agent: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(observation_len(&state.layout));
    observe_into(state, agent, &mut out);
    out
}

/// Appends the feature vector for `agent` to `out`.
pub fn observe_into(state: &WorldState, agent: usize, out: &mut Vec<f64>) {
    let layout = &*state.layout;
    let scale = Scale::new(layout);
    let me = &state.agents[agent];
    let partner = &state.agents[1 - agent];

    push_agent(out, &scale, me);
    push_agent(out, &scale, partner);
    scale.delta(out, me.position, partner.position);

    let cook_time = layout.cook_time() as f64;
    for pot in &state.pots {
        out.push(pot.onions as f64 / 3.0);
        out.push((pot.phase == PotPhase::Cooking) as u8 as f64);
        out.push((pot.phase == PotPhase::Ready) as u8 as f64);
        out.push(pot.cook_timer as f64 / cook_time);
        scale.delta(out, me.position, pot.position);
    }

    for kind in [Tile::OnionPile, Tile::DishPile, Tile::DeliveryZone] {
        scale.delta(out, me.position, nearest(layout, me.position, kind));
    }

    out.push(state.time_left() as f64 / layout.episode_length() as f64);
}
