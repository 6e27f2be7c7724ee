//! Deterministic two-chef kitchen: state, transition and shared reward.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{Layout, Pos, Tile};

/// Reward each agent receives for one delivered soup.
pub const DELIVERY_REWARD: f64 = 1.0;
pub const ONIONS_PER_SOUP: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::South, Direction::East, Direction::West];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::North => (0, -1),
            Direction::South => (0, 1),
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    North,
    South,
    East,
    West,
    Stay,
    Interact,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [Action::North, Action::South, Action::East, Action::West, Action::Stay, Action::Interact];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Action::North => Some(Direction::North),
            Action::South => Some(Direction::South),
            Action::East => Some(Direction::East),
            Action::West => Some(Direction::West),
            Action::Stay | Action::Interact => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Item {
    Onion,
    CleanDish,
    SoupDish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Pos,
    pub orientation: Direction,
    pub held: Option<Item>,
}

impl AgentState {
    pub fn facing(&self) -> Pos {
        let (dx, dy) = self.orientation.delta();
        self.position.offset(dx, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PotPhase {
    Filling,
    Cooking,
    Ready,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PotState {
    pub position: Pos,
    pub onions: u8,
    pub cook_timer: u32,
    pub phase: PotPhase,
}

impl PotState {
    fn empty(position: Pos) -> Self {
        Self { position, onions: 0, cook_timer: 0, phase: PotPhase::Filling }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CounterItem {
    pub position: Pos,
    pub item: Item,
}

/// Full dynamic state. `counter_items` is kept sorted by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub layout: Arc<Layout>,
    pub agents: [AgentState; 2],
    pub pots: Vec<PotState>,
    pub counter_items: Vec<CounterItem>,
    pub t: u32,
}

/// Per-agent flags for the behaviors the shaping rewards key on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentEvents {
    pub delivered: bool,
    pub onion_in_pot: bool,
    pub plated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: WorldState,
    pub base_reward: [f64; 2],
    pub events: [AgentEvents; 2],
    pub done: bool,
}

/// What [`WorldState::advance`] reports besides mutating the state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Transition {
    pub base_reward: [f64; 2],
    pub events: [AgentEvents; 2],
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("episode already finished at t={t}")]
    EpisodeDone { t: u32 },
}

/// Initial state: agents on their spawns facing north, empty pots and counters.
pub fn reset(layout: &Arc<Layout>) -> WorldState {
    let spawns = layout.spawn_points();
    let agent = |position| AgentState { position, orientation: Direction::North, held: None };
    WorldState {
        layout: Arc::clone(layout),
        agents: [agent(spawns[0]), agent(spawns[1])],
        pots: layout.pots().iter().map(|&p| PotState::empty(p)).collect(),
        counter_items: Vec::new(),
        t: 0,
    }
}

/// Pure transition: `state` is left untouched.
pub fn step(state: &WorldState, joint_action: [Action; 2]) -> Result<StepOutcome, StepError> {
    let mut next_state = state.clone();
    let tr = next_state.advance(joint_action)?;
    Ok(StepOutcome { next_state, base_reward: tr.base_reward, events: tr.events, done: tr.done })
}

/// Number of soups delivered over a trajectory.
pub fn score<'a>(trajectory: impl IntoIterator<Item = &'a StepOutcome>) -> u32 {
    trajectory.into_iter().map(|o| o.events.iter().filter(|e| e.delivered).count() as u32).sum()
}

impl WorldState {
    pub fn is_done(&self) -> bool {
        self.t >= self.layout.episode_length()
    }

    pub fn time_left(&self) -> u32 {
        self.layout.episode_length().saturating_sub(self.t)
    }

    pub fn counter_item(&self, p: Pos) -> Option<Item> {
        self.counter_items.binary_search_by(|c| c.position.cmp(&p)).ok().map(|i| self.counter_items[i].item)
    }

    fn pot_index(&self, p: Pos) -> Option<usize> {
        self.pots.iter().position(|pot| pot.position == p)
    }

    /// In-place transition.
    pub fn advance(&mut self, joint_action: [Action; 2]) -> Result<Transition, StepError> {
        if self.is_done() {
            return Err(StepError::EpisodeDone { t: self.t });
        }
        let mut tr = Transition::default();

        for pot in &mut self.pots {
            if pot.phase == PotPhase::Cooking {
                pot.cook_timer -= 1;
                if pot.cook_timer == 0 {
                    pot.phase = PotPhase::Ready;
                }
            }
        }

        for (i, action) in joint_action.iter().enumerate() {
            if *action == Action::Interact {
                self.interact(i, &mut tr);
            }
        }

        self.move_agents(joint_action);

        self.t += 1;
        tr.done = self.is_done();
        Ok(tr)
    }

    fn interact(&mut self, i: usize, tr: &mut Transition) {
        let target = self.agents[i].facing();
        let held = self.agents[i].held;
        match (self.layout.tile(target), held) {
            (Tile::OnionPile, None) => self.agents[i].held = Some(Item::Onion),
            (Tile::DishPile, None) => self.agents[i].held = Some(Item::CleanDish),
            (Tile::Pot, Some(item)) => {
                let Some(k) = self.pot_index(target) else { return };
                let cook_time = self.layout.cook_time();
                let pot = &mut self.pots[k];
                match (item, pot.phase) {
                    (Item::Onion, PotPhase::Filling) => {
                        pot.onions += 1;
                        if pot.onions == ONIONS_PER_SOUP {
                            pot.phase = PotPhase::Cooking;
                            pot.cook_timer = cook_time;
                        }
                        self.agents[i].held = None;
                        tr.events[i].onion_in_pot = true;
                    }
                    (Item::CleanDish, PotPhase::Ready) => {
                        *pot = PotState::empty(target);
                        self.agents[i].held = Some(Item::SoupDish);
                        tr.events[i].plated = true;
                    }
                    _ => {}
                }
            }
            (Tile::DeliveryZone, Some(Item::SoupDish)) => {
                self.agents[i].held = None;
                tr.events[i].delivered = true;
                for r in &mut tr.base_reward {
                    *r += DELIVERY_REWARD;
                }
            }
            (Tile::Counter, _) => {
                let slot = self.counter_items.binary_search_by(|c| c.position.cmp(&target));
                match (slot, held) {
                    (Err(at), Some(item)) => {
                        self.counter_items.insert(at, CounterItem { position: target, item });
                        self.agents[i].held = None;
                    }
                    (Ok(at), None) => {
                        self.agents[i].held = Some(self.counter_items.remove(at).item);
                    }
                    _ => {}
                }
            }
            _ => {}
        }
    }

    fn move_agents(&mut self, joint_action: [Action; 2]) {
        let mut intended = [self.agents[0].position, self.agents[1].position];
        for (i, action) in joint_action.iter().enumerate() {
            if let Some(dir) = action.direction() {
                let agent = &mut self.agents[i];
                agent.orientation = dir;
                let (dx, dy) = dir.delta();
                let target = agent.position.offset(dx, dy);
                if self.layout.is_floor(target) {
                    intended[i] = target;
                }
            }
        }
        let current = [self.agents[0].position, self.agents[1].position];
        let same_cell = intended[0] == intended[1];
        let swap = intended[0] == current[1] && intended[1] == current[0];
        if !(same_cell || swap) {
            self.agents[0].position = intended[0];
            self.agents[1].position = intended[1];
        }
    }

    /// One-character-per-cell picture of the kitchen plus a status line.
    pub fn render_ascii(&self) -> String {
        let layout = &self.layout;
        let mut out = String::new();
        for y in 0..layout.height() as i32 {
            for x in 0..layout.width() as i32 {
                let p = Pos::new(x, y);
                let ch = if let Some(i) = self.agents.iter().position(|a| a.position == p) {
                    if i == 0 {
                        '1'
                    } else {
                        '2'
                    }
                } else if let Some(k) = self.pot_index(p) {
                    let pot = &self.pots[k];
                    match pot.phase {
                        PotPhase::Filling => (b'0' + pot.onions) as char,
                        PotPhase::Cooking => 'c',
                        PotPhase::Ready => 'r',
                    }
                } else if let Some(item) = self.counter_item(p) {
                    item_glyph(item)
                } else {
                    layout.tile(p).glyph()
                };
                out.push(ch);
            }
            out.push('\n');
        }
        let held = |i: usize| self.agents[i].held.map(item_glyph).unwrap_or('-');
        let _ = writeln!(out, "t={} held=[{} {}]", self.t, held(0), held(1));
        out
    }
}

fn item_glyph(item: Item) -> char {
    match item {
        Item::Onion => 'o',
        Item::CleanDish => 'd',
        Item::SoupDish => 's',
    }
}
