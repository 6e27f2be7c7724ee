//! Human-study sessions: schedules for the two study protocols, survey
//! validation, and the append-only session record.

pub mod actor;
pub mod protocol;
pub mod registry;
pub mod store;

use bslab_core::rng;
use bslab_core::shaping::{sample_condition_weights, settings_to_weights};
use bslab_core::{Action, BehaviorWeights, ControlSetting};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::layouts;
use registry::Registry;

const SCHEDULE_STREAM: u64 = 0x5C4E;
const CONDITION_STREAM: u64 = 0xC0DE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Each layout: one round with the BS partner and one with the SP
    /// partner in random order, then a preference question.
    Pairwise,
    /// Two layouts, each: 3 Controllable, 3 Fixed, 3 Hidden rounds in random
    /// order, then a Choice round.
    ControlStudy,
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Pairwise" | "pairwise" => Ok(Protocol::Pairwise),
            "ControlStudy" | "control_study" | "control" => Ok(Protocol::ControlStudy),
            _ => Err(format!("unknown protocol {s:?} (expected Pairwise or ControlStudy)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    Controllable,
    Fixed,
    Hidden,
    Choice,
    PairwiseBS,
    PairwiseSP,
}

/// What the participant picked for a Choice round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceAnswer {
    pub condition: Condition,
    /// Required when choosing Controllable.
    pub settings: Option<ControlSetting>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSpec {
    pub round_id: usize,
    pub layout: String,
    pub condition: Condition,
    pub ai_checkpoint: String,
    /// `None` until known: Controllable before submission, Choice before the choice.
    pub weights: Option<ControlSetting>,
    pub duration_s: f64,
    pub settings_visible: bool,
    /// Pairwise: index of the comparison this round belongs to.
    pub pair: Option<usize>,
    /// Choice rounds, once answered.
    pub chosen: Option<Condition>,
}

impl RoundSpec {
    /// The AI's ω for this round; zero until settings are known.
    pub fn ai_weights(&self) -> BehaviorWeights {
        self.weights.map(settings_to_weights).unwrap_or_else(|| BehaviorWeights(vec![0.0; 3]))
    }

    /// The condition actually played (a Choice round plays as its chosen one).
    pub fn effective_condition(&self) -> Condition {
        self.chosen.unwrap_or(self.condition)
    }

    pub fn needs_settings(&self) -> bool {
        self.effective_condition() == Condition::Controllable && self.weights.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Created,
    InProgress,
    Interrupted,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub participant_id: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub assigned_layouts: Vec<String>,
    pub schedule: Vec<RoundSpec>,
    pub fixed_condition_weights: ControlSetting,
    pub hidden_condition_weights: ControlSetting,
    pub status: SessionStatus,
}

/// Study timing; durations in seconds of game time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub tick_ms: u64,
    pub control_round_s: f64,
    pub pairwise_round_s: f64,
    /// Include the running score in state messages.
    pub show_score: bool,
    /// Layouts a ControlStudy participant may be assigned.
    pub layouts: Vec<String>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            tick_ms: 200,
            control_round_s: 60.0,
            pairwise_round_s: 45.0,
            show_score: true,
            layouts: layouts::NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ProtocolConfig {
    /// Env steps in a round of `duration_s`.
    pub fn steps(&self, duration_s: f64) -> u32 {
        (duration_s * 1000.0 / self.tick_ms.max(1) as f64).round() as u32
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("registry has no {kind} checkpoint for layout {layout}")]
    MissingCheckpoint { layout: String, kind: &'static str },
    #[error("protocol needs at least {needed} layouts, config lists {found}")]
    TooFewLayouts { needed: usize, found: usize },
    #[error("unknown round {0}")]
    UnknownRound(usize),
    #[error("round {0} is not finished")]
    RoundNotFinished(usize),
    #[error("{0} already recorded")]
    Duplicate(String),
    #[error("bucket {name} = {value} is outside 0..=20")]
    BucketRange { name: &'static str, value: u8 },
    #[error("{0}")]
    Invalid(String),
}

/// Builds a session; every random choice comes from `seed`.
pub fn create_session(
    protocol: Protocol,
    participant_id: &str,
    registry: &Registry,
    seed: u64,
    cfg: &ProtocolConfig,
) -> Result<Session, SessionError> {
    let mut r = rng::stream(seed, &[SCHEDULE_STREAM]);
    let mut cond_rng = rng::stream(seed, &[CONDITION_STREAM]);
    let fixed = sample_condition_weights(&mut cond_rng);
    let hidden = sample_condition_weights(&mut cond_rng);
    let mut pool = cfg.layouts.clone();
    pool.shuffle(&mut r);
    let needed = match protocol {
        Protocol::ControlStudy => 2,
        Protocol::Pairwise => 1,
    };
    if pool.len() < needed {
        return Err(SessionError::TooFewLayouts { needed, found: pool.len() });
    }
    let assigned: Vec<String> = match protocol {
        Protocol::ControlStudy => pool[..2].to_vec(),
        Protocol::Pairwise => pool,
    };
    let bs = |layout: &str| registry.bs(layout).map(|e| e.id.clone()).ok_or(SessionError::MissingCheckpoint { layout: layout.into(), kind: "BS" });
    let sp = |layout: &str| registry.sp(layout).map(|e| e.id.clone()).ok_or(SessionError::MissingCheckpoint { layout: layout.into(), kind: "SP" });
    let mut schedule = Vec::new();
    let mut push = |layout: &str, condition, ai_checkpoint: String, weights, duration_s, visible, pair| {
        schedule.push(RoundSpec {
            round_id: schedule.len(),
            layout: layout.to_string(),
            condition,
            ai_checkpoint,
            weights,
            duration_s,
            settings_visible: visible,
            pair,
            chosen: None,
        })
    };
    match protocol {
        Protocol::ControlStudy => {
            for layout in &assigned {
                let ckpt = bs(layout)?;
                let mut conds = [Condition::Controllable, Condition::Fixed, Condition::Hidden].repeat(3);
                conds.shuffle(&mut r);
                for c in conds {
                    let (w, visible) = match c {
                        Condition::Fixed => (Some(fixed), true),
                        Condition::Hidden => (Some(hidden), false),
                        _ => (None, true),
                    };
                    push(layout, c, ckpt.clone(), w, cfg.control_round_s, visible, None);
                }
                push(layout, Condition::Choice, ckpt, None, cfg.control_round_s, false, None);
            }
        }
        Protocol::Pairwise => {
            for (pair, layout) in assigned.iter().enumerate() {
                let mut partners = [(Condition::PairwiseBS, bs(layout)?), (Condition::PairwiseSP, sp(layout)?)];
                partners.shuffle(&mut r);
                for (c, ckpt) in partners {
                    push(layout, c, ckpt, Some(ControlSetting::NEUTRAL), cfg.pairwise_round_s, false, Some(pair));
                }
            }
        }
    }
    Ok(Session {
        session_id: format!("s{:016x}", rng::derive_seed(seed, &[participant_key(participant_id)])),
        participant_id: participant_id.to_string(),
        protocol,
        seed,
        assigned_layouts: assigned,
        schedule,
        fixed_condition_weights: fixed,
        hidden_condition_weights: hidden,
        status: SessionStatus::Created,
    })
}

fn participant_key(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

impl Session {
    /// Resolves a Choice round from the participant's answer.
    pub fn apply_choice(&mut self, round_id: usize, answer: ChoiceAnswer) -> Result<(), SessionError> {
        let (fixed, hidden) = (self.fixed_condition_weights, self.hidden_condition_weights);
        let round = self.schedule.get_mut(round_id).ok_or(SessionError::UnknownRound(round_id))?;
        if round.condition != Condition::Choice {
            return Err(SessionError::Invalid(format!("round {round_id} is not a choice round")));
        }
        if round.chosen.is_some() {
            return Err(SessionError::Duplicate(format!("choice for round {round_id}")));
        }
        let (weights, visible) = match answer.condition {
            Condition::Controllable => {
                let s = answer.settings.ok_or_else(|| SessionError::Invalid("choosing Controllable needs settings".into()))?;
                (Some(s), true)
            }
            Condition::Fixed => (Some(fixed), true),
            Condition::Hidden => (Some(hidden), false),
            other => return Err(SessionError::Invalid(format!("{other:?} is not a partner option"))),
        };
        round.chosen = Some(answer.condition);
        round.weights = weights;
        round.settings_visible = visible;
        Ok(())
    }

    /// Pairwise comparisons in this session.
    pub fn pairs(&self) -> usize {
        self.schedule.iter().filter_map(|r| r.pair).max().map_or(0, |p| p + 1)
    }
}

/// Slider answers, each a bucket 0..=20.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyBuckets {
    pub enjoyable: u8,
    pub predictable: u8,
    pub effective: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followed_settings: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub round_id: usize,
    #[serde(flatten)]
    pub buckets: SurveyBuckets,
}

pub const STATEMENTS: [&str; 4] = [
    "My partner was enjoyable to work with.",
    "My partner's behavior was predictable.",
    "My partner was effective as a teammate.",
    "My partner followed its behavior settings.",
];

/// Statements shown after a round; the last only when settings were visible.
pub fn survey_statements(settings_visible: bool) -> Vec<&'static str> {
    STATEMENTS[..if settings_visible { 4 } else { 3 }].to_vec()
}

/// Maps a slider position in `[0, 1]` to one of 21 buckets.
pub fn slider_bucket(position: f64) -> u8 {
    (position.clamp(0.0, 1.0) * 20.0).round() as u8
}

pub fn validate_survey(round: &RoundSpec, b: &SurveyBuckets) -> Result<(), SessionError> {
    for (name, v) in [("enjoyable", b.enjoyable), ("predictable", b.predictable), ("effective", b.effective)] {
        if v > 20 {
            return Err(SessionError::BucketRange { name, value: v });
        }
    }
    match (round.settings_visible, b.followed_settings) {
        (true, None) => Err(SessionError::Invalid("followed_settings is required when settings were shown".into())),
        (false, Some(_)) => Err(SessionError::Invalid("followed_settings is only asked when settings were shown".into())),
        (true, Some(v)) if v > 20 => Err(SessionError::BucketRange { name: "followed_settings", value: v }),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    First,
    Second,
}

/// Everything logged for one played round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub session_id: String,
    pub round_id: usize,
    pub attempt: u32,
    pub layout: String,
    pub condition: Condition,
    pub chosen: Option<Condition>,
    pub weights: Option<ControlSetting>,
    pub ai_checkpoint: String,
    pub ai_seed: u64,
    pub steps: u32,
    pub human_actions: Vec<Action>,
    pub ai_actions: Vec<Action>,
    /// Milliseconds since the round started, one per tick.
    pub tick_ms: Vec<u64>,
    pub score: u32,
}
