//! Wire messages: JSON text frames tagged by `type`. See `docs/protocol.md`.

use bslab_core::{Action, ControlLevel, ControlSetting, WorldState};
use serde::{Deserialize, Serialize};

use super::{Condition, Preference, Protocol, SurveyBuckets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Join { session_id: String },
    SubmitSettings { dishes: ControlLevel, onions: ControlLevel },
    Input { action: Action },
    Survey { buckets: SurveyBuckets },
    Choice {
        condition: Condition,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        settings: Option<ControlSetting>,
    },
    Preference { preferred: Preference },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub rounds: usize,
    pub total_score: u32,
    pub surveys: usize,
    pub preferences: usize,
    pub choices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Joined {
        session_id: String,
        protocol: Protocol,
        total_rounds: usize,
        next_round: usize,
    },
    RoundIntro {
        round_id: usize,
        layout: String,
        condition: Condition,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        chosen: Option<Condition>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        visible_settings: Option<ControlSetting>,
        duration: f64,
        steps: u32,
        needs_settings: bool,
    },
    SettingsConfirmed {
        dishes: ControlLevel,
        onions: ControlLevel,
        weights: [f64; 3],
    },
    State {
        round_id: usize,
        tick: u32,
        state: WorldState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        score: Option<u32>,
        time_left: u32,
    },
    RoundEnd {
        round_id: usize,
        score: u32,
    },
    SurveyRequest {
        round_id: usize,
        statements: Vec<String>,
    },
    PreferenceRequest {
        pair: usize,
        layout: String,
    },
    ChoiceRequest {
        round_id: usize,
        layout: String,
        options: Vec<Condition>,
    },
    SessionEnd {
        summary: SessionSummary,
    },
    Error {
        message: String,
    },
}
