//! Append-only JSONL event log per session, the record folded from it,
//! flat exports, and trajectory replay.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use bslab_core::{reset, WorldState};
use serde::{Deserialize, Serialize};

use super::{validate_survey, ChoiceAnswer, Preference, RoundRecord, Session, SessionError, SessionStatus, SurveyResponse};
use crate::layouts;
use bslab_core::ControlSetting;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StoredEvent {
    SessionCreated { session: Session },
    SettingsSubmitted { round_id: usize, settings: ControlSetting },
    ChoiceRecorded { round_id: usize, answer: ChoiceAnswer },
    RoundCompleted { record: RoundRecord },
    RoundAbandoned { round_id: usize, attempt: u32, ticks: u32 },
    SurveyRecorded { response: SurveyResponse },
    PreferenceRecorded { pair: usize, preferred: Preference },
    SessionCompleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abandoned {
    pub round_id: usize,
    pub attempt: u32,
    pub ticks: u32,
}

/// A session with everything that happened in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session: Session,
    pub rounds: Vec<RoundRecord>,
    pub abandoned: Vec<Abandoned>,
    pub surveys: Vec<SurveyResponse>,
    pub preferences: Vec<(usize, Preference)>,
    pub choices: Vec<(usize, ChoiceAnswer)>,
}

impl SessionRecord {
    pub fn new(session: Session) -> Self {
        Self { session, rounds: Vec::new(), abandoned: Vec::new(), surveys: Vec::new(), preferences: Vec::new(), choices: Vec::new() }
    }

    pub fn completed_round(&self, round_id: usize) -> Option<&RoundRecord> {
        self.rounds.iter().find(|r| r.round_id == round_id)
    }

    /// First scheduled round not yet played.
    pub fn next_round(&self) -> Option<usize> {
        (0..self.session.schedule.len()).find(|&i| self.completed_round(i).is_none())
    }

    pub fn survey_for(&self, round_id: usize) -> Option<&SurveyResponse> {
        self.surveys.iter().find(|s| s.round_id == round_id)
    }

    pub fn preference_for(&self, pair: usize) -> Option<Preference> {
        self.preferences.iter().find(|(p, _)| *p == pair).map(|(_, v)| *v)
    }

    /// Validates `event` against the record and applies it.
    pub fn apply(&mut self, event: &StoredEvent) -> Result<(), SessionError> {
        match event {
            StoredEvent::SessionCreated { .. } => return Err(SessionError::Duplicate("session".into())),
            StoredEvent::SettingsSubmitted { round_id, settings } => {
                let round = self.session.schedule.get_mut(*round_id).ok_or(SessionError::UnknownRound(*round_id))?;
                if !round.needs_settings() {
                    return Err(SessionError::Invalid(format!("round {round_id} does not take settings")));
                }
                round.weights = Some(*settings);
            }
            StoredEvent::ChoiceRecorded { round_id, answer } => {
                self.session.apply_choice(*round_id, *answer)?;
                self.choices.push((*round_id, *answer));
            }
            StoredEvent::RoundCompleted { record } => {
                if self.completed_round(record.round_id).is_some() {
                    return Err(SessionError::Duplicate(format!("round {}", record.round_id)));
                }
                if record.round_id >= self.session.schedule.len() {
                    return Err(SessionError::UnknownRound(record.round_id));
                }
                self.rounds.push(record.clone());
                self.session.status = SessionStatus::InProgress;
            }
            StoredEvent::RoundAbandoned { round_id, attempt, ticks } => {
                self.abandoned.push(Abandoned { round_id: *round_id, attempt: *attempt, ticks: *ticks });
                self.session.status = SessionStatus::Interrupted;
            }
            StoredEvent::SurveyRecorded { response } => {
                let round = self.session.schedule.get(response.round_id).ok_or(SessionError::UnknownRound(response.round_id))?;
                if self.completed_round(response.round_id).is_none() {
                    return Err(SessionError::RoundNotFinished(response.round_id));
                }
                if round.pair.is_some() {
                    return Err(SessionError::Invalid("pairwise rounds take a preference, not a survey".into()));
                }
                if self.survey_for(response.round_id).is_some() {
                    return Err(SessionError::Duplicate(format!("survey for round {}", response.round_id)));
                }
                validate_survey(round, &response.buckets)?;
                self.surveys.push(*response);
            }
            StoredEvent::PreferenceRecorded { pair, preferred } => {
                let rounds: Vec<usize> = self.session.schedule.iter().filter(|r| r.pair == Some(*pair)).map(|r| r.round_id).collect();
                if rounds.is_empty() {
                    return Err(SessionError::Invalid(format!("no comparison {pair}")));
                }
                if let Some(r) = rounds.iter().find(|r| self.completed_round(**r).is_none()) {
                    return Err(SessionError::RoundNotFinished(*r));
                }
                if self.preference_for(*pair).is_some() {
                    return Err(SessionError::Duplicate(format!("preference for comparison {pair}")));
                }
                self.preferences.push((*pair, *preferred));
            }
            StoredEvent::SessionCompleted => self.session.status = SessionStatus::Completed,
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{path}: does not start with a session_created event")]
    NoSession { path: PathBuf },
    #[error("{path}:{line}: {source}")]
    Rejected { path: PathBuf, line: usize, source: SessionError },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One `<session_id>.jsonl` file per session under `dir`.
#[derive(Debug, Clone)]
pub struct EventStore {
    dir: PathBuf,
}

impl EventStore {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_of(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    pub fn append(&self, session_id: &str, event: &StoredEvent) -> Result<(), StoreError> {
        let path = self.path_of(session_id);
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        let mut line = serde_json::to_string(event).expect("events serialize");
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io)?;
        f.flush().map_err(io)
    }

    pub fn load(&self, session_id: &str) -> Result<SessionRecord, StoreError> {
        load_record(&self.path_of(session_id))
    }

    /// All sessions, ordered by id.
    pub fn load_all(&self) -> Result<Vec<SessionRecord>, StoreError> {
        let rd = fs::read_dir(&self.dir).map_err(|source| StoreError::Io { path: self.dir.clone(), source })?;
        let mut paths: Vec<PathBuf> = rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "jsonl")).collect();
        paths.sort();
        paths.iter().map(|p| load_record(p)).collect()
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, serde_json::Value)>, StoreError> {
    let f = File::open(path).map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| StoreError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: if e.is_eof() { "line is truncated".into() } else { e.to_string() },
        })?;
        out.push((i + 1, value));
    }
    Ok(out)
}

pub fn load_record(path: &Path) -> Result<SessionRecord, StoreError> {
    let mut record: Option<SessionRecord> = None;
    for (line, value) in read_lines(path)? {
        let event: StoredEvent = serde_json::from_value(value).map_err(|e| StoreError::Parse { path: path.to_path_buf(), line, reason: e.to_string() })?;
        match (&mut record, event) {
            (None, StoredEvent::SessionCreated { session }) => record = Some(SessionRecord::new(session)),
            (None, _) => return Err(StoreError::NoSession { path: path.to_path_buf() }),
            (Some(r), ev) => r.apply(&ev).map_err(|source| StoreError::Rejected { path: path.to_path_buf(), line, source })?,
        }
    }
    record.ok_or(StoreError::NoSession { path: path.to_path_buf() })
}

/// Round records from a session log or a trajectory export.
pub fn read_round_records(path: &Path) -> Result<Vec<RoundRecord>, StoreError> {
    let mut out = Vec::new();
    for (line, value) in read_lines(path)? {
        let parse_err = |e: serde_json::Error| StoreError::Parse { path: path.to_path_buf(), line, reason: e.to_string() };
        if value.get("event").is_some() {
            if let StoredEvent::RoundCompleted { record } = serde_json::from_value(value).map_err(parse_err)? {
                out.push(record);
            }
        } else {
            out.push(serde_json::from_value(value).map_err(parse_err)?);
        }
    }
    Ok(out)
}

/// Flat per-round table; one row per completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub session_id: String,
    pub participant_id: String,
    pub protocol: String,
    pub round_id: usize,
    pub layout: String,
    pub condition: String,
    pub chosen: String,
    pub dishes: String,
    pub onions: String,
    pub omega_delivery: Option<f64>,
    pub omega_onion: Option<f64>,
    pub omega_plating: Option<f64>,
    pub settings_visible: bool,
    pub ai_checkpoint: String,
    pub score: u32,
    pub incentive_dishes: u32,
    pub enjoyable: Option<u8>,
    pub predictable: Option<u8>,
    pub effective: Option<u8>,
    pub followed_settings: Option<u8>,
    pub pair: Option<usize>,
    pub preference: String,
}

pub fn round_rows(records: &[SessionRecord]) -> Vec<RoundRow> {
    let mut rows = Vec::new();
    for rec in records {
        let s = &rec.session;
        let mut played: Vec<&RoundRecord> = rec.rounds.iter().collect();
        played.sort_by_key(|r| r.round_id);
        for r in played {
            let spec = &s.schedule[r.round_id];
            let survey = rec.survey_for(r.round_id).map(|x| x.buckets);
            let w = r.weights.map(|c| c.to_weights().0);
            let level = |f: fn(&ControlSetting) -> bslab_core::ControlLevel| r.weights.map(|c| format!("{:?}", f(&c))).unwrap_or_default();
            rows.push(RoundRow {
                session_id: s.session_id.clone(),
                participant_id: s.participant_id.clone(),
                protocol: format!("{:?}", s.protocol),
                round_id: r.round_id,
                layout: r.layout.clone(),
                condition: format!("{:?}", r.condition),
                chosen: r.chosen.map(|c| format!("{c:?}")).unwrap_or_default(),
                dishes: level(|c| c.dishes),
                onions: level(|c| c.onions),
                omega_delivery: w.as_ref().map(|w| w[0]),
                omega_onion: w.as_ref().map(|w| w[1]),
                omega_plating: w.as_ref().map(|w| w[2]),
                settings_visible: spec.settings_visible,
                ai_checkpoint: r.ai_checkpoint.clone(),
                score: r.score,
                incentive_dishes: r.score,
                enjoyable: survey.map(|b| b.enjoyable),
                predictable: survey.map(|b| b.predictable),
                effective: survey.map(|b| b.effective),
                followed_settings: survey.and_then(|b| b.followed_settings),
                pair: spec.pair,
                preference: spec
                    .pair
                    .and_then(|p| rec.preference_for(p))
                    .map(|p| match p {
                        Preference::First => "first".to_string(),
                        Preference::Second => "second".to_string(),
                    })
                    .unwrap_or_default(),
            });
        }
    }
    rows
}

pub const ROUND_COLUMNS: [&str; 22] = [
    "session_id",
    "participant_id",
    "protocol",
    "round_id",
    "layout",
    "condition",
    "chosen",
    "dishes",
    "onions",
    "omega_delivery",
    "omega_onion",
    "omega_plating",
    "settings_visible",
    "ai_checkpoint",
    "score",
    "incentive_dishes",
    "enjoyable",
    "predictable",
    "effective",
    "followed_settings",
    "pair",
    "preference",
];

pub fn rounds_csv(records: &[SessionRecord]) -> Result<String, StoreError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(ROUND_COLUMNS)?;
    for row in round_rows(records) {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| StoreError::Io { path: PathBuf::from("<csv>"), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Every completed round as one JSON line, replayable.
pub fn trajectories_jsonl(records: &[SessionRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        let mut played: Vec<&RoundRecord> = rec.rounds.iter().collect();
        played.sort_by_key(|r| r.round_id);
        for r in played {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
    }
    out
}

/// Writes `rounds.csv` and `trajectories.jsonl` into `out_dir`.
pub fn export_sessions(records: &[SessionRecord], out_dir: &Path) -> Result<(PathBuf, PathBuf), StoreError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| StoreError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let csv_path = out_dir.join("rounds.csv");
    let jsonl_path = out_dir.join("trajectories.jsonl");
    fs::write(&csv_path, rounds_csv(records)?).map_err(io(&csv_path))?;
    fs::write(&jsonl_path, trajectories_jsonl(records)).map_err(io(&jsonl_path))?;
    Ok((csv_path, jsonl_path))
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Layout(#[from] layouts::LoadError),
    #[error("round {round_id}: {humans} human and {ais} AI actions for {steps} steps")]
    Length { round_id: usize, humans: usize, ais: usize, steps: u32 },
}

/// Re-runs a logged round through the environment; returns the score and
/// every state from reset to the end.
pub fn replay_round(record: &RoundRecord) -> Result<(u32, Vec<WorldState>), ReplayError> {
    let n = record.steps as usize;
    if record.human_actions.len() != n || record.ai_actions.len() != n {
        return Err(ReplayError::Length { round_id: record.round_id, humans: record.human_actions.len(), ais: record.ai_actions.len(), steps: record.steps });
    }
    let layout = layouts::with_horizon(&record.layout, record.steps.max(1))?;
    let mut state = reset(&layout);
    let mut frames = vec![state.clone()];
    let mut score = 0;
    for (h, a) in record.human_actions.iter().zip(&record.ai_actions) {
        let tr = state.advance([*h, *a]).expect("steps match the horizon");
        score += tr.events.iter().filter(|e| e.delivered).count() as u32;
        frames.push(state.clone());
    }
    Ok((score, frames))
}

