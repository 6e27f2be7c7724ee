//! One task per session. Client messages, ticks and queries all pass
//! through the session's single queue, so a session never runs two things
//! at once; many sessions run side by side against shared checkpoints.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use bslab_core::features::observe_into;
use bslab_core::policy::RecurrentState;
use bslab_core::rng::{self, Rng};
use bslab_core::{reset, Action, BehaviorWeights, PolicyParameters, WorldState};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio::time::{sleep_until, Instant};

use super::protocol::{ClientMsg, ServerMsg, SessionSummary};
use super::registry::Registry;
use super::store::{EventStore, SessionRecord, StoreError, StoredEvent};
use super::{create_session, survey_statements, ChoiceAnswer, Condition, Protocol, ProtocolConfig, RoundRecord, Session, SessionError, SurveyResponse};
use crate::layouts;

const ROUND_STREAM: u64 = 0x20D;

/// Shared, immutable service settings.
#[derive(Debug, Clone)]
pub struct Runtime {
    pub registry: Arc<Registry>,
    pub store: EventStore,
    pub protocol: ProtocolConfig,
    /// Wall-clock time between ticks; zero runs rounds as fast as possible.
    pub pace: Duration,
}

pub enum SessionInput {
    /// A connection joined; a later attach replaces an earlier one.
    Attach(u64, mpsc::UnboundedSender<ServerMsg>),
    Client(ClientMsg),
    /// A connection closed; ignored unless it is the current one.
    Detach(u64),
    Query(oneshot::Sender<SessionRecord>),
    Shutdown,
}

#[derive(Debug)]
enum Phase {
    Idle,
    AwaitChoice(usize),
    AwaitSettings(usize),
    Playing(Box<RoundRun>),
    AwaitSurvey(usize),
    AwaitPreference(usize),
    Done,
}

#[derive(Debug)]
struct RoundRun {
    round_id: usize,
    attempt: u32,
    steps: u32,
    state: WorldState,
    policy: Arc<crate::checkpoint::Checkpoint>,
    weights: BehaviorWeights,
    rng: Rng,
    ai_state: RecurrentState,
    buffered: Option<Action>,
    record: RoundRecord,
    started: Instant,
    next_tick: Instant,
}

struct Actor {
    rt: Arc<Runtime>,
    record: SessionRecord,
    out: Option<mpsc::UnboundedSender<ServerMsg>>,
    conn: u64,
    phase: Phase,
    completed_logged: bool,
}

impl Actor {
    fn send(&self, msg: ServerMsg) {
        if let Some(out) = &self.out {
            let _ = out.send(msg);
        }
    }

    fn persist(&mut self, event: StoredEvent) -> Result<(), SessionError> {
        self.record.apply(&event)?;
        if let Err(e) = self.rt.store.append(&self.record.session.session_id, &event) {
            tracing::error!("persisting session event: {e}");
        }
        Ok(())
    }

    fn session(&self) -> &Session {
        &self.record.session
    }

    /// Works out what the session is waiting for and prompts the client.
    fn enter_next(&mut self) {
        if self.out.is_none() {
            self.phase = Phase::Idle;
            return;
        }
        let s = self.session();
        if s.protocol == Protocol::ControlStudy {
            if let Some(r) = self.record.rounds.iter().map(|r| r.round_id).filter(|id| self.record.survey_for(*id).is_none()).min() {
                let visible = s.schedule[r].settings_visible;
                self.phase = Phase::AwaitSurvey(r);
                self.send(ServerMsg::SurveyRequest { round_id: r, statements: survey_statements(visible).into_iter().map(String::from).collect() });
                return;
            }
        }
        for pair in 0..s.pairs() {
            let done = s.schedule.iter().filter(|r| r.pair == Some(pair)).all(|r| self.record.completed_round(r.round_id).is_some());
            if done && self.record.preference_for(pair).is_none() {
                let layout = s.schedule.iter().find(|r| r.pair == Some(pair)).map(|r| r.layout.clone()).unwrap_or_default();
                self.phase = Phase::AwaitPreference(pair);
                self.send(ServerMsg::PreferenceRequest { pair, layout });
                return;
            }
        }
        let Some(r) = self.record.next_round() else {
            self.finish();
            return;
        };
        let spec = &s.schedule[r];
        if spec.condition == Condition::Choice && spec.chosen.is_none() {
            let layout = spec.layout.clone();
            self.phase = Phase::AwaitChoice(r);
            self.send(ServerMsg::ChoiceRequest { round_id: r, layout, options: vec![Condition::Controllable, Condition::Fixed, Condition::Hidden] });
            return;
        }
        self.send_intro(r);
        if self.session().schedule[r].needs_settings() {
            self.phase = Phase::AwaitSettings(r);
        } else {
            self.start_round(r);
        }
    }

    fn send_intro(&self, r: usize) {
        let spec = &self.session().schedule[r];
        self.send(ServerMsg::RoundIntro {
            round_id: r,
            layout: spec.layout.clone(),
            condition: spec.condition,
            chosen: spec.chosen,
            visible_settings: if spec.settings_visible { spec.weights } else { None },
            duration: spec.duration_s,
            steps: self.rt.protocol.steps(spec.duration_s),
            needs_settings: spec.needs_settings(),
        });
    }

    fn start_round(&mut self, r: usize) {
        let spec = self.session().schedule[r].clone();
        let Some(entry) = self.rt.registry.by_id(&spec.ai_checkpoint) else {
            self.send(ServerMsg::Error { message: format!("checkpoint {} is no longer in the registry", spec.ai_checkpoint) });
            self.phase = Phase::Idle;
            return;
        };
        let steps = self.rt.protocol.steps(spec.duration_s).max(1);
        let layout = match layouts::with_horizon(&spec.layout, steps) {
            Ok(l) => l,
            Err(e) => {
                self.send(ServerMsg::Error { message: e.to_string() });
                self.phase = Phase::Idle;
                return;
            }
        };
        let attempt = self.record.abandoned.iter().filter(|a| a.round_id == r).count() as u32;
        let ai_seed = rng::derive_seed(self.session().seed, &[ROUND_STREAM, r as u64, attempt as u64]);
        let policy = Arc::clone(&entry.checkpoint);
        let now = Instant::now();
        let record = RoundRecord {
            session_id: self.session().session_id.clone(),
            round_id: r,
            attempt,
            layout: spec.layout.clone(),
            condition: spec.condition,
            chosen: spec.chosen,
            weights: spec.weights,
            ai_checkpoint: spec.ai_checkpoint.clone(),
            ai_seed,
            steps,
            human_actions: Vec::with_capacity(steps as usize),
            ai_actions: Vec::with_capacity(steps as usize),
            tick_ms: Vec::with_capacity(steps as usize),
            score: 0,
        };
        self.phase = Phase::Playing(Box::new(RoundRun {
            round_id: r,
            attempt,
            steps,
            state: reset(&layout),
            ai_state: policy.params.zero_state(),
            policy,
            weights: spec.ai_weights(),
            rng: rng::stream(ai_seed, &[]),
            buffered: None,
            record,
            started: now,
            next_tick: now + self.rt.pace,
        }));
    }

    fn tick(&mut self) {
        let Phase::Playing(run) = &mut self.phase else { return };
        let human = run.buffered.take().unwrap_or(Action::Stay);
        let ai = ai_action(&run.policy.params, &run.state, &run.weights, &mut run.ai_state, &mut run.rng);
        let tr = run.state.advance([human, ai]).expect("round ends at the horizon");
        run.record.score += tr.events.iter().filter(|e| e.delivered).count() as u32;
        run.record.human_actions.push(human);
        run.record.ai_actions.push(ai);
        run.record.tick_ms.push(run.started.elapsed().as_millis() as u64);
        run.next_tick += self.rt.pace;
        let msg = ServerMsg::State {
            round_id: run.round_id,
            tick: run.state.t,
            state: run.state.clone(),
            score: self.rt.protocol.show_score.then_some(run.record.score),
            time_left: run.state.time_left(),
        };
        let finished = run.state.t >= run.steps;
        self.send(msg);
        if finished {
            let Phase::Playing(run) = std::mem::replace(&mut self.phase, Phase::Idle) else { unreachable!() };
            let (round_id, score) = (run.round_id, run.record.score);
            if let Err(e) = self.persist(StoredEvent::RoundCompleted { record: run.record }) {
                tracing::error!("round {round_id}: {e}");
            }
            self.send(ServerMsg::RoundEnd { round_id, score });
            self.enter_next();
        }
    }

    fn abandon(&mut self) {
        if let Phase::Playing(run) = std::mem::replace(&mut self.phase, Phase::Idle) {
            let ev = StoredEvent::RoundAbandoned { round_id: run.round_id, attempt: run.attempt, ticks: run.state.t };
            let _ = self.persist(ev);
        }
    }

    fn finish(&mut self) {
        self.phase = Phase::Done;
        if !self.completed_logged {
            if self.record.session.status != super::SessionStatus::Completed {
                let _ = self.persist(StoredEvent::SessionCompleted);
            }
            self.completed_logged = true;
        }
        let r = &self.record;
        self.send(ServerMsg::SessionEnd {
            summary: SessionSummary {
                rounds: r.rounds.len(),
                total_score: r.rounds.iter().map(|x| x.score).sum(),
                surveys: r.surveys.len(),
                preferences: r.preferences.len(),
                choices: r.choices.len(),
            },
        });
    }

    fn reject(&self, message: impl Into<String>) {
        self.send(ServerMsg::Error { message: message.into() });
    }

    fn handle_client(&mut self, msg: ClientMsg) {
        match (&mut self.phase, msg) {
            (Phase::Playing(run), ClientMsg::Input { action }) => run.buffered = Some(action),
            (_, ClientMsg::Input { .. }) => {}
            (Phase::AwaitSettings(r), ClientMsg::SubmitSettings { dishes, onions }) => {
                let r = *r;
                let settings = bslab_core::ControlSetting::new(dishes, onions);
                match self.persist(StoredEvent::SettingsSubmitted { round_id: r, settings }) {
                    Ok(()) => {
                        let w = settings.to_weights().0;
                        self.send(ServerMsg::SettingsConfirmed { dishes, onions, weights: [w[0], w[1], w[2]] });
                        self.start_round(r);
                    }
                    Err(e) => self.reject(e.to_string()),
                }
            }
            (Phase::AwaitChoice(r), ClientMsg::Choice { condition, settings }) => {
                let r = *r;
                match self.persist(StoredEvent::ChoiceRecorded { round_id: r, answer: ChoiceAnswer { condition, settings } }) {
                    Ok(()) => self.enter_next(),
                    Err(e) => self.reject(e.to_string()),
                }
            }
            (Phase::AwaitSurvey(r), ClientMsg::Survey { buckets }) => {
                let r = *r;
                match self.persist(StoredEvent::SurveyRecorded { response: SurveyResponse { round_id: r, buckets } }) {
                    Ok(()) => self.enter_next(),
                    Err(e) => self.reject(e.to_string()),
                }
            }
            (Phase::AwaitPreference(p), ClientMsg::Preference { preferred }) => {
                let p = *p;
                match self.persist(StoredEvent::PreferenceRecorded { pair: p, preferred }) {
                    Ok(()) => self.enter_next(),
                    Err(e) => self.reject(e.to_string()),
                }
            }
            (Phase::Playing(_), ClientMsg::Survey { .. }) => self.reject("survey submitted before the round ended"),
            (_, ClientMsg::Join { .. }) => self.reject("already joined"),
            (phase, other) => {
                let waiting = match phase {
                    Phase::AwaitChoice(_) => "a choice",
                    Phase::AwaitSettings(_) => "settings",
                    Phase::AwaitSurvey(_) => "a survey",
                    Phase::AwaitPreference(_) => "a preference",
                    Phase::Playing(_) => "inputs",
                    Phase::Done => "nothing (session finished)",
                    Phase::Idle => "a join",
                };
                let kind = serde_json::to_value(&other).ok().and_then(|v| v.get("type").and_then(|t| t.as_str().map(String::from))).unwrap_or_default();
                self.reject(format!("unexpected {kind}: waiting for {waiting}"));
            }
        }
    }

    async fn run(mut self, mut rx: mpsc::UnboundedReceiver<SessionInput>) {
        loop {
            let deadline = match &self.phase {
                Phase::Playing(run) => Some(run.next_tick),
                _ => None,
            };
            tokio::select! {
                biased;
                input = rx.recv() => match input {
                    None | Some(SessionInput::Shutdown) => {
                        if matches!(self.phase, Phase::Playing(_)) {
                            self.reject("server shutting down; round abandoned");
                        }
                        self.abandon();
                        break;
                    }
                    Some(SessionInput::Attach(conn, out)) => {
                        self.abandon();
                        if self.out.is_some() {
                            self.reject("another connection joined this session");
                        }
                        self.out = Some(out);
                        self.conn = conn;
                        let s = self.session();
                        let next = self.record.next_round().unwrap_or(s.schedule.len());
                        self.send(ServerMsg::Joined { session_id: s.session_id.clone(), protocol: s.protocol, total_rounds: s.schedule.len(), next_round: next });
                        self.enter_next();
                    }
                    Some(SessionInput::Detach(conn)) => {
                        if conn != self.conn || self.out.is_none() {
                            continue;
                        }
                        self.abandon();
                        self.out = None;
                        self.phase = Phase::Idle;
                    }
                    Some(SessionInput::Client(msg)) => self.handle_client(msg),
                    Some(SessionInput::Query(reply)) => {
                        let _ = reply.send(self.record.clone());
                    }
                },
                _ = sleep_until(deadline.unwrap_or_else(Instant::now)), if deadline.is_some() => self.tick(),
            }
        }
    }
}

/// The AI seat's sampled action for one tick.
pub fn ai_action(params: &PolicyParameters, state: &WorldState, weights: &BehaviorWeights, rec: &mut RecurrentState, rng: &mut Rng) -> Action {
    let mut obs = Vec::with_capacity(params.config.input_dim);
    observe_into(state, 1, &mut obs);
    obs.extend_from_slice(weights.as_slice());
    let (dist, _, next) = params.forward(&obs, rec).expect("registry checkpoints match their layouts");
    *rec = next;
    Action::from_index(dist.sample_index(rng)).unwrap_or(Action::Stay)
}

/// Re-derives the AI's actions for a logged round from its seed and the
/// logged human actions.
pub fn resimulate_ai(record: &RoundRecord, params: &PolicyParameters) -> Result<Vec<Action>, layouts::LoadError> {
    let layout = layouts::with_horizon(&record.layout, record.steps.max(1))?;
    let weights = record.weights.map(|w| w.to_weights()).unwrap_or_else(|| BehaviorWeights(vec![0.0; 3]));
    let mut state = reset(&layout);
    let mut rec = params.zero_state();
    let mut r = rng::stream(record.ai_seed, &[]);
    let mut out = Vec::new();
    for h in &record.human_actions {
        let a = ai_action(params, &state, &weights, &mut rec, &mut r);
        out.push(a);
        state.advance([*h, a]).expect("steps match the horizon");
    }
    Ok(out)
}

#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::UnboundedSender<SessionInput>,
}

impl SessionHandle {
    pub fn send(&self, input: SessionInput) -> bool {
        self.tx.send(input).is_ok()
    }

    pub async fn record(&self) -> Option<SessionRecord> {
        let (tx, rx) = oneshot::channel();
        self.tx.send(SessionInput::Query(tx)).ok()?;
        rx.await.ok()
    }
}

/// Live sessions, created on demand or revived from the store.
pub struct SessionManager {
    pub rt: Arc<Runtime>,
    sessions: Mutex<HashMap<String, (SessionHandle, JoinHandle<()>)>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManagerError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("session {0} already exists")]
    Exists(String),
    #[error("no session {0}")]
    NotFound(String),
}

impl SessionManager {
    pub fn new(rt: Runtime) -> Self {
        Self { rt: Arc::new(rt), sessions: Mutex::new(HashMap::new()) }
    }

    pub fn create(&self, protocol: Protocol, participant_id: &str, seed: u64) -> Result<Session, ManagerError> {
        let session = create_session(protocol, participant_id, &self.rt.registry, seed, &self.rt.protocol)?;
        let id = session.session_id.clone();
        if self.sessions.lock().expect("session map").contains_key(&id) || self.rt.store.path_of(&id).exists() {
            return Err(ManagerError::Exists(id));
        }
        self.rt.store.append(&id, &StoredEvent::SessionCreated { session: session.clone() })?;
        self.spawn(SessionRecord::new(session.clone()));
        Ok(session)
    }

    fn spawn(&self, record: SessionRecord) -> SessionHandle {
        let id = record.session.session_id.clone();
        let (tx, rx) = mpsc::unbounded_channel();
        let completed_logged = record.session.status == super::SessionStatus::Completed;
        let actor = Actor { rt: Arc::clone(&self.rt), record, out: None, conn: 0, phase: Phase::Idle, completed_logged };
        let join = tokio::spawn(actor.run(rx));
        let handle = SessionHandle { tx };
        self.sessions.lock().expect("session map").insert(id, (handle.clone(), join));
        handle
    }

    /// Live handle, reviving the session from its log if needed.
    pub fn get(&self, session_id: &str) -> Result<SessionHandle, ManagerError> {
        if let Some((h, _)) = self.sessions.lock().expect("session map").get(session_id) {
            return Ok(h.clone());
        }
        if !self.rt.store.path_of(session_id).exists() {
            return Err(ManagerError::NotFound(session_id.to_string()));
        }
        let record = self.rt.store.load(session_id)?;
        Ok(self.spawn(record))
    }

    pub fn live_count(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    /// Stops every session, abandoning rounds in progress, and waits for them.
    pub async fn shutdown(&self) {
        let drained: Vec<_> = self.sessions.lock().expect("session map").drain().collect();
        for (_, (h, _)) in &drained {
            h.send(SessionInput::Shutdown);
        }
        for (_, (_, join)) in drained {
            let _ = join.await;
        }
    }
}
