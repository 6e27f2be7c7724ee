#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use bslab::checkpoint::Checkpoint;
use bslab::config::TrainConfig;
use bslab::core::rollout::TrainMode;
use bslab::core::rng;
use bslab::core::{Action, ControlLevel};
use bslab::layouts;
use bslab::session::actor::{Runtime, SessionManager};
use bslab::session::protocol::{ClientMsg, ServerMsg};
use bslab::session::registry::Registry;
use bslab::session::store::EventStore;
use bslab::session::{Condition, Preference, Protocol, ProtocolConfig, Session, SurveyBuckets};
use bslab::trainer::Trainer;
use futures_util::{SinkExt, StreamExt};
use rand::Rng;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;

/// A config that trains in well under a second.
pub fn tiny_config(layout: &str, mode: TrainMode, seed: u64) -> TrainConfig {
    TrainConfig {
        layout: layout.into(),
        mode,
        seed,
        total_env_steps: 400,
        episode_length: 50,
        workers: 2,
        envs_per_worker: 1,
        rollout_length: 50,
        hidden_dim: 8,
        checkpoint_every: 200,
        eval_episodes: 2,
        ..TrainConfig::default()
    }
}

/// An untrained checkpoint: the initial parameters of a default-sized policy.
pub fn init_checkpoint(layout: &str, mode: TrainMode, seed: u64) -> Checkpoint {
    let cfg = TrainConfig { layout: layout.into(), mode, seed, ..TrainConfig::default() };
    let t = Trainer::new(cfg).unwrap();
    Checkpoint { meta: t.meta(Some(0.0)), params: t.params.clone(), optimizer: None }
}

/// BS and SP checkpoints for every built-in layout under `root`.
pub fn write_registry(root: &Path, modes: &[TrainMode]) {
    for (i, layout) in layouts::NAMES.iter().enumerate() {
        for &mode in modes {
            let name = bslab::config::mode_name(mode);
            init_checkpoint(layout, mode, i as u64).save(&root.join(layout).join(name)).unwrap();
        }
    }
}

pub struct TestServer {
    pub addr: SocketAddr,
    pub manager: Arc<SessionManager>,
    stop: Option<oneshot::Sender<()>>,
    join: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl TestServer {
    pub async fn start(registry: Registry, data: &Path, protocol: ProtocolConfig, pace: Duration) -> Self {
        let store = EventStore::open(data).unwrap();
        let manager = Arc::new(SessionManager::new(Runtime { registry: Arc::new(registry), store, protocol, pace }));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel::<()>();
        let join = tokio::spawn(bslab::server::serve(listener, Arc::clone(&manager), None, async {
            let _ = rx.await;
        }));
        Self { addr, manager, stop: Some(tx), join: Some(join) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub async fn create(&self, protocol: Protocol, participant: &str, seed: u64) -> Session {
        let resp = reqwest::Client::new()
            .post(self.url("/sessions"))
            .json(&serde_json::json!({ "protocol": protocol, "participant_id": participant, "seed": seed }))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 201, "{}", resp.text().await.unwrap_or_default());
        resp.json().await.unwrap()
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(j) = self.join.take() {
            j.await.unwrap().unwrap();
        }
    }
}

/// Everything a scripted client saw and sent.
#[derive(Debug, Default)]
pub struct Transcript {
    pub received: Vec<ServerMsg>,
    /// Raw text frames as received.
    pub frames: Vec<String>,
    pub sent: Vec<ClientMsg>,
}

impl Transcript {
    pub fn count(&self, f: impl Fn(&ServerMsg) -> bool) -> usize {
        self.received.iter().filter(|m| f(m)).count()
    }

    /// Raw frames grouped by the round they belong to (from its intro up to
    /// and including its end).
    pub fn round_frames(&self) -> Vec<(usize, Condition, Option<Condition>, Vec<String>)> {
        let mut out: Vec<(usize, Condition, Option<Condition>, Vec<String>)> = Vec::new();
        let mut open = false;
        for (m, f) in self.received.iter().zip(&self.frames) {
            match m {
                ServerMsg::RoundIntro { round_id, condition, chosen, .. } => {
                    out.push((*round_id, *condition, *chosen, vec![f.clone()]));
                    open = true;
                }
                ServerMsg::RoundEnd { .. } if open => {
                    out.last_mut().unwrap().3.push(f.clone());
                    open = false;
                }
                _ if open => out.last_mut().unwrap().3.push(f.clone()),
                _ => {}
            }
        }
        out
    }
}

pub enum Stop {
    /// Play to `session_end`.
    End,
    /// Drop the socket after this many state messages.
    AfterStates(usize),
}

/// A headless participant: joins, answers every prompt, and sends a random
/// move after each state it receives.
pub async fn play(addr: SocketAddr, session_id: &str, seed: u64, stop: Stop) -> Transcript {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let (mut sink, mut stream) = ws.split();
    let mut t = Transcript::default();
    let mut r = rng::stream(seed, &[]);
    let mut states = 0usize;
    let send = |t: &mut Transcript, m: ClientMsg| {
        let text = serde_json::to_string(&m).unwrap();
        t.sent.push(m);
        Message::text(text)
    };
    let join = send(&mut t, ClientMsg::Join { session_id: session_id.into() });
    sink.send(join).await.unwrap();
    let level = |r: &mut rng::Rng| [ControlLevel::Discourage, ControlLevel::Neutral, ControlLevel::Encourage][r.random_range(0..3)];
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(60), stream.next()).await.expect("server went quiet");
        let Some(Ok(frame)) = frame else { break };
        let Message::Text(text) = frame else { continue };
        let msg: ServerMsg = serde_json::from_str(text.as_str()).unwrap_or_else(|e| panic!("unparseable frame {text}: {e}"));
        t.frames.push(text.to_string());
        t.received.push(msg.clone());
        let reply = match msg {
            ServerMsg::RoundIntro { needs_settings: true, .. } => Some(ClientMsg::SubmitSettings { dishes: level(&mut r), onions: level(&mut r) }),
            ServerMsg::State { .. } => {
                states += 1;
                if let Stop::AfterStates(n) = stop {
                    if states >= n {
                        break;
                    }
                }
                Some(ClientMsg::Input { action: Action::from_index(r.random_range(0..6)).unwrap() })
            }
            ServerMsg::SurveyRequest { statements, .. } => {
                let mut b = || r.random_range(0..=20u8);
                let buckets = SurveyBuckets { enjoyable: b(), predictable: b(), effective: b(), followed_settings: (statements.len() == 4).then(&mut b) };
                Some(ClientMsg::Survey { buckets })
            }
            ServerMsg::PreferenceRequest { .. } => Some(ClientMsg::Preference { preferred: if r.random_bool(0.5) { Preference::First } else { Preference::Second } }),
            ServerMsg::ChoiceRequest { options, .. } => {
                let condition = options[r.random_range(0..options.len())];
                let settings = (condition == Condition::Controllable).then(|| bslab::core::ControlSetting::new(level(&mut r), level(&mut r)));
                Some(ClientMsg::Choice { condition, settings })
            }
            ServerMsg::SessionEnd { .. } => break,
            ServerMsg::Error { message } => panic!("server error: {message}"),
            _ => None,
        };
        if let Some(m) = reply {
            let frame = send(&mut t, m);
            if sink.send(frame).await.is_err() {
                break;
            }
        }
    }
    let _ = sink.close().await;
    t
}

/// Short rounds so whole sessions finish quickly.
pub fn quick_protocol() -> ProtocolConfig {
    ProtocolConfig { tick_ms: 200, control_round_s: 4.0, pairwise_round_s: 3.0, ..ProtocolConfig::default() }
}

/// Asserts no Hidden round sent anything that reveals ω; returns how many
/// Hidden rounds were seen.
pub fn check_hidden_rounds_leak_nothing(t: &Transcript) -> usize {
    let mut hidden = 0;
    for (round, cond, chosen, frames) in t.round_frames() {
        if chosen.unwrap_or(cond) != Condition::Hidden {
            continue;
        }
        hidden += 1;
        for f in &frames {
            for needle in ["visible_settings", "settings_confirmed", "weights", "omega", "Encourage", "Neutral", "Discourage"] {
                assert!(!f.contains(needle), "hidden round {round} leaked {needle}: {f}");
            }
        }
    }
    hidden
}
