//! The `bslab` command line: train, sweep, crossplay, serve, replay,
//! export, and rerun from a run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint};
use crate::config::TrainConfig;
use crate::eval::{self, SweepOptions};
use crate::layouts;
use crate::session::actor::{Runtime, SessionManager};
use crate::session::registry::Registry;
use crate::session::store::{self, EventStore};
use crate::session::ProtocolConfig;
use crate::trainer::{self, Trainer, BEST_FILE};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(name = "bslab", version, about = "Train, evaluate and play with behavior-shaped Overcooked agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
pub enum Command {
    /// Train one run per seed and mark the best checkpoint.
    Train(TrainArgs),
    /// ω grid sweep of a BS checkpoint.
    Sweep(SweepArgs),
    /// Cross-play score matrix between checkpoints.
    Crossplay(CrossplayArgs),
    /// Run the session server.
    Serve(ServeArgs),
    /// Recompute scores of logged rounds, optionally printing frames.
    Replay(ReplayArgs),
    /// Export session logs to rounds.csv and trajectories.jsonl.
    Export(ExportArgs),
    /// Re-run a command from its run manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma list (`0,1,2`) or range (`0..5`).
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue each seed's run from its latest checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// `key=value` config overrides; they win over the file.
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Checkpoint directory, or a run directory with a BEST marker.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the checkpoint's layout.
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long, default_value_t = 25)]
    pub episodes: usize,
    /// ω values for both axes, comma separated.
    #[arg(long, default_value = "-1,0,1", allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CrossplayArgs {
    /// `label=dir`, repeated; a bare dir is labelled by its path.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<String>,
    #[arg(long)]
    pub layout: Option<String>,
    #[arg(long, default_value_t = 25)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    /// Directory searched for checkpoints.
    #[arg(long)]
    pub registry: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Session logs and the run manifest go here.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file overriding the protocol defaults (tick_ms, round lengths, ...).
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    /// Directory of static files served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Milliseconds between ticks; defaults to the protocol's tick_ms.
    #[arg(long)]
    pub pace_ms: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Session log (`.jsonl`) or trajectory export.
    pub log: PathBuf,
    #[arg(long)]
    pub round: Option<usize>,
    /// Print the kitchen after every tick.
    #[arg(long)]
    pub ascii: bool,
    /// Where to write the run manifest, if anywhere.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExportArgs {
    /// Directory of session logs.
    #[arg(long)]
    pub sessions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Write to a different directory than the original run.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Written once per run to `<out>/run_manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: serde_json::Value,
    pub config_path: Option<PathBuf>,
    /// The fully resolved training config, for train runs.
    pub config: Option<String>,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub build: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub fn build_id() -> String {
    format!("bslab {}{}", env!("CARGO_PKG_VERSION"), option_env!("BSLAB_GIT_REV").map(|r| format!(" ({r})")).unwrap_or_default())
}

/// Parses `argv` (without the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(std::iter::once(std::ffi::OsString::from("bslab")).chain(argv.into_iter().map(Into::into))) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train(a) => train(a, None),
        Command::Sweep(a) => sweep(a),
        Command::Crossplay(a) => crossplay(a),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay(a),
        Command::Export(a) => export(a),
        Command::Rerun(a) => rerun(a),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Train(_) => "train",
        Command::Sweep(_) => "sweep",
        Command::Crossplay(_) => "crossplay",
        Command::Serve(_) => "serve",
        Command::Replay(_) => "replay",
        Command::Export(_) => "export",
        Command::Rerun(_) => "rerun",
    }
}

struct ManifestWriter {
    path: PathBuf,
    manifest: RunManifest,
}

impl ManifestWriter {
    fn start(cmd: &Command, out: &Path, seeds: Vec<u64>, config_path: Option<PathBuf>, config: Option<String>) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| data(format!("{}: {e}", out.display())))?;
        let manifest = RunManifest {
            command: command_name(cmd).to_string(),
            args: serde_json::to_value(cmd).expect("args serialize"),
            config_path,
            config,
            seed: seeds.first().copied().unwrap_or(0),
            seeds,
            out: out.to_path_buf(),
            build: build_id(),
            started_unix_ms: now_ms(),
            finished_unix_ms: None,
        };
        let w = Self { path: out.join(MANIFEST_FILE), manifest };
        w.write()?;
        Ok(w)
    }

    fn write(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&self.path, text + "\n").map_err(|e| data(format!("{}: {e}", self.path.display())))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.manifest.finished_unix_ms = Some(now_ms());
        self.write()
    }
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| format!("bad seed range {s:?}"))?, b.trim().parse().map_err(|_| format!("bad seed range {s:?}"))?);
        if a >= b {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok((a..b).collect());
    }
    let seeds = s.split(',').map(|x| x.trim().parse::<u64>().map_err(|_| format!("bad seed {x:?}"))).collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let grid = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("bad grid value {x:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(grid)
}

/// Resolves config file, flags and overrides into the config of seed `None`
/// (the caller sets the seed per run).
pub fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            TrainConfig::parse(&text).map_err(usage)?
        }
        None => TrainConfig::default(),
    };
    let mut overrides: Vec<String> = a.overrides.clone();
    if let Some(l) = &a.layout {
        overrides.push(format!("layout={l}"));
    }
    cfg.apply_overrides(overrides.iter().map(String::as_str)).map_err(usage)?;
    layouts::resolve(&cfg.layout).map_err(usage)?;
    Ok(cfg)
}

fn train(a: TrainArgs, snapshot: Option<TrainConfig>) -> Result<(), CliError> {
    let base = match snapshot {
        Some(cfg) => cfg,
        None => resolve_train_config(&a)?,
    };
    let seeds = match (&a.seeds, a.seed) {
        (Some(s), _) => parse_seeds(s).map_err(usage)?,
        (None, Some(s)) => vec![s],
        (None, None) => vec![base.seed],
    };
    let cmd = Command::Train(a.clone());
    let manifest = ManifestWriter::start(&cmd, &a.out, seeds.clone(), a.config.clone(), Some(base.to_text()))?;
    let mut runs = Vec::new();
    for &seed in &seeds {
        let cfg = TrainConfig { seed, ..base.clone() };
        let dir = a.out.join(format!("seed_{seed}"));
        let latest = if a.resume && dir.is_dir() { checkpoint::list_run(&dir).map_err(data)?.pop() } else { None };
        let mut t = match latest {
            Some(ckpt_dir) => {
                let ckpt = Checkpoint::load(&ckpt_dir).map_err(data)?;
                let curve_path = dir.join(trainer::CURVE_FILE);
                let curve = if curve_path.is_file() { trainer::read_curve(&curve_path).map_err(data)? } else { Vec::new() };
                tracing::info!(seed, step = ckpt.meta.env_steps, "resuming from {}", ckpt_dir.display());
                Trainer::resume(cfg, ckpt, curve).map_err(data)?
            }
            None => Trainer::new(cfg).map_err(usage)?,
        };
        tracing::info!(seed, layout = t.layout.name(), "training into {}", dir.display());
        t.run(&dir).map_err(data)?;
        runs.push(trainer::scan_run(&dir).map_err(data)?);
    }
    let best = trainer::select_best_checkpoint(&runs).map_err(data)?;
    let rel = best.path.strip_prefix(&a.out).unwrap_or(&best.path);
    fs::write(a.out.join(BEST_FILE), format!("{}\n", rel.display())).map_err(data)?;
    println!("best checkpoint: {} (eval {:.3} at step {})", best.path.display(), best.eval_score, best.env_steps);
    manifest.finish()
}

/// A checkpoint directory, or the one a BEST marker in `path` points at.
pub fn resolve_checkpoint_dir(path: &Path) -> Result<PathBuf, CliError> {
    if path.join(checkpoint::META).is_file() {
        return Ok(path.to_path_buf());
    }
    let marker = path.join(BEST_FILE);
    if marker.is_file() {
        let rel = fs::read_to_string(&marker).map_err(data)?;
        return resolve_checkpoint_dir(&path.join(rel.trim()));
    }
    Err(CliError::Data(format!("{} is neither a checkpoint nor a run with a {BEST_FILE} marker", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(&resolve_checkpoint_dir(path)?).map_err(data)
}

fn eval_layout(flag: &Option<String>, ckpt: &Checkpoint) -> Result<Arc<bslab_core::Layout>, CliError> {
    let name = flag.clone().unwrap_or_else(|| ckpt.meta.layout.clone());
    let len = ckpt.meta.train.as_ref().map_or(400, |t| t.episode_length);
    layouts::with_horizon(&name, len).map_err(usage)
}

fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let grid = parse_grid(&a.grid).map_err(usage)?;
    if a.episodes == 0 {
        return Err(usage("--episodes must be positive"));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let layout = eval_layout(&a.layout, &ckpt)?;
    let manifest = ManifestWriter::start(&Command::Sweep(a.clone()), &a.out, vec![a.seed], None, None)?;
    let opts = SweepOptions { grid, episodes: a.episodes, greedy: a.greedy, seed: a.seed };
    let result = eval::weight_sweep(&ckpt, &layout, &opts).map_err(data)?;
    eval::write_sweep_csv(&result, &a.out.join("sweep.csv")).map_err(data)?;
    let summary = eval::summarize_sweep(&result);
    eval::write_summary_csv(&summary, &a.out.join("sweep_summary.csv")).map_err(data)?;
    for r in &result.rows {
        println!(
            "ω=({:+.2}, {:+.2})  deliveries {:.2}±{:.2}  onions {:.2}±{:.2}  platings {:.2}±{:.2}  score {:.2}",
            r.omega_dishes, r.omega_onions, r.deliveries_mean, r.deliveries_sd, r.onions_mean, r.onions_sd, r.platings_mean, r.platings_sd, r.score_mean
        );
    }
    manifest.finish()
}

fn crossplay(a: CrossplayArgs) -> Result<(), CliError> {
    let mut loaded = Vec::new();
    for spec in &a.checkpoints {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => (spec.clone(), PathBuf::from(spec)),
        };
        loaded.push((label, load_checkpoint(&path)?));
    }
    let layout = eval_layout(&a.layout, &loaded[0].1)?;
    let manifest = ManifestWriter::start(&Command::Crossplay(a.clone()), &a.out, vec![a.seed], None, None)?;
    let refs: Vec<(String, &Checkpoint)> = loaded.iter().map(|(l, c)| (l.clone(), c)).collect();
    let m = eval::crossplay(&refs, &layout, a.episodes, a.greedy, a.seed).map_err(data)?;
    eval::write_crossplay_csv(&m, &a.out.join("crossplay.csv")).map_err(data)?;
    for (label, row) in m.labels.iter().zip(&m.scores) {
        println!("{label:>16}  {}", row.iter().map(|s| format!("{s:6.2}")).collect::<Vec<_>>().join(" "));
    }
    manifest.finish()
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let protocol: ProtocolConfig = match &a.protocol {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => ProtocolConfig::default(),
    };
    let registry = Registry::load(&a.registry).map_err(data)?;
    if registry.is_empty() {
        return Err(CliError::Data(format!("no checkpoints under {}", a.registry.display())));
    }
    let manifest = ManifestWriter::start(&Command::Serve(a.clone()), &a.out, vec![], None, None)?;
    let store = EventStore::open(&a.out.join("sessions")).map_err(data)?;
    let pace = Duration::from_millis(a.pace_ms.unwrap_or(protocol.tick_ms));
    let rt = Runtime { registry: Arc::new(registry), store, protocol, pace };
    let runtime = tokio::runtime::Runtime::new().map_err(data)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await.map_err(|e| data(format!("binding {}:{}: {e}", a.host, a.port)))?;
        let addr = listener.local_addr().map_err(data)?;
        println!("listening on http://{addr}");
        for s in rt.registry.summary() {
            println!("  {:<22} BS: {:<40} SP: {}", s.layout, s.bs.as_deref().unwrap_or("-"), s.sp.as_deref().unwrap_or("-"));
        }
        let manager = Arc::new(SessionManager::new(rt));
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            println!("shutting down");
        };
        crate::server::serve(listener, manager, a.static_dir.clone(), shutdown).await.map_err(data)
    })?;
    manifest.finish()
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let manifest = match &a.out {
        Some(out) => Some(ManifestWriter::start(&Command::Replay(a.clone()), out, vec![], None, None)?),
        None => None,
    };
    let records = store::read_round_records(&a.log).map_err(data)?;
    let mut mismatches = 0;
    let mut seen = 0;
    for rec in records.iter().filter(|r| a.round.is_none_or(|n| r.round_id == n)) {
        seen += 1;
        let (score, frames) = store::replay_round(rec).map_err(data)?;
        if a.ascii {
            for (i, f) in frames.iter().enumerate().skip(1) {
                println!("-- {} round {} tick {i}", rec.session_id, rec.round_id);
                println!("{}", f.render_ascii());
            }
        }
        let ok = score == rec.score;
        mismatches += usize::from(!ok);
        println!("{} round {} ({}): logged {} replayed {} {}", rec.session_id, rec.round_id, rec.layout, rec.score, score, if ok { "ok" } else { "MISMATCH" });
    }
    if let Some(n) = a.round {
        if seen == 0 {
            return Err(CliError::Data(format!("no round {n} in {}", a.log.display())));
        }
    }
    if mismatches > 0 {
        return Err(CliError::Data(format!("{mismatches} round(s) replayed to a different score")));
    }
    match manifest {
        Some(m) => m.finish(),
        None => Ok(()),
    }
}

fn export(a: ExportArgs) -> Result<(), CliError> {
    let manifest = ManifestWriter::start(&Command::Export(a.clone()), &a.out, vec![], None, None)?;
    let store = EventStore::open(&a.sessions).map_err(data)?;
    let records = store.load_all().map_err(data)?;
    let (csv, jsonl) = store::export_sessions(&records, &a.out).map_err(data)?;
    println!("{} sessions -> {} and {}", records.len(), csv.display(), jsonl.display());
    manifest.finish()
}

fn rerun(a: RerunArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.manifest).map_err(|e| usage(format!("{}: {e}", a.manifest.display())))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", a.manifest.display())))?;
    let mut cmd: Command = serde_json::from_value(m.args).map_err(data)?;
    if let Some(out) = a.out {
        match &mut cmd {
            Command::Train(x) => x.out = out,
            Command::Sweep(x) => x.out = out,
            Command::Crossplay(x) => x.out = out,
            Command::Serve(x) => x.out = out,
            Command::Replay(x) => x.out = Some(out),
            Command::Export(x) => x.out = out,
            Command::Rerun(_) => return Err(usage("a manifest cannot record a rerun")),
        }
    }
    match cmd {
        Command::Train(x) => {
            let snapshot = m.config.as_deref().map(TrainConfig::parse).transpose().map_err(data)?;
            train(x, snapshot)
        }
        Command::Rerun(_) => Err(usage("a manifest cannot record a rerun")),
        other => run(other),
    }
}

