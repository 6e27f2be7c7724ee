//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails.
//!
//! The trained policies go to a temporary directory, or to
//! `BSLAB_ACCEPTANCE_DIR` when set, where finished runs are reused.
//! Training from scratch takes about 20 minutes on one core.

mod common;
#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bslab::checkpoint::{self, Checkpoint};
use bslab::config::{mode_name, TrainConfig};
use bslab::core::rollout::TrainMode;
use bslab::core::Layout;
use bslab::eval::{self, SweepOptions, SweepResult};
use bslab::layouts;
use bslab::session::protocol::ServerMsg;
use bslab::session::registry::Registry;
use bslab::session::store::{read_round_records, replay_round};
use bslab::session::{Protocol, ProtocolConfig};
use bslab::trainer::{self, Trainer, CURVE_FILE};
use common::{check_hidden_rounds_leak_nothing, play, write_registry, Stop, TestServer};

/// Mean deliveries per 400-step cramped_room episode with both chefs
/// acting uniformly at random, over 6000 episodes (seeds 0, 1, 2).
const RANDOM_BASELINE: f64 = 0.0525;

const SEED: u64 = 0;
const EVAL_EPISODES: usize = 100;
/// A short self-play run; it only has to be a real SP checkpoint.
const SP_STEPS: u64 = 256_000;

type Outcome = Result<String, String>;

#[derive(Default)]
struct Report {
    failed: usize,
    total: usize,
}

impl Report {
    fn check(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        self.total += 1;
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}  [{secs:.1}s]  {detail}"),
            Err(why) => {
                self.failed += 1;
                println!("FAIL  {name}  [{secs:.1}s]  {why}");
            }
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// A finished training run: its directory, the final and the best checkpoint.
struct Run {
    dir: PathBuf,
    last: Checkpoint,
    best: Checkpoint,
    train_secs: f64,
}

fn train(root: &Path, layout: &str, mode: TrainMode, total: u64) -> Result<Run, String> {
    let cfg = TrainConfig { layout: layout.into(), mode, seed: SEED, total_env_steps: total, ..TrainConfig::default() };
    let dir = root.join(format!("{layout}_{}", mode_name(mode)));
    let done = |dir: &Path| -> Option<PathBuf> {
        let last = checkpoint::list_run(dir).ok()?.pop()?;
        let ck = Checkpoint::load(&last).ok()?;
        (ck.meta.train.as_ref() == Some(&cfg) && ck.meta.env_steps + cfg.steps_per_iteration() > total).then_some(last)
    };
    let start = Instant::now();
    let last = match done(&dir) {
        Some(last) => last,
        None => {
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| e.to_string())?;
            }
            eprintln!("training {layout} {} for {total} steps", mode_name(mode));
            Trainer::new(cfg.clone()).map_err(|e| e.to_string())?.run(&dir).map_err(|e| e.to_string())?;
            done(&dir).ok_or("training left no final checkpoint")?
        }
    };
    let best = trainer::select_best_checkpoint(&[trainer::scan_run(&dir).map_err(|e| e.to_string())?]).map_err(|e| e.to_string())?;
    Ok(Run {
        last: Checkpoint::load(&last).map_err(|e| e.to_string())?,
        best: Checkpoint::load(&best.path).map_err(|e| e.to_string())?,
        dir,
        train_secs: start.elapsed().as_secs_f64(),
    })
}

fn horizon(layout: &str) -> Arc<Layout> {
    layouts::with_horizon(layout, TrainConfig::default().episode_length).unwrap()
}

fn main() {
    // panics become FAIL lines; the default hook would print them twice
    panic::set_hook(Box::new(|_| {}));
    let tmp;
    let root = match std::env::var_os("BSLAB_ACCEPTANCE_DIR") {
        Some(p) => PathBuf::from(p),
        None => {
            tmp = tempfile::tempdir().unwrap();
            tmp.path().to_path_buf()
        }
    };
    let mut report = Report::default();

    report.check("environment oracle", || {
        support::env::scripted_delivery();
        support::env::random_fuzz();
        support::env::replay_is_deterministic();
        Ok(format!("one shared reward at step {}; 10,000-step fuzz on 5 layouts", support::env::DELIVERY_STEP))
    });

    report.check("numerical core", || {
        support::numeric::gae_matches_oracle();
        support::numeric::gae_lambda_one();
        support::numeric::gae_lambda_zero();
        support::numeric::ppo_gradient_check();
        Ok("GAE within 1e-10 on 100 streams; λ limits; PPO gradient within 1e-4".into())
    });

    let cramped = train(&root, "cramped_room", TrainMode::BehaviorShaping, TrainConfig::default().total_env_steps);
    report.check("training smoke", || {
        let run = cramped.as_ref().map_err(|e| e.clone())?;
        let layout = horizon("cramped_room");
        let eps = eval::self_play_eval(&run.last.params, &layout, &run.last.meta.behaviors, EVAL_EPISODES, false, 0xACCE);
        let final_mean = eval::mean(&eps.iter().map(|e| e.deliveries as f64).collect::<Vec<_>>());

        // the recorded baseline still describes this environment
        let fresh = eval::random_baseline(&layout, 2000, 0xBA5E);
        let fresh_mean = eval::mean(&fresh.iter().map(|&d| d as f64).collect::<Vec<_>>());
        let se = (RANDOM_BASELINE * (1.0 - RANDOM_BASELINE) / fresh.len() as f64).sqrt();
        ensure((fresh_mean - RANDOM_BASELINE).abs() <= 4.0 * se, || format!("random baseline drifted: recorded {RANDOM_BASELINE}, measured {fresh_mean}"))?;

        ensure(run.last.meta.env_steps <= 5_000_000, || format!("trained {} steps", run.last.meta.env_steps))?;
        ensure(final_mean >= 10.0 * RANDOM_BASELINE, || format!("final mean deliveries {final_mean:.3} < 10 × {RANDOM_BASELINE}"))?;

        let curve = trainer::read_curve(&run.dir.join(CURVE_FILE)).map_err(|e| e.to_string())?;
        let q = curve.len() / 4;
        ensure(q > 0, || format!("only {} curve points", curve.len()))?;
        let first = eval::mean(&curve[..q].iter().map(|r| r.mean_deliveries).collect::<Vec<_>>());
        let last = eval::mean(&curve[curve.len() - q..].iter().map(|r| r.mean_deliveries).collect::<Vec<_>>());
        ensure(last > first, || format!("last quartile {last:.3} does not exceed first {first:.3}"))?;
        Ok(format!(
            "{} steps in {:.0}s; final {final_mean:.2} deliveries/episode vs baseline {RANDOM_BASELINE} ({:.0}×); curve quartiles {first:.2} → {last:.2}",
            run.last.meta.env_steps,
            run.train_secs,
            final_mean / RANDOM_BASELINE
        ))
    });

    let ring = train(&root, "coordination_ring", TrainMode::BehaviorShaping, TrainConfig::default().total_env_steps);
    let mut sweeps: Vec<(String, Result<SweepResult, String>)> = Vec::new();
    report.check("omega sweep reproduction", || {
        let mut details = Vec::new();
        let mut problems = Vec::new();
        for (name, run) in [("cramped_room", &cramped), ("coordination_ring", &ring)] {
            let run = run.as_ref().map_err(|e| format!("{name}: {e}"))?;
            let res = eval::weight_sweep(&run.best, &horizon(name), &SweepOptions::default()).map_err(|e| e.to_string())?;
            let _ = eval::write_sweep_csv(&res, &run.dir.join("sweep.csv"));
            problems.extend(sweep_problems(&res).into_iter().map(|p| format!("{name}: {p}")));
            let on = |o| (-1..=1).map(|d| res.cell(d as f64, o).unwrap().onions_mean).sum::<f64>() / 3.0;
            details.push(format!("{name} onions {:.2}/{:.2}/{:.2}", on(-1.0), on(0.0), on(1.0)));
            sweeps.push((name.to_string(), Ok(res)));
        }
        ensure(problems.is_empty(), || problems.join("; "))?;
        Ok(details.join("; "))
    });

    let sp = train(&root, "cramped_room", TrainMode::SelfPlay, SP_STEPS);
    report.check("neutrality and interchangeability", || {
        let run = cramped.as_ref().map_err(|e| e.clone())?;
        let sp = sp.as_ref().map_err(|e| e.clone())?;
        let layout = horizon("cramped_room");
        let sweep = match sweeps.iter().find(|(n, _)| n == "cramped_room") {
            Some((_, Ok(s))) => s.clone(),
            _ => eval::weight_sweep(&run.best, &layout, &SweepOptions::default()).map_err(|e| e.to_string())?,
        };
        let cell = sweep.cell(0.0, 0.0).ok_or("no (0,0) cell")?;
        let ci_cell = eval::ci95(cell.score_mean, cell.score_sd, cell.episodes);
        let eps = eval::self_play_eval(&run.best.params, &layout, &run.best.meta.behaviors, EVAL_EPISODES, false, 0x5E1F);
        let scores: Vec<f64> = eps.iter().map(|e| e.deliveries as f64).collect();
        let (m, sd) = (eval::mean(&scores), eval::sample_sd(&scores));
        let ci_sp = eval::ci95(m, sd, scores.len());
        ensure(eval::intervals_overlap(ci_cell, ci_sp), || format!("(0,0) CI {ci_cell:.2?} vs self-play CI {ci_sp:.2?}"))?;

        // both were read back from disk by the same loader
        let (bs, spk) = (&run.last, &sp.last);
        ensure(bs.input_dim() == spk.input_dim(), || format!("input widths differ: BS {} SP {}", bs.input_dim(), spk.input_dim()))?;
        let m2 = eval::crossplay(&[("BS".into(), bs), ("SP".into(), spk)], &layout, 10, false, 1).map_err(|e| e.to_string())?;
        ensure(m2.scores.iter().flatten().all(|s| s.is_finite()), || "non-finite cross-play score".into())?;
        Ok(format!(
            "(0,0) {:.2} [{:.2}, {:.2}] vs self-play {m:.2} [{:.2}, {:.2}]; cross-play BS/SP {:.2} {:.2} / {:.2} {:.2}",
            cell.score_mean, ci_cell.0, ci_cell.1, ci_sp.0, ci_sp.1, m2.scores[0][0], m2.scores[0][1], m2.scores[1][0], m2.scores[1][1]
        ))
    });

    report.check("distribution checks", || {
        support::dist::omega_moments();
        support::dist::condition_sampler();
        Ok("ω moments in bounds; 100,000 condition draws, no (D,D), each of 8 within ±0.01".into())
    });

    report.check("protocol conformance", protocol_conformance);

    println!("{}/{} criteria passed", report.total - report.failed, report.total);
    if report.failed > 0 {
        std::process::exit(1);
    }
}

/// Checks the three sweep properties on every row and column of the grid.
fn sweep_problems(res: &SweepResult) -> Vec<String> {
    let grid = [-1.0, 0.0, 1.0];
    let mut out = Vec::new();
    for d in grid {
        let on: Vec<f64> = grid.iter().map(|&o| res.cell(d, o).unwrap().onions_mean).collect();
        if on[0] > 0.05 * on[2] {
            out.push(format!("ω_dishes={d}: onions at ω_onions=-1 {:.2} exceed 5% of {:.2}", on[0], on[2]));
        }
        if !(on[0] <= on[1] && on[1] <= on[2]) {
            out.push(format!("ω_dishes={d}: onions {on:.2?} not non-decreasing"));
        }
    }
    for o in grid {
        let del: Vec<f64> = grid.iter().map(|&d| res.cell(d, o).unwrap().deliveries_mean).collect();
        if !(del[0] <= del[1] && del[1] <= del[2]) {
            out.push(format!("ω_onions={o}: deliveries {del:.2?} do not fall as ω_dishes drops"));
        }
    }
    out
}

fn protocol_conformance() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    rt.block_on(async {
        let reg_dir = tempfile::tempdir().unwrap();
        let data = tempfile::tempdir().unwrap();
        write_registry(reg_dir.path(), &[TrainMode::BehaviorShaping, TrainMode::SelfPlay]);
        let registry = Registry::load(reg_dir.path()).map_err(|e| e.to_string())?;
        let server = TestServer::start(registry, data.path(), ProtocolConfig::default(), Duration::ZERO).await;

        let control = server.create(Protocol::ControlStudy, "acceptance-control", 1).await;
        let t = play(server.addr, &control.session_id, 1, Stop::End).await;
        let count = |f: fn(&ServerMsg) -> bool| t.count(f);
        let got = (
            count(|m| matches!(m, ServerMsg::RoundEnd { .. })),
            count(|m| matches!(m, ServerMsg::SurveyRequest { .. })),
            count(|m| matches!(m, ServerMsg::ChoiceRequest { .. })),
        );
        ensure(got == (20, 20, 2), || format!("ControlStudy rounds/surveys/choices {got:?}"))?;
        let hidden = check_hidden_rounds_leak_nothing(&t);
        ensure(hidden >= 6, || format!("only {hidden} Hidden rounds seen"))?;

        let pairwise = server.create(Protocol::Pairwise, "acceptance-pairwise", 2).await;
        let t = play(server.addr, &pairwise.session_id, 2, Stop::End).await;
        let got = (t.count(|m| matches!(m, ServerMsg::RoundEnd { .. })), t.count(|m| matches!(m, ServerMsg::PreferenceRequest { .. })));
        ensure(got == (10, 5), || format!("Pairwise rounds/preferences {got:?}"))?;

        let jsonl = reqwest::get(server.url("/export/trajectories.jsonl")).await.map_err(|e| e.to_string())?.text().await.map_err(|e| e.to_string())?;
        let path = data.path().join("export.jsonl");
        std::fs::write(&path, jsonl).map_err(|e| e.to_string())?;
        let rounds = read_round_records(&path).map_err(|e| e.to_string())?;
        ensure(rounds.len() == 30, || format!("{} exported rounds", rounds.len()))?;
        for r in &rounds {
            let replayed = replay_round(r).map_err(|e| e.to_string())?.0;
            ensure(replayed == r.score, || format!("round {} of {}: logged {} replayed {replayed}", r.round_id, r.session_id, r.score))?;
        }
        server.stop().await;
        Ok(format!("ControlStudy 20/20/2, Pairwise 10/5, {hidden} Hidden rounds clean, 30 exported rounds replay exactly"))
    })
}
