//! On-disk checkpoints.
//!
//! A checkpoint is a directory with three files:
//!
//! * `manifest.txt`: one line per array, `name dtype shape offset`, where
//!   shape is `AxB` and offset counts f32 elements into the blob;
//! * `params.bin`: every array as little-endian f32, back to back;
//! * `meta.json`: policy and training config, layout, mode, seed, env
//!   steps and eval score.
//!
//! Optimizer moments are stored as the arrays `adam.m` and `adam.v` so a
//! run can resume exactly. Values are f32 on disk; [`quantize`] rounds the
//! in-memory copy the same way so that save, load and save again produce
//! identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bslab_core::optim::Adam;
use bslab_core::policy::{ParamMeta, PolicyError};
use bslab_core::rollout::TrainMode;
use bslab_core::shaping::BehaviorSpec;
use bslab_core::{PolicyConfig, PolicyParameters};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;

pub const MANIFEST: &str = "manifest.txt";
pub const BLOB: &str = "params.bin";
pub const META: &str = "meta.json";
const HEADER: &str = "bslab-checkpoint v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub layout: String,
    pub mode: TrainMode,
    pub seed: u64,
    pub env_steps: u64,
    pub iteration: u64,
    /// Mean deliveries per evaluation episode at ω = 0.
    pub eval_score: Option<f64>,
    pub policy: PolicyConfig,
    pub behaviors: BehaviorSpec,
    pub train: Option<TrainConfig>,
    pub adam_step: u64,
    pub adam_lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: PolicyParameters,
    pub optimizer: Option<Adam>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed manifest line {line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },
    #[error("{path}: blob holds {found} floats but the manifest needs {needed}")]
    BlobSize { path: PathBuf, found: usize, needed: usize },
    #[error("{path}: {source}")]
    Meta { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Policy { path: PathBuf, source: PolicyError },
}

/// Rounds every value through f32.
pub fn quantize(values: &mut [f64]) {
    values.iter_mut().for_each(|v| *v = *v as f32 as f64);
}

struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<(), CheckpointError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CheckpointError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut manifest = format!("{HEADER}\n");
        let mut blob: Vec<u8> = Vec::with_capacity(self.params.num_params() * 4 * 3);
        let mut offset = 0usize;
        let mut push = |name: &str, shape: &[usize], data: &[f64], manifest: &mut String| {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(manifest, "{name} f32 {} {offset}", dims.join("x"));
            for v in data {
                blob.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            offset += data.len();
        };
        for spec in self.params.specs() {
            push(&spec.name, &spec.shape, self.params.array(&spec.name).unwrap_or(&[]), &mut manifest);
        }
        if let Some(adam) = &self.optimizer {
            push("adam.m", &[adam.m.len()], &adam.m, &mut manifest);
            push("adam.v", &[adam.v.len()], &adam.v, &mut manifest);
        }
        let meta = serde_json::to_string_pretty(&self.meta).expect("checkpoint metadata serializes");
        fs::write(dir.join(MANIFEST), manifest).map_err(io(&dir.join(MANIFEST)))?;
        fs::write(dir.join(BLOB), blob).map_err(io(&dir.join(BLOB)))?;
        fs::write(dir.join(META), meta + "\n").map_err(io(&dir.join(META)))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CheckpointError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|source| CheckpointError::Io { path, source })
        };
        let meta_path = dir.join(META);
        let meta: CheckpointMeta =
            serde_json::from_slice(&read(META)?).map_err(|source| CheckpointError::Meta { path: meta_path, source })?;
        let manifest_path = dir.join(MANIFEST);
        let manifest = String::from_utf8_lossy(&read(MANIFEST)?).into_owned();
        let entries = parse_manifest(&manifest, &manifest_path)?;
        let bytes = read(BLOB)?;
        let floats: Vec<f64> =
            bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let needed = entries.iter().map(|e| e.offset + e.len).max().unwrap_or(0);
        if floats.len() < needed || bytes.len() % 4 != 0 {
            return Err(CheckpointError::BlobSize { path: dir.join(BLOB), found: floats.len(), needed });
        }
        let slice = |e: &Entry| &floats[e.offset..e.offset + e.len];
        let params = PolicyParameters::from_named(
            meta.policy,
            ParamMeta { seed: meta.seed, train_steps: meta.env_steps },
            entries.iter().filter(|e| !e.name.starts_with("adam.")).map(|e| (e.name.as_str(), e.shape.as_slice(), slice(e))),
        )
        .map_err(|source| CheckpointError::Policy { path: manifest_path.clone(), source })?;
        let m = entries.iter().find(|e| e.name == "adam.m");
        let v = entries.iter().find(|e| e.name == "adam.v");
        let optimizer = match (m, v) {
            (Some(m), Some(v)) if m.len == params.num_params() && v.len == params.num_params() => {
                let mut adam = Adam::new(params.num_params(), meta.adam_lr);
                adam.step = meta.adam_step;
                adam.m = slice(m).to_vec();
                adam.v = slice(v).to_vec();
                Some(adam)
            }
            (None, None) => None,
            _ => {
                return Err(CheckpointError::Manifest {
                    path: manifest_path,
                    line: 0,
                    reason: "optimizer state incomplete or sized for another policy".into(),
                })
            }
        };
        Ok(Self { meta, params, optimizer })
    }

    /// Network input width, identical for SP and BS checkpoints of a layout.
    pub fn input_dim(&self) -> usize {
        self.params.config.input_dim
    }
}

fn parse_manifest(text: &str, path: &Path) -> Result<Vec<Entry>, CheckpointError> {
    let bad = |line: usize, reason: &str| CheckpointError::Manifest { path: path.to_path_buf(), line, reason: reason.into() };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(bad(1, "missing header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, dtype, shape, offset] = fields[..] else { return Err(bad(i + 1, "expected 4 fields")) };
        if dtype != "f32" {
            return Err(bad(i + 1, "only f32 arrays are supported"));
        }
        let shape: Vec<usize> =
            shape.split('x').map(|d| d.parse()).collect::<Result<_, _>>().map_err(|_| bad(i + 1, "bad shape"))?;
        let offset = offset.parse().map_err(|_| bad(i + 1, "bad offset"))?;
        out.push(Entry { name: name.to_string(), len: shape.iter().product(), shape, offset });
    }
    Ok(out)
}

/// Checkpoint directories under a run directory, in step order.
pub fn list_run(run_dir: &Path) -> Result<Vec<PathBuf>, CheckpointError> {
    let rd = fs::read_dir(run_dir).map_err(|source| CheckpointError::Io { path: run_dir.to_path_buf(), source })?;
    let mut dirs: Vec<PathBuf> = rd
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join(META).is_file() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("step_")))
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn step_dir_name(env_steps: u64) -> String {
    format!("step_{env_steps:012}")
}
