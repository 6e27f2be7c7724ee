//! Checkpoints available to the session server, keyed by layout and mode.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use bslab_core::rollout::TrainMode;
use serde::Serialize;

use crate::checkpoint::{Checkpoint, CheckpointError, META};
use crate::config::mode_name;

#[derive(Debug, Clone)]
pub struct RegistryEntry {
    /// Path relative to the registry root, `/`-separated.
    pub id: String,
    pub layout: String,
    pub mode: TrainMode,
    pub eval_score: f64,
    pub env_steps: u64,
    pub checkpoint: Arc<Checkpoint>,
}

/// Per layout, the best BS and best SP checkpoint (by eval score, later
/// step on ties).
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<(String, &'static str), RegistryEntry>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RegistrySummary {
    pub layout: String,
    pub bs: Option<String>,
    pub sp: Option<String>,
}

impl Registry {
    /// Loads every checkpoint directory under `root` (up to four levels deep).
    pub fn load(root: &Path) -> Result<Self, CheckpointError> {
        let mut dirs = Vec::new();
        find_checkpoints(root, 0, &mut dirs).map_err(|source| CheckpointError::Io { path: root.to_path_buf(), source })?;
        dirs.sort();
        let mut reg = Registry::default();
        for dir in dirs {
            let ckpt = Checkpoint::load(&dir)?;
            let id = dir.strip_prefix(root).unwrap_or(&dir).components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            reg.insert(id, ckpt);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, id: String, ckpt: Checkpoint) {
        let entry = RegistryEntry {
            id,
            layout: ckpt.meta.layout.clone(),
            mode: ckpt.meta.mode,
            eval_score: ckpt.meta.eval_score.unwrap_or(f64::NEG_INFINITY),
            env_steps: ckpt.meta.env_steps,
            checkpoint: Arc::new(ckpt),
        };
        let key = (entry.layout.clone(), mode_name(entry.mode));
        let better = match self.entries.get(&key) {
            Some(cur) => (entry.eval_score, entry.env_steps) >= (cur.eval_score, cur.env_steps),
            None => true,
        };
        if better {
            self.entries.insert(key, entry);
        }
    }

    pub fn bs(&self, layout: &str) -> Option<&RegistryEntry> {
        self.entries.get(&(layout.to_string(), "BS"))
    }

    pub fn sp(&self, layout: &str) -> Option<&RegistryEntry> {
        self.entries.get(&(layout.to_string(), "SP"))
    }

    pub fn by_id(&self, id: &str) -> Option<&RegistryEntry> {
        self.entries.values().find(|e| e.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn summary(&self) -> Vec<RegistrySummary> {
        let mut layouts: Vec<&String> = self.entries.keys().map(|(l, _)| l).collect();
        layouts.dedup();
        layouts
            .into_iter()
            .map(|l| RegistrySummary { layout: l.clone(), bs: self.bs(l).map(|e| e.id.clone()), sp: self.sp(l).map(|e| e.id.clone()) })
            .collect()
    }
}

fn find_checkpoints(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if dir.join(META).is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    if depth >= 4 {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            find_checkpoints(&path, depth + 1, out)?;
        }
    }
    Ok(())
}
