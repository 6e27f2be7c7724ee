//! The five kitchens shipped with the lab, plus loading from disk.

use std::path::Path;
use std::sync::Arc;

use bslab_core::{parse_layout, Layout, LayoutError};

pub const NAMES: [&str; 5] =
    ["cramped_room", "asymmetric_advantages", "coordination_ring", "forced_coordination", "counter_circuit"];

const SOURCES: [&str; 5] = [
    include_str!("../layouts/cramped_room.layout"),
    include_str!("../layouts/asymmetric_advantages.layout"),
    include_str!("../layouts/coordination_ring.layout"),
    include_str!("../layouts/forced_coordination.layout"),
    include_str!("../layouts/counter_circuit.layout"),
];

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("unknown layout {0:?} (known: {known})", known = NAMES.join(", "))]
    Unknown(String),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: LayoutError },
}

/// Built-in layout text by name.
pub fn source(name: &str) -> Option<&'static str> {
    NAMES.iter().position(|n| *n == name).map(|i| SOURCES[i])
}

pub fn builtin(name: &str) -> Result<Layout, LoadError> {
    let text = source(name).ok_or_else(|| LoadError::Unknown(name.to_string()))?;
    parse_layout(text).map_err(|source| LoadError::Parse { path: name.to_string(), source })
}

/// A built-in name, or a path to a `.layout` file.
pub fn resolve(name_or_path: &str) -> Result<Layout, LoadError> {
    if source(name_or_path).is_some() {
        return builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(LoadError::Unknown(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    parse_layout(&text).map_err(|source| LoadError::Parse { path: path.display().to_string(), source })
}

/// Built-in layout with the episode length overridden.
pub fn with_horizon(name_or_path: &str, episode_length: u32) -> Result<Arc<Layout>, LoadError> {
    Ok(Arc::new(resolve(name_or_path)?.with_episode_length(episode_length)))
}
