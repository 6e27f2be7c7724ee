//! Std side of the behavior-shaping lab: layout files, training config,
//! checkpoints, the training loop, evaluation, and the session server.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod eval;
pub mod layouts;
pub mod server;
pub mod session;
pub mod trainer;

pub use bslab_core as core;
