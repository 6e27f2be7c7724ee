#![allow(dead_code)]
// the oracles index like the formulas they transcribe
#![allow(clippy::needless_range_loop)]

pub mod dist;
pub mod env;
pub mod numeric;
