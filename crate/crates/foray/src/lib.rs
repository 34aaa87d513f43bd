//! IO, solver transport, and CLI for the attack-synthesis pipeline. The
//! pure pipeline itself lives in `foray-core`.

pub mod backend;
pub mod cli;
pub mod dot;
pub mod report;
