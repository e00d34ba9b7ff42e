//! Config-driven driver for `invariant-kit`: verify a set, grow a nested
//! family, choose a transform, falsify and simulate.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{execute, Invocation, Mode, EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK, EXIT_VIOLATION};
pub use config::{LoadedConfig, RunConfig, SetSpec};
