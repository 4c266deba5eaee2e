//! Reproducible experiments on top of `rwre_core`: simulate a stream to
//! disk, reconstruct from a stream file, run verification checks, and run
//! replicated simulate-reconstruct-compare experiments.

pub mod commands;
pub mod config;
pub mod verify;

pub use commands::{cmd_experiment, cmd_reconstruct, cmd_simulate};
pub use config::RunConfig;
pub use verify::{cmd_verify, UnknownCheck};
