//! Configuration-driven batch runs over the `holewave` library.

pub mod commands;
pub mod config;

pub use commands::{run, Command, Outcome};
pub use config::RunConfig;
