//! The `bilingo` operator tool: corpus statistics, concept candidates, course
//! builds, pack validation and the HTTP service that plays packs.

pub mod api;
pub mod clock;
pub mod commands;

pub use commands::{run, Cli, CliError, Command};
