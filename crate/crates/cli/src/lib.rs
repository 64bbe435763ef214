//! Command-line front end and listen daemon for the `swar` recognizer.

pub mod app;
pub mod args;
pub mod daemon;
pub mod table;

pub use app::{confirm, run, CliError, EXIT_FAILURE, EXIT_OK, EXIT_REJECTED, EXIT_USAGE};
pub use args::Cli;
pub use daemon::{listen, ListenConfig, ListenOutcome, StopReason};
pub use table::CommandTable;
