//! Scenario files, CSV output and the subcommands of the `mexec` binary.

pub mod commands;
pub mod error;
pub mod scenario;
pub mod table;

pub use commands::{cmd_check, cmd_cost, cmd_example, cmd_simulate, cmd_solve, Example, Overrides};
pub use error::CliError;
pub use scenario::Scenario;
