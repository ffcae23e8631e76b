//! Command-line front end for the mtpr attack toolkit: binary dataset
//! formats, TOML reports, and the subcommand dispatcher.

pub mod commands;
pub mod format;
pub mod report;

pub use commands::{cli_dispatch, Cli};
