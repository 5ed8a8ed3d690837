//! Command-line front end: configuration parsing, the three run modes
//! (simulate, refine, compare) and their file output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_with, ConfigError, InitialSpec, Mode, RunConfig};
pub use run::{run, thread_cap, CliError, Outcome};
