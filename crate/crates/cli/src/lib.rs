//! Batch front end for the additivity-test power calculations: parses
//! `key = value` scenario files, runs power curves, factor grids or Monte
//! Carlo checks, and writes CSV.

pub mod config;
pub mod plot;
pub mod run;

pub use config::{parse_config, ConfigError, FitSelection, McSettings, Mode, RunConfig};
pub use run::{run, RunError, RunOptions};
