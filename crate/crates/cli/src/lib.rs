//! Scenario runner: parses configuration files, dispatches each scenario to
//! the numerical library and writes CSV tables, plot data and reports.

pub mod config;
pub mod presets;
pub mod run;

pub use config::{parse_config, print_config, Diagnostic, Kind, Scenario};
pub use run::{run_all, RunReport, Status};
