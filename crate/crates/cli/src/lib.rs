//! Command-line front end: configuration files, presets, experiment runs
//! with CSV output, and fit reports.

pub mod config;
pub mod error;
pub mod presets;
pub mod report;
pub mod run;

pub use config::{Experiment, RunConfig};
pub use error::CliError;
pub use run::{render_csv, render_sidecar, run, RunOutput};
