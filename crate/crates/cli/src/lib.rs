//! Command-line pipeline for the biotplate toolkit.

pub mod config;
pub mod report;
pub mod stages;

pub use config::{ConfigError, Resolved, RunConfig};
pub use report::{ExitStatus, RunReport, StageReport, StageStatus};
pub use stages::{run, Command};
