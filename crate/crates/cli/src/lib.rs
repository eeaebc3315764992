//! The `marstag` command-line pipeline: split, augment, landmark scanning,
//! training, calibration, evaluation, archive tagging, indexing, queries
//! and reports.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod fixture;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use cli::run_cli;
pub use config::{Overrides, PipelineConfig};
pub use error::{CliError, ErrorKind};
pub use pipeline::cmd_run;
pub use report::{cmd_report, ReportInputs};
