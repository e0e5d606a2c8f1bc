//! Scenario files, reports and the pipelines behind the `credregion` binary.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::Config;
pub use error::CliError;
pub use pipeline::{certify, validate, RunOptions};
pub use report::RegionReport;
