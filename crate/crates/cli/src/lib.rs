//! Configuration, job dispatch and artifact writing for the `satl` binary.

pub mod config;
pub mod dispatch;
pub mod error;

pub use config::{parse_config, JobKind, RunConfig};
pub use dispatch::{dispatch, Outcome, Request};
pub use error::CliError;
