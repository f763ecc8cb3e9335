//! Library side of the `otfuse` command-line tool: configuration, the
//! synthetic scene generator, dataset layout, head training, pipeline runs,
//! reports and the invariant suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod dataset;
pub mod error;
pub mod run;
pub mod svg;
pub mod synth;
pub mod train;
pub mod verify;

pub use app::{main_with_args, Cli};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
