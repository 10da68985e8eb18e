//! Batch experiments on the integer-valued Gaussian free field, emitting CSV tables
//! and JSON metadata.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{Cli, Command, ExperimentConfig, Flags};
pub use experiments::run;
pub use output::{Output, Table};
