mod exact;
mod sampling;

pub use exact::*;
pub use sampling::*;

use anyhow::Result;

use crate::config::{Command, ExperimentConfig};
use crate::output::Output;

pub fn run(cfg: &ExperimentConfig) -> Result<Output> {
    match cfg.command {
        Command::Scaling => cmd_scaling(cfg),
        Command::Decompose => cmd_decompose(cfg),
        Command::Layered => cmd_layered(cfg),
        Command::RenormCheck => cmd_renorm_check(cfg),
        Command::Green => cmd_green(cfg),
        Command::Mgf => cmd_mgf(cfg),
    }
}
