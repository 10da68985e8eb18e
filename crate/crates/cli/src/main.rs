use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use ivgff_cli::{run, Cli, ExperimentConfig};

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let (command, flags) = Cli::parse().command.split();
    let cfg = ExperimentConfig::resolve(command, flags)?;
    let out = run(&cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let json = serde_json::to_string_pretty(&out.json)?;
    match (&cfg.out, &out.table) {
        (Some(path), Some(table)) => {
            std::fs::write(path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            let meta = path.with_extension("json");
            std::fs::write(&meta, json).with_context(|| format!("writing {}", meta.display()))?;
        }
        (Some(path), None) => {
            std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        }
        (None, Some(table)) => {
            std::io::stdout().write_all(table.to_csv().as_bytes())?;
            eprintln!("{}", serde_json::to_string(&out.json)?);
        }
        (None, None) => println!("{json}"),
    }
    Ok(if out.failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}
