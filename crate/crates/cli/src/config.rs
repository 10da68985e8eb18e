//! Command-line flags, the key=value config file and the validated experiment config.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use ivgff::renorm::RenormParams;
use ivgff::{Topology, Vertex};

#[derive(Parser, Debug)]
#[command(name = "ivgff", version, about = "Integer-valued Gaussian free field experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandLine,
}

#[derive(Subcommand, Debug)]
pub enum CommandLine {
    /// Maximum height against box size over independent replicas.
    Scaling(Flags),
    /// Conditional exceedance probabilities on a grid of boxes with frozen boundaries.
    Decompose(Flags),
    /// Conditional frequencies of the nested-annulus events.
    Layered(Flags),
    /// Convex cosine expansion and coefficient modification on a tiny box (JSON report).
    RenormCheck(Flags),
    /// Green's function at the box center against the log-distance to the boundary.
    Green(Flags),
    /// Enumerated moment generating function against the Gaussian bounds.
    Mgf(Flags),
}

impl CommandLine {
    pub fn split(self) -> (Command, Flags) {
        match self {
            CommandLine::Scaling(f) => (Command::Scaling, f),
            CommandLine::Decompose(f) => (Command::Decompose, f),
            CommandLine::Layered(f) => (Command::Layered, f),
            CommandLine::RenormCheck(f) => (Command::RenormCheck, f),
            CommandLine::Green(f) => (Command::Green, f),
            CommandLine::Mgf(f) => (Command::Mgf, f),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Scaling,
    Decompose,
    Layered,
    RenormCheck,
    Green,
    Mgf,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Scaling => "scaling",
            Command::Decompose => "decompose",
            Command::Layered => "layered",
            Command::RenormCheck => "renorm-check",
            Command::Green => "green",
            Command::Mgf => "mgf",
        }
    }

    fn samples(self) -> bool {
        matches!(self, Command::Scaling | Command::Decompose | Command::Layered)
    }
}

/// Raw flags. Every field is optional so that a config file can supply it.
#[derive(Args, Clone, Debug, Default, PartialEq)]
pub struct Flags {
    /// key=value file with the same keys as the long flags; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Box side, or a comma-separated list.
    #[arg(long = "L", value_delimiter = ',')]
    pub l: Option<Vec<usize>>,
    /// Inverse temperature, or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Measurement sweeps after burn-in (conditional re-sampling sweeps for `decompose`).
    #[arg(long)]
    pub sweeps: Option<u64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Burn-in sweeps; defaults to 200 L.
    #[arg(long = "burn-in")]
    pub burn_in: Option<u64>,
    /// zero, free or periodic.
    #[arg(long)]
    pub topology: Option<String>,
    /// Output path; metadata goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "M")]
    pub m: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Height cap for exact enumeration.
    #[arg(long = "H")]
    pub h: Option<i64>,
    /// Layer count (`layered`) or Fejér degree (`renorm-check`).
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Box side of the grid partition (`decompose`).
    #[arg(long = "R")]
    pub r: Option<usize>,
    /// Tilt multipliers (`mgf`).
    #[arg(long, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value
        .split(',')
        .map(|s| s.trim().parse::<T>().with_context(|| format!("bad value {s:?} for {key}")))
        .collect()
}

fn one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    value.trim().parse::<T>().with_context(|| format!("bad value {value:?} for {key}"))
}

impl Flags {
    /// Parses `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut f = Flags::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value, got {raw:?}", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "L" => f.l = Some(list(key, value)?),
                "beta" => f.beta = Some(list(key, value)?),
                "seed" => f.seed = Some(one(key, value)?),
                "sweeps" => f.sweeps = Some(one(key, value)?),
                "replicas" => f.replicas = Some(one(key, value)?),
                "burn-in" | "burn_in" => f.burn_in = Some(one(key, value)?),
                "topology" => f.topology = Some(value.to_string()),
                "out" => f.out = Some(PathBuf::from(value)),
                "M" => f.m = Some(one(key, value)?),
                "alpha" => f.alpha = Some(one(key, value)?),
                "H" => f.h = Some(one(key, value)?),
                "N" => f.n = Some(one(key, value)?),
                "delta" => f.delta = Some(one(key, value)?),
                "R" => f.r = Some(one(key, value)?),
                "t" => f.t = Some(list(key, value)?),
                _ => bail!("line {}: unknown key {key:?}", lineno + 1),
            }
        }
        Ok(f)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_kv(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Fields set in `self` take precedence over `base`.
    pub fn over(self, base: Flags) -> Flags {
        Flags {
            config: self.config.or(base.config),
            l: self.l.or(base.l),
            beta: self.beta.or(base.beta),
            seed: self.seed.or(base.seed),
            sweeps: self.sweeps.or(base.sweeps),
            replicas: self.replicas.or(base.replicas),
            burn_in: self.burn_in.or(base.burn_in),
            topology: self.topology.or(base.topology),
            out: self.out.or(base.out),
            m: self.m.or(base.m),
            alpha: self.alpha.or(base.alpha),
            h: self.h.or(base.h),
            n: self.n.or(base.n),
            delta: self.delta.or(base.delta),
            r: self.r.or(base.r),
            t: self.t.or(base.t),
        }
    }

    /// Loads `--config` if given and lets the flags override it.
    pub fn resolve_file(self) -> Result<Flags> {
        match &self.config {
            Some(p) => {
                let base = Flags::from_file(p)?;
                Ok(self.over(base))
            }
            None => Ok(self),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyKind {
    Zero,
    Free,
    Periodic,
}

impl TopologyKind {
    pub fn topology(self) -> Topology {
        match self {
            TopologyKind::Zero => Topology::ZeroBoundary,
            TopologyKind::Free => Topology::FreePinned(Vertex::new(0, 0)),
            TopologyKind::Periodic => Topology::PeriodicPinned(Vertex::new(0, 0)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Zero => "zero",
            TopologyKind::Free => "free",
            TopologyKind::Periodic => "periodic",
        }
    }
}

pub const DEFAULT_SWEEPS: u64 = 100;
pub const DEFAULT_REPLICAS: usize = 16;
pub const DEFAULT_H: i64 = 8;
pub const DEFAULT_DELTA: f64 = 0.5;
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Fully validated parameters of one run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub command: Command,
    pub l: Vec<usize>,
    pub beta: Vec<f64>,
    pub seed: u64,
    pub sweeps: u64,
    pub replicas: usize,
    /// `None` means 200 L for each side.
    pub burn_in: Option<u64>,
    pub topology: TopologyKind,
    pub out: Option<PathBuf>,
    pub renorm: RenormParams,
    pub h: i64,
    pub n: usize,
    pub delta: f64,
    pub r: Option<usize>,
    pub t: Vec<f64>,
}

impl ExperimentConfig {
    /// Validates every parameter the command uses before anything is computed.
    pub fn resolve(command: Command, flags: Flags) -> Result<Self> {
        let flags = flags.resolve_file()?;
        let l = flags.l.clone().unwrap_or_default();
        ensure!(!l.is_empty(), "--L is required");
        let beta = match (command, flags.beta.clone()) {
            (_, Some(b)) => b,
            (Command::Green, None) => Vec::new(),
            (Command::Mgf, None) => vec![0.25, 0.5, 1.0],
            (_, None) => bail!("--beta is required for {}", command.name()),
        };
        for &b in &beta {
            ensure!(b.is_finite() && b > 0.0, "beta must be positive, got {b}");
        }
        let seed = match flags.seed {
            Some(s) => s,
            None if command.samples() => bail!("--seed is required for {}", command.name()),
            None => 0,
        };
        let topology = match flags.topology.as_deref().unwrap_or("zero") {
            "zero" => TopologyKind::Zero,
            "free" => TopologyKind::Free,
            "periodic" => TopologyKind::Periodic,
            other => bail!("unknown topology {other:?}; expected zero, free or periodic"),
        };
        if command != Command::Scaling {
            ensure!(topology == TopologyKind::Zero, "{} supports only the zero topology", command.name());
        }
        let sweeps = flags.sweeps.unwrap_or(DEFAULT_SWEEPS);
        let replicas = flags.replicas.unwrap_or(DEFAULT_REPLICAS);
        if command.samples() {
            ensure!(replicas >= 1, "--replicas must be at least 1");
        }
        let renorm = RenormParams::new(
            flags.alpha.unwrap_or(RenormParams::DEFAULT_ALPHA),
            flags.m.unwrap_or(RenormParams::DEFAULT_M),
        )
        .map_err(anyhow::Error::from)?;
        let h = flags.h.unwrap_or(DEFAULT_H);
        ensure!(h >= 1, "--H must be at least 1");
        let n = flags.n.unwrap_or(match command {
            Command::Layered => 1,
            _ => 2,
        });
        ensure!(n >= 1, "--N must be at least 1");
        let delta = flags.delta.unwrap_or(DEFAULT_DELTA);
        ensure!(delta > 0.0 && delta < 1.0, "--delta must lie in (0,1), got {delta}");
        let t = flags.t.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);

        for &side in &l {
            let min = match (command, topology) {
                (Command::Scaling, TopologyKind::Zero) | (Command::Layered, _) | (Command::Decompose, _) => 3,
                (Command::Scaling, _) => 2,
                _ => 3,
            };
            ensure!(side >= min, "L = {side} is below the minimum {min} for {}", command.name());
            if topology == TopologyKind::Periodic {
                ensure!(side % 2 == 0, "periodic boxes need an even side, got {side}");
            }
        }
        match command {
            Command::Decompose => {
                ensure!(l.len() == 1, "decompose takes a single L");
                ensure!(beta.len() == 1, "decompose takes a single beta");
                let r = flags.r.unwrap_or(l[0]);
                ensure!(r >= 3 && r <= l[0], "--R must lie in 3..=L, got {r}");
            }
            Command::Layered => {
                ensure!(l.len() == 1 && beta.len() == 1, "layered takes a single L and beta");
                ivgff::lattice::annulus_schedule(l[0], n, delta).map_err(anyhow::Error::from)?;
            }
            Command::RenormCheck => {
                ensure!(l.len() == 1 && beta.len() == 1, "renorm-check takes a single L and beta");
                ensure!(l[0] <= 5, "renorm-check is limited to L <= 5, got {}", l[0]);
            }
            Command::Mgf => {
                for &side in &l {
                    ensure!(side <= 4, "mgf enumerates exactly and is limited to L <= 4, got {side}");
                }
                ensure!(!t.is_empty(), "--t must not be empty");
            }
            Command::Scaling | Command::Green => {}
        }
        Ok(Self {
            command,
            l,
            beta,
            seed,
            sweeps,
            replicas,
            burn_in: flags.burn_in,
            topology,
            out: flags.out,
            renorm,
            h,
            n,
            delta,
            r: flags.r,
            t,
        })
    }

    pub fn burn_in_for(&self, side: usize) -> u64 {
        self.burn_in.unwrap_or(200 * side as u64)
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "command": self.command.name(),
            "schema_version": CSV_SCHEMA_VERSION,
            "L": self.l,
            "beta": self.beta,
            "seed": self.seed,
            "sweeps": self.sweeps,
            "replicas": self.replicas,
            "burn_in": self.l.iter().map(|&s| self.burn_in_for(s)).collect::<Vec<_>>(),
            "topology": self.topology.name(),
            "M": self.renorm.m,
            "alpha": self.renorm.alpha,
            "H": self.h,
            "N": self.n,
            "delta": self.delta,
            "R": self.r,
            "t": self.t,
        })
    }
}
