use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use trisbf::config::ExperimentConfig;
use trisbf::Command;

/// Beamforming experiments for a transmissive-RIS SWIPT transceiver.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Per-iteration sum-rate traces, one set per element count.
    Converge,
    /// Mean sum-rate against the per-element power limit.
    SweepPower,
    /// Mean sum-rate against the largest ID-user distance.
    SweepDistance,
    /// Optimizer against exhaustive grid search (N <= 2, K = G = 1).
    OracleCheck,
}

/// Flags take precedence over the config file.
#[derive(Args, Debug)]
struct Overrides {
    /// JSON config file; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; trial i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Element count; replaces any element sweep.
    #[arg(long, global = true)]
    n: Option<usize>,
}

impl Overrides {
    fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(s) = self.seed {
            cfg.scenario.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(o) = &self.out {
            cfg.output_path = o.clone();
        }
        if let Some(n) = self.n {
            cfg.system.n = n;
            if matches!(cfg.sweep, trisbf::config::Sweep::Elements(_)) {
                cfg.sweep = trisbf::config::Sweep::None;
            }
        }
        cfg
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let base = match &cli.overrides.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = cli.overrides.apply(base);
    let command = match cli.command {
        Cmd::Converge => Command::Converge,
        Cmd::SweepPower => Command::SweepPower,
        Cmd::SweepDistance => Command::SweepDistance,
        Cmd::OracleCheck => Command::OracleCheck,
    };
    for f in trisbf::execute(command, &cfg)? {
        println!("{}", f.display());
    }
    Ok(())
}
