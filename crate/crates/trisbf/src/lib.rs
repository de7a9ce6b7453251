//! Experiment drivers for `trisbf-core`: JSON configuration, parallel Monte
//! Carlo trials, CSV output and run manifests. The `trisbf` binary is a thin
//! wrapper around [`execute`].

pub mod config;
pub mod experiment;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use log::info;

pub use config::ExperimentConfig;
use experiment::{Study, TrialRecord};
use output::Manifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Converge,
    SweepPower,
    SweepDistance,
    OracleCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Converge => "converge",
            Command::SweepPower => "sweep-power",
            Command::SweepDistance => "sweep-distance",
            Command::OracleCheck => "oracle-check",
        }
    }

    fn file_stem(self) -> &'static str {
        match self {
            Command::Converge => "convergence",
            Command::SweepPower => "power_sweep",
            Command::SweepDistance => "distance_sweep",
            Command::OracleCheck => "oracle_check",
        }
    }
}

fn skipped(records: &[TrialRecord]) -> usize {
    records.iter().filter(|r| !r.status.has_beams()).count()
}

/// Runs `command` and writes its CSV files and manifest into
/// `cfg.output_path`. Returns the written paths, manifest last.
pub fn execute(command: Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = &cfg.output_path;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = command.file_stem();
    let mut manifest = Manifest::new(command.name(), cfg);
    let mut files = Vec::new();

    let study = match command {
        Command::Converge => Some(Study::Convergence),
        Command::SweepPower => Some(Study::PowerSweep),
        Command::SweepDistance => Some(Study::DistanceSweep),
        Command::OracleCheck => None,
    };
    if let Some(study) = study {
        let (points, records) = experiment::run_study(cfg, study)?;
        if command == Command::Converge {
            let p = dir.join(format!("{stem}_trajectories.csv"));
            output::write_trajectories(&p, &records)?;
            files.push(p);
        }
        let p = dir.join(format!("{stem}_trials.csv"));
        output::write_trials(&p, &records)?;
        files.push(p);
        let summary = experiment::summarize(&points, &records);
        for s in &summary {
            info!(
                "point {}: n {} power {} dBm distance {} m: mean {:.4} median {:.4} bit/s/Hz over {} trials",
                s.point.index,
                s.point.n,
                s.point.element_power_dbm,
                s.point.id_max_distance_m,
                s.mean_sum_rate,
                s.median_sum_rate,
                s.used
            );
        }
        let p = dir.join(format!("{stem}_summary.csv"));
        output::write_summary(&p, &summary)?;
        files.push(p);
        manifest.trials_run = records.len();
        manifest.trials_skipped = skipped(&records);
    } else {
        let records = experiment::oracle_check(cfg)?;
        let p = dir.join(format!("{stem}.csv"));
        output::write_oracle(&p, &records)?;
        files.push(p);
        let opt: Vec<TrialRecord> = records.iter().map(|r| r.optimizer.clone()).collect();
        manifest.trials_run = opt.len();
        manifest.trials_skipped = skipped(&opt);
    }

    manifest.files = files.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()).collect();
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    files.push(manifest.write(dir)?);
    Ok(files)
}
