//! CSV and manifest writers.
//!
//! Every CSV starts with a fixed header row (the `*_HEADER` constants).
//! Numbers use the shortest representation that parses back to the same
//! `f64`, in exponent form outside `[1e-4, 1e15)`. Fields that do not apply
//! to a row (metrics of a skipped trial) are empty. Nothing time-dependent
//! goes into a CSV, so repeated runs with the same config produce identical
//! bytes.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::{OracleRecord, PointSummary, TrialRecord};

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "n",
    "trial",
    "seed",
    "iteration",
    "sum_rate_bits",
    "lifted_sum_rate_bits",
    "penalty_residual_i",
    "penalty_residual_e",
    "rho",
    "surrogate_objective",
    "solver_iterations",
];

pub const TRIAL_HEADER: [&str; 15] = [
    "point",
    "n",
    "element_power_dbm",
    "id_max_distance_m",
    "trial",
    "seed",
    "status",
    "outer_iterations",
    "sum_rate_bits",
    "lifted_sum_rate_bits",
    "harvest_w",
    "harvest_target_w",
    "violation",
    "residual_ratio_i",
    "residual_ratio_e",
];

pub const SUMMARY_HEADER: [&str; 9] = [
    "point",
    "n",
    "element_power_dbm",
    "id_max_distance_m",
    "trials",
    "used",
    "mean_sum_rate_bits",
    "median_sum_rate_bits",
    "median_outer_iterations",
];

pub const ORACLE_HEADER: [&str; 8] = [
    "trial",
    "seed",
    "status",
    "optimizer_sum_rate_bits",
    "oracle_sum_rate_bits",
    "grid_sum_rate_bits",
    "relative_gap",
    "violation",
];

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn write_csv<const W: usize>(path: &Path, header: [&str; W], rows: impl IntoIterator<Item = [String; W]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectories(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let rows = records.iter().flat_map(|r| {
        r.trajectory.iter().map(move |s| {
            [
                r.point.n.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                s.iteration.to_string(),
                num(s.sum_rate),
                num(s.lifted_sum_rate),
                num(s.penalty_residual_i),
                num(s.penalty_residual_e),
                num(s.rho),
                num(s.surrogate_objective),
                s.solver_iterations.to_string(),
            ]
        })
    });
    write_csv(path, TRAJECTORY_HEADER, rows)
}

pub fn write_trials(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        let (ri, re) = r.residual_ratios();
        [
            r.point.index.to_string(),
            r.point.n.to_string(),
            num(r.point.element_power_dbm),
            num(r.point.id_max_distance_m),
            r.trial.to_string(),
            r.seed.to_string(),
            r.status.as_str().to_string(),
            r.outer_iterations.to_string(),
            num(r.sum_rate),
            num(r.lifted_sum_rate),
            num(r.harvest),
            num(r.harvest_target),
            num(r.violation),
            num(ri),
            num(re),
        ]
    });
    write_csv(path, TRIAL_HEADER, rows)
}

pub fn write_summary(path: &Path, summary: &[PointSummary]) -> Result<()> {
    let rows = summary.iter().map(|s| {
        [
            s.point.index.to_string(),
            s.point.n.to_string(),
            num(s.point.element_power_dbm),
            num(s.point.id_max_distance_m),
            s.trials.to_string(),
            s.used.to_string(),
            num(s.mean_sum_rate),
            num(s.median_sum_rate),
            num(s.median_outer_iterations),
        ]
    });
    write_csv(path, SUMMARY_HEADER, rows)
}

pub fn write_oracle(path: &Path, records: &[OracleRecord]) -> Result<()> {
    let rows = records.iter().map(|o| {
        let r = &o.optimizer;
        [
            r.trial.to_string(),
            r.seed.to_string(),
            r.status.as_str().to_string(),
            num(r.sum_rate),
            num(o.oracle_sum_rate),
            num(o.grid_sum_rate),
            num(o.relative_gap()),
            num(r.violation),
        ]
    });
    write_csv(path, ORACLE_HEADER, rows)
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub trisbf: &'static str,
    pub trisbf_core: &'static str,
}

/// Run record written next to the CSV files.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub versions: Versions,
    pub threads: usize,
    pub wall_time_s: f64,
    pub trials_run: usize,
    pub trials_skipped: usize,
    pub files: Vec<String>,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &'a ExperimentConfig) -> Self {
        Manifest {
            command,
            config,
            versions: Versions { trisbf: env!("CARGO_PKG_VERSION"), trisbf_core: trisbf_core::VERSION },
            threads: rayon::current_num_threads(),
            wall_time_s: 0.0,
            trials_run: 0,
            trials_skipped: 0,
            files: Vec::new(),
        }
    }

    /// Writes `<command>.manifest.json` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
