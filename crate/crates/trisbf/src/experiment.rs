//! Monte Carlo drivers. Every (sweep point, trial) pair is independent; the
//! pairs run on the rayon pool and come back in (point, trial) order, so the
//! output does not depend on the thread count.

use anyhow::{bail, Result};
use log::{info, warn};
use rayon::prelude::*;
use trisbf_core::channel;
use trisbf_core::linalg;
use trisbf_core::metrics;
use trisbf_core::optimizer::{self, IterateState, RunStatus};
use trisbf_core::oracle::{self, BruteForceGrid, GridBest, OracleResult};
use trisbf_core::system::SystemModel;

use crate::config::{ExperimentConfig, HarvestTarget, Sweep, DEFAULT_DISTANCE_SWEEP_M, DEFAULT_POWER_SWEEP_DBM};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    Convergence,
    PowerSweep,
    DistanceSweep,
}

/// Parameters that vary along a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub n: usize,
    pub element_power_dbm: f64,
    pub id_max_distance_m: f64,
}

/// Sweep points of `study`. Convergence runs take an element sweep (or the
/// configured `n`); the two trend studies fall back to their default grids
/// when the config has no sweep.
pub fn points(cfg: &ExperimentConfig, study: Study) -> Result<Vec<SweepPoint>> {
    let base = SweepPoint {
        index: 0,
        n: cfg.system.n,
        element_power_dbm: cfg.system.element_power_dbm,
        id_max_distance_m: cfg.scenario.id_distance_m[1],
    };
    let at = |index: usize, f: &dyn Fn(&mut SweepPoint)| {
        let mut p = SweepPoint { index, ..base };
        f(&mut p);
        p
    };
    let out: Vec<SweepPoint> = match (study, &cfg.sweep) {
        (Study::Convergence, Sweep::None) => vec![base],
        (Study::Convergence, Sweep::Elements(ns)) => ns.iter().enumerate().map(|(i, &n)| at(i, &|p| p.n = n)).collect(),
        (Study::PowerSweep, Sweep::PowerDbm(v)) => v.iter().enumerate().map(|(i, &x)| at(i, &|p| p.element_power_dbm = x)).collect(),
        (Study::PowerSweep, Sweep::None) => {
            DEFAULT_POWER_SWEEP_DBM.iter().enumerate().map(|(i, &x)| at(i, &|p| p.element_power_dbm = x)).collect()
        }
        (Study::DistanceSweep, Sweep::DistanceM(v)) => v.iter().enumerate().map(|(i, &x)| at(i, &|p| p.id_max_distance_m = x)).collect(),
        (Study::DistanceSweep, Sweep::None) => {
            DEFAULT_DISTANCE_SWEEP_M.iter().enumerate().map(|(i, &x)| at(i, &|p| p.id_max_distance_m = x)).collect()
        }
        (study, sweep) => bail!("{study:?} cannot use sweep {sweep:?}"),
    };
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialStatus {
    Converged,
    MaxIters,
    Infeasible,
    Failed,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Converged => "converged",
            TrialStatus::MaxIters => "max_iters",
            TrialStatus::Infeasible => "infeasible",
            TrialStatus::Failed => "failed",
        }
    }

    /// Whether the trial produced beams that enter the statistics.
    pub fn has_beams(self) -> bool {
        matches!(self, TrialStatus::Converged | TrialStatus::MaxIters)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub iteration: usize,
    /// Vector sum-rate of the top-eigenvector beams of the iterate.
    pub sum_rate: f64,
    pub lifted_sum_rate: f64,
    pub penalty_residual_i: f64,
    pub penalty_residual_e: f64,
    pub rho: f64,
    pub surrogate_objective: f64,
    pub solver_iterations: usize,
}

/// Outcome of one trial. Metric fields are NaN unless `status.has_beams()`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub point: SweepPoint,
    pub trial: usize,
    pub seed: u64,
    pub status: TrialStatus,
    pub outer_iterations: usize,
    /// From the recovered vector beams.
    pub sum_rate: f64,
    pub lifted_sum_rate: f64,
    pub harvest: f64,
    pub harvest_target: f64,
    /// Worst relative constraint violation of the recovered beams.
    pub violation: f64,
    pub residual_i: f64,
    pub residual_e: f64,
    pub trace_i: f64,
    pub trace_e: f64,
    pub trajectory: Vec<TrajectoryRow>,
    pub message: String,
}

impl TrialRecord {
    fn empty(point: SweepPoint, trial: usize, seed: u64, status: TrialStatus, message: String) -> Self {
        TrialRecord {
            point,
            trial,
            seed,
            status,
            outer_iterations: 0,
            sum_rate: f64::NAN,
            lifted_sum_rate: f64::NAN,
            harvest: f64::NAN,
            harvest_target: f64::NAN,
            violation: f64::NAN,
            residual_i: f64::NAN,
            residual_e: f64::NAN,
            trace_i: f64::NAN,
            trace_e: f64::NAN,
            trajectory: Vec::new(),
            message,
        }
    }

    /// Per-block rank residual over the total trace of the final lift.
    pub fn residual_ratios(&self) -> (f64, f64) {
        let tr = self.trace_i + self.trace_e;
        (self.residual_i / tr, self.residual_e / tr)
    }
}

/// Model of trial `trial` at `point`, harvest target included.
pub fn build_model(cfg: &ExperimentConfig, point: &SweepPoint, trial: usize) -> Result<SystemModel> {
    let mut params = cfg.scenario.params(cfg.seed(trial));
    params.id_distance_range[1] = point.id_max_distance_m;
    let sys = cfg.system.config(point.n, point.element_power_dbm)?;
    let (_, raw) = channel::generate(&params, &sys)?;
    let model = SystemModel::new(sys, &raw)?;
    let q_t = match cfg.system.harvest {
        HarvestTarget::FractionOfMax(f) => f * optimizer::max_harvest(&model, &cfg.tolerances().solver)?,
        HarvestTarget::Watts(w) => w,
    };
    Ok(model.with_config(model.cfg.clone().with_q_t(q_t)?)?)
}

fn trajectory_row(s: &IterateState, model: &SystemModel) -> TrajectoryRow {
    let sum_rate = optimizer::extract_rank_one(&s.lift, f64::INFINITY)
        .map(|b| metrics::sum_rate(&optimizer::enforce_element_power(&b, model), model))
        .unwrap_or(f64::NAN);
    TrajectoryRow {
        iteration: s.iteration,
        sum_rate,
        lifted_sum_rate: s.sum_rate,
        penalty_residual_i: s.penalty_residual_i,
        penalty_residual_e: s.penalty_residual_e,
        rho: s.rho,
        surrogate_objective: s.surrogate_objective,
        solver_iterations: s.solver_iterations,
    }
}

fn optimize(cfg: &ExperimentConfig, model: &SystemModel, point: SweepPoint, trial: usize) -> TrialRecord {
    let seed = cfg.seed(trial);
    let run = match optimizer::run(model, &cfg.schedule.schedule(), &cfg.tolerances()) {
        Ok(r) => r,
        Err(e) => return TrialRecord::empty(point, trial, seed, TrialStatus::Failed, format!("{e}")),
    };
    let status = match run.status {
        RunStatus::Converged => TrialStatus::Converged,
        RunStatus::MaxIters => TrialStatus::MaxIters,
        RunStatus::Infeasible => return TrialRecord::empty(point, trial, seed, TrialStatus::Infeasible, run.diagnostics),
    };
    let last = run.final_state().expect("feasible runs have a trajectory");
    TrialRecord {
        point,
        trial,
        seed,
        status,
        outer_iterations: run.outer_iterations(),
        sum_rate: run.achieved_sum_rate,
        lifted_sum_rate: run.lifted_sum_rate,
        harvest: run.achieved_harvest,
        harvest_target: model.cfg.q_t(),
        violation: optimizer::beam_violation(&run.beams, model),
        residual_i: last.penalty_residual_i,
        residual_e: last.penalty_residual_e,
        trace_i: linalg::real_trace(&last.lift.f_i),
        trace_e: linalg::real_trace(&last.lift.f_e),
        trajectory: run.trajectory.iter().map(|s| trajectory_row(s, model)).collect(),
        message: run.diagnostics,
    }
}

fn report(r: &TrialRecord) {
    if !r.status.has_beams() {
        warn!("point {} trial {} (seed {}) skipped: {} {}", r.point.index, r.trial, r.seed, r.status.as_str(), r.message);
    }
}

pub fn run_trial(cfg: &ExperimentConfig, point: SweepPoint, trial: usize) -> TrialRecord {
    let r = match build_model(cfg, &point, trial) {
        Ok(model) => optimize(cfg, &model, point, trial),
        Err(e) => TrialRecord::empty(point, trial, cfg.seed(trial), TrialStatus::Failed, format!("{e:#}")),
    };
    report(&r);
    r
}

/// All trials of all points, ordered by (point, trial).
pub fn run_points(cfg: &ExperimentConfig, points: &[SweepPoint]) -> Vec<TrialRecord> {
    let jobs: Vec<(SweepPoint, usize)> = points.iter().flat_map(|p| (0..cfg.trials).map(move |t| (*p, t))).collect();
    info!("running {} trials over {} points", jobs.len(), points.len());
    jobs.par_iter().map(|&(p, t)| run_trial(cfg, p, t)).collect()
}

pub fn run_study(cfg: &ExperimentConfig, study: Study) -> Result<(Vec<SweepPoint>, Vec<TrialRecord>)> {
    let pts = points(cfg, study)?;
    let records = run_points(cfg, &pts);
    Ok((pts, records))
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointSummary {
    pub point: SweepPoint,
    pub trials: usize,
    /// Trials with beams (not infeasible, not failed).
    pub used: usize,
    pub mean_sum_rate: f64,
    pub median_sum_rate: f64,
    pub median_outer_iterations: f64,
}

pub fn summarize(points: &[SweepPoint], records: &[TrialRecord]) -> Vec<PointSummary> {
    points
        .iter()
        .map(|p| {
            let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.point.index == p.index).collect();
            let used: Vec<&TrialRecord> = mine.iter().copied().filter(|r| r.status.has_beams()).collect();
            let rates: Vec<f64> = used.iter().map(|r| r.sum_rate).collect();
            let iters: Vec<f64> = used.iter().map(|r| r.outer_iterations as f64).collect();
            PointSummary {
                point: *p,
                trials: mine.len(),
                used: used.len(),
                mean_sum_rate: mean(&rates),
                median_sum_rate: median(&rates),
                median_outer_iterations: median(&iters),
            }
        })
        .collect()
}

/// Largest relative size of an adjacent inversion tolerated by
/// [`monotone_within_noise`].
pub const INVERSION_TOLERANCE: f64 = 0.005;

/// Adjacent pairs moving against the expected direction, with their size
/// relative to the earlier value.
pub fn inversions(values: &[f64], increasing: bool) -> Vec<(usize, f64)> {
    values
        .windows(2)
        .enumerate()
        .filter_map(|(i, w)| {
            let against = if increasing { w[0] - w[1] } else { w[1] - w[0] };
            (against > 0.0).then(|| (i, against / w[0].abs()))
        })
        .collect()
}

/// Monotone in the expected direction except for at most one adjacent
/// inversion of relative size at most [`INVERSION_TOLERANCE`].
pub fn monotone_within_noise(values: &[f64], increasing: bool) -> bool {
    if values.iter().any(|v| !v.is_finite()) {
        return false;
    }
    match inversions(values, increasing).as_slice() {
        [] => true,
        [(_, size)] => *size <= INVERSION_TOLERANCE,
        _ => false,
    }
}

/// Median over trials of the paired drop `rate(point i) - rate(point i+1)`,
/// for each adjacent pair. Only trials with beams at both points count.
pub fn median_adjacent_drops(points: &[SweepPoint], records: &[TrialRecord]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| {
            let drops: Vec<f64> = records
                .iter()
                .filter(|a| a.point.index == w[0].index && a.status.has_beams())
                .filter_map(|a| {
                    records
                        .iter()
                        .find(|b| b.point.index == w[1].index && b.trial == a.trial && b.status.has_beams())
                        .map(|b| a.sum_rate - b.sum_rate)
                })
                .collect();
            median(&drops)
        })
        .collect()
}

/// Whether the first adjacent drop is at least every later one.
pub fn steepest_drop_first(drops: &[f64]) -> bool {
    match drops.split_first() {
        Some((first, rest)) => first.is_finite() && rest.iter().all(|d| d <= first),
        None => false,
    }
}

/// Brute-force grid optimum with the scan split into chunks across the
/// rayon pool; the chunks are merged in index order.
pub fn parallel_brute_force(model: &SystemModel, resolution: usize) -> Result<OracleResult> {
    let grid = BruteForceGrid::new(model, resolution)?;
    let chunk = grid.len().div_ceil(4 * rayon::current_num_threads()).max(1);
    let ranges: Vec<std::ops::Range<usize>> =
        (0..grid.len()).step_by(chunk).map(|s| s..(s + chunk).min(grid.len())).collect();
    let parts: Vec<GridBest> = ranges.into_par_iter().map(|r| grid.scan(r)).collect();
    let best = parts.into_iter().fold(GridBest::none(), GridBest::merge);
    Ok(oracle::finish(&grid, model, best)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleRecord {
    pub optimizer: TrialRecord,
    /// NaN when the grid holds no feasible pair.
    pub oracle_sum_rate: f64,
    pub grid_sum_rate: f64,
}

impl OracleRecord {
    /// `(oracle - optimizer) / oracle`; negative when the optimizer wins.
    pub fn relative_gap(&self) -> f64 {
        (self.oracle_sum_rate - self.optimizer.sum_rate) / self.oracle_sum_rate
    }
}

/// Optimizer against the grid oracle on `trials` draws of the configured
/// single-ID, single-EH system.
pub fn oracle_check(cfg: &ExperimentConfig) -> Result<Vec<OracleRecord>> {
    let point = points(cfg, Study::Convergence)?;
    if point.len() != 1 {
        bail!("oracle-check runs a single system size");
    }
    let point = point[0];
    // fail fast on unsupported sizes
    let probe = build_model(cfg, &point, 0)?;
    BruteForceGrid::new(&probe, 2)?;
    let out = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let model = match build_model(cfg, &point, t) {
                Ok(m) => m,
                Err(e) => {
                    let r = TrialRecord::empty(point, t, cfg.seed(t), TrialStatus::Failed, format!("{e:#}"));
                    report(&r);
                    return OracleRecord { optimizer: r, oracle_sum_rate: f64::NAN, grid_sum_rate: f64::NAN };
                }
            };
            let optimizer = optimize(cfg, &model, point, t);
            report(&optimizer);
            match parallel_brute_force(&model, cfg.oracle_resolution) {
                Ok(o) => OracleRecord { optimizer, oracle_sum_rate: o.sum_rate, grid_sum_rate: o.grid_sum_rate },
                Err(e) => {
                    warn!("trial {t}: oracle found no feasible grid point: {e}");
                    OracleRecord { optimizer, oracle_sum_rate: f64::NAN, grid_sum_rate: f64::NAN }
                }
            }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_rule() {
        assert!(monotone_within_noise(&[1.0, 2.0, 3.0], true));
        assert!(monotone_within_noise(&[1.0, 2.0, 1.995, 3.0], true));
        assert!(!monotone_within_noise(&[1.0, 2.0, 1.9, 3.0], true));
        assert!(!monotone_within_noise(&[1.0, 0.999, 2.0, 1.999], true));
        assert!(monotone_within_noise(&[3.0, 2.0, 2.0, 1.0], false));
        assert!(!monotone_within_noise(&[3.0, f64::NAN], false));
    }

    #[test]
    fn steepest_first() {
        assert!(steepest_drop_first(&[2.0, 1.0, 2.0]));
        assert!(!steepest_drop_first(&[1.0, 1.5]));
        assert!(!steepest_drop_first(&[]));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn default_grids_and_mismatched_sweeps() {
        let cfg = ExperimentConfig::default();
        assert_eq!(points(&cfg, Study::PowerSweep).unwrap().len(), DEFAULT_POWER_SWEEP_DBM.len());
        assert_eq!(points(&cfg, Study::DistanceSweep).unwrap().len(), DEFAULT_DISTANCE_SWEEP_M.len());
        let c = ExperimentConfig { sweep: Sweep::Elements(vec![2, 4]), ..cfg };
        let p = points(&c, Study::Convergence).unwrap();
        assert_eq!(p.iter().map(|p| p.n).collect::<Vec<_>>(), vec![2, 4]);
        assert!(points(&c, Study::PowerSweep).is_err());
    }

    #[test]
    fn identical_points_give_identical_results() {
        let cfg = ExperimentConfig {
            sweep: Sweep::PowerDbm(vec![5.0, 5.0]),
            trials: 2,
            system: crate::config::SystemSpec { n: 2, ..Default::default() },
            ..Default::default()
        };
        let (pts, recs) = run_study(&cfg, Study::PowerSweep).unwrap();
        let s = summarize(&pts, &recs);
        assert_eq!(s[0].mean_sum_rate.to_bits(), s[1].mean_sum_rate.to_bits());
        assert_eq!(s[0].used, 2);
    }
}
