//! Outer loop: repeatedly solve the convex surrogate built at the previous
//! solution, tighten the rank penalty until both lifted blocks are rank one,
//! then read the beamformers off the top eigenpairs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, HermitianEigen};
use crate::metrics::{self, BeamformerPair, LiftedPair};
use crate::solver::{SolveObserver, SolveStatus, SolverOptions};
use crate::subproblem::{self, Phase1Result, SubproblemData};
use crate::system::SystemModel;

/// Geometric penalty annealing: `rho <- max(rho * decay, floor)` while the
/// rank residual exceeds `target_ratio * Tr(F)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltySchedule {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
    pub target_ratio: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self { initial: DEFAULT_INITIAL_RHO, decay: 0.7, floor: 1e-6, target_ratio: 1e-7 }
    }
}

/// Default starting penalty factor, in watts per bit.
pub const DEFAULT_INITIAL_RHO: f64 = 1e-2;

impl PenaltySchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial > 0.0
            && self.decay > 0.0
            && self.decay <= 1.0
            && self.floor > 0.0
            && self.floor <= self.initial
            && self.target_ratio > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid penalty schedule {self:?}")))
        }
    }

    /// Largest residual tolerated for a lift whose total trace is `trace`.
    pub fn residual_target(&self, trace: f64) -> f64 {
        self.target_ratio * trace
    }

    pub fn step(&self, rho: f64, max_residual: f64, target: f64) -> f64 {
        if max_residual > target {
            (rho * self.decay).max(self.floor)
        } else {
            rho
        }
    }
}

/// Default-schedule form of [`PenaltySchedule::step`].
pub fn penalty_schedule_step(rho: f64, max_residual: f64, target: f64) -> f64 {
    PenaltySchedule::default().step(rho, max_residual, target)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// `|s(t+1) - s(t)| <= objective_rel * (1 + |s(t+1)|)`.
    pub objective_rel: f64,
    pub max_outer_iters: usize,
    pub solver: SolverOptions,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { objective_rel: 1e-4, max_outer_iters: 50, solver: subproblem_solver_options() }
    }
}

/// Solver settings used for the surrogate problems: the default options with
/// a tighter barrier target so that the near-null eigenvalues of a rank-one
/// solution fall under the residual target.
pub fn subproblem_solver_options() -> SolverOptions {
    SolverOptions { gap_tolerance: 1e-11, ..SolverOptions::default() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateState {
    pub iteration: usize,
    pub lift: LiftedPair,
    /// Lifted sum-rate at `lift`.
    pub sum_rate: f64,
    pub penalty_residual_i: f64,
    pub penalty_residual_e: f64,
    /// Optimal surrogate value that produced `lift` (for iteration 0, the
    /// penalized objective at the starting point).
    pub surrogate_objective: f64,
    /// Penalty factor used to produce `lift`.
    pub rho: f64,
    pub solver_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIters,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub status: RunStatus,
    /// Recovered beams; zero when `status` is `Infeasible`.
    pub beams: BeamformerPair,
    /// Sum-rate of `beams`, from the vector expressions.
    pub achieved_sum_rate: f64,
    pub achieved_harvest: f64,
    /// Lifted sum-rate at the final iterate.
    pub lifted_sum_rate: f64,
    pub trajectory: Vec<IterateState>,
    /// Empty unless something went wrong on the way.
    pub diagnostics: String,
}

impl RunResult {
    pub fn outer_iterations(&self) -> usize {
        self.trajectory.last().map_or(0, |s| s.iteration)
    }

    pub fn final_state(&self) -> Option<&IterateState> {
        self.trajectory.last()
    }

    fn infeasible(model: &SystemModel, diagnostics: String) -> Self {
        RunResult {
            status: RunStatus::Infeasible,
            beams: BeamformerPair::zeros(model.cfg.dim_i(), model.cfg.dim_e()),
            achieved_sum_rate: 0.0,
            achieved_harvest: 0.0,
            lifted_sum_rate: 0.0,
            trajectory: Vec::new(),
            diagnostics,
        }
    }
}

/// Interior safety factors of the constructive starting point.
const INIT_POWER_FRACTION: f64 = 0.95;
const INIT_HARVEST_MARGIN: f64 = 1.1;

fn cr(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Equal-power, phase-matched ID beams: every element spends `P_t / K` on
/// each ID user.
fn id_direction(model: &SystemModel) -> CMat {
    let (n, k) = (model.cfg.n(), model.cfg.k());
    let amp = Float::sqrt(model.cfg.p_t() / k as f64);
    let f = CVec::from_fn(n * k, |idx, _| {
        let h = model.channels.h_i[idx / n][idx % n];
        if h.norm() > 0.0 {
            h / h.norm() * amp
        } else {
            cr(amp)
        }
    });
    linalg::outer(&f)
}

/// Rank-one `F_E` along the top eigenvector of the EH harvest coefficient
/// matrix, scaled so that the busiest element uses exactly `P_t`.
fn eh_direction(model: &SystemModel) -> CMat {
    let cfg = &model.cfg;
    let mut a = linalg::zeros(cfg.dim_e());
    for g in 0..cfg.g() {
        for form in &model.qf.m_ee[g] {
            form.add_to(&mut a, 1.0);
        }
    }
    let u = HermitianEigen::new(&a).top_vector();
    let f = linalg::outer(&u);
    let busiest = (0..cfg.n())
        .map(|n| linalg::trace_product(&model.ops.abar_e_matrix(n), &f))
        .fold(0.0, f64::max);
    f * cr(cfg.p_t() / busiest)
}

/// Feasible starting point: a blend of equal-power ID beams and a harvest
/// aligned EH beam, with as much weight on the ID part as the harvest
/// constraint allows. Falls back to a phase-I point when the blend cannot
/// meet the harvest target with margin.
pub fn initialize(model: &SystemModel, opts: &SolverOptions) -> Result<LiftedPair> {
    let cfg = &model.cfg;
    let id = id_direction(model);
    let eh = eh_direction(model);
    let zeros_i = linalg::zeros(cfg.dim_i());
    let zeros_e = linalg::zeros(cfg.dim_e());
    let h_id = metrics::total_harvest_lifted(&LiftedPair { f_i: id.clone(), f_e: zeros_e.clone() }, model)?;
    let h_eh = metrics::total_harvest_lifted(&LiftedPair { f_i: zeros_i, f_e: eh.clone() }, model)?;
    let need = INIT_HARVEST_MARGIN * cfg.q_t() / INIT_POWER_FRACTION;

    // harvest of t * id + (1 - t) * eh is affine in t
    let t = if h_id >= need {
        Some(1.0)
    } else if h_eh >= need {
        Some((h_eh - need) / (h_eh - h_id))
    } else {
        None
    };
    if let Some(t) = t {
        return Ok(LiftedPair { f_i: id * cr(t * INIT_POWER_FRACTION), f_e: eh * cr((1.0 - t) * INIT_POWER_FRACTION) });
    }

    let sub = constraint_system(model)?;
    match subproblem::phase1_feasible(&sub, opts)? {
        Phase1Result::Feasible(lift) => Ok(lift),
        Phase1Result::Infeasible { phase1_value } => Err(Error::Infeasible { phase1_value }),
        Phase1Result::NoStrictInterior { phase1_value } => Err(Error::NoStrictInterior { phase1_value }),
    }
}

/// A subproblem whose constraints are those of the model; its objective is
/// irrelevant (used only for phase I).
fn constraint_system(model: &SystemModel) -> Result<SubproblemData> {
    // zero is a valid expansion point once Q_t = 0; the real bound is
    // restored afterwards
    let relaxed = model.with_config(model.cfg.clone().with_q_t(0.0)?)?;
    let zero = LiftedPair::zeros(model.cfg.dim_i(), model.cfg.dim_e());
    let mut sub = subproblem::build_subproblem(&zero, &relaxed, 1.0)?;
    for c in &mut sub.constraints {
        if c.kind == subproblem::ConstraintKind::Harvest {
            c.bound = model.cfg.q_t();
        }
    }
    Ok(sub)
}

/// `f = sqrt(lambda_max) v_max` per block. `target` is the largest rank
/// residual accepted for either block.
pub fn extract_rank_one(lift: &LiftedPair, target: f64) -> Result<BeamformerPair> {
    let (ri, re) = metrics::rank_residuals(lift);
    if ri > target || re > target {
        return Err(Error::RankOneNotReached { residual_i: ri, residual_e: re });
    }
    let beam = |f: &CMat| {
        let e = HermitianEigen::new(f);
        e.top_vector() * cr(Float::sqrt(e.max_value().max(0.0)))
    };
    Ok(BeamformerPair { f_i: beam(&lift.f_i), f_e: beam(&lift.f_e) })
}

/// Largest admissible uniform down-scaling applied to recovered beams.
pub const MAX_RECOVERY_SHRINK: f64 = 1e-3;

/// Scales `beams` down (by at most [`MAX_RECOVERY_SHRINK`]) so that no element
/// exceeds `P_t`.
pub fn enforce_element_power(beams: &BeamformerPair, model: &SystemModel) -> BeamformerPair {
    let peak = (0..model.cfg.n()).map(|n| metrics::per_antenna_power(beams, &model.ops, n)).fold(0.0, f64::max);
    if peak <= model.cfg.p_t() {
        return beams.clone();
    }
    let s = Float::sqrt(model.cfg.p_t() / peak).max(1.0 - MAX_RECOVERY_SHRINK);
    beams.scaled(s)
}

/// Worst relative violation of the harvest and per-element power
/// constraints by vector beams.
pub fn beam_violation(beams: &BeamformerPair, model: &SystemModel) -> f64 {
    let cfg = &model.cfg;
    let mut worst: f64 = 0.0;
    if cfg.q_t() > 0.0 {
        worst = worst.max((cfg.q_t() - metrics::total_harvest(beams, model)) / cfg.q_t());
    }
    for n in 0..cfg.n() {
        worst = worst.max((metrics::per_antenna_power(beams, &model.ops, n) - cfg.p_t()) / cfg.p_t());
    }
    worst.max(0.0)
}

fn state(
    iteration: usize,
    lift: LiftedPair,
    model: &SystemModel,
    surrogate: f64,
    rho: f64,
    solver_iterations: usize,
) -> Result<IterateState> {
    let sum_rate = metrics::sum_rate_lifted(&lift, model)?;
    let (ri, re) = metrics::rank_residuals(&lift);
    Ok(IterateState {
        iteration,
        lift,
        sum_rate,
        penalty_residual_i: ri,
        penalty_residual_e: re,
        surrogate_objective: surrogate,
        rho,
        solver_iterations,
    })
}

fn total_trace(lift: &LiftedPair) -> f64 {
    linalg::real_trace(&lift.f_i) + linalg::real_trace(&lift.f_e)
}

fn solve_with_retry(
    sub: &SubproblemData,
    warm: &LiftedPair,
    opts: &SolverOptions,
    observer: &mut Option<&mut dyn SolveObserver>,
) -> Result<subproblem::SolveReport> {
    let first = subproblem::solve(sub, Some(warm), opts, observer.as_mut().map(|o| &mut **o as &mut dyn SolveObserver));
    match first {
        Ok(r) if r.status != SolveStatus::NumericalFailure => Ok(r),
        _ => {
            let retry = SolverOptions { gap_tolerance: opts.gap_tolerance * 0.1, ..*opts };
            let r = subproblem::solve(sub, Some(warm), &retry, observer.as_mut().map(|o| &mut **o as &mut dyn SolveObserver))?;
            if r.status == SolveStatus::NumericalFailure {
                Err(Error::Numerical(r.diagnostics))
            } else {
                Ok(r)
            }
        }
    }
}

/// Runs the penalized SCA loop from [`initialize`].
pub fn run(model: &SystemModel, schedule: &PenaltySchedule, tol: &Tolerances) -> Result<RunResult> {
    run_observed(model, schedule, tol, None)
}

/// [`run`] forwarding every inner solver step to `observer`.
pub fn run_observed(
    model: &SystemModel,
    schedule: &PenaltySchedule,
    tol: &Tolerances,
    mut observer: Option<&mut dyn SolveObserver>,
) -> Result<RunResult> {
    schedule.validate()?;
    let start = match initialize(model, &tol.solver) {
        Ok(l) => l,
        Err(e @ (Error::Infeasible { .. } | Error::NoStrictInterior { .. })) => {
            return Ok(RunResult::infeasible(model, format!("{e}")));
        }
        Err(e) => return Err(e),
    };
    let mut rho = schedule.initial;
    let s0 = subproblem::penalized_objective(&start, model, rho)?;
    let mut trajectory = Vec::new();
    trajectory.push(state(0, start, model, s0, rho, 0)?);

    let mut status = RunStatus::MaxIters;
    for t in 1..=tol.max_outer_iters {
        let prev = trajectory.last().unwrap();
        let sub = subproblem::build_subproblem(&prev.lift, model, rho)?;
        let report = solve_with_retry(&sub, &prev.lift, &tol.solver, &mut observer)?;
        let next = state(t, report.solution.hermitized(), model, report.objective, rho, report.iterations)?;

        let target = schedule.residual_target(total_trace(&next.lift));
        let residual = next.penalty_residual_i.max(next.penalty_residual_e);
        let settled = (next.surrogate_objective - prev.surrogate_objective).abs()
            <= tol.objective_rel * (1.0 + next.surrogate_objective.abs());
        let rank_one = residual <= target;
        rho = schedule.step(rho, residual, target);
        trajectory.push(next);
        if settled && rank_one {
            status = RunStatus::Converged;
            break;
        }
    }

    let last = trajectory.last().unwrap();
    let target = schedule.residual_target(total_trace(&last.lift));
    let mut diagnostics = String::new();
    let beams = match extract_rank_one(&last.lift, target) {
        Ok(b) => enforce_element_power(&b, model),
        Err(e) => {
            // best effort: still report the top-eigenvector beams
            diagnostics = format!("{e}");
            let loose = extract_rank_one(&last.lift, f64::INFINITY)?;
            enforce_element_power(&loose, model)
        }
    };
    if status == RunStatus::Converged {
        let v = beam_violation(&beams, model);
        if v > 1e-6 {
            status = RunStatus::MaxIters;
            diagnostics = format!("recovered beams violate constraints by {v:.3e}");
        }
    }
    Ok(RunResult {
        status,
        achieved_sum_rate: metrics::sum_rate(&beams, model),
        achieved_harvest: metrics::total_harvest(&beams, model),
        lifted_sum_rate: last.sum_rate,
        beams,
        trajectory,
        diagnostics,
    })
}

/// Largest total harvest reachable under the per-element power limits
/// (lifted value).
pub fn max_harvest(model: &SystemModel, opts: &SolverOptions) -> Result<f64> {
    Ok(subproblem::max_total_harvest(model, opts)?.0)
}

/// Fraction of [`max_harvest`] used as the default harvest requirement.
pub const DEFAULT_HARVEST_FRACTION: f64 = 0.1;

/// `model` with `Q_t` set to [`DEFAULT_HARVEST_FRACTION`] of the reachable
/// maximum.
pub fn with_default_harvest_target(model: &SystemModel, opts: &SolverOptions) -> Result<SystemModel> {
    let q = DEFAULT_HARVEST_FRACTION * max_harvest(model, opts)?;
    model.with_config(model.cfg.clone().with_q_t(q)?)
}
