//! Interior-point solver for the problem family
//!
//! ```text
//! maximize   sum_j w_j ln(c_j + <M_j, X>) - <L, X>
//! subject to <A_i, X> (<= | >=) b_i,   X_b PSD for every block b
//! ```
//!
//! where `X = (X_1, .., X_B)` is a tuple of Hermitian blocks and
//! `<A, X> = sum_b Re Tr(A_b X_b)`. Phase I finds a strictly interior
//! start (or certifies infeasibility); the main phase follows the central
//! path of the log-barrier problem.

mod barrier;

use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;

pub use barrier::{EngineOptions, StepInfo};
use barrier::{Engine, EngineStatus, Ineq, LogTerm, Var};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, HermitianEigen};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemLogTerm {
    pub weight: f64,
    pub constant: f64,
    /// One coefficient matrix per block.
    pub coeffs: Vec<CMat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConstraint {
    pub coeffs: Vec<CMat>,
    pub bound: f64,
    pub sense: Sense,
}

impl ProblemConstraint {
    pub fn value(&self, x: &[CMat]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| linalg::trace_product(a, b)).sum()
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[CMat]) -> f64 {
        let v = self.value(x);
        match self.sense {
            Sense::Le => (v - self.bound).max(0.0),
            Sense::Ge => (self.bound - v).max(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexProblem {
    pub block_dims: Vec<usize>,
    pub log_terms: Vec<ProblemLogTerm>,
    pub linear: Vec<CMat>,
    pub constraints: Vec<ProblemConstraint>,
}

impl ConvexProblem {
    pub fn objective(&self, x: &[CMat]) -> f64 {
        let logs: f64 = self
            .log_terms
            .iter()
            .map(|t| {
                let u = t.constant + t.coeffs.iter().zip(x).map(|(a, b)| linalg::trace_product(a, b)).sum::<f64>();
                t.weight * Float::ln(u)
            })
            .sum();
        let lin: f64 = self.linear.iter().zip(x).map(|(a, b)| linalg::trace_product(a, b)).sum();
        logs - lin
    }

    /// Largest constraint violation, each scaled by `1 + |b_i|`.
    pub fn max_violation(&self, x: &[CMat]) -> f64 {
        self.constraints.iter().map(|c| c.violation(x) / (1.0 + c.bound.abs())).fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let nb = self.block_dims.len();
        let check = |what: &'static str, mats: &[CMat]| -> Result<()> {
            if mats.len() != nb {
                return Err(Error::DimensionMismatch { what, expected: nb, found: mats.len() });
            }
            for (m, &d) in mats.iter().zip(&self.block_dims) {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::DimensionMismatch { what, expected: d, found: m.nrows() });
                }
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::InvalidConfig(alloc::format!("{what}: non-finite entry")));
                }
            }
            Ok(())
        };
        if self.block_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("blocks must be non-empty".into()));
        }
        check("linear", &self.linear)?;
        for t in &self.log_terms {
            check("log term", &t.coeffs)?;
            if !(t.constant > 0.0 && t.constant.is_finite()) || !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(Error::InvalidConfig("log terms need positive weight and constant".into()));
            }
        }
        for c in &self.constraints {
            check("constraint", &c.coeffs)?;
            if !c.bound.is_finite() {
                return Err(Error::InvalidConfig("constraint bounds must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub initial_barrier: f64,
    pub barrier_decay: f64,
    /// Stop once `barrier_weight * barrier_parameter` drops below this
    /// (normalized objective units).
    pub gap_tolerance: f64,
    pub fraction_to_boundary: f64,
    pub max_newton_per_stage: usize,
    pub max_newton_total: usize,
    /// Phase I accepts a point only if every normalized slack exceeds this.
    pub strict_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            initial_barrier: 1.0,
            barrier_decay: 0.2,
            gap_tolerance: 1e-8,
            fraction_to_boundary: 0.98,
            max_newton_per_stage: 200,
            max_newton_total: 3000,
            strict_margin: 1e-6,
        }
    }
}

impl SolverOptions {
    fn engine(&self) -> EngineOptions {
        EngineOptions {
            initial_barrier: self.initial_barrier,
            barrier_decay: self.barrier_decay,
            gap_tolerance: self.gap_tolerance,
            fraction_to_boundary: self.fraction_to_boundary,
            max_newton_per_stage: self.max_newton_per_stage,
            max_newton_total: self.max_newton_total,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    NumericalFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolvePhase {
    PhaseOne,
    Main,
}

/// One line of the optional convergence trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub phase: SolvePhase,
    pub iteration: usize,
    pub barrier_weight: f64,
    /// Objective in original units (phase I: the infeasibility measure).
    pub objective: f64,
    pub step: f64,
}

pub trait SolveObserver {
    fn record(&mut self, rec: &TraceRecord);
}

impl<F: FnMut(&TraceRecord)> SolveObserver for F {
    fn record(&mut self, rec: &TraceRecord) {
        self(rec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSolution {
    pub blocks: Vec<CMat>,
    pub objective: f64,
    pub iterations: usize,
    pub phase1_iterations: usize,
    pub max_constraint_violation: f64,
    pub status: SolveStatus,
    /// Gradient norm of the barrier-augmented objective at the final
    /// barrier weight, in normalized units.
    pub kkt_residual: f64,
    /// Objective (original units) at the end of each barrier stage.
    pub stage_objectives: Vec<f64>,
    pub diagnostics: String,
}

/// The problem after dropping trivial constraints and rescaling: the variable
/// is `X / var_scale`, every constraint is `<=` with unit-scale bound, every
/// log constant is 1, and the objective is divided by `obj_scale`.
struct Normalized {
    engine: Engine,
    var_scale: f64,
    obj_scale: f64,
}

fn to_var(blocks: &[CMat], scale: f64) -> Var {
    let s = Complex64::new(scale, 0.0);
    Var { blocks: blocks.iter().map(|b| linalg::hermitize(b) * s).collect(), scal: Vec::new() }
}

fn all_psd(mats: &[CMat]) -> bool {
    mats.iter().all(|m| linalg::is_numerically_psd(m, 1e-12))
}

fn normalize(p: &ConvexProblem) -> Result<Normalized> {
    p.validate()?;
    let dims = &p.block_dims;

    // drop constraints that cannot bind, reject ones that cannot hold
    let mut kept: Vec<(Vec<CMat>, f64)> = Vec::new();
    for c in &p.constraints {
        let zero = c.coeffs.iter().all(|m| m.iter().all(|z| z.norm_sqr() == 0.0));
        let (coeffs, bound) = match c.sense {
            Sense::Le => (c.coeffs.clone(), c.bound),
            Sense::Ge => {
                if c.bound <= 0.0 && all_psd(&c.coeffs) {
                    // implied by X PSD
                    continue;
                }
                (c.coeffs.iter().map(|m| -m).collect(), -c.bound)
            }
        };
        if zero {
            if bound < 0.0 {
                return Err(Error::Infeasible { phase1_value: -bound });
            }
            continue;
        }
        kept.push((coeffs.iter().map(linalg::hermitize).collect(), bound));
    }

    // boundedness: PSD "<=" rows must cover every block
    let mut var_scale = f64::INFINITY;
    for (b, &d) in dims.iter().enumerate() {
        let mut cover = linalg::zeros(d);
        for (coeffs, bound) in &kept {
            if all_psd(coeffs) {
                cover += &coeffs[b];
                let tr: f64 = coeffs.iter().map(linalg::real_trace).sum();
                if *bound > 0.0 && tr > 0.0 {
                    var_scale = var_scale.min(0.5 * bound / tr);
                }
            }
        }
        let e = HermitianEigen::new(&cover);
        if !(e.min_value() > 1e-12 * e.max_value().abs()) || e.max_value() <= 0.0 {
            return Err(Error::Unbounded { block: b });
        }
    }
    if !var_scale.is_finite() {
        var_scale = 1.0;
    }

    let ineqs: Vec<Ineq> = kept
        .iter()
        .map(|(coeffs, bound)| {
            let a = to_var(coeffs, var_scale);
            let size: f64 = a.blocks.iter().map(linalg::frobenius).sum();
            let nu = bound.abs().max(size);
            Ineq::new(a.scaled(1.0 / nu), bound / nu)
        })
        .collect();

    let linear = to_var(&p.linear, var_scale);
    let total_weight: f64 = p.log_terms.iter().map(|t| t.weight).sum();
    let lin_size: f64 = linear.blocks.iter().map(|b| linalg::real_trace(b).abs() + linalg::frobenius(b)).sum();
    let mut obj_scale = total_weight + lin_size;
    if !(obj_scale > 0.0) {
        obj_scale = 1.0;
    }
    let logs = p
        .log_terms
        .iter()
        .map(|t| LogTerm::new(t.weight / obj_scale, 1.0, to_var(&t.coeffs, var_scale / t.constant)))
        .collect();
    let engine = Engine {
        dims: dims.clone(),
        scal_upper: Vec::new(),
        logs,
        linear: linear.scaled(1.0 / obj_scale),
        ineqs,
    };
    Ok(Normalized { engine, var_scale, obj_scale })
}

fn denormalize(x: &Var, var_scale: f64) -> Vec<CMat> {
    let s = Complex64::new(var_scale, 0.0);
    x.blocks.iter().map(|b| linalg::hermitize(&(b * s))).collect()
}

/// Outcome of the feasibility stage.
#[derive(Clone, Debug, PartialEq)]
pub enum Phase1Outcome {
    /// Strictly interior point (every slack positive, every block PD).
    Feasible(Vec<CMat>),
    /// Best achievable normalized max-violation is positive.
    Infeasible { phase1_value: f64 },
    /// Feasible only on the boundary (optimum within the strict margin of 0).
    NoStrictInterior { phase1_value: f64 },
}

/// Strictly feasible normalized point, with the number of Newton steps used.
fn phase1_normalized(
    n: &Normalized,
    opts: &SolverOptions,
    observer: &mut Option<&mut dyn SolveObserver>,
) -> core::result::Result<(Var, usize), Phase1Outcome> {
    let e = &n.engine;
    let x0 = Var::identity(&e.dims, 0);
    let slacks = e.slacks(&x0);
    if slacks.iter().all(|s| *s > opts.strict_margin) {
        return Ok((x0, 0));
    }
    // minimize t s.t. <a_i, X> - t <= b_i, with t bounded above
    let t0 = slacks.iter().map(|s| -s).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut ext = Engine {
        dims: e.dims.clone(),
        scal_upper: alloc::vec![t0 + 1.0],
        logs: Vec::new(),
        linear: Var::zeros(&e.dims, 1),
        ineqs: e
            .ineqs
            .iter()
            .map(|c| Ineq::new(Var { blocks: c.coeffs.blocks.clone(), scal: alloc::vec![-1.0] }, c.bound))
            .collect(),
    };
    ext.linear.scal[0] = 1.0;
    let mut start = x0;
    start.scal = alloc::vec![t0];
    let margin = opts.strict_margin;
    let mut eopts = opts.engine();
    eopts.gap_tolerance = opts.gap_tolerance.min(1e-10);
    let var_scale = n.var_scale;
    let res = ext.run(
        start,
        &eopts,
        |info| {
            if let Some(obs) = observer.as_mut() {
                obs.record(&TraceRecord {
                    phase: SolvePhase::PhaseOne,
                    iteration: info.newton_iter,
                    barrier_weight: info.barrier_weight,
                    objective: -info.objective,
                    step: info.step,
                });
            }
        },
        |x| x.scal[0] < -margin,
    );
    let _ = var_scale;
    let t = res.x.scal[0];
    if t < -margin {
        let mut x = res.x;
        x.scal.clear();
        return Ok((x, res.iterations));
    }
    match res.status {
        EngineStatus::Converged | EngineStatus::Stopped => {
            if t > margin {
                Err(Phase1Outcome::Infeasible { phase1_value: t })
            } else {
                Err(Phase1Outcome::NoStrictInterior { phase1_value: t })
            }
        }
        // an unfinished phase I that never got below zero is reported as
        // infeasible with the best value seen
        _ => Err(Phase1Outcome::Infeasible { phase1_value: t }),
    }
}

/// Finds a strictly interior point of the constraint system of `p`.
pub fn phase1(p: &ConvexProblem, opts: &SolverOptions) -> Result<Phase1Outcome> {
    let n = normalize(p)?;
    let mut none: Option<&mut dyn SolveObserver> = None;
    Ok(match phase1_normalized(&n, opts, &mut none) {
        Ok((x, _)) => Phase1Outcome::Feasible(denormalize(&x, n.var_scale)),
        Err(outcome) => outcome,
    })
}

fn phase1_error(o: Phase1Outcome) -> Error {
    match o {
        Phase1Outcome::Infeasible { phase1_value } => Error::Infeasible { phase1_value },
        Phase1Outcome::NoStrictInterior { phase1_value } => Error::NoStrictInterior { phase1_value },
        Phase1Outcome::Feasible(_) => unreachable!(),
    }
}

/// Solves `p`, optionally starting from `warm` (original units). A warm start
/// is blended toward a strictly interior point before use; without one the
/// run starts from phase I.
pub fn solve_problem(
    p: &ConvexProblem,
    warm: Option<&[CMat]>,
    opts: &SolverOptions,
    mut observer: Option<&mut dyn SolveObserver>,
) -> Result<ProblemSolution> {
    let n = normalize(p)?;
    let e = &n.engine;

    let inside = |x: &Var| {
        x.blocks.iter().all(|b| nalgebra::Cholesky::new(b.clone()).is_some())
            && e.slacks(x).iter().all(|s| *s > 0.0)
            && e.logs.iter().all(|t| t.constant + t.coeffs.dot(x) > 0.0)
    };
    let blend = |xw: &Var, toward: &Var, taus: &[f64]| {
        taus.iter().find_map(|&tau| {
            let mut x = xw.scaled(1.0 - tau);
            x.axpy(tau, toward);
            inside(&x).then_some(x)
        })
    };
    let warm = warm.and_then(|w| {
        let fits = w.len() == e.dims.len() && w.iter().zip(&e.dims).all(|(m, d)| m.nrows() == *d);
        fits.then(|| to_var(w, 1.0 / n.var_scale))
    });

    // a warm point with every constraint active is pulled toward a strict
    // interior point; starting on the boundary stalls the Newton steps
    let (x0, p1_iters) = match warm.as_ref().and_then(|xw| blend(xw, &Var::identity(&e.dims, 0), &[1e-3, 1e-6])) {
        Some(x) => (x, 0),
        None => {
            let (xp, iters) = phase1_normalized(&n, opts, &mut observer).map_err(phase1_error)?;
            match warm.as_ref().and_then(|xw| blend(xw, &xp, &[1e-2, 1e-1])) {
                Some(x) => (x, iters),
                None => (xp, iters),
            }
        }
    };

    let obj_scale = n.obj_scale;
    let var_scale = n.var_scale;
    let res = e.run(
        x0,
        &opts.engine(),
        |info| {
            if let Some(obs) = observer.as_mut() {
                obs.record(&TraceRecord {
                    phase: SolvePhase::Main,
                    iteration: info.newton_iter,
                    barrier_weight: info.barrier_weight,
                    objective: info.objective * obj_scale,
                    step: info.step,
                });
            }
        },
        |_| false,
    );
    let blocks = denormalize(&res.x, var_scale);
    let status = match res.status {
        EngineStatus::Converged => SolveStatus::Optimal,
        EngineStatus::MaxIters => SolveStatus::MaxIters,
        EngineStatus::NumericalFailure | EngineStatus::Stopped => SolveStatus::NumericalFailure,
    };
    let log_offset: f64 = p.log_terms.iter().map(|t| t.weight * Float::ln(t.constant)).sum();
    let diagnostics = match status {
        SolveStatus::Optimal => String::new(),
        _ => alloc::format!(
            "stopped after {} Newton steps at barrier weight {:e}, gradient norm {:e}",
            res.iterations,
            res.barrier_weight,
            res.kkt_residual
        ),
    };
    Ok(ProblemSolution {
        objective: p.objective(&blocks),
        max_constraint_violation: p.max_violation(&blocks),
        iterations: res.iterations,
        phase1_iterations: p1_iters,
        status,
        kkt_residual: res.kkt_residual,
        stage_objectives: res.stage_objectives.iter().map(|v| v * obj_scale + log_offset).collect(),
        diagnostics,
        blocks,
    })
}

#[cfg(test)]
mod tests;
