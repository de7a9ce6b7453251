//! Assembly of the per-iteration convex problem: concave log terms from the
//! total-power part of every rate, linear terms from the linearized
//! interference part and the linearized rank penalty, and the energy /
//! per-element power constraints.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, HermitianEigen};
use crate::metrics::{self, LiftedPair};
use crate::solver::{self, ConvexProblem, ProblemConstraint, ProblemLogTerm, Sense, SolveObserver, SolveStatus, SolverOptions};
use crate::system::SystemModel;

pub use crate::solver::Sense as ConstraintSense;

/// `weight * ln(constant + <coeffs_i, F_I> + <coeffs_e, F_E>)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogTerm {
    pub constant: f64,
    pub weight: f64,
    pub coeffs_i: CMat,
    pub coeffs_e: CMat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    Harvest,
    ElementPower(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceConstraint {
    pub kind: ConstraintKind,
    pub a_i: CMat,
    pub a_e: CMat,
    pub bound: f64,
    pub sense: Sense,
}

impl TraceConstraint {
    pub fn value(&self, lift: &LiftedPair) -> f64 {
        linalg::trace_product(&self.a_i, &lift.f_i) + linalg::trace_product(&self.a_e, &lift.f_e)
    }

    /// Violation relative to `max(|bound|, tiny)`.
    pub fn relative_violation(&self, lift: &LiftedPair) -> f64 {
        let v = self.value(lift);
        let gap = match self.sense {
            Sense::Le => v - self.bound,
            Sense::Ge => self.bound - v,
        };
        gap.max(0.0) / self.bound.abs().max(f64::MIN_POSITIVE)
    }
}

/// One instance of the convex surrogate problem. Its objective, to be
/// maximized, is
/// `sum_k log_k(F) - <linear_i, F_I> - <linear_e, F_E> + constant_offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubproblemData {
    pub dim_i: usize,
    pub dim_e: usize,
    pub log_terms: Vec<LogTerm>,
    pub linear_i: CMat,
    pub linear_e: CMat,
    pub constant_offset: f64,
    pub constraints: Vec<TraceConstraint>,
    pub rho: f64,
}

impl SubproblemData {
    pub fn objective(&self, lift: &LiftedPair) -> f64 {
        let logs: f64 = self
            .log_terms
            .iter()
            .map(|t| {
                let u = t.constant + linalg::trace_product(&t.coeffs_i, &lift.f_i) + linalg::trace_product(&t.coeffs_e, &lift.f_e);
                t.weight * Float::ln(u)
            })
            .sum();
        logs - linalg::trace_product(&self.linear_i, &lift.f_i) - linalg::trace_product(&self.linear_e, &lift.f_e)
            + self.constant_offset
    }

    pub fn max_relative_violation(&self, lift: &LiftedPair) -> f64 {
        self.constraints.iter().map(|c| c.relative_violation(lift)).fold(0.0, f64::max)
    }

    /// Solver-facing form with blocks `[F_I, F_E]`; the constant offset is
    /// not part of it.
    pub fn to_problem(&self) -> ConvexProblem {
        ConvexProblem {
            block_dims: vec![self.dim_i, self.dim_e],
            log_terms: self
                .log_terms
                .iter()
                .map(|t| ProblemLogTerm { weight: t.weight, constant: t.constant, coeffs: vec![t.coeffs_i.clone(), t.coeffs_e.clone()] })
                .collect(),
            linear: vec![self.linear_i.clone(), self.linear_e.clone()],
            constraints: self
                .constraints
                .iter()
                .map(|c| ProblemConstraint { coeffs: vec![c.a_i.clone(), c.a_e.clone()], bound: c.bound, sense: c.sense })
                .collect(),
        }
    }
}

impl SubproblemData {
    /// Line-oriented text form. Every matrix is written as a header line
    /// followed by one line per row holding `re im` pairs; floats use the
    /// shortest representation that reads back to the same bits.
    pub fn to_text_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "subproblem");
        let _ = writeln!(out, "dims {} {}", self.dim_i, self.dim_e);
        let _ = writeln!(out, "rho {:e}", self.rho);
        let _ = writeln!(out, "constant_offset {:e}", self.constant_offset);
        write_matrix(&mut out, "linear_i", &self.linear_i);
        write_matrix(&mut out, "linear_e", &self.linear_e);
        let _ = writeln!(out, "log_terms {}", self.log_terms.len());
        for t in &self.log_terms {
            let _ = writeln!(out, "log {:e} {:e}", t.constant, t.weight);
            write_matrix(&mut out, "coeffs_i", &t.coeffs_i);
            write_matrix(&mut out, "coeffs_e", &t.coeffs_e);
        }
        let _ = writeln!(out, "constraints {}", self.constraints.len());
        for c in &self.constraints {
            let kind = match c.kind {
                ConstraintKind::Harvest => String::from("harvest"),
                ConstraintKind::ElementPower(n) => format!("element {n}"),
            };
            let sense = match c.sense {
                Sense::Le => "le",
                Sense::Ge => "ge",
            };
            let _ = writeln!(out, "constraint {kind} {sense} {:e}", c.bound);
            write_matrix(&mut out, "a_i", &c.a_i);
            write_matrix(&mut out, "a_e", &c.a_e);
        }
        let _ = writeln!(out, "end");
        out
    }

    /// Inverse of [`SubproblemData::to_text_dump`].
    pub fn from_text_dump(text: &str) -> Result<Self> {
        let mut r = DumpReader { lines: text.lines().filter(|l| !l.trim().is_empty()), line_no: 0 };
        r.expect_words(&["subproblem"])?;
        let dims = r.keyed("dims", 2)?;
        let dim_i = r.parse_usize(dims[0])?;
        let dim_e = r.parse_usize(dims[1])?;
        let rho = r.keyed_f64("rho")?;
        let constant_offset = r.keyed_f64("constant_offset")?;
        let linear_i = r.matrix("linear_i")?;
        let linear_e = r.matrix("linear_e")?;
        let n_logs = r.keyed_usize("log_terms")?;
        let mut log_terms = Vec::with_capacity(n_logs);
        for _ in 0..n_logs {
            let head = r.keyed("log", 2)?;
            let constant = r.parse_f64(head[0])?;
            let weight = r.parse_f64(head[1])?;
            log_terms.push(LogTerm { constant, weight, coeffs_i: r.matrix("coeffs_i")?, coeffs_e: r.matrix("coeffs_e")? });
        }
        let n_cons = r.keyed_usize("constraints")?;
        let mut constraints = Vec::with_capacity(n_cons);
        for _ in 0..n_cons {
            let words = r.words()?;
            let (kind, rest) = match words.as_slice() {
                ["constraint", "harvest", rest @ ..] => (ConstraintKind::Harvest, rest.to_vec()),
                ["constraint", "element", n, rest @ ..] => (ConstraintKind::ElementPower(r.parse_usize(n)?), rest.to_vec()),
                _ => return Err(r.error("constraint header")),
            };
            let (sense, bound) = match rest.as_slice() {
                ["le", b] => (Sense::Le, r.parse_f64(b)?),
                ["ge", b] => (Sense::Ge, r.parse_f64(b)?),
                _ => return Err(r.error("constraint sense and bound")),
            };
            constraints.push(TraceConstraint { kind, a_i: r.matrix("a_i")?, a_e: r.matrix("a_e")?, bound, sense });
        }
        r.expect_words(&["end"])?;
        Ok(Self { dim_i, dim_e, log_terms, linear_i, linear_e, constant_offset, constraints, rho })
    }
}

fn write_matrix(out: &mut String, name: &str, m: &CMat) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e} {:e}", m[(i, j)].re, m[(i, j)].im)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

struct DumpReader<'a, I: Iterator<Item = &'a str>> {
    lines: I,
    line_no: usize,
}

impl<'a, I: Iterator<Item = &'a str>> DumpReader<'a, I> {
    fn error(&self, what: &str) -> Error {
        Error::InvalidConfig(format!("subproblem dump: expected {what} at record {}", self.line_no))
    }

    fn words(&mut self) -> Result<Vec<&'a str>> {
        self.line_no += 1;
        let line = self.lines.next().ok_or_else(|| self.error("more input"))?;
        Ok(line.split_whitespace().collect())
    }

    fn expect_words(&mut self, want: &[&str]) -> Result<()> {
        if self.words()? == want {
            Ok(())
        } else {
            Err(self.error(want[0]))
        }
    }

    fn keyed(&mut self, key: &str, n: usize) -> Result<Vec<&'a str>> {
        let w = self.words()?;
        if w.len() == n + 1 && w[0] == key {
            Ok(w[1..].to_vec())
        } else {
            Err(self.error(key))
        }
    }

    fn keyed_f64(&mut self, key: &str) -> Result<f64> {
        let w = self.keyed(key, 1)?;
        self.parse_f64(w[0])
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let w = self.keyed(key, 1)?;
        self.parse_usize(w[0])
    }

    fn parse_f64(&self, s: &str) -> Result<f64> {
        s.parse().map_err(|_| self.error("a number"))
    }

    fn parse_usize(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.error("a count"))
    }

    fn matrix(&mut self, name: &str) -> Result<CMat> {
        let head = self.keyed(name, 2)?;
        let rows = self.parse_usize(head[0])?;
        let cols = self.parse_usize(head[1])?;
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            let w = self.words()?;
            if w.len() != 2 * cols {
                return Err(self.error("a matrix row"));
            }
            for j in 0..cols {
                m[(i, j)] = Complex64::new(self.parse_f64(w[2 * j])?, self.parse_f64(w[2 * j + 1])?);
            }
        }
        Ok(m)
    }
}

/// Relative feasibility slack tolerated at an expansion point.
pub const EXPANSION_FEASIBILITY_TOL: f64 = 1e-6;

fn constraints(model: &SystemModel) -> Vec<TraceConstraint> {
    let cfg = &model.cfg;
    let zeta = cfg.zeta();
    let mut a_i = linalg::zeros(cfg.dim_i());
    let mut a_e = linalg::zeros(cfg.dim_e());
    for g in 0..cfg.g() {
        for form in &model.qf.m_ee[g] {
            form.add_to(&mut a_e, zeta);
        }
        for form in &model.qf.m_ei[g] {
            form.add_to(&mut a_i, zeta);
        }
    }
    let mut out = vec![TraceConstraint { kind: ConstraintKind::Harvest, a_i, a_e, bound: cfg.q_t(), sense: Sense::Ge }];
    for n in 0..cfg.n() {
        out.push(TraceConstraint {
            kind: ConstraintKind::ElementPower(n),
            a_i: model.ops.abar_i_matrix(n),
            a_e: model.ops.abar_e_matrix(n),
            bound: cfg.p_t(),
            sense: Sense::Le,
        });
    }
    out
}

/// `I - v v^H` for the top eigenvector `v` of `f0`.
fn penalty_direction(f0: &CMat) -> CMat {
    let v = HermitianEigen::new(f0).top_vector();
    linalg::identity(f0.nrows()) - linalg::outer(&v)
}

pub fn build_subproblem(lift0: &LiftedPair, model: &SystemModel, rho: f64) -> Result<SubproblemData> {
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("penalty factor must be positive (got {rho})")));
    }
    let cfg = &model.cfg;
    if lift0.f_i.nrows() != cfg.dim_i() {
        return Err(Error::DimensionMismatch { what: "F_I", expected: cfg.dim_i(), found: lift0.f_i.nrows() });
    }
    if lift0.f_e.nrows() != cfg.dim_e() {
        return Err(Error::DimensionMismatch { what: "F_E", expected: cfg.dim_e(), found: lift0.f_e.nrows() });
    }
    let cons = constraints(model);
    let violation = cons.iter().map(|c| c.relative_violation(lift0)).fold(0.0, f64::max);
    if violation > EXPANSION_FEASIBILITY_TOL {
        return Err(Error::StaleIterate { violation });
    }

    let per_nat = cfg.rate_unit().per_nat();
    let mut linear_i = linalg::zeros(cfg.dim_i());
    let mut linear_e = linalg::zeros(cfg.dim_e());
    let mut constant_offset = 0.0;
    let mut log_terms = Vec::with_capacity(cfg.k());
    for k in 0..cfg.k() {
        let mut coeffs_i = linalg::zeros(cfg.dim_i());
        for form in &model.qf.m_ii[k] {
            form.add_to(&mut coeffs_i, 1.0);
        }
        let mut coeffs_e = linalg::zeros(cfg.dim_e());
        for form in &model.qf.m_ie[k] {
            form.add_to(&mut coeffs_e, 1.0);
        }
        log_terms.push(LogTerm { constant: cfg.sigma2()[k], weight: per_nat, coeffs_i, coeffs_e });

        let grad = metrics::dc_gradient(lift0, model, k)?;
        constant_offset += -grad.value0
            + linalg::trace_product(&grad.g_i, &lift0.f_i)
            + linalg::trace_product(&grad.g_e, &lift0.f_e);
        linear_i += &grad.g_i;
        linear_e += &grad.g_e;
    }
    // trace minus the linearized spectral norm; the constant part vanishes
    // because ||F0||_2 = <v v^H, F0>
    let w = Complex64::new(1.0 / (2.0 * rho), 0.0);
    linear_i += penalty_direction(&lift0.f_i) * w;
    linear_e += penalty_direction(&lift0.f_e) * w;

    Ok(SubproblemData {
        dim_i: cfg.dim_i(),
        dim_e: cfg.dim_e(),
        log_terms,
        linear_i: linalg::hermitize(&linear_i),
        linear_e: linalg::hermitize(&linear_e),
        constant_offset,
        constraints: cons,
        rho,
    })
}

/// Value of the penalized lifted problem at `lift`:
/// `sum_k R_k(F) - (||F_I||_* - ||F_I||_2 + ||F_E||_* - ||F_E||_2) / (2 rho)`.
pub fn penalized_objective(lift: &LiftedPair, model: &SystemModel, rho: f64) -> Result<f64> {
    let rate = metrics::sum_rate_lifted(lift, model)?;
    let (ri, re) = metrics::rank_residuals(lift);
    Ok(rate - (ri + re) / (2.0 * rho))
}

/// Result of one surrogate solve, mapped back to lifted variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub solution: LiftedPair,
    /// Surrogate objective including `constant_offset`.
    pub objective: f64,
    pub iterations: usize,
    pub max_constraint_violation: f64,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub stage_objectives: Vec<f64>,
    pub diagnostics: alloc::string::String,
}

pub fn solve(
    sub: &SubproblemData,
    warm_start: Option<&LiftedPair>,
    opts: &SolverOptions,
    observer: Option<&mut dyn SolveObserver>,
) -> Result<SolveReport> {
    let problem = sub.to_problem();
    let warm: Option<Vec<CMat>> = warm_start.map(|w| vec![w.f_i.clone(), w.f_e.clone()]);
    let sol = solver::solve_problem(&problem, warm.as_deref(), opts, observer)?;
    let mut blocks = sol.blocks.into_iter();
    let solution = LiftedPair { f_i: blocks.next().unwrap(), f_e: blocks.next().unwrap() };
    Ok(SolveReport {
        objective: sol.objective + sub.constant_offset,
        iterations: sol.iterations + sol.phase1_iterations,
        max_constraint_violation: sol.max_constraint_violation,
        status: sol.status,
        kkt_residual: sol.kkt_residual,
        stage_objectives: sol.stage_objectives.iter().map(|v| v + sub.constant_offset).collect(),
        diagnostics: sol.diagnostics,
        solution,
    })
}

/// Strictly interior point of the energy / per-element power constraints of
/// `sub`, or the phase-I verdict.
pub fn phase1_feasible(sub: &SubproblemData, opts: &SolverOptions) -> Result<Phase1Result> {
    Ok(match solver::phase1(&sub.to_problem(), opts)? {
        solver::Phase1Outcome::Feasible(blocks) => {
            let mut it = blocks.into_iter();
            Phase1Result::Feasible(LiftedPair { f_i: it.next().unwrap(), f_e: it.next().unwrap() })
        }
        solver::Phase1Outcome::Infeasible { phase1_value } => Phase1Result::Infeasible { phase1_value },
        solver::Phase1Outcome::NoStrictInterior { phase1_value } => Phase1Result::NoStrictInterior { phase1_value },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phase1Result {
    Feasible(LiftedPair),
    Infeasible { phase1_value: f64 },
    NoStrictInterior { phase1_value: f64 },
}

/// Largest total harvest over the per-element power constraints, lifted
/// (an upper bound on what rank-one beams can reach). Returns the value and
/// the maximizer.
pub fn max_total_harvest(model: &SystemModel, opts: &SolverOptions) -> Result<(f64, LiftedPair)> {
    let cons = constraints(model);
    let harvest = &cons[0];
    let problem = ConvexProblem {
        block_dims: vec![model.cfg.dim_i(), model.cfg.dim_e()],
        log_terms: Vec::new(),
        linear: vec![-&harvest.a_i, -&harvest.a_e],
        constraints: cons[1..]
            .iter()
            .map(|c| ProblemConstraint { coeffs: vec![c.a_i.clone(), c.a_e.clone()], bound: c.bound, sense: c.sense })
            .collect(),
    };
    let sol = solver::solve_problem(&problem, None, opts, None)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Numerical(sol.diagnostics));
    }
    let mut it = sol.blocks.into_iter();
    Ok((sol.objective, LiftedPair { f_i: it.next().unwrap(), f_e: it.next().unwrap() }))
}
