//! Path-following log-barrier engine over a product of Hermitian PSD blocks
//! and a few free scalars.
//!
//! Minimizes, for a decreasing barrier weight `mu`,
//!
//! ```text
//! phi_mu(x) = -sum_j w_j ln(c_j + <a_j, x>) + <l, x>
//!             - mu [ sum_i ln(b_i - <a_i, x>) + sum_b ln det X_b + sum_s ln(U_s - t_s) ]
//! ```
//!
//! The Hessian is `D + sum_r gamma_r B_r B_r^T` where `D` is the log-det /
//! scalar-barrier part (`mu X^-1 (.) X^-1`) and the sum runs over log terms
//! and linear constraints. Newton steps are computed in the eigenbasis of
//! each block, where `D` is an elementwise scaling. Coordinates on which `D`
//! is soft go into a small dense quasi-definite system together with the
//! rank-one terms; the remaining coordinates are eliminated in closed form.
//! No dense Hessian in the lifted variables is ever formed.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use num_traits::Float;

use crate::linalg::{self, CMat};

/// A point (or direction) in the product space.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Var {
    pub blocks: Vec<CMat>,
    pub scal: Vec<f64>,
}

impl Var {
    pub fn zeros(dims: &[usize], nscal: usize) -> Self {
        Self { blocks: dims.iter().map(|&d| linalg::zeros(d)).collect(), scal: alloc::vec![0.0; nscal] }
    }

    pub fn identity(dims: &[usize], nscal: usize) -> Self {
        Self { blocks: dims.iter().map(|&d| linalg::identity(d)).collect(), scal: alloc::vec![0.0; nscal] }
    }

    pub fn dot(&self, other: &Var) -> f64 {
        let b: f64 = self.blocks.iter().zip(&other.blocks).map(|(a, b)| linalg::trace_product(a, b)).sum();
        let s: f64 = self.scal.iter().zip(&other.scal).map(|(a, b)| a * b).sum();
        b + s
    }

    pub fn axpy(&mut self, alpha: f64, x: &Var) {
        let a = Complex64::new(alpha, 0.0);
        for (y, x) in self.blocks.iter_mut().zip(&x.blocks) {
            *y += x * a;
        }
        for (y, x) in self.scal.iter_mut().zip(&x.scal) {
            *y += alpha * x;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Var {
        let a = Complex64::new(alpha, 0.0);
        Var { blocks: self.blocks.iter().map(|b| b * a).collect(), scal: self.scal.iter().map(|s| s * alpha).collect() }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|z| z.re == 0.0 && z.im == 0.0)) && self.scal.iter().all(|s| *s == 0.0)
    }

    fn hermitize(&mut self) {
        for b in self.blocks.iter_mut() {
            *b = linalg::hermitize(b);
        }
    }
}

/// Eigenvalues below this fraction of the largest are dropped when a
/// coefficient block is stored in low-rank form.
const FACTOR_CUTOFF: f64 = 64.0 * f64::EPSILON;

/// Each block of a coefficient as `sum_k c_k u_k u_k^H` (columns of `vecs`
/// scaled by `vals`), or `None` where the dense form is cheaper.
#[derive(Clone, Debug)]
pub(crate) struct Factored {
    blocks: Vec<Option<(CMat, Vec<f64>)>>,
}

impl Factored {
    pub fn new(coeffs: &Var) -> Self {
        let blocks = coeffs
            .blocks
            .iter()
            .map(|b| {
                let d = b.nrows();
                if b.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                    return Some((CMat::zeros(d, 0), Vec::new()));
                }
                let eig = linalg::hermitize(b).symmetric_eigen();
                let top = eig.eigenvalues.amax();
                let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i].abs() > FACTOR_CUTOFF * top).collect();
                if 2 * keep.len() > d {
                    return None;
                }
                let vecs = CMat::from_fn(d, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
                Some((vecs, keep.iter().map(|&i| eig.eigenvalues[i]).collect()))
            })
            .collect();
        Self { blocks }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LogTerm {
    pub weight: f64,
    pub constant: f64,
    pub coeffs: Var,
    pub factors: Factored,
}

impl LogTerm {
    pub fn new(weight: f64, constant: f64, coeffs: Var) -> Self {
        let factors = Factored::new(&coeffs);
        Self { weight, constant, coeffs, factors }
    }
}

/// `<coeffs, x> <= bound`.
#[derive(Clone, Debug)]
pub(crate) struct Ineq {
    pub coeffs: Var,
    pub bound: f64,
    pub factors: Factored,
}

impl Ineq {
    pub fn new(coeffs: Var, bound: f64) -> Self {
        let factors = Factored::new(&coeffs);
        Self { coeffs, bound, factors }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Engine {
    pub dims: Vec<usize>,
    /// Upper limits of the scalar variables (each carries `-ln(U - t)`).
    pub scal_upper: Vec<f64>,
    pub logs: Vec<LogTerm>,
    pub linear: Var,
    pub ineqs: Vec<Ineq>,
}

/// Iterative-refinement passes on each Newton system; a pass is kept only if
/// it lowers the residual.
const REFINE_PASSES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineOptions {
    pub initial_barrier: f64,
    pub barrier_decay: f64,
    pub gap_tolerance: f64,
    pub fraction_to_boundary: f64,
    pub max_newton_per_stage: usize,
    pub max_newton_total: usize,
}

/// One Newton iteration as seen by an observer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub newton_iter: usize,
    pub barrier_weight: f64,
    /// Normalized objective (logs + linear part, without barrier), to be
    /// maximized.
    pub objective: f64,
    pub step: f64,
    pub decrement_sq: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum EngineStatus {
    Converged,
    MaxIters,
    NumericalFailure,
    /// The caller's early-exit predicate fired.
    Stopped,
}

#[derive(Clone, Debug)]
pub(crate) struct EngineResult {
    pub x: Var,
    pub status: EngineStatus,
    pub iterations: usize,
    pub barrier_weight: f64,
    /// Objective (maximization sense) at the end of every barrier stage.
    pub stage_objectives: Vec<f64>,
    /// Norm of the gradient of the barrier-augmented objective at the
    /// returned point, measured in the local inverse-Hessian metric (the
    /// Newton decrement). The Euclidean norm carries a round-off floor of
    /// order `eps * |bound| * y^2 / mu` from the slacks of active constraints.
    pub kkt_residual: f64,
}

/// Cached evaluation at a strictly feasible point. Block quantities are kept
/// in the eigenbasis of each block, where the log-det Hessian is diagonal and
/// its action is an elementwise scaling that keeps full relative accuracy in
/// the nearly singular directions.
struct Local {
    vecs: Vec<CMat>,
    vals: Vec<Vec<f64>>,
    log_vals: Vec<f64>,
    slacks: Vec<f64>,
    scal_room: Vec<f64>,
}

impl Local {
    fn to_eig(&self, v: &Var) -> Var {
        Var {
            blocks: self.vecs.iter().zip(&v.blocks).map(|(q, b)| linalg::hermitize(&(q.adjoint() * b * q))).collect(),
            scal: v.scal.clone(),
        }
    }

    /// [`Local::to_eig`] of a coefficient, using its low-rank form where
    /// available.
    fn to_eig_factored(&self, v: &Var, f: &Factored) -> Var {
        Var {
            blocks: self
                .vecs
                .iter()
                .zip(&v.blocks)
                .zip(&f.blocks)
                .map(|((q, b), fb)| match fb {
                    Some((u, c)) => {
                        let w = q.adjoint() * u;
                        let wc = CMat::from_fn(w.nrows(), w.ncols(), |r, k| w[(r, k)] * c[k]);
                        linalg::hermitize(&(wc * w.adjoint()))
                    }
                    None => linalg::hermitize(&(q.adjoint() * b * q)),
                })
                .collect(),
            scal: v.scal.clone(),
        }
    }

    fn from_eig(&self, v: &Var) -> Var {
        Var {
            blocks: self.vecs.iter().zip(&v.blocks).map(|(q, b)| linalg::hermitize(&(q * b * q.adjoint()))).collect(),
            scal: v.scal.clone(),
        }
    }

    /// Elementwise `w_ij * f(lambda_i, lambda_j)` on blocks.
    fn scale_blocks(&self, w: &Var, f: impl Fn(f64, f64) -> f64) -> Vec<CMat> {
        self.vals
            .iter()
            .zip(&w.blocks)
            .map(|(lam, b)| CMat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * f(lam[i], lam[j])))
            .collect()
    }
}

/// `D^-1` entries above this are handled by the dense soft system.
const SOFT_THRESHOLD: f64 = 1e2;
/// Cap on soft indices per block (the dense system grows as its square).
const MAX_SOFT_PER_BLOCK: usize = 8;

/// Eigen coordinates in which `D` is small: the leading eigen-indices of each
/// block and the scalars with a lot of room. Coordinates are an orthonormal
/// real basis of the Hermitian sub-blocks.
struct SoftSet {
    blocks: Vec<Vec<usize>>,
    scal: Vec<usize>,
}

impl SoftSet {
    fn new(loc: &Local, mu: f64) -> Self {
        let blocks = loc
            .vals
            .iter()
            .map(|lam| {
                let mut idx: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] * lam[i] / mu > SOFT_THRESHOLD).collect();
                idx.sort_by(|&a, &b| lam[b].partial_cmp(&lam[a]).unwrap_or(core::cmp::Ordering::Equal));
                idx.truncate(MAX_SOFT_PER_BLOCK);
                idx.sort_unstable();
                idx
            })
            .collect();
        let scal = (0..loc.scal_room.len()).filter(|&k| loc.scal_room[k] * loc.scal_room[k] / mu > SOFT_THRESHOLD).collect();
        Self { blocks, scal }
    }

    fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len() * b.len()).sum::<usize>() + self.scal.len()
    }

    /// Visits every soft coordinate as `(block, i, j, kind)`; `kind` is 0 for
    /// a diagonal, 1 for the symmetric and 2 for the skew part of `(i, j)`.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize, u8)) {
        for (b, idx) in self.blocks.iter().enumerate() {
            for (p, &i) in idx.iter().enumerate() {
                f(b, i, i, 0);
                for &j in &idx[p + 1..] {
                    f(b, i, j, 1);
                    f(b, i, j, 2);
                }
            }
        }
    }

    fn extract(&self, w: &Var) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.len());
        let s2 = core::f64::consts::SQRT_2;
        self.for_each(|b, i, j, kind| {
            let z = w.blocks[b][(i, j)];
            out.push(match kind {
                0 => z.re,
                1 => s2 * z.re,
                _ => s2 * z.im,
            });
        });
        out.extend(self.scal.iter().map(|&k| w.scal[k]));
        DVector::from_vec(out)
    }

    fn zero(&self, mut w: Var) -> Var {
        let zero = Complex64::new(0.0, 0.0);
        self.for_each(|b, i, j, _| {
            w.blocks[b][(i, j)] = zero;
            w.blocks[b][(j, i)] = zero;
        });
        for &k in &self.scal {
            w.scal[k] = 0.0;
        }
        w
    }

    fn embed_into(&self, w: &mut Var, v: &DVector<f64>) {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let mut a = 0;
        self.for_each(|b, i, j, kind| {
            let c = v[a];
            a += 1;
            let blk = &mut w.blocks[b];
            match kind {
                0 => blk[(i, i)] += Complex64::new(c, 0.0),
                1 => {
                    blk[(i, j)] += Complex64::new(h * c, 0.0);
                    blk[(j, i)] += Complex64::new(h * c, 0.0);
                }
                _ => {
                    blk[(i, j)] += Complex64::new(0.0, h * c);
                    blk[(j, i)] -= Complex64::new(0.0, h * c);
                }
            }
        });
        for &k in &self.scal {
            w.scal[k] += v[a];
            a += 1;
        }
    }

    /// `D` restricted to the soft coordinates (diagonal in this basis).
    fn diagonal(&self, loc: &Local, mu: f64) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each(|b, i, j, _| out.push(mu / (loc.vals[b][i] * loc.vals[b][j])));
        out.extend(self.scal.iter().map(|&k| mu / (loc.scal_room[k] * loc.scal_room[k])));
        DVector::from_vec(out)
    }
}

/// Dense solve with symmetric diagonal equilibration and partial pivoting.
struct EquilibratedLu {
    scale: DVector<f64>,
    lu: nalgebra::linalg::LU<f64, Dyn, Dyn>,
}

impl EquilibratedLu {
    fn new(mut m: DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        let scale = DVector::from_fn(n, |i, _| {
            let d = m[(i, i)].abs();
            let d = if d > 0.0 { d } else { m.row(i).amax() };
            1.0 / Float::sqrt(d.max(f64::MIN_POSITIVE))
        });
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= scale[i] * scale[j];
            }
        }
        if m.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self { scale, lu: m.lu() })
    }

    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        if b.is_empty() {
            return Some(b.clone());
        }
        let y = self.lu.solve(&b.component_mul(&self.scale))?;
        let y = y.component_mul(&self.scale);
        y.iter().all(|v| v.is_finite()).then_some(y)
    }
}

impl Engine {
    pub fn barrier_parameter(&self) -> f64 {
        (self.dims.iter().sum::<usize>() + self.ineqs.len() + self.scal_upper.len()) as f64
    }

    /// Maximization-sense objective `sum w ln(u) - <l, x>`.
    pub fn objective(&self, x: &Var) -> f64 {
        let logs: f64 = self
            .logs
            .iter()
            .map(|t| t.weight * Float::ln(t.constant + t.coeffs.dot(x)))
            .sum();
        logs - self.linear.dot(x)
    }

    pub fn slacks(&self, x: &Var) -> Vec<f64> {
        self.ineqs.iter().map(|c| c.bound - c.coeffs.dot(x)).collect()
    }

    fn local(&self, x: &Var) -> Option<Local> {
        let mut vecs = Vec::with_capacity(x.blocks.len());
        let mut vals = Vec::with_capacity(x.blocks.len());
        for b in &x.blocks {
            let eig = linalg::hermitize(b).symmetric_eigen();
            let lam: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            if lam.iter().any(|l| !(*l > 0.0)) {
                return None;
            }
            vecs.push(eig.eigenvectors);
            vals.push(lam);
        }
        let log_vals: Vec<f64> = self.logs.iter().map(|t| t.constant + t.coeffs.dot(x)).collect();
        if log_vals.iter().any(|u| !(*u > 0.0)) {
            return None;
        }
        let slacks = self.slacks(x);
        if slacks.iter().any(|s| !(*s > 0.0)) {
            return None;
        }
        let scal_room: Vec<f64> = self.scal_upper.iter().zip(&x.scal).map(|(u, t)| u - t).collect();
        if scal_room.iter().any(|r| !(*r > 0.0)) {
            return None;
        }
        Some(Local { vecs, vals, log_vals, slacks, scal_room })
    }

    /// Barrier-augmented objective (minimization sense); `None` outside the
    /// domain.
    fn merit(&self, x: &Var, mu: f64) -> Option<f64> {
        let mut logdet = 0.0;
        for b in &x.blocks {
            let c = Cholesky::new(linalg::hermitize(b))?;
            let l = c.l_dirty();
            for i in 0..b.nrows() {
                logdet += 2.0 * Float::ln(l[(i, i)].re);
            }
        }
        let mut val = self.linear.dot(x) - mu * logdet;
        for t in &self.logs {
            let u = t.constant + t.coeffs.dot(x);
            if !(u > 0.0) {
                return None;
            }
            val -= t.weight * Float::ln(u);
        }
        for c in &self.ineqs {
            let s = c.bound - c.coeffs.dot(x);
            if !(s > 0.0) {
                return None;
            }
            val -= mu * Float::ln(s);
        }
        for (u, t) in self.scal_upper.iter().zip(&x.scal) {
            let r = u - t;
            if !(r > 0.0) {
                return None;
            }
            val -= mu * Float::ln(r);
        }
        val.is_finite().then_some(val)
    }

    /// Gradient of the barrier-augmented objective in eigen coordinates.
    fn gradient_eig(&self, loc: &Local, mu: f64) -> Var {
        let mut g = self.smooth_gradient(loc, mu);
        g = loc.to_eig(&g);
        for (gb, lam) in g.blocks.iter_mut().zip(&loc.vals) {
            for (i, l) in lam.iter().enumerate() {
                gb[(i, i)] -= Complex64::new(mu / l, 0.0);
            }
        }
        g
    }

    /// Gradient without the `-mu X^-1` block terms of the PSD barriers.
    fn smooth_gradient(&self, loc: &Local, mu: f64) -> Var {
        let mut g = self.linear.clone();
        for (t, u) in self.logs.iter().zip(&loc.log_vals) {
            g.axpy(-t.weight / u, &t.coeffs);
        }
        for (c, s) in self.ineqs.iter().zip(&loc.slacks) {
            g.axpy(mu / s, &c.coeffs);
        }
        for (gs, r) in g.scal.iter_mut().zip(&loc.scal_room) {
            *gs += mu / r;
        }
        g
    }

    /// `D^-1 w` in eigen coordinates: `w_ij l_i l_j / mu` on blocks,
    /// `w (U - t)^2 / mu` on scalars.
    fn d_inv_eig(loc: &Local, mu: f64, w: &Var) -> Var {
        Var {
            blocks: loc.scale_blocks(w, |a, b| a * b / mu),
            scal: w.scal.iter().zip(&loc.scal_room).map(|(v, room)| v * room * room / mu).collect(),
        }
    }

    /// Rank-one Hessian directions (in eigen coordinates) with their weights.
    fn directions(&self, loc: &Local, mu: f64) -> Vec<(Var, f64)> {
        let mut dirs = Vec::new();
        for (t, u) in self.logs.iter().zip(&loc.log_vals) {
            if !t.coeffs.is_zero() {
                dirs.push((loc.to_eig_factored(&t.coeffs, &t.factors), t.weight / (u * u)));
            }
        }
        for (c, s) in self.ineqs.iter().zip(&loc.slacks) {
            dirs.push((loc.to_eig_factored(&c.coeffs, &c.factors), mu / (s * s)));
        }
        dirs
    }

    /// `H w` in eigen coordinates.
    fn hessian_apply_eig(loc: &Local, mu: f64, dirs: &[(Var, f64)], w: &Var) -> Var {
        let mut out = Var {
            blocks: loc.scale_blocks(w, |a, b| mu / (a * b)),
            scal: w.scal.iter().zip(&loc.scal_room).map(|(d, r)| mu * d / (r * r)).collect(),
        };
        for (b, gamma) in dirs {
            out.axpy(gamma * b.dot(w), b);
        }
        out
    }

    /// `w^T H w` in eigen coordinates.
    fn hessian_norm_sq_eig(loc: &Local, mu: f64, dirs: &[(Var, f64)], w: &Var) -> f64 {
        let mut q = 0.0;
        for (lam, b) in loc.vals.iter().zip(&w.blocks) {
            for j in 0..b.ncols() {
                for i in 0..b.nrows() {
                    q += mu * b[(i, j)].norm_sqr() / (lam[i] * lam[j]);
                }
            }
        }
        for (d, r) in w.scal.iter().zip(&loc.scal_room) {
            q += mu * d * d / (r * r);
        }
        for (b, gamma) in dirs {
            let a = b.dot(w);
            q += gamma * a * a;
        }
        q
    }

    /// Newton direction (original coordinates) and squared decrement.
    ///
    /// Coordinates where `D^-1` is large (both eigenvalues big relative to
    /// `sqrt(mu)`) are solved together with the rank-one multipliers; the
    /// rest only ever sees `D_t^-1`, which is bounded, so no two large
    /// quantities are subtracted.
    fn newton(&self, loc: &Local, mu: f64) -> Option<(Var, f64)> {
        let dirs = self.directions(loc, mu);
        let grad = self.gradient_eig(loc, mu);
        let soft = SoftSet::new(loc, mu);
        let r = dirs.len();
        let d_inv_t = |w: &Var| soft.zero(Self::d_inv_eig(loc, mu, w));
        let dbt: Vec<Var> = dirs.iter().map(|(b, _)| d_inv_t(b)).collect();
        let bs: Vec<DVector<f64>> = dirs.iter().map(|(b, _)| soft.extract(b)).collect();
        let mut k = DMatrix::<f64>::zeros(r, r);
        for i in 0..r {
            for j in i..r {
                let v = dirs[i].0.dot(&dbt[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += 1.0 / dirs[i].1;
        }
        // quasi-definite system [D_s B_s; B_s^T -K] [x_s; z] = [rhs_s; -q]
        let ns = soft.len();
        let d_soft = soft.diagonal(loc, mu);
        let mut aug = DMatrix::<f64>::zeros(ns + r, ns + r);
        for a in 0..ns {
            aug[(a, a)] = d_soft[a];
        }
        for i in 0..r {
            for a in 0..ns {
                aug[(a, ns + i)] = bs[i][a];
                aug[(ns + i, a)] = bs[i][a];
            }
            for j in 0..r {
                aug[(ns + i, ns + j)] = -k[(i, j)];
            }
        }
        let aug_solve = EquilibratedLu::new(aug)?;
        // H^-1 applied to a right-hand side given as (D_t^-1 rhs_t, rhs_s)
        let solve = |pt: Var, rhs_s: DVector<f64>| -> Option<Var> {
            let mut rhs = DVector::<f64>::zeros(ns + r);
            rhs.rows_mut(0, ns).copy_from(&rhs_s);
            for i in 0..r {
                rhs[ns + i] = -dirs[i].0.dot(&pt);
            }
            let sol = aug_solve.solve(&rhs)?;
            let mut out = pt;
            for i in 0..r {
                out.axpy(-sol[ns + i], &dbt[i]);
            }
            soft.embed_into(&mut out, &sol.rows(0, ns).into_owned());
            out.hermitize();
            Some(out)
        };
        // D_t^-1 (-grad) = Lambda - D^-1 smooth, exact on the diagonal
        let smooth = loc.to_eig(&self.smooth_gradient(loc, mu));
        let mut p = Self::d_inv_eig(loc, mu, &smooth.scaled(-1.0));
        for (pb, lam) in p.blocks.iter_mut().zip(&loc.vals) {
            for (i, l) in lam.iter().enumerate() {
                pb[(i, i)] += Complex64::new(*l, 0.0);
            }
        }
        let mut step = solve(soft.zero(p), soft.extract(&grad.scaled(-1.0)))?;
        // safeguarded refinement against the exact Hessian product
        let residual = |s: &Var| {
            let mut res = Self::hessian_apply_eig(loc, mu, &dirs, s);
            res.axpy(1.0, &grad);
            res
        };
        let mut res = residual(&step);
        let mut res_norm = res.norm();
        for _ in 0..REFINE_PASSES {
            let neg = res.scaled(-1.0);
            let mut refined = step.clone();
            refined.axpy(1.0, &solve(d_inv_t(&neg), soft.extract(&neg))?);
            let r2 = residual(&refined);
            let n2 = r2.norm();
            if !(n2 < res_norm) {
                break;
            }
            step = refined;
            res = r2;
            res_norm = n2;
        }
        let dec = Self::hessian_norm_sq_eig(loc, mu, &dirs, &step);
        if !dec.is_finite() {
            return None;
        }
        Some((loc.from_eig(&step), dec))
    }

    /// Largest `alpha` keeping `x + alpha * dx` in the open domain.
    fn max_step(&self, loc: &Local, dx: &Var) -> f64 {
        let mut amax = f64::INFINITY;
        let w = loc.to_eig(dx);
        for m in loc.scale_blocks(&w, |a, b| 1.0 / Float::sqrt(a * b)) {
            let lmin = linalg::HermitianEigen::new(&m).min_value();
            if lmin < 0.0 {
                amax = amax.min(-1.0 / lmin);
            }
        }
        for (t, u) in self.logs.iter().zip(&loc.log_vals) {
            let d = t.coeffs.dot(dx);
            if d < 0.0 {
                amax = amax.min(-u / d);
            }
        }
        for (c, s) in self.ineqs.iter().zip(&loc.slacks) {
            let d = c.coeffs.dot(dx);
            if d > 0.0 {
                amax = amax.min(s / d);
            }
        }
        for (room, d) in loc.scal_room.iter().zip(&dx.scal) {
            if *d > 0.0 {
                amax = amax.min(room / d);
            }
        }
        amax
    }

    /// Runs the barrier method from a strictly feasible `x0`. `stop` is
    /// checked after every accepted step; returning `true` ends the run with
    /// [`EngineStatus::Stopped`].
    pub fn run(
        &self,
        x0: Var,
        opts: &EngineOptions,
        mut observe: impl FnMut(&StepInfo),
        mut stop: impl FnMut(&Var) -> bool,
    ) -> EngineResult {
        let theta = self.barrier_parameter().max(1.0);
        let mut x = x0;
        let mut mu = opts.initial_barrier;
        let mut total = 0usize;
        let mut stage_objectives = Vec::new();
        let mut kkt = f64::INFINITY;
        loop {
            let mut status = None;
            let mut centered = false;
            for _ in 0..opts.max_newton_per_stage {
                if total >= opts.max_newton_total {
                    status = Some(EngineStatus::MaxIters);
                    break;
                }
                let loc = match self.local(&x) {
                    Some(l) => l,
                    None => {
                        status = Some(EngineStatus::NumericalFailure);
                        break;
                    }
                };
                let (dx, dec) = match self.newton(&loc, mu) {
                    Some((dx, dec)) => {
                        kkt = Float::sqrt(dec);
                        (dx, dec)
                    }
                    None => {
                        status = Some(EngineStatus::NumericalFailure);
                        break;
                    }
                };
                if dec <= 1e-14 {
                    centered = true;
                    break;
                }
                let amax = self.max_step(&loc, &dx);
                let quadratic_region = dec / mu < 1e-2;
                let mut alpha = if amax.is_finite() { (opts.fraction_to_boundary * amax).min(1.0) } else { 1.0 };
                let f0 = match self.merit(&x, mu) {
                    Some(v) => v,
                    None => {
                        status = Some(EngineStatus::NumericalFailure);
                        break;
                    }
                };
                let slope = -dec;
                let mut accepted = None;
                for _ in 0..60 {
                    let mut trial = x.clone();
                    trial.axpy(alpha, &dx);
                    if let Some(f) = self.merit(&trial, mu) {
                        if f <= f0 + 0.01 * alpha * slope || (quadratic_region && alpha == 1.0 && f <= f0 + 1e-13 * (1.0 + f0.abs())) {
                            accepted = Some(trial);
                            break;
                        }
                    }
                    alpha *= 0.5;
                }
                total += 1;
                match accepted {
                    Some(t) => {
                        x = t;
                    }
                    None => {
                        // no descent left at round-off level counts as centered
                        if dec < 1e-12 {
                            centered = true;
                        } else {
                            status = Some(EngineStatus::NumericalFailure);
                        }
                        break;
                    }
                }
                observe(&StepInfo {
                    newton_iter: total,
                    barrier_weight: mu,
                    objective: self.objective(&x),
                    step: alpha,
                    decrement_sq: dec,
                });
                if stop(&x) {
                    status = Some(EngineStatus::Stopped);
                    break;
                }
                if dec <= 1e-13 && alpha == 1.0 {
                    centered = true;
                    break;
                }
            }
            if let Some(st) = status {
                return EngineResult { x, status: st, iterations: total, barrier_weight: mu, stage_objectives, kkt_residual: kkt };
            }
            if !centered && total >= opts.max_newton_total {
                return EngineResult {
                    x,
                    status: EngineStatus::MaxIters,
                    iterations: total,
                    barrier_weight: mu,
                    stage_objectives,
                    kkt_residual: kkt,
                };
            }
            stage_objectives.push(self.objective(&x));
            if mu * theta < opts.gap_tolerance {
                if let Some((_, dec)) = self.local(&x).and_then(|loc| self.newton(&loc, mu)) {
                    kkt = Float::sqrt(dec);
                }
                return EngineResult {
                    x,
                    status: EngineStatus::Converged,
                    iterations: total,
                    barrier_weight: mu,
                    stage_objectives,
                    kkt_residual: kkt,
                };
            }
            mu *= opts.barrier_decay;
        }
    }
}
