#![allow(dead_code)]

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use trisbf_core::channel::{self, ScenarioParams};
use trisbf_core::metrics::{BeamformerPair, LiftedPair};
use trisbf_core::subproblem::{ConstraintSense, SubproblemData};
use trisbf_core::system::{RawChannels, SystemConfig, SystemModel};

pub type M = DMatrix<Complex64>;

/// Writes straight to the process stderr so the line shows up even when the
/// test harness captures output.
pub fn verdict(criterion: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "[{tag}] criterion {criterion} {name}: {detail}");
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn cn(r: &mut ChaCha20Rng) -> Complex64 {
    let re: f64 = r.sample(StandardNormal);
    let im: f64 = r.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cvec(r: &mut ChaCha20Rng, n: usize) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_fn(n, |_, _| cn(r))
}

pub fn hermitian(r: &mut ChaCha20Rng, n: usize) -> M {
    let a = M::from_fn(n, n, |_, _| cn(r));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Sum of `rank` Gaussian outer products.
pub fn psd(r: &mut ChaCha20Rng, n: usize, rank: usize) -> M {
    let mut m = M::zeros(n, n);
    for _ in 0..rank {
        let v = cvec(r, n);
        m += &v * v.adjoint();
    }
    m
}

pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Desk-scale model from the default geometry.
pub fn scenario_model(seed: u64, n: usize, k: usize, g: usize) -> SystemModel {
    let cfg = SystemConfig::uniform_noise(n, k, g, 0.01, 0.0, 0.5, 1e-12).unwrap();
    let params = ScenarioParams { seed, ..ScenarioParams::default() };
    let (_, raw) = channel::generate(&params, &cfg).unwrap();
    SystemModel::new(cfg, &raw).unwrap()
}

/// Unit-scale model: CN(0, 1) channels, `P_t = 1`, noise drawn in
/// `[0.1, 1]`.
pub fn unit_model(r: &mut ChaCha20Rng, n: usize, k: usize, g: usize) -> SystemModel {
    let sigma2 = (0..k).map(|_| r.random_range(0.1..1.0)).collect();
    let zeta = r.random_range(0.3..1.0);
    let cfg = SystemConfig::new(n, k, g, 1.0, 0.0, zeta, sigma2).unwrap();
    let raw = RawChannels { id: (0..k).map(|_| cvec(r, n)).collect(), eh: (0..g).map(|_| cvec(r, n)).collect() };
    SystemModel::new(cfg, &raw).unwrap()
}

/// Random beams using about `P_t` per element in total.
pub fn beams(r: &mut ChaCha20Rng, m: &SystemModel) -> BeamformerPair {
    let s = Complex64::new((m.cfg.p_t() / (m.cfg.k() + m.cfg.g()) as f64).sqrt(), 0.0);
    BeamformerPair { f_i: cvec(r, m.cfg.dim_i()) * s, f_e: cvec(r, m.cfg.dim_e()) * s }
}

pub fn lift(r: &mut ChaCha20Rng, m: &SystemModel, rank: usize) -> LiftedPair {
    let s = Complex64::new(m.cfg.p_t() / (m.cfg.k() + m.cfg.g()) as f64, 0.0);
    LiftedPair { f_i: psd(r, m.cfg.dim_i(), rank) * s, f_e: psd(r, m.cfg.dim_e(), rank) * s }
}

fn ip(a: &M, b: &M) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn ip2(a: &[M; 2], b: &[M; 2]) -> f64 {
    ip(&a[0], &b[0]) + ip(&a[1], &b[1])
}

fn axpy(y: &mut [M; 2], a: f64, x: &[M; 2]) {
    let c = Complex64::new(a, 0.0);
    y[0] += &x[0] * c;
    y[1] += &x[1] * c;
}

fn norm2(x: &[M; 2]) -> f64 {
    x[0].norm_squared() + x[1].norm_squared()
}

fn project_psd(m: &M) -> M {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let e = h.symmetric_eigen();
    let vals = e.eigenvalues.map(|v| Complex64::new(v.max(0.0), 0.0));
    &e.eigenvectors * M::from_diagonal(&vals) * e.eigenvectors.adjoint()
}

/// Surrogate problem in a form that owes nothing to the interior-point
/// code: `max sum w log(c + <A, X>) - <L, X>` over PSD pairs subject to
/// scaled linear inequalities `g_j(X) <= 0`.
pub struct PgProblem {
    logs: Vec<(f64, f64, [M; 2])>,
    linear: [M; 2],
    /// `(coefficients, offset)` of `g_j(X) = <C_j, X> + offset_j`.
    ineqs: Vec<([M; 2], f64)>,
    offset: f64,
    dims: [usize; 2],
}

impl PgProblem {
    pub fn from_subproblem(sub: &SubproblemData) -> Self {
        let ineqs = sub
            .constraints
            .iter()
            .map(|c| {
                let s = 1.0 / (1.0 + c.bound.abs());
                let (sign, off) = match c.sense {
                    ConstraintSense::Le => (s, -s * c.bound),
                    ConstraintSense::Ge => (-s, s * c.bound),
                };
                let k = Complex64::new(sign, 0.0);
                ([&c.a_i * k, &c.a_e * k], off)
            })
            .collect();
        PgProblem {
            logs: sub.log_terms.iter().map(|t| (t.weight, t.constant, [t.coeffs_i.clone(), t.coeffs_e.clone()])).collect(),
            linear: [sub.linear_i.clone(), sub.linear_e.clone()],
            ineqs,
            offset: sub.constant_offset,
            dims: [sub.dim_i, sub.dim_e],
        }
    }

    pub fn objective(&self, x: &[M; 2]) -> f64 {
        let logs: f64 = self.logs.iter().map(|(w, c, a)| w * (c + ip2(a, x)).ln()).sum();
        logs - ip2(&self.linear, x) + self.offset
    }

    pub fn max_violation(&self, x: &[M; 2]) -> f64 {
        self.ineqs.iter().map(|(c, o)| ip2(c, x) + o).fold(0.0, f64::max)
    }

    /// Augmented Lagrangian value and gradient.
    fn augmented(&self, x: &[M; 2], lam: &[f64], beta: f64) -> (f64, [M; 2]) {
        let mut g = [-&self.linear[0], -&self.linear[1]];
        let mut v = self.offset - ip2(&self.linear, x);
        for (w, c, a) in &self.logs {
            let u = c + ip2(a, x);
            v += w * u.ln();
            axpy(&mut g, w / u, a);
        }
        for ((c, o), l) in self.ineqs.iter().zip(lam) {
            let t = (l + beta * (ip2(c, x) + o)).max(0.0);
            v -= (t * t - l * l) / (2.0 * beta);
            axpy(&mut g, -t, c);
        }
        (v, g)
    }

    fn project(x: &[M; 2]) -> [M; 2] {
        [project_psd(&x[0]), project_psd(&x[1])]
    }

    /// Accelerated projected gradient ascent on the augmented Lagrangian
    /// with backtracking and function-value restarts. Returns the final
    /// gradient-mapping norm.
    fn inner(&self, x: &mut [M; 2], lam: &[f64], beta: f64, step: &mut f64, tol: f64, max_iter: usize) -> f64 {
        let mut y = x.clone();
        let mut fx = self.augmented(x, lam, beta).0;
        let mut t: f64 = 1.0;
        let mut gm = f64::INFINITY;
        for _ in 0..max_iter {
            let (fy, gy) = self.augmented(&y, lam, beta);
            let (xn, fxn) = loop {
                let mut trial = y.clone();
                axpy(&mut trial, *step, &gy);
                let xn = Self::project(&trial);
                let mut d = xn.clone();
                axpy(&mut d, -1.0, &y);
                let fxn = self.augmented(&xn, lam, beta).0;
                if fxn >= fy + ip2(&gy, &d) - norm2(&d) / (2.0 * *step) - 1e-15 * fy.abs() {
                    gm = norm2(&d).sqrt() / *step;
                    break (xn, fxn);
                }
                *step *= 0.5;
            };
            if fxn < fx {
                // restart the momentum from the last accepted point
                t = 1.0;
                y = x.clone();
                continue;
            }
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mut mom = xn.clone();
            axpy(&mut mom, -1.0, x);
            y = xn.clone();
            axpy(&mut y, (t - 1.0) / tn, &mom);
            *x = xn;
            fx = fxn;
            t = tn;
            *step *= 1.5;
            if gm < tol {
                break;
            }
        }
        gm
    }

    /// Method of multipliers around [`Self::inner`]. Returns the final
    /// point.
    pub fn solve(&self) -> [M; 2] {
        let mut x = [M::zeros(self.dims[0], self.dims[0]), M::zeros(self.dims[1], self.dims[1])];
        let mut lam = vec![0.0; self.ineqs.len()];
        let mut beta = 10.0;
        let mut step = 1.0;
        let mut prev_viol = f64::INFINITY;
        let mut prev_obj = f64::INFINITY;
        for outer in 0..100 {
            let tol = (1e-3 * 0.5f64.powi(outer)).max(1e-8);
            let gm = self.inner(&mut x, &lam, beta, &mut step, tol, 5_000);
            for ((c, o), l) in self.ineqs.iter().zip(lam.iter_mut()) {
                *l = (*l + beta * (ip2(c, &x) + o)).max(0.0);
            }
            let viol = self.max_violation(&x);
            let obj = self.objective(&x);
            if viol <= 1e-9 && gm <= 1e-6 && (obj - prev_obj).abs() <= 1e-10 * (1.0 + obj.abs()) {
                break;
            }
            if viol > 1e-9 && viol > 0.25 * prev_viol {
                beta = (beta * 4.0).min(1e6);
            }
            prev_viol = viol;
            prev_obj = obj;
        }
        x
    }
}
