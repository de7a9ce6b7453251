//! Dense complex Hermitian helpers shared by the metrics, builder and solver.

use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::Float;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `v v^H`.
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// `Re Tr(A B)`. For Hermitian arguments this is the real inner product used
/// throughout; the imaginary part is round-off and is discarded.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let x = a[(i, j)];
            let y = b[(j, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

pub fn real_trace(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

pub fn frobenius(a: &CMat) -> f64 {
    Float::sqrt(a.iter().map(|z| z.norm_sqr()).sum::<f64>())
}

/// `(A + A^H) / 2`, with an exactly real diagonal.
pub fn hermitize(a: &CMat) -> CMat {
    let n = a.nrows();
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let z = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            out[(i, j)] = z;
            out[(j, i)] = z.conj();
        }
    }
    out
}

/// Largest `|A - A^H|` entry relative to the largest entry of `A`.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending
/// and every eigenvector phase-normalized (see [`normalize_phase`]).
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<CVec>,
}

impl HermitianEigen {
    pub fn new(a: &CMat) -> Self {
        let n = a.nrows();
        if n == 0 {
            return Self { values: Vec::new(), vectors: Vec::new() };
        }
        let eig = hermitize(a).symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .partial_cmp(&eig.eigenvalues[i])
                .unwrap_or(Ordering::Equal)
                .then(i.cmp(&j))
        });
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = order
            .iter()
            .map(|&i| {
                let mut v: CVec = eig.eigenvectors.column(i).into_owned();
                let norm = v.norm();
                if norm > 0.0 {
                    v /= Complex64::new(norm, 0.0);
                }
                normalize_phase(&mut v);
                v
            })
            .collect();
        Self { values, vectors }
    }

    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Unit eigenvector of the largest eigenvalue. When the top of the
    /// spectrum is degenerate (relative gap below `1e-10`), the candidate
    /// whose phase-normalized real parts are lexicographically largest wins.
    pub fn top_vector(&self) -> CVec {
        let lmax = self.max_value();
        let tol = 1e-10 * lmax.abs().max(f64::MIN_POSITIVE);
        let mut best = 0;
        for idx in 1..self.values.len() {
            if lmax - self.values[idx] > tol {
                break;
            }
            if lex_cmp(&self.vectors[idx], &self.vectors[best]) == Ordering::Greater {
                best = idx;
            }
        }
        self.vectors[best].clone()
    }
}

fn lex_cmp(a: &CVec, b: &CVec) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.re.partial_cmp(&y.re) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Rotates `v` so that its first entry of non-negligible modulus is real and
/// positive.
pub fn normalize_phase(v: &mut CVec) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(pivot) = v.iter().find(|z| z.norm() > 1e-8 * scale) {
        let rot = pivot.conj() / pivot.norm();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Spectral norm of a Hermitian matrix: largest absolute eigenvalue.
pub fn spectral_norm(a: &CMat) -> f64 {
    let e = HermitianEigen::new(a);
    e.max_value().abs().max(e.min_value().abs())
}

/// Nuclear norm of a Hermitian matrix: sum of absolute eigenvalues.
pub fn nuclear_norm(a: &CMat) -> f64 {
    HermitianEigen::new(a).values.iter().map(|l| l.abs()).sum()
}

/// Numerical PSD test: smallest eigenvalue at least `-rel_tol * ||A||_2`.
pub fn is_numerically_psd(a: &CMat, rel_tol: f64) -> bool {
    if a.nrows() == 0 {
        return true;
    }
    let e = HermitianEigen::new(a);
    let scale = e.max_value().abs().max(e.min_value().abs());
    e.min_value() >= -rel_tol * scale
}

/// Block-diagonal assembly of equally sized square blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let total: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(total, total);
    let mut off = 0;
    for b in blocks {
        let n = b.nrows();
        out.view_mut((off, off), (n, n)).copy_from(b);
        off += n;
    }
    out
}

pub fn real_diag(d: &DVector<f64>) -> CMat {
    let n = d.len();
    let mut out = CMat::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = Complex64::new(d[i], 0.0);
    }
    out
}
