//! Performance expressions in vector form (beamformers) and lifted form
//! (PSD matrices), plus the difference-of-concave split of the rate, its
//! linearization, and the rank-one penalty pieces.

use alloc::vec::Vec;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, HermitianEigen};
use crate::system::{BlockQuadForm, SelectionOperators, SystemModel};

/// Stacked ID and EH beamformers, lengths `NK` and `NG`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerPair {
    pub f_i: CVec,
    pub f_e: CVec,
}

impl BeamformerPair {
    pub fn zeros(dim_i: usize, dim_e: usize) -> Self {
        Self { f_i: CVec::zeros(dim_i), f_e: CVec::zeros(dim_e) }
    }

    /// Beam of ID user `k` (length `N`).
    pub fn id_beam(&self, n: usize, k: usize) -> CVec {
        self.f_i.rows(k * n, n).into_owned()
    }

    pub fn eh_beam(&self, n: usize, g: usize) -> CVec {
        self.f_e.rows(g * n, n).into_owned()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let s = Complex64::new(s, 0.0);
        Self { f_i: &self.f_i * s, f_e: &self.f_e * s }
    }
}

/// Lifted variables `F_I` (`NK x NK`) and `F_E` (`NG x NG`).
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedPair {
    pub f_i: CMat,
    pub f_e: CMat,
}

impl LiftedPair {
    pub fn from_beams(bf: &BeamformerPair) -> Self {
        Self { f_i: linalg::outer(&bf.f_i), f_e: linalg::outer(&bf.f_e) }
    }

    pub fn zeros(dim_i: usize, dim_e: usize) -> Self {
        Self { f_i: linalg::zeros(dim_i), f_e: linalg::zeros(dim_e) }
    }

    pub fn hermitized(&self) -> Self {
        Self { f_i: linalg::hermitize(&self.f_i), f_e: linalg::hermitize(&self.f_e) }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let s = Complex64::new(s, 0.0);
        Self { f_i: &self.f_i * s, f_e: &self.f_e * s }
    }

    /// Checks Hermitian symmetry (`1e-12` relative) and numerical PSD-ness
    /// (eigenvalues `>= -1e-9 ||F||`).
    pub fn check(&self) -> Result<()> {
        for (what, m) in [("F_I", &self.f_i), ("F_E", &self.f_e)] {
            let defect = linalg::hermitian_defect(m);
            if defect > 1e-12 {
                return Err(Error::NotPsd { what, value: defect });
            }
            let e = HermitianEigen::new(m);
            let scale = e.max_value().abs().max(e.min_value().abs());
            if e.min_value() < -1e-9 * scale {
                return Err(Error::NotPsd { what, value: e.min_value() });
            }
        }
        Ok(())
    }
}

/// Gradient of the interference-plus-noise log term at an expansion point.
#[derive(Clone, Debug, PartialEq)]
pub struct DcGradients {
    pub g_i: CMat,
    pub g_e: CMat,
    pub value0: f64,
}

fn masked_inner(h: &CVec, mask: &DVector<f64>, f: &CVec) -> Complex64 {
    h.iter()
        .zip(mask.iter())
        .zip(f.iter())
        .filter(|((_, m), _)| **m != 0.0)
        .map(|((h, m), f)| h.conj() * f * *m)
        .sum()
}

fn masked_quadratic(mask: &DVector<f64>, f: &CVec) -> f64 {
    mask.iter().zip(f.iter()).map(|(m, z)| m * z.norm_sqr()).sum()
}

/// `f_I^H Abar_I,n f_I + f_E^H Abar_E,n f_E` for element `n` (0-based).
pub fn per_antenna_power(bf: &BeamformerPair, ops: &SelectionOperators, n: usize) -> f64 {
    masked_quadratic(ops.abar_i(n), &bf.f_i) + masked_quadratic(ops.abar_e(n), &bf.f_e)
}

pub fn per_antenna_power_lifted(lift: &LiftedPair, ops: &SelectionOperators, n: usize) -> f64 {
    let diag = |m: &CMat, mask: &DVector<f64>| -> f64 {
        mask.iter().enumerate().map(|(i, w)| w * m[(i, i)].re).sum()
    };
    diag(&lift.f_i, ops.abar_i(n)) + diag(&lift.f_e, ops.abar_e(n))
}

/// Desired-signal power and interference-plus-noise power at ID user `k`.
fn sinr_terms(bf: &BeamformerPair, model: &SystemModel, k: usize) -> (f64, f64) {
    let (ops, ch) = (&model.ops, &model.channels);
    let signal = masked_inner(&ch.hbar_i1[k], ops.b_i(k), &bf.f_i).norm_sqr();
    let mut denom = model.cfg.sigma2()[k];
    for i in (0..model.cfg.k()).filter(|&i| i != k) {
        denom += masked_inner(&ch.hbar_i1[k], ops.b_i(i), &bf.f_i).norm_sqr();
    }
    for g in 0..model.cfg.g() {
        denom += masked_inner(&ch.hbar_i2[k], ops.b_e(g), &bf.f_e).norm_sqr();
    }
    (signal, denom)
}

pub fn sinr(bf: &BeamformerPair, model: &SystemModel, k: usize) -> f64 {
    let (s, d) = sinr_terms(bf, model, k);
    s / d
}

pub fn rate(bf: &BeamformerPair, model: &SystemModel, k: usize) -> f64 {
    model.cfg.rate_unit().log(1.0 + sinr(bf, model, k))
}

pub fn sum_rate(bf: &BeamformerPair, model: &SystemModel) -> f64 {
    (0..model.cfg.k()).map(|k| rate(bf, model, k)).sum()
}

pub fn harvested_energy(bf: &BeamformerPair, model: &SystemModel, g: usize) -> f64 {
    let (ops, ch) = (&model.ops, &model.channels);
    let from_eh: f64 = (0..model.cfg.g())
        .map(|i| masked_inner(&ch.hbar_e[g], ops.b_e(i), &bf.f_e).norm_sqr())
        .sum();
    let from_id: f64 = (0..model.cfg.k())
        .map(|k| masked_inner(&ch.hbar_e2[g], ops.b_i(k), &bf.f_i).norm_sqr())
        .sum();
    model.cfg.zeta() * (from_eh + from_id)
}

pub fn total_harvest(bf: &BeamformerPair, model: &SystemModel) -> f64 {
    (0..model.cfg.g()).map(|g| harvested_energy(bf, model, g)).sum()
}

fn checked_trace(form: &BlockQuadForm, f: &CMat, what: &'static str) -> Result<f64> {
    let t = form.trace_with(f);
    let scale = form.base().norm_squared() * linalg::frobenius(f);
    if t < -1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd { what, value: t });
    }
    Ok(t)
}

/// Lifted traces for ID user `k`: `(signal, interference from other ID
/// beams, interference from EH beams)`.
fn lifted_terms(lift: &LiftedPair, model: &SystemModel, k: usize) -> Result<(f64, f64, f64)> {
    let qf = &model.qf;
    let signal = checked_trace(&qf.m_ii[k][k], &lift.f_i, "F_I")?;
    let mut id_int = 0.0;
    for i in (0..model.cfg.k()).filter(|&i| i != k) {
        id_int += checked_trace(&qf.m_ii[k][i], &lift.f_i, "F_I")?;
    }
    let mut eh_int = 0.0;
    for g in 0..model.cfg.g() {
        eh_int += checked_trace(&qf.m_ie[k][g], &lift.f_e, "F_E")?;
    }
    Ok((signal, id_int, eh_int))
}

pub fn rate_lifted(lift: &LiftedPair, model: &SystemModel, k: usize) -> Result<f64> {
    let (s, ii, ie) = lifted_terms(lift, model, k)?;
    let denom = ii + ie + model.cfg.sigma2()[k];
    Ok(model.cfg.rate_unit().log(1.0 + s / denom))
}

pub fn sum_rate_lifted(lift: &LiftedPair, model: &SystemModel) -> Result<f64> {
    (0..model.cfg.k()).map(|k| rate_lifted(lift, model, k)).sum()
}

pub fn harvest_lifted(lift: &LiftedPair, model: &SystemModel, g: usize) -> Result<f64> {
    let qf = &model.qf;
    let mut acc = 0.0;
    for i in 0..model.cfg.g() {
        acc += checked_trace(&qf.m_ee[g][i], &lift.f_e, "F_E")?;
    }
    for k in 0..model.cfg.k() {
        acc += checked_trace(&qf.m_ei[g][k], &lift.f_i, "F_I")?;
    }
    Ok(model.cfg.zeta() * acc)
}

pub fn total_harvest_lifted(lift: &LiftedPair, model: &SystemModel) -> Result<f64> {
    (0..model.cfg.g()).map(|g| harvest_lifted(lift, model, g)).sum()
}

/// `(R_dot_k, R_ddot_k)`: logs of the total received power plus noise and of
/// the interference plus noise, so that their difference is the rate.
pub fn dc_parts(lift: &LiftedPair, model: &SystemModel, k: usize) -> Result<(f64, f64)> {
    let (s, ii, ie) = lifted_terms(lift, model, k)?;
    let unit = model.cfg.rate_unit();
    let noise = model.cfg.sigma2()[k];
    Ok((unit.log(s + ii + ie + noise), unit.log(ii + ie + noise)))
}

/// Coefficient matrices `(sum_{i != k} M_II[k][i], sum_g M_IE[k][g])` of the
/// interference-plus-noise term of user `k`.
pub fn interference_coefficients(model: &SystemModel, k: usize) -> (CMat, CMat) {
    let mut c_i = linalg::zeros(model.cfg.dim_i());
    for i in (0..model.cfg.k()).filter(|&i| i != k) {
        model.qf.m_ii[k][i].add_to(&mut c_i, 1.0);
    }
    let mut c_e = linalg::zeros(model.cfg.dim_e());
    for g in 0..model.cfg.g() {
        model.qf.m_ie[k][g].add_to(&mut c_e, 1.0);
    }
    (c_i, c_e)
}

pub fn dc_gradient(lift0: &LiftedPair, model: &SystemModel, k: usize) -> Result<DcGradients> {
    let (_, ii, ie) = lifted_terms(lift0, model, k)?;
    let denom = ii + ie + model.cfg.sigma2()[k];
    let unit = model.cfg.rate_unit();
    let scale = Complex64::new(unit.per_nat() / denom, 0.0);
    let (c_i, c_e) = interference_coefficients(model, k);
    Ok(DcGradients { g_i: c_i * scale, g_e: c_e * scale, value0: unit.log(denom) })
}

/// First-order over-estimate of `R_ddot_k` at `lift` around `lift0`.
pub fn sca_rate_bound(lift: &LiftedPair, lift0: &LiftedPair, model: &SystemModel, k: usize) -> Result<f64> {
    let grad = dc_gradient(lift0, model, k)?;
    Ok(grad.value0
        + linalg::trace_product(&grad.g_i, &(&lift.f_i - &lift0.f_i))
        + linalg::trace_product(&grad.g_e, &(&lift.f_e - &lift0.f_e)))
}

/// `||F||_* - ||F||_2`, zero exactly for rank <= 1.
pub fn rank_residual(f: &CMat) -> f64 {
    let e = HermitianEigen::new(f);
    let nuclear: f64 = e.values.iter().map(|l| l.abs()).sum();
    nuclear - e.max_value().abs().max(e.min_value().abs())
}

/// Linearization of the spectral norm at `f0`:
/// `||F0||_2 + Re Tr(v v^H (F - F0))` with `v` the top eigenvector of `F0`.
pub fn spectral_minorant(f: &CMat, f0: &CMat) -> f64 {
    let e0 = HermitianEigen::new(f0);
    let v = e0.top_vector();
    let vv = linalg::outer(&v);
    e0.max_value() + linalg::trace_product(&vv, &(f - f0))
}

fn penalty_block(f: &CMat, f0: &CMat) -> f64 {
    let trace = linalg::real_trace(f);
    debug_assert!({
        let nuc = linalg::nuclear_norm(f);
        (nuc - trace).abs() <= 1e-9 * nuc.max(1.0) || !linalg::is_numerically_psd(f, 1e-9)
    });
    trace - spectral_minorant(f, f0)
}

/// Convexified rank penalties `(p_I, p_E)`: nuclear norm (trace, on the PSD
/// cone) minus the spectral-norm linearization at `lift0`.
pub fn penalty_terms(lift: &LiftedPair, lift0: &LiftedPair) -> (f64, f64) {
    (penalty_block(&lift.f_i, &lift0.f_i), penalty_block(&lift.f_e, &lift0.f_e))
}

/// Per-block `||F||_* - ||F||_2`.
pub fn rank_residuals(lift: &LiftedPair) -> (f64, f64) {
    (rank_residual(&lift.f_i), rank_residual(&lift.f_e))
}

/// Vector and lifted values of every metric, for side-by-side comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSnapshot {
    pub rates: Vec<f64>,
    pub harvests: Vec<f64>,
    pub powers: Vec<f64>,
}

pub fn snapshot_vector(bf: &BeamformerPair, model: &SystemModel) -> MetricSnapshot {
    MetricSnapshot {
        rates: (0..model.cfg.k()).map(|k| rate(bf, model, k)).collect(),
        harvests: (0..model.cfg.g()).map(|g| harvested_energy(bf, model, g)).collect(),
        powers: (0..model.cfg.n()).map(|n| per_antenna_power(bf, &model.ops, n)).collect(),
    }
}

pub fn snapshot_lifted(lift: &LiftedPair, model: &SystemModel) -> Result<MetricSnapshot> {
    Ok(MetricSnapshot {
        rates: (0..model.cfg.k()).map(|k| rate_lifted(lift, model, k)).collect::<Result<_>>()?,
        harvests: (0..model.cfg.g()).map(|g| harvest_lifted(lift, model, g)).collect::<Result<_>>()?,
        powers: (0..model.cfg.n()).map(|n| per_antenna_power_lifted(lift, &model.ops, n)).collect(),
    })
}
