//! Scenario model: dimensions, selection operators, stacked channels and the
//! cached rank-one quadratic forms that turn vector metrics into traces.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DVector;
use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

/// Unit in which rates (and therefore objectives) are reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RateUnit {
    /// bit/s/Hz (base-2 logarithm)
    #[default]
    Bits,
    /// nat/s/Hz (natural logarithm)
    Nats,
}

impl RateUnit {
    /// Factor converting a natural logarithm into this unit.
    pub fn per_nat(self) -> f64 {
        match self {
            RateUnit::Bits => core::f64::consts::LOG2_E,
            RateUnit::Nats => 1.0,
        }
    }

    pub fn log(self, x: f64) -> f64 {
        Float::ln(x) * self.per_nat()
    }
}

/// Dimensions and physical limits of one scenario. Powers in watts.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    n: usize,
    k: usize,
    g: usize,
    p_t: f64,
    q_t: f64,
    zeta: f64,
    sigma2: Vec<f64>,
    rate_unit: RateUnit,
}

impl SystemConfig {
    pub fn new(n: usize, k: usize, g: usize, p_t: f64, q_t: f64, zeta: f64, sigma2: Vec<f64>) -> Result<Self> {
        let cfg = Self { n, k, g, p_t, q_t, zeta, sigma2, rate_unit: RateUnit::Bits };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same noise power at every ID user.
    pub fn uniform_noise(n: usize, k: usize, g: usize, p_t: f64, q_t: f64, zeta: f64, sigma2: f64) -> Result<Self> {
        Self::new(n, k, g, p_t, q_t, zeta, alloc::vec![sigma2; k])
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.k == 0 || self.g == 0 {
            return bad(format!("N, K, G must be >= 1 (got {}, {}, {})", self.n, self.k, self.g));
        }
        if !(self.p_t > 0.0 && self.p_t.is_finite()) {
            return bad(format!("P_t must be positive and finite (got {})", self.p_t));
        }
        if !(self.q_t >= 0.0 && self.q_t.is_finite()) {
            return bad(format!("Q_t must be non-negative and finite (got {})", self.q_t));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad(format!("zeta must lie in (0, 1] (got {})", self.zeta));
        }
        if self.sigma2.len() != self.k {
            return Err(Error::DimensionMismatch { what: "sigma2", expected: self.k, found: self.sigma2.len() });
        }
        if let Some(s) = self.sigma2.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return bad(format!("noise powers must be positive (got {s})"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn g(&self) -> usize {
        self.g
    }
    pub fn p_t(&self) -> f64 {
        self.p_t
    }
    pub fn q_t(&self) -> f64 {
        self.q_t
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }
    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }
    pub fn rate_unit(&self) -> RateUnit {
        self.rate_unit
    }
    /// Length of the stacked ID beamformer, `N K`.
    pub fn dim_i(&self) -> usize {
        self.n * self.k
    }
    /// Length of the stacked EH beamformer, `N G`.
    pub fn dim_e(&self) -> usize {
        self.n * self.g
    }

    pub fn with_q_t(mut self, q_t: f64) -> Result<Self> {
        self.q_t = q_t;
        self.validate()?;
        Ok(self)
    }

    pub fn with_p_t(mut self, p_t: f64) -> Result<Self> {
        self.p_t = p_t;
        self.validate()?;
        Ok(self)
    }

    pub fn with_rate_unit(mut self, unit: RateUnit) -> Self {
        self.rate_unit = unit;
        self
    }
}

/// Index vectors and the diagonals of the selection matrices. Every matrix
/// here is diagonal with 0/1 entries, so only the diagonal is stored; the
/// `*_matrix` accessors materialize dense copies.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionOperators {
    n: usize,
    k: usize,
    g: usize,
    a: Vec<DVector<f64>>,
    abar_i: Vec<DVector<f64>>,
    abar_e: Vec<DVector<f64>>,
    b_i: Vec<DVector<f64>>,
    b_e: Vec<DVector<f64>>,
}

fn indicator(len: usize, ones: impl Iterator<Item = usize>) -> DVector<f64> {
    let mut v = DVector::zeros(len);
    for i in ones {
        v[i] = 1.0;
    }
    v
}

pub fn build_selection_operators(cfg: &SystemConfig) -> SelectionOperators {
    let (n, k, g) = (cfg.n, cfg.k, cfg.g);
    let a = (0..n).map(|e| indicator(n, core::iter::once(e))).collect();
    let abar_i = (0..n).map(|e| indicator(n * k, (0..k).map(|b| b * n + e))).collect();
    let abar_e = (0..n).map(|e| indicator(n * g, (0..g).map(|b| b * n + e))).collect();
    let b_i = (0..k).map(|b| indicator(n * k, b * n..(b + 1) * n)).collect();
    let b_e = (0..g).map(|b| indicator(n * g, b * n..(b + 1) * n)).collect();
    SelectionOperators { n, k, g, a, abar_i, abar_e, b_i, b_e }
}

impl SelectionOperators {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn a(&self, n: usize) -> &DVector<f64> {
        &self.a[n]
    }
    pub fn a_matrix(&self, n: usize) -> CMat {
        linalg::real_diag(&self.a[n])
    }
    pub fn abar_i(&self, n: usize) -> &DVector<f64> {
        &self.abar_i[n]
    }
    pub fn abar_i_matrix(&self, n: usize) -> CMat {
        linalg::real_diag(&self.abar_i[n])
    }
    pub fn abar_e(&self, n: usize) -> &DVector<f64> {
        &self.abar_e[n]
    }
    pub fn abar_e_matrix(&self, n: usize) -> CMat {
        linalg::real_diag(&self.abar_e[n])
    }
    pub fn b_i(&self, k: usize) -> &DVector<f64> {
        &self.b_i[k]
    }
    pub fn b_i_matrix(&self, k: usize) -> CMat {
        linalg::real_diag(&self.b_i[k])
    }
    pub fn b_e(&self, g: usize) -> &DVector<f64> {
        &self.b_e[g]
    }
    pub fn b_e_matrix(&self, g: usize) -> CMat {
        linalg::real_diag(&self.b_e[g])
    }
    pub fn num_id(&self) -> usize {
        self.k
    }
    pub fn num_eh(&self) -> usize {
        self.g
    }
}

/// Per-user channels as drawn: `id[k]` and `eh[g]`, each of length `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawChannels {
    pub id: Vec<CVec>,
    pub eh: Vec<CVec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub h_i: Vec<CVec>,
    pub h_e: Vec<CVec>,
    /// `K` copies of `h_i[k]`.
    pub hbar_i1: Vec<CVec>,
    /// `G` copies of `h_i[k]`.
    pub hbar_i2: Vec<CVec>,
    /// `G` copies of `h_e[g]`.
    pub hbar_e: Vec<CVec>,
    /// `K` copies of `h_e[g]`.
    pub hbar_e2: Vec<CVec>,
}

fn repeat(v: &CVec, times: usize) -> CVec {
    let n = v.len();
    CVec::from_fn(n * times, |i, _| v[i % n])
}

pub fn stack_channels(cfg: &SystemConfig, raw: &RawChannels) -> Result<ChannelSet> {
    if raw.id.len() != cfg.k {
        return Err(Error::DimensionMismatch { what: "ID channel count", expected: cfg.k, found: raw.id.len() });
    }
    if raw.eh.len() != cfg.g {
        return Err(Error::DimensionMismatch { what: "EH channel count", expected: cfg.g, found: raw.eh.len() });
    }
    for h in raw.id.iter().chain(raw.eh.iter()) {
        if h.len() != cfg.n {
            return Err(Error::DimensionMismatch { what: "channel length", expected: cfg.n, found: h.len() });
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidConfig("channel entries must be finite".into()));
        }
    }
    Ok(ChannelSet {
        h_i: raw.id.clone(),
        h_e: raw.eh.clone(),
        hbar_i1: raw.id.iter().map(|h| repeat(h, cfg.k)).collect(),
        hbar_i2: raw.id.iter().map(|h| repeat(h, cfg.g)).collect(),
        hbar_e: raw.eh.iter().map(|h| repeat(h, cfg.g)).collect(),
        hbar_e2: raw.eh.iter().map(|h| repeat(h, cfg.k)).collect(),
    })
}

/// `B h h^H B` for a block selector `B`: a rank-one matrix living on a single
/// `N x N` diagonal block of a `blocks * N` square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockQuadForm {
    base: CVec,
    block: usize,
    blocks: usize,
}

impl BlockQuadForm {
    /// `(B h)` restricted to the selected block. Panics if `B h` leaks
    /// outside one block, which cannot happen for the selectors built here.
    fn from_selection(selector: &DVector<f64>, stacked: &CVec, n: usize) -> Self {
        let blocks = stacked.len() / n;
        let block = (0..blocks)
            .find(|b| selector[b * n] != 0.0)
            .expect("selector has an active block");
        let base = CVec::from_fn(n, |i, _| stacked[block * n + i] * selector[block * n + i]);
        debug_assert!((0..stacked.len())
            .all(|idx| idx / n == block || selector[idx] == 0.0));
        Self { base, block, blocks }
    }

    pub fn base(&self) -> &CVec {
        &self.base
    }
    pub fn block(&self) -> usize {
        self.block
    }
    pub fn dim(&self) -> usize {
        self.base.len() * self.blocks
    }

    /// `Re Tr(M F)` touching only the active block of `f`.
    pub fn trace_with(&self, f: &CMat) -> f64 {
        let n = self.base.len();
        let off = self.block * n;
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for c in 0..n {
                row += f[(off + r, off + c)] * self.base[c];
            }
            acc += self.base[r].conj() * row;
        }
        acc.re
    }

    /// `out += scale * M`.
    pub fn add_to(&self, out: &mut CMat, scale: f64) {
        let n = self.base.len();
        let off = self.block * n;
        for r in 0..n {
            for c in 0..n {
                out[(off + r, off + c)] += self.base[r] * self.base[c].conj() * scale;
            }
        }
    }

    pub fn dense(&self) -> CMat {
        let mut out = linalg::zeros(self.dim());
        self.add_to(&mut out, 1.0);
        out
    }
}

/// Cached quadratic-form matrices:
/// `m_ii[k][i] = B_I,i hbar_I1,k hbar_I1,k^H B_I,i`,
/// `m_ie[k][g] = B_E,g hbar_I2,k hbar_I2,k^H B_E,g`,
/// `m_ee[g][i] = B_E,i hbar_E,g hbar_E,g^H B_E,i`,
/// `m_ei[g][k] = B_I,k hbar_E2,g hbar_E2,g^H B_I,k`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadFormCache {
    pub m_ii: Vec<Vec<BlockQuadForm>>,
    pub m_ie: Vec<Vec<BlockQuadForm>>,
    pub m_ee: Vec<Vec<BlockQuadForm>>,
    pub m_ei: Vec<Vec<BlockQuadForm>>,
}

pub fn build_quadform_cache(ops: &SelectionOperators, ch: &ChannelSet) -> QuadFormCache {
    let n = ops.n;
    let m_ii = ch
        .hbar_i1
        .iter()
        .map(|h| (0..ops.k).map(|i| BlockQuadForm::from_selection(&ops.b_i[i], h, n)).collect())
        .collect();
    let m_ie = ch
        .hbar_i2
        .iter()
        .map(|h| (0..ops.g).map(|g| BlockQuadForm::from_selection(&ops.b_e[g], h, n)).collect())
        .collect();
    let m_ee = ch
        .hbar_e
        .iter()
        .map(|h| (0..ops.g).map(|i| BlockQuadForm::from_selection(&ops.b_e[i], h, n)).collect())
        .collect();
    let m_ei = ch
        .hbar_e2
        .iter()
        .map(|h| (0..ops.k).map(|k| BlockQuadForm::from_selection(&ops.b_i[k], h, n)).collect())
        .collect();
    QuadFormCache { m_ii, m_ie, m_ee, m_ei }
}

/// Everything downstream needs about one scenario, built once.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemModel {
    pub cfg: SystemConfig,
    pub ops: SelectionOperators,
    pub channels: ChannelSet,
    pub qf: QuadFormCache,
}

impl SystemModel {
    pub fn new(cfg: SystemConfig, raw: &RawChannels) -> Result<Self> {
        let ops = build_selection_operators(&cfg);
        let channels = stack_channels(&cfg, raw)?;
        let qf = build_quadform_cache(&ops, &channels);
        Ok(Self { cfg, ops, channels, qf })
    }

    /// Same channels, different limits (e.g. a new `Q_t` or `P_t`).
    pub fn with_config(&self, cfg: SystemConfig) -> Result<Self> {
        if cfg.n != self.cfg.n || cfg.k != self.cfg.k || cfg.g != self.cfg.g {
            return Err(Error::InvalidConfig("dimensions must not change".into()));
        }
        Ok(Self { cfg, ..self.clone() })
    }
}
