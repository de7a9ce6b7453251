//! Independent checks for tiny instances: exhaustive grid search over the
//! beamformers themselves, and vector-versus-lifted metric agreement.
//!
//! The grid search fixes the first entry of every beam to be real and
//! non-negative (rates and harvests depend only on relative phases), so a
//! beam of length `N` has `2N - 1` real grid coordinates.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use num_complex::Complex64;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::metrics::{self, BeamformerPair, LiftedPair};
use crate::system::SystemModel;

pub const DEFAULT_RESOLUTION: usize = 25;

/// One grid beam with the inner products that matter for a single ID and a
/// single EH user.
#[derive(Clone, Debug)]
struct Candidate {
    params: Vec<f64>,
    /// `|h_I^H f|^2`
    id_gain: f64,
    /// `|h_E^H f|^2`
    eh_gain: f64,
    /// `|f_n|^2`
    powers: Vec<f64>,
}

/// Beam from `[m_0, .., m_{N-1}, phi_1, .., phi_{N-1}]`.
fn beam_from_params(n: usize, p: &[f64]) -> CVec {
    CVec::from_fn(n, |i, _| {
        let phase = if i == 0 { 0.0 } else { p[n + i - 1] };
        Complex64::from_polar(p[i], phase)
    })
}

/// Best point of a (partial) grid scan.
#[derive(Clone, Debug, PartialEq)]
pub struct GridBest {
    /// SINR of the best pair; negative when nothing feasible was seen.
    pub sinr: f64,
    pub id_params: Vec<f64>,
    pub eh_params: Vec<f64>,
}

impl GridBest {
    pub fn none() -> Self {
        GridBest { sinr: -1.0, id_params: Vec::new(), eh_params: Vec::new() }
    }

    pub fn is_feasible(&self) -> bool {
        self.sinr >= 0.0
    }

    /// Keeps the better of two partial results; ties go to `self`, so folding
    /// chunks in index order is deterministic.
    pub fn merge(self, other: GridBest) -> GridBest {
        if other.sinr > self.sinr {
            other
        } else {
            self
        }
    }
}

/// Precomputed grid for a single-ID, single-EH instance with `N <= 2`.
#[derive(Clone, Debug)]
pub struct BruteForceGrid {
    n: usize,
    resolution: usize,
    p_t: f64,
    q_t: f64,
    zeta: f64,
    sigma2: f64,
    h_i: CVec,
    h_e: CVec,
    candidates: Vec<Candidate>,
}

impl BruteForceGrid {
    pub fn new(model: &SystemModel, resolution: usize) -> Result<Self> {
        let cfg = &model.cfg;
        if cfg.n() > 2 || cfg.k() != 1 || cfg.g() != 1 {
            return Err(Error::InvalidConfig(format!(
                "grid search needs N <= 2, K = 1, G = 1 (got N={}, K={}, G={})",
                cfg.n(),
                cfg.k(),
                cfg.g()
            )));
        }
        if resolution < 2 {
            return Err(Error::InvalidConfig(format!("grid resolution must be at least 2 (got {resolution})")));
        }
        let n = cfg.n();
        let max_mag = Float::sqrt(cfg.p_t());
        let mags: Vec<f64> = (0..resolution).map(|j| max_mag * j as f64 / (resolution - 1) as f64).collect();
        let phases: Vec<f64> = (0..resolution).map(|j| 2.0 * PI * j as f64 / resolution as f64).collect();

        let dims = 2 * n - 1;
        let total = resolution.pow(dims as u32);
        let mut grid = Self {
            n,
            resolution,
            p_t: cfg.p_t(),
            q_t: cfg.q_t(),
            zeta: cfg.zeta(),
            sigma2: cfg.sigma2()[0],
            h_i: model.channels.h_i[0].clone(),
            h_e: model.channels.h_e[0].clone(),
            candidates: Vec::with_capacity(total),
        };
        let mut params = vec![0.0; dims];
        for idx in 0..total {
            let mut rest = idx;
            for (d, p) in params.iter_mut().enumerate() {
                let j = rest % resolution;
                rest /= resolution;
                *p = if d < n { mags[j] } else { phases[j] };
            }
            let c = grid.candidate(&params);
            grid.candidates.push(c);
        }
        Ok(grid)
    }

    fn candidate(&self, params: &[f64]) -> Candidate {
        let f = beam_from_params(self.n, params);
        Candidate {
            params: params.to_vec(),
            id_gain: self.h_i.dotc(&f).norm_sqr(),
            eh_gain: self.h_e.dotc(&f).norm_sqr(),
            powers: f.iter().map(|z| z.norm_sqr()).collect(),
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Number of ID-beam candidates; chunks index into `0..len()`.
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    fn sinr_if_feasible(&self, id: &Candidate, eh: &Candidate) -> Option<f64> {
        if id.powers.iter().zip(&eh.powers).any(|(a, b)| a + b > self.p_t) {
            return None;
        }
        if self.zeta * (id.eh_gain + eh.eh_gain) < self.q_t {
            return None;
        }
        // the EH beam's gain towards the ID user is pure interference
        Some(id.id_gain / (eh.id_gain + self.sigma2))
    }

    /// Scans ID candidates `range` against every EH candidate.
    pub fn scan(&self, range: Range<usize>) -> GridBest {
        let mut best = GridBest::none();
        for id in &self.candidates[range] {
            for eh in &self.candidates {
                let Some(sinr) = self.sinr_if_feasible(id, eh) else { continue };
                if sinr > best.sinr {
                    best = GridBest { sinr, id_params: id.params.clone(), eh_params: eh.params.clone() };
                }
            }
        }
        best
    }

    fn pair_sinr(&self, id: &[f64], eh: &[f64]) -> Option<f64> {
        self.sinr_if_feasible(&self.candidate(id), &self.candidate(eh))
    }

    /// Coordinate descent from a feasible grid point: each coordinate tries
    /// `+-step`, steps halve when no coordinate improves.
    pub fn refine(&self, start: &GridBest) -> GridBest {
        if !start.is_feasible() {
            return start.clone();
        }
        let max_mag = Float::sqrt(self.p_t);
        let mut x: Vec<f64> = start.id_params.iter().chain(&start.eh_params).copied().collect();
        let dims = 2 * self.n - 1;
        let mut value = start.sinr;
        let mut step = 1.0 / (self.resolution - 1) as f64;
        while step > 1e-10 {
            let mut improved = false;
            for d in 0..x.len() {
                let is_mag = d % dims < self.n;
                let scale = if is_mag { max_mag } else { 2.0 * PI };
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[d] += dir * step * scale;
                    if is_mag {
                        y[d] = y[d].clamp(0.0, max_mag);
                    }
                    if let Some(v) = self.pair_sinr(&y[..dims], &y[dims..]) {
                        if v > value {
                            value = v;
                            x = y;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        GridBest { sinr: value, id_params: x[..dims].to_vec(), eh_params: x[dims..].to_vec() }
    }

    pub fn beams(&self, best: &GridBest) -> BeamformerPair {
        BeamformerPair { f_i: beam_from_params(self.n, &best.id_params), f_e: beam_from_params(self.n, &best.eh_params) }
    }
}

/// Result of [`brute_force_best`].
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub beams: BeamformerPair,
    /// Sum-rate of `beams` from the vector expressions.
    pub sum_rate: f64,
    /// Best sum-rate on the grid before refinement.
    pub grid_sum_rate: f64,
}

/// Finishes a scan: refinement, then rates in the model's unit.
pub fn finish(grid: &BruteForceGrid, model: &SystemModel, best: GridBest) -> Result<OracleResult> {
    if !best.is_feasible() {
        return Err(Error::Infeasible { phase1_value: f64::NAN });
    }
    let unit = model.cfg.rate_unit();
    let grid_sum_rate = unit.log(1.0 + best.sinr);
    let refined = grid.refine(&best);
    let beams = grid.beams(&refined);
    Ok(OracleResult { sum_rate: metrics::sum_rate(&beams, model), grid_sum_rate, beams })
}

/// Best feasible beam pair over the grid, refined by coordinate descent.
pub fn brute_force_best(model: &SystemModel, resolution: usize) -> Result<OracleResult> {
    let grid = BruteForceGrid::new(model, resolution)?;
    let best = grid.scan(0..grid.len());
    finish(&grid, model, best)
}

/// Rate of the single-user matched beam at full per-element power with no
/// EH beam: `log(1 + P_t (sum_n |h_n|)^2 / sigma^2)`.
pub fn matched_filter_rate(model: &SystemModel) -> f64 {
    let h = &model.channels.h_i[0];
    let gain: f64 = h.iter().map(|z| z.norm()).sum();
    model.cfg.rate_unit().log(1.0 + model.cfg.p_t() * gain * gain / model.cfg.sigma2()[0])
}

/// Relative agreement tolerance between vector and lifted metrics.
pub const LIFT_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftMetric {
    Rate,
    Harvest,
    ElementPower,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftReport {
    pub max_rate_deviation: f64,
    pub max_harvest_deviation: f64,
    pub max_power_deviation: f64,
    /// Metrics whose deviation exceeds [`LIFT_TOLERANCE`].
    pub failures: Vec<LiftMetric>,
}

impl LiftReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_deviation(&self) -> f64 {
        self.max_rate_deviation.max(self.max_harvest_deviation).max(self.max_power_deviation)
    }

    pub fn describe(&self) -> String {
        format!(
            "rate {:.2e}, harvest {:.2e}, power {:.2e}{}",
            self.max_rate_deviation,
            self.max_harvest_deviation,
            self.max_power_deviation,
            if self.passed() { String::new() } else { format!(" FAILED {:?}", self.failures) }
        )
    }
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Compares every rate, harvest and per-element power of `bf` with the same
/// quantity evaluated on `f f^H`.
pub fn lift_equivalence_check(bf: &BeamformerPair, model: &SystemModel) -> Result<LiftReport> {
    let vector = metrics::snapshot_vector(bf, model);
    let lifted = metrics::snapshot_lifted(&LiftedPair::from_beams(bf), model)?;
    let max_rate_deviation = rel_dev(&vector.rates, &lifted.rates);
    let max_harvest_deviation = rel_dev(&vector.harvests, &lifted.harvests);
    let max_power_deviation = rel_dev(&vector.powers, &lifted.powers);
    let mut failures = Vec::new();
    for (dev, m) in [
        (max_rate_deviation, LiftMetric::Rate),
        (max_harvest_deviation, LiftMetric::Harvest),
        (max_power_deviation, LiftMetric::ElementPower),
    ] {
        if !(dev <= LIFT_TOLERANCE) {
            failures.push(m);
        }
    }
    Ok(LiftReport { max_rate_deviation, max_harvest_deviation, max_power_deviation, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{RawChannels, SystemConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tiny(q_t: f64, eh: CVec) -> SystemModel {
        let cfg = SystemConfig::uniform_noise(2, 1, 1, 1.0, q_t, 0.5, 0.1).unwrap();
        let id = CVec::from_vec(vec![c(0.8, 0.3), c(-0.2, 0.5)]);
        SystemModel::new(cfg, &RawChannels { id: vec![id], eh: vec![eh] }).unwrap()
    }

    #[test]
    fn matched_filter_recovered_without_eh_channel() {
        let m = tiny(0.0, CVec::zeros(2));
        let r = brute_force_best(&m, 9).unwrap();
        let closed = matched_filter_rate(&m);
        assert!((r.sum_rate - closed).abs() <= 0.01 * closed, "{} vs {}", r.sum_rate, closed);
        assert!(r.sum_rate <= closed + 1e-9);
    }

    #[test]
    fn never_worse_than_a_hand_picked_point() {
        let m = tiny(0.0, CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]));
        let r = brute_force_best(&m, 7).unwrap();
        let hand = BeamformerPair { f_i: CVec::from_vec(vec![c(0.7, 0.0), c(0.0, -0.7)]), f_e: CVec::zeros(2) };
        assert!(r.sum_rate >= metrics::sum_rate(&hand, &m));
    }

    #[test]
    fn finer_grid_not_worse() {
        let m = tiny(0.2, CVec::from_vec(vec![c(1.0, 0.0), c(0.3, 0.4)]));
        let coarse = brute_force_best(&m, 7).unwrap();
        let fine = brute_force_best(&m, 13).unwrap();
        assert!(fine.sum_rate >= coarse.sum_rate - 1e-6);
    }

    #[test]
    fn unreachable_harvest_is_infeasible() {
        let m = tiny(100.0, CVec::from_vec(vec![c(1.0, 0.0), c(0.3, 0.4)]));
        assert!(matches!(brute_force_best(&m, 5), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn chunked_scan_matches_full_scan() {
        let m = tiny(0.2, CVec::from_vec(vec![c(1.0, 0.0), c(0.3, 0.4)]));
        let grid = BruteForceGrid::new(&m, 6).unwrap();
        let whole = grid.scan(0..grid.len());
        let step = 37;
        let merged = (0..grid.len())
            .step_by(step)
            .map(|s| grid.scan(s..(s + step).min(grid.len())))
            .fold(GridBest::none(), GridBest::merge);
        assert_eq!(whole, merged);
    }

    #[test]
    fn lift_check_on_zero_and_single_entry_beams() {
        let m = tiny(0.0, CVec::from_vec(vec![c(1.0, 0.0), c(0.3, 0.4)]));
        let r = lift_equivalence_check(&BeamformerPair::zeros(2, 2), &m).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_deviation(), 0.0);
        assert_eq!(metrics::sum_rate(&BeamformerPair::zeros(2, 2), &m), 0.0);

        let bf = BeamformerPair { f_i: CVec::from_vec(vec![c(0.0, 0.0), c(0.5, 0.0)]), f_e: CVec::zeros(2) };
        let r = lift_equivalence_check(&bf, &m).unwrap();
        assert!(r.passed(), "{}", r.describe());
        // |h_I[1]|^2 * 0.25 / sigma^2, |h_E[1]|^2 * 0.25 * zeta, and 0.25 on element 1
        let snap = metrics::snapshot_lifted(&LiftedPair::from_beams(&bf), &m).unwrap();
        assert!((snap.rates[0] - (1.0f64 + 0.29 * 0.25 / 0.1).log2()).abs() < 1e-12);
        assert!((snap.harvests[0] - 0.25 * 0.25 * 0.5).abs() < 1e-12);
        assert_eq!(snap.powers[0], 0.0);
        assert!((snap.powers[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_large_instances() {
        let cfg = SystemConfig::uniform_noise(3, 1, 1, 1.0, 0.0, 0.5, 0.1).unwrap();
        let h = CVec::from_vec(vec![c(1.0, 0.0); 3]);
        let m = SystemModel::new(cfg, &RawChannels { id: vec![h.clone()], eh: vec![h] }).unwrap();
        assert!(BruteForceGrid::new(&m, 5).is_err());
    }
}
