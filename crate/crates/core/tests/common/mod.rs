#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use trisbf_core::linalg::{self, CMat, CVec};
use trisbf_core::metrics::{BeamformerPair, LiftedPair};
use trisbf_core::system::{RawChannels, SystemConfig, SystemModel};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn cn(rng: &mut ChaCha20Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn cvec(rng: &mut ChaCha20Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| cn(rng))
}

pub fn hermitian(rng: &mut ChaCha20Rng, n: usize) -> CMat {
    let a = DMatrix::from_fn(n, n, |_, _| cn(rng));
    linalg::hermitize(&a)
}

/// `sum_{j < rank} v_j v_j^H` with Gaussian `v_j`.
pub fn psd(rng: &mut ChaCha20Rng, n: usize, rank: usize) -> CMat {
    let mut m = linalg::zeros(n);
    for _ in 0..rank {
        m += linalg::outer(&cvec(rng, n));
    }
    m
}

/// Unit-scale model: CN(0,1) channels, noise 0.5, limits that rarely bind.
pub fn unit_model(rng: &mut ChaCha20Rng, n: usize, k: usize, g: usize) -> SystemModel {
    let cfg = SystemConfig::uniform_noise(n, k, g, 1.0, 0.0, 0.6, 0.5).unwrap();
    let raw = RawChannels { id: (0..k).map(|_| cvec(rng, n)).collect(), eh: (0..g).map(|_| cvec(rng, n)).collect() };
    SystemModel::new(cfg, &raw).unwrap()
}

pub fn beams(rng: &mut ChaCha20Rng, m: &SystemModel) -> BeamformerPair {
    BeamformerPair { f_i: cvec(rng, m.cfg.dim_i()), f_e: cvec(rng, m.cfg.dim_e()) }
}

pub fn lift(rng: &mut ChaCha20Rng, m: &SystemModel, rank: usize) -> LiftedPair {
    LiftedPair { f_i: psd(rng, m.cfg.dim_i(), rank), f_e: psd(rng, m.cfg.dim_e(), rank) }
}

pub fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}
