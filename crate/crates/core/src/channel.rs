//! Random scenario generation: user drops in a sector in front of the
//! transceiver, distance-based pathloss and Rayleigh small-scale fading.

use alloc::vec::Vec;

use num_complex::Complex64;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::CVec;
use crate::system::{RawChannels, SystemConfig};

pub type Position = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioParams {
    pub tris_position: Position,
    /// `[min, max]` distance of ID users from the transceiver, meters.
    pub id_distance_range: [f64; 2],
    /// `[min, max]` distance of EH users from the transceiver, meters.
    pub eh_distance_range: [f64; 2],
    pub user_height: f64,
    pub alpha_id: f64,
    pub alpha_eh: f64,
    /// Pathloss at the 1 m reference distance, dB (negative).
    pub pl0_db: f64,
    /// Users are dropped at azimuths uniform in `[-half, +half]` degrees.
    pub sector_half_angle_deg: f64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            tris_position: [0.0, 0.0, 1.5],
            id_distance_range: [20.0, 50.0],
            eh_distance_range: [5.0, 10.0],
            user_height: 1.5,
            alpha_id: 3.2,
            alpha_eh: 2.2,
            pl0_db: -30.0,
            sector_half_angle_deg: 60.0,
            seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("id_distance_range", self.id_distance_range), ("eh_distance_range", self.eh_distance_range)] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!("{name} must satisfy 0 < min <= max")));
            }
            let dz = (self.user_height - self.tris_position[2]).abs();
            if r[0] < dz {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} minimum is below the height offset {dz} m"
                )));
            }
        }
        if !(self.alpha_id > 0.0 && self.alpha_eh > 0.0) {
            return Err(Error::InvalidConfig("pathloss exponents must be positive".into()));
        }
        if !self.pl0_db.is_finite() {
            return Err(Error::InvalidConfig("pl0_db must be finite".into()));
        }
        if !(self.sector_half_angle_deg >= 0.0 && self.sector_half_angle_deg <= 180.0) {
            return Err(Error::InvalidConfig("sector half-angle must lie in [0, 180] degrees".into()));
        }
        Ok(())
    }
}

pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    Float::powf(10.0, (p_dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(p_w: f64) -> f64 {
    10.0 * Float::log10(p_w) + 30.0
}

/// Linear power gain `10^(pl0/10) d^-alpha`.
pub fn pathloss(pl0_db: f64, distance: f64, alpha: f64) -> f64 {
    Float::powf(10.0, pl0_db / 10.0) * Float::powf(distance, -alpha)
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    Float::sqrt((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserPositions {
    pub id: Vec<Position>,
    pub eh: Vec<Position>,
}

/// Seeded generator used for every random draw of a scenario.
pub fn scenario_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn drop_user<R: Rng + ?Sized>(params: &ScenarioParams, range: [f64; 2], rng: &mut R) -> Position {
    let d = if range[1] > range[0] { rng.random_range(range[0]..=range[1]) } else { range[0] };
    let half = params.sector_half_angle_deg.to_radians();
    let phi = if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
    let dz = params.user_height - params.tris_position[2];
    // horizontal radius chosen so the 3D distance is exactly `d`
    let r = Float::sqrt((d * d - dz * dz).max(0.0));
    [
        params.tris_position[0] + r * Float::cos(phi),
        params.tris_position[1] + r * Float::sin(phi),
        params.user_height,
    ]
}

pub fn place_users<R: Rng + ?Sized>(params: &ScenarioParams, cfg: &SystemConfig, rng: &mut R) -> UserPositions {
    let id = (0..cfg.k()).map(|_| drop_user(params, params.id_distance_range, rng)).collect();
    let eh = (0..cfg.g()).map(|_| drop_user(params, params.eh_distance_range, rng)).collect();
    UserPositions { id, eh }
}

/// One unit-variance circularly-symmetric complex Gaussian sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

fn draw_one<R: Rng + ?Sized>(n: usize, gain: f64, rng: &mut R) -> CVec {
    let amp = Float::sqrt(gain);
    CVec::from_fn(n, |_, _| complex_gaussian(rng) * amp)
}

pub fn draw_channels<R: Rng + ?Sized>(
    params: &ScenarioParams,
    positions: &UserPositions,
    cfg: &SystemConfig,
    rng: &mut R,
) -> RawChannels {
    let tris = &params.tris_position;
    let id = positions
        .id
        .iter()
        .map(|p| draw_one(cfg.n(), pathloss(params.pl0_db, distance(tris, p), params.alpha_id), rng))
        .collect();
    let eh = positions
        .eh
        .iter()
        .map(|p| draw_one(cfg.n(), pathloss(params.pl0_db, distance(tris, p), params.alpha_eh), rng))
        .collect();
    RawChannels { id, eh }
}

/// Placement followed by channel draws from one generator seeded with
/// `params.seed`.
pub fn generate(params: &ScenarioParams, cfg: &SystemConfig) -> Result<(UserPositions, RawChannels)> {
    params.validate()?;
    let mut rng = scenario_rng(params.seed);
    let pos = place_users(params, cfg, &mut rng);
    let raw = draw_channels(params, &pos, cfg, &mut rng);
    Ok((pos, raw))
}
