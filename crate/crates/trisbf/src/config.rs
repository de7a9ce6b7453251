//! Experiment configuration: a JSON document whose every key is optional.
//!
//! ```json
//! {
//!   "scenario": { "seed": 7, "id_distance_m": [20, 50] },
//!   "system": { "n": 8, "k": 2, "g": 2, "element_power_dbm": 10,
//!               "harvest": { "fraction_of_max": 0.1 } },
//!   "sweep": { "power_dbm": [0, 5, 10, 15] },
//!   "trials": 50,
//!   "output_path": "results"
//! }
//! ```
//!
//! Missing keys take the values of [`ExperimentConfig::default`]; unknown
//! keys are rejected.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use trisbf_core::channel::{dbm_to_watt, ScenarioParams};
use trisbf_core::optimizer::{PenaltySchedule, Tolerances};
use trisbf_core::oracle::DEFAULT_RESOLUTION;
use trisbf_core::system::SystemConfig;

/// Power sweep used when `sweep-power` runs without a power list, in dBm.
pub const DEFAULT_POWER_SWEEP_DBM: [f64; 4] = [0.0, 5.0, 10.0, 15.0];
/// Distance sweep used when `sweep-distance` runs without a list, in metres.
pub const DEFAULT_DISTANCE_SWEEP_M: [f64; 6] = [50.0, 100.0, 150.0, 200.0, 250.0, 300.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub system: SystemSpec,
    pub sweep: Sweep,
    /// Monte Carlo trials per sweep point; trial `i` uses seed `scenario.seed + i`.
    pub trials: usize,
    pub schedule: ScheduleSpec,
    pub max_outer_iters: usize,
    /// Grid points per coordinate for `oracle-check`.
    pub oracle_resolution: usize,
    /// Directory receiving the CSV files and the manifest.
    pub output_path: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::default(),
            system: SystemSpec::default(),
            sweep: Sweep::None,
            trials: 1,
            schedule: ScheduleSpec::default(),
            max_outer_iters: Tolerances::default().max_outer_iters,
            oracle_resolution: DEFAULT_RESOLUTION,
            output_path: PathBuf::from("results"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub tris_position_m: [f64; 3],
    /// `[min, max]` horizontal distance of ID users.
    pub id_distance_m: [f64; 2],
    pub eh_distance_m: [f64; 2],
    pub user_height_m: f64,
    pub pathloss_exponent_id: f64,
    pub pathloss_exponent_eh: f64,
    /// Path loss at 1 m.
    pub reference_loss_db: f64,
    pub sector_half_angle_deg: f64,
    /// Base seed.
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::from_params(&ScenarioParams::default())
    }
}

impl ScenarioSpec {
    pub fn from_params(p: &ScenarioParams) -> Self {
        Self {
            tris_position_m: p.tris_position,
            id_distance_m: p.id_distance_range,
            eh_distance_m: p.eh_distance_range,
            user_height_m: p.user_height,
            pathloss_exponent_id: p.alpha_id,
            pathloss_exponent_eh: p.alpha_eh,
            reference_loss_db: p.pl0_db,
            sector_half_angle_deg: p.sector_half_angle_deg,
            seed: p.seed,
        }
    }

    pub fn params(&self, seed: u64) -> ScenarioParams {
        ScenarioParams {
            tris_position: self.tris_position_m,
            id_distance_range: self.id_distance_m,
            eh_distance_range: self.eh_distance_m,
            user_height: self.user_height_m,
            alpha_id: self.pathloss_exponent_id,
            alpha_eh: self.pathloss_exponent_eh,
            pl0_db: self.reference_loss_db,
            sector_half_angle_deg: self.sector_half_angle_deg,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub k: usize,
    pub g: usize,
    /// Per-element transmit power limit.
    pub element_power_dbm: f64,
    /// Noise power at every ID user.
    pub noise_dbm: f64,
    pub zeta: f64,
    pub harvest: HarvestTarget,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self { n: 8, k: 2, g: 2, element_power_dbm: 10.0, noise_dbm: -90.0, zeta: 0.5, harvest: HarvestTarget::default() }
    }
}

impl SystemSpec {
    /// Configuration with `Q_t = 0`; the harvest target is resolved per
    /// channel draw.
    pub fn config(&self, n: usize, element_power_dbm: f64) -> Result<SystemConfig> {
        Ok(SystemConfig::uniform_noise(
            n,
            self.k,
            self.g,
            dbm_to_watt(element_power_dbm),
            0.0,
            self.zeta,
            dbm_to_watt(self.noise_dbm),
        )?)
    }
}

/// Minimum total harvested power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HarvestTarget {
    /// Fraction of the largest harvest reachable for the drawn channels.
    FractionOfMax(f64),
    Watts(f64),
}

impl Default for HarvestTarget {
    fn default() -> Self {
        HarvestTarget::FractionOfMax(trisbf_core::optimizer::DEFAULT_HARVEST_FRACTION)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    None,
    PowerDbm(Vec<f64>),
    /// Largest ID-user distance; the smallest stays at `id_distance_m[0]`.
    DistanceM(Vec<f64>),
    Elements(Vec<usize>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub initial: f64,
    pub decay: f64,
    pub floor: f64,
    pub target_ratio: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        let s = PenaltySchedule::default();
        Self { initial: s.initial, decay: s.decay, floor: s.floor, target_ratio: s.target_ratio }
    }
}

impl ScheduleSpec {
    pub fn schedule(&self) -> PenaltySchedule {
        PenaltySchedule { initial: self.initial, decay: self.decay, floor: self.floor, target_ratio: self.target_ratio }
    }
}

fn ascending<T: PartialOrd + std::fmt::Debug>(what: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        bail!("sweep {what} list is empty");
    }
    if v.windows(2).any(|w| !(w[0] <= w[1])) {
        bail!("sweep {what} list must be sorted ascending: {v:?}");
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and validates a JSON document. Syntax and type errors report
    /// the line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!("config line {} column {}: {}", e.line(), e.column(), e)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.max_outer_iters == 0 {
            bail!("max_outer_iters must be at least 1");
        }
        match &self.sweep {
            Sweep::None => {}
            Sweep::PowerDbm(v) => ascending("power_dbm", v)?,
            Sweep::DistanceM(v) => {
                ascending("distance_m", v)?;
                if v[0] < self.scenario.id_distance_m[0] {
                    bail!("distance sweep starts below the minimum ID distance {}", self.scenario.id_distance_m[0]);
                }
            }
            Sweep::Elements(v) => {
                ascending("elements", v)?;
                if v[0] == 0 {
                    bail!("element counts must be positive");
                }
            }
        }
        match self.system.harvest {
            HarvestTarget::FractionOfMax(f) if !(0.0..=1.0).contains(&f) => {
                bail!("harvest fraction_of_max must lie in [0, 1], got {f}")
            }
            HarvestTarget::Watts(w) if !(w >= 0.0 && w.is_finite()) => bail!("harvest watts must be >= 0, got {w}"),
            _ => {}
        }
        if !self.system.noise_dbm.is_finite() || !self.system.element_power_dbm.is_finite() {
            bail!("power levels must be finite");
        }
        self.system.config(self.system.n, self.system.element_power_dbm)?;
        self.scenario.params(self.scenario.seed).validate()?;
        self.schedule.schedule().validate()?;
        Ok(())
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { max_outer_iters: self.max_outer_iters, ..Tolerances::default() }
    }

    pub fn seed(&self, trial: usize) -> u64 {
        self.scenario.seed.wrapping_add(trial as u64)
    }
}
