use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },

    #[error("{what} is not numerically PSD (trace/eigen value {value:e})")]
    NotPsd { what: &'static str, value: f64 },

    #[error("expansion point violates the constraints by {violation:e} (relative); re-initialize")]
    StaleIterate { violation: f64 },

    #[error("rank-one not reached: residuals I={residual_i:e}, E={residual_e:e}")]
    RankOneNotReached { residual_i: f64, residual_e: f64 },

    #[error("problem is infeasible (phase-I optimum {phase1_value:e})")]
    Infeasible { phase1_value: f64 },

    #[error("feasible set has no strictly interior point (phase-I optimum {phase1_value:e})")]
    NoStrictInterior { phase1_value: f64 },

    #[error("feasible set is unbounded on block {block}")]
    Unbounded { block: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
