//! Sum-rate maximizing beamforming for a transmissive-RIS transceiver serving
//! information-decoding (ID) and energy-harvesting (EH) users at once.
//!
//! The pipeline lifts the beamformers to PSD matrices, splits each rate into
//! a difference of concave log terms, linearizes the subtracted part, and
//! replaces the rank-one constraints by a linearized nuclear-minus-spectral
//! norm penalty. Every outer iteration is a convex problem handled by the
//! interior-point solver in [`solver`].
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and parallel
//! experiment drivers live in the `trisbf` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channel;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod optimizer;
pub mod oracle;
pub mod solver;
pub mod subproblem;
pub mod system;

pub use error::{Error, Result};
pub use metrics::{BeamformerPair, LiftedPair};
pub use system::{RawChannels, SystemConfig, SystemModel};

/// Version of this crate, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
