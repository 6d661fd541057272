//! Simulation and finite-size error analysis for batch remote state
//! preparation of `|+_theta>` states from multi-intensity weak coherent pulses.
//!
//! Modules, bottom up:
//!
//! - [`numerics`]: Poisson statistics, Lambert W, log-space values, seeded streams.
//! - [`qubits`]: the 16-element one-time-pad group and the pulse source.
//! - [`protocol`]: sender/receiver state machines and the ideal batch resource.
//! - [`estimation`]: the two-intensity acceptance test.
//! - [`games`]: correctness and security games with Monte Carlo drivers.
//! - [`bounds`]: closed-form correctness and security error bounds.
//! - [`analysis`]: parameter optimization, scaling sweeps and figure data.

pub mod analysis;
pub mod bounds;
pub mod error;
pub mod estimation;
pub mod games;
pub mod numerics;
pub mod protocol;
pub mod qubits;

pub use error::{Error, Result};
