//! Quantum-noise model and working-point search for EPR conditional squeezing
//! in long-baseline gravitational-wave interferometers.
//!
//! The interferometer acts as both detector (signal beam, carrier ω₀) and
//! filter cavity (idler beam, ω₀ + Δ). [`search`] scans macroscopic lengths,
//! SRC phases and FSR indices for detunings where sub-centimetre length
//! corrections make the idler see the filter needed for broadband squeezing.

// Negated comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angle;
pub mod cli;
pub mod constants;
pub mod error;
pub mod io;
pub mod noise;
pub mod oracle;
pub mod params;
pub mod search;
pub mod spectrum;
pub mod src_cavity;
pub mod validate;

pub use error::{Error, Result};
pub use params::{InterferometerParams, SloshingConvention};
