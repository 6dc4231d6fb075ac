//! Quantization of lumped superconducting circuits.
//!
//! The crate covers the inductively shunted transmon with flux-tunable
//! transverse and longitudinal coupling to a resonator: netlist parsing,
//! energy-model construction, exact variable elimination, potential-minimum
//! tracking with fourth-order expansion, multi-block scale-up, gate and
//! readout dynamics, and dissipation times.

pub mod array;
pub mod dissipation;
pub mod dynamics;
pub mod error;
pub mod fockops;
pub mod lagrangian;
pub mod multiblock;
pub mod netlist;
pub mod reduce;
pub mod spectrum;
pub mod sweep;
pub mod units;

pub use error::{Error, Result};
