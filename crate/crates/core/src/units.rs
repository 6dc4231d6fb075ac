//! Physical constants and the canonical unit system.
//!
//! Canonical units: energies as E/h in GHz, capacitance in fF, inductance
//! in nH, flux as a fraction of the flux quantum, phases in radians.
//! Frequencies are reported as ω/2π in GHz.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::str::FromStr;

/// Planck constant (J·s), exact in SI 2019.
pub const H: f64 = 6.626_070_15e-34;
/// Elementary charge (C), exact.
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant (J/K), exact.
pub const KB: f64 = 1.380_649e-23;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = H / (2.0 * PI);
/// Magnetic flux quantum h/2e (Wb).
pub const PHI0: f64 = H / (2.0 * E_CHARGE);

/// Scale factors from SI to canonical units.
const GHZ: f64 = 1e9;
const FEMTO: f64 = 1e-15;
const NANO: f64 = 1e-9;

/// (Φ0/2π)²/h expressed in GHz·nH, so that E_L = FLUX_ENERGY / (2 L_nH).
pub const FLUX_ENERGY: f64 = (PHI0 / (2.0 * PI)) * (PHI0 / (2.0 * PI)) / H / (GHZ * NANO);

/// e²/(2h) expressed in GHz·fF, so that E_C = CHARGE_ENERGY / C_fF.
pub const CHARGE_ENERGY: f64 = E_CHARGE * E_CHARGE / (2.0 * H) / (GHZ * FEMTO);

/// The fixed set of physical quantity kinds understood by the converters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Energy,
    Capacitance,
    Inductance,
    Flux,
    Frequency,
}

impl FromStr for UnitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "energy" => Ok(UnitKind::Energy),
            "capacitance" => Ok(UnitKind::Capacitance),
            "inductance" => Ok(UnitKind::Inductance),
            "flux" => Ok(UnitKind::Flux),
            "frequency" => Ok(UnitKind::Frequency),
            other => Err(Error::Configuration(format!("unknown unit kind '{other}'"))),
        }
    }
}

impl UnitKind {
    /// Multiplier taking an SI value to the canonical unit.
    fn si_to_canonical(self) -> f64 {
        match self {
            UnitKind::Energy => 1.0 / (H * GHZ),
            UnitKind::Capacitance => 1.0 / FEMTO,
            UnitKind::Inductance => 1.0 / NANO,
            UnitKind::Flux => 1.0 / PHI0,
            UnitKind::Frequency => 1.0 / GHZ,
        }
    }

    /// Name of the canonical unit.
    pub fn canonical_unit(self) -> &'static str {
        match self {
            UnitKind::Energy | UnitKind::Frequency => "GHz",
            UnitKind::Capacitance => "fF",
            UnitKind::Inductance => "nH",
            UnitKind::Flux => "Phi0",
        }
    }
}

/// Convert an SI value (J, F, H, Wb or Hz) to canonical units.
pub fn to_canonical(value: f64, kind: UnitKind) -> f64 {
    value * kind.si_to_canonical()
}

/// Convert a canonical value back to SI.
pub fn from_canonical(value: f64, kind: UnitKind) -> f64 {
    value / kind.si_to_canonical()
}

/// String-keyed variant of [`to_canonical`]; unknown kinds are a configuration error.
pub fn to_canonical_named(value: f64, kind: &str) -> Result<f64> {
    Ok(to_canonical(value, kind.parse()?))
}

/// Inductive energy (Φ0/2π)²/(2L) in GHz for L in nH.
pub fn inductive_energy(l_nh: f64) -> Result<f64> {
    if !(l_nh > 0.0) {
        return Err(Error::Domain(format!("inductance must be positive, got {l_nh} nH")));
    }
    Ok(FLUX_ENERGY / (2.0 * l_nh))
}

/// Charging energy e²/(2C) in GHz for the total capacitance in fF.
pub fn charging_energy(c_total_ff: f64) -> Result<f64> {
    if !(c_total_ff > 0.0) {
        return Err(Error::Domain(format!("capacitance must be positive, got {c_total_ff} fF")));
    }
    Ok(CHARGE_ENERGY / c_total_ff)
}

/// Flux in Φ0 fractions to a phase in radians.
pub fn flux_to_phase(flux: f64) -> f64 {
    2.0 * PI * flux
}

/// Phase in radians to flux in Φ0 fractions.
pub fn phase_to_flux(phase: f64) -> f64 {
    phase / (2.0 * PI)
}
