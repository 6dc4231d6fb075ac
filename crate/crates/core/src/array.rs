//! Junction arrays as effective branches.
//!
//! A series array of k identical junctions with zero winding behaves as one
//! junction with the phase divided by k. When an inductance `La` sits in
//! series with an array shunted by `L`, the phase across the array has no
//! charging term and is eliminated by solving its stationarity condition.

use crate::error::{Error, Result};
use crate::units::{CHARGE_ENERGY, FLUX_ENERGY};

/// Minimum E_J/E_C per array junction to suppress phase slips.
pub const MIN_EJ_OVER_EC: f64 = 100.0;
/// Minimum array plasma frequency in GHz.
pub const MIN_PLASMA_GHZ: f64 = 20.0;

/// Potential of a k-junction array with zero winding: −k·EJ·cos((φ + φx)/k).
pub fn array_effective_potential(k: u32, ej_each: f64, phi: f64, phi_x: f64) -> f64 {
    let k = k as f64;
    -k * ej_each * ((phi + phi_x) / k).cos()
}

/// Linear inductance (nH) of a k-junction array at zero flux.
pub fn array_effective_inductance(k: u32, ej_each: f64) -> f64 {
    k as f64 * FLUX_ENERGY / ej_each
}

/// Outcome of the per-junction array guards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardReport {
    pub ej_over_ec: f64,
    pub plasma_ghz: f64,
    pub ratio_ok: bool,
    pub plasma_ok: bool,
}

/// Check E_J/E_C and the plasma frequency sqrt(8 E_J E_C) of one array junction.
pub fn array_guard(ej_each: f64, cj_ff: f64) -> GuardReport {
    let ec = CHARGE_ENERGY / cj_ff;
    let ratio = ej_each / ec;
    let plasma = (8.0 * ej_each * ec).sqrt();
    GuardReport {
        ej_over_ec: ratio,
        plasma_ghz: plasma,
        ratio_ok: ratio >= MIN_EJ_OVER_EC,
        plasma_ok: plasma >= MIN_PLASMA_GHZ,
    }
}

/// Coupling branch of the added-inductance circuit: `La` in series with an
/// array of k junctions that is shunted by `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayBranch {
    pub k: u32,
    pub ej_each: f64,
    pub l_nh: f64,
    pub la_nh: f64,
    /// Screening parameter La·EJ/(Φ0/2π)².
    pub beta: f64,
    /// 1 + La/L.
    pub gamma: f64,
}

impl ArrayBranch {
    pub fn new(k: u32, ej_each: f64, l_nh: f64, la_nh: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("array needs at least one junction".into()));
        }
        for (name, v) in [("EJ", ej_each), ("L", l_nh), ("La", la_nh)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            k,
            ej_each,
            l_nh,
            la_nh,
            beta: la_nh * ej_each / FLUX_ENERGY,
            gamma: 1.0 + la_nh / l_nh,
        })
    }

    /// k·γ/β; the branch map is invertible iff this exceeds one.
    pub fn invertibility_ratio(&self) -> f64 {
        self.k as f64 * self.gamma / self.beta
    }

    pub fn is_invertible(&self) -> bool {
        self.invertibility_ratio() > 1.0
    }

    fn check(&self) -> Result<()> {
        if self.is_invertible() {
            Ok(())
        } else {
            Err(Error::Multivalued(format!(
                "k*gamma/beta = {:.6} <= 1: branch potential is multivalued",
                self.invertibility_ratio()
            )))
        }
    }

    /// φ(φd) = γφd + β·sin((φd + φx)/k).
    pub fn forward(&self, phi_d: f64, phi_x: f64) -> f64 {
        self.gamma * phi_d + self.beta * ((phi_d + phi_x) / self.k as f64).sin()
    }

    /// The dimensionless branch function f(φ, φx) with φd eliminated.
    pub fn f(&self, phi: f64, phi_x: f64) -> Result<f64> {
        let u = invert_branch(self, phi, phi_x)?;
        let k = self.k as f64;
        Ok(phi * phi - 2.0 * phi * u + self.gamma * u * u - 2.0 * k * self.beta * ((u + phi_x) / k).cos())
    }
}

/// Solve φ = γφd + β·sin((φd + φx)/k) for φd.
///
/// The map is strictly increasing in the invertible regime and the root lies
/// within β/γ of φ/γ, so Newton steps are safeguarded by bisection on that bracket.
pub fn invert_branch(ab: &ArrayBranch, phi: f64, phi_x: f64) -> Result<f64> {
    ab.check()?;
    if !phi.is_finite() || !phi_x.is_finite() {
        return Err(Error::Domain("branch phase must be finite".into()));
    }
    let k = ab.k as f64;
    let resid = |u: f64| ab.forward(u, phi_x) - phi;
    let center = phi / ab.gamma;
    let half = ab.beta / ab.gamma * (1.0 + 1e-12) + 1e-300;
    let (mut lo, mut hi) = (center - half, center + half);
    let mut u = center;
    let tol = 1e-13 * (1.0 + phi.abs());
    for _ in 0..200 {
        let r = resid(u);
        if r.abs() <= tol {
            return Ok(u);
        }
        if r > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let slope = ab.gamma + ab.beta / k * ((u + phi_x) / k).cos();
        let step = u - r / slope;
        u = if slope > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * (1.0 + u.abs()) {
            return Ok(u);
        }
    }
    Err(Error::NoConvergence("branch inversion did not converge".into()))
}

/// Energy of one added-inductance coupling branch and its derivatives in φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPotential {
    pub branch: ArrayBranch,
}

/// Value and first four φ-derivatives.
pub type Derivs = [f64; 5];

impl BranchPotential {
    pub fn new(branch: ArrayBranch) -> Result<Self> {
        branch.check()?;
        Ok(Self { branch })
    }

    /// Internal array phase φd(φ, φx).
    pub fn phi_d(&self, phi: f64, phi_x: f64) -> Result<f64> {
        invert_branch(&self.branch, phi, phi_x)
    }

    /// dφd/dφ = 1/(γ + (β/k)·cos((φd + φx)/k)).
    pub fn dphi_d_dphi(&self, phi: f64, phi_x: f64) -> Result<f64> {
        let b = &self.branch;
        let k = b.k as f64;
        let u = self.phi_d(phi, phi_x)?;
        Ok(1.0 / (b.gamma + b.beta / k * ((u + phi_x) / k).cos()))
    }

    /// Energy (GHz) and derivatives, i.e. (Φ0/2π)²/(2La)·f and its φ-derivatives.
    ///
    /// The value is written as P/(2La)(φ−φd)² + P/(2L)φd² − k·EJ·cos to stay
    /// accurate as La → 0; derivatives use the envelope theorem plus implicit
    /// differentiation of the inverted map.
    pub fn derivs(&self, phi: f64, phi_x: f64) -> Result<Derivs> {
        let b = &self.branch;
        let k = b.k as f64;
        let p = FLUX_ENERGY;
        let u = self.phi_d(phi, phi_x)?;
        let a = (u + phi_x) / k;
        let (sa, ca) = a.sin_cos();
        let value = p / (2.0 * b.la_nh) * (phi - u).powi(2) + p / (2.0 * b.l_nh) * u * u - k * b.ej_each * ca;
        let s1 = b.gamma + b.beta / k * ca;
        let s2 = -b.beta / (k * k) * sa;
        let s3 = -b.beta / (k * k * k) * ca;
        let g1 = 1.0 / s1;
        let g2 = -s2 * g1.powi(3);
        let g3 = -s3 * g1.powi(4) + 3.0 * s2 * s2 * g1.powi(5);
        let pl = p / b.la_nh;
        // 1 − g1 = (γ − 1 + (β/k)cos a)/s1, with (γ − 1)/La = 1/L
        let d2 = (p / b.l_nh + b.ej_each / k * ca) * g1;
        Ok([value, pl * (phi - u), d2, -pl * g2, -pl * g3])
    }

    /// Energy (GHz).
    pub fn energy(&self, phi: f64, phi_x: f64) -> Result<f64> {
        Ok(self.derivs(phi, phi_x)?[0])
    }
}
