//! System-bath relaxation and Langevin readout.
//!
//! The bath is an external impedance Z(ω) = R + 1/(iωC_Z) attached to the
//! resonator node, with ground capacitors C_g on both qubit nodes. Relaxation
//! and dephasing follow the Caldeira-Leggett treatment of a circuit with one
//! lossy element. Readout follows the Langevin equation of the resonator
//! field driven by a longitudinal coupling.
//!
//! Bath formulas work in SI (F, H, Ω, rad/s, K, s). Langevin traces use any
//! consistent angular-frequency unit.

use nalgebra::{Matrix2, Vector2};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fockops::{momentum_quadrature, C64};
use crate::units::{HBAR, KB};

const FEMTO: f64 = 1e-15;
const NANO: f64 = 1e-9;

/// Default bath temperature (K).
pub const DEFAULT_TEMPERATURE_K: f64 = 0.020;

/// Series R–C_Z impedance at temperature T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BathSpec {
    pub r_ohm: f64,
    pub cz_ff: f64,
    pub temperature_k: f64,
}

impl BathSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r_ohm < 0.0 || self.cz_ff < 0.0 || self.temperature_k <= 0.0 {
            return Err(Error::Domain(format!(
                "bath needs R ≥ 0, C_Z ≥ 0 and T > 0, got R = {}, C_Z = {}, T = {}",
                self.r_ohm, self.cz_ff, self.temperature_k
            )));
        }
        Ok(())
    }
}

/// Spectral density J(ω) of the bath seen by the circuit (SI, ω in rad/s).
pub fn spectral_density(c_ff: f64, cg_ff: f64, bath: &BathSpec, omega: f64) -> f64 {
    let (c, cg, cz, r) = (c_ff * FEMTO, cg_ff * FEMTO, bath.cz_ff * FEMTO, bath.r_ohm);
    let num = (c + cg).powi(2) * cz * cz * r * omega;
    let a = 2.0 * cg * (c + 2.0 * cg) + (c + cg) * cz;
    let b = 2.0 * cg * (c + 2.0 * cg) * cz * r * omega;
    if num == 0.0 {
        return 0.0;
    }
    num / (a * a + b * b)
}

/// Ohmic slope lim J(ω)/ω as ω → 0.
pub fn spectral_density_slope(c_ff: f64, cg_ff: f64, bath: &BathSpec) -> f64 {
    let (c, cg, cz, r) = (c_ff * FEMTO, cg_ff * FEMTO, bath.cz_ff * FEMTO, bath.r_ohm);
    let a = 2.0 * cg * (c + 2.0 * cg) + (c + cg) * cz;
    if cz == 0.0 || r == 0.0 {
        return 0.0;
    }
    (c + cg).powi(2) * cz * cz * r / (a * a)
}

/// Coupling vector m projected on the qubit and resonator charges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingVector {
    pub qubit: f64,
    pub resonator: f64,
    /// Set when the ground capacitors differ and the qubit couples to the bath.
    pub symmetry_violation: Option<String>,
}

/// m·Q = m_q Q_q + m_r Q_r for ground capacitors C_g1, C_g2 on the two qubit nodes.
///
/// The bath port sits between the resonator node and ground; m = C⁻¹d where
/// d collects the capacitive cross terms between the port and (q, r). For
/// C_g1 = C_g2 = C_g this gives m_q = 0 and m_r = 2C_g/(C + C_g).
pub fn coupling_vector_mq(c_ff: f64, cq_ff: f64, cg1_ff: f64, cg2_ff: f64) -> Result<CouplingVector> {
    if c_ff <= 0.0 || cq_ff < 0.0 || cg1_ff < 0.0 || cg2_ff < 0.0 {
        return Err(Error::Domain("capacitances must be non-negative with C > 0".into()));
    }
    let sum = cg1_ff + cg2_ff;
    let diff = cg1_ff - cg2_ff;
    let cap = Matrix2::new(
        cq_ff + 0.5 * c_ff + 0.25 * sum,
        0.25 * diff,
        0.25 * diff,
        0.5 * c_ff + 0.25 * sum,
    );
    let d = Vector2::new(0.5 * diff, 0.5 * sum);
    let inv = cap.try_inverse().ok_or_else(|| Error::Structure("singular capacitance matrix".into()))?;
    let m = inv * d;
    let symmetry_violation = (diff != 0.0).then(|| {
        format!("C_g1 − C_g2 = {diff:.4} fF couples the qubit to the bath with factor {:.4e}", m[0])
    });
    Ok(CouplingVector { qubit: m[0], resonator: m[1], symmetry_violation })
}

/// Relaxation, dephasing and decoherence times (s); infinite when uncoupled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecoherenceTimes {
    #[serde(serialize_with = "finite_or_null")]
    pub t1_s: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub t2_s: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub tphi_s: f64,
}

fn finite_or_null<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

/// Matrix elements of m·Q between the lowest two levels of one mode (C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeCoupling {
    pub m01: f64,
    pub m00: f64,
    pub m11: f64,
    /// Transition angular frequency ω01 (rad/s).
    pub omega01: f64,
}

/// Relaxation and decoherence times from the mode matrix elements.
///
/// 1/T1 = (4/ħ)|m01|² J(ω01) coth(ħω01/2k_BT),
/// 1/T_φ = (1/ħ)|m00 − m11|² (J/ħω)|ω→0 2k_BT, 1/T2 = 1/2T1 + 1/T_φ.
pub fn decoherence_times(mode: &ModeCoupling, j_omega01: f64, j_slope: f64, temperature_k: f64) -> Result<DecoherenceTimes> {
    if mode.omega01 <= 0.0 || temperature_k <= 0.0 {
        return Err(Error::Domain("ω01 and T must be positive".into()));
    }
    let x = HBAR * mode.omega01 / (2.0 * KB * temperature_k);
    let rate1 = 4.0 / HBAR * mode.m01 * mode.m01 * j_omega01 / x.tanh();
    let diff = mode.m00 - mode.m11;
    let rate_phi = diff * diff / HBAR * (j_slope / HBAR) * 2.0 * KB * temperature_k;
    let t1 = 1.0 / rate1;
    let tphi = 1.0 / rate_phi;
    let t2 = 1.0 / (0.5 * rate1 + rate_phi);
    Ok(DecoherenceTimes { t1_s: t1, t2_s: t2, tphi_s: tphi })
}

/// Resonator mode of the block with ground capacitors included (C → C + C_g).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonatorBath {
    pub c_ff: f64,
    pub cg_ff: f64,
    pub l_nh: f64,
    pub eta: f64,
}

impl ResonatorBath {
    fn validate(&self) -> Result<()> {
        if self.c_ff <= 0.0 || self.cg_ff < 0.0 || self.l_nh <= 0.0 || self.eta <= -1.0 {
            return Err(Error::Domain("resonator needs C > 0, C_g ≥ 0, L > 0 and η > −1".into()));
        }
        Ok(())
    }

    fn c_total(&self) -> f64 {
        (self.c_ff + self.cg_ff) * FEMTO
    }

    fn l(&self) -> f64 {
        self.l_nh * NANO
    }

    /// ω_r = √((1+η)/(L(C+C_g))) in rad/s.
    pub fn omega01(&self) -> f64 {
        ((1.0 + self.eta) / (self.l() * self.c_total())).sqrt()
    }

    /// Matrix elements of m·Q assembled from the mode quantization.
    ///
    /// The mode has capacitance (C+C_g)/2 and inductance 2L/(1+η), so
    /// Q_r = i√(ħ/2Z)(a†−a) with Z the mode impedance.
    pub fn mode_coupling(&self) -> Result<ModeCoupling> {
        self.validate()?;
        let c_mode = 0.5 * self.c_total();
        let l_mode = 2.0 * self.l() / (1.0 + self.eta);
        let z = (l_mode / c_mode).sqrt();
        let q_zpf = (HBAR / (2.0 * z)).sqrt();
        let p = momentum_quadrature(3)?.matrix;
        let factor = 2.0 * self.cg_ff / (self.c_ff + self.cg_ff);
        let elem = |i: usize, j: usize| factor * q_zpf * p[(i, j)].norm();
        Ok(ModeCoupling { m01: elem(0, 1), m00: elem(0, 0), m11: elem(1, 1), omega01: 1.0 / (l_mode * c_mode).sqrt() })
    }

    /// Times assembled from J, the mode matrix elements and the thermal factor.
    pub fn times(&self, bath: &BathSpec) -> Result<DecoherenceTimes> {
        bath.validate()?;
        let mode = self.mode_coupling()?;
        let j = spectral_density(self.c_ff, self.cg_ff, bath, mode.omega01);
        let slope = spectral_density_slope(self.c_ff, self.cg_ff, bath);
        decoherence_times(&mode, j, slope, bath.temperature_k)
    }

    /// T1 = (1/4C_g²)√((C+C_g)³L/(1+η)) tanh(ħω_r/2k_BT)/J(ω_r).
    pub fn t1_closed_form(&self, bath: &BathSpec) -> Result<f64> {
        self.validate()?;
        bath.validate()?;
        let cg = self.cg_ff * FEMTO;
        let omega = self.omega01();
        let j = spectral_density(self.c_ff, self.cg_ff, bath, omega);
        let thermal = (HBAR * omega / (2.0 * KB * bath.temperature_k)).tanh();
        Ok((self.c_total().powi(3) * self.l() / (1.0 + self.eta)).sqrt() * thermal / (4.0 * cg * cg * j))
    }

    /// ζ = (C_g²/2)√((1+η)/(L(C+C_g)³)).
    pub fn zeta(&self) -> f64 {
        let cg = self.cg_ff * FEMTO;
        0.5 * cg * cg * ((1.0 + self.eta) / (self.l() * self.c_total().powi(3))).sqrt()
    }

    /// Continuum linewidth κ(ω) = ζ (2/π) J(ω) that feeds the Langevin equation.
    pub fn kappa(&self, bath: &BathSpec, omega: f64) -> f64 {
        self.zeta() * 2.0 / std::f64::consts::PI * spectral_density(self.c_ff, self.cg_ff, bath, omega)
    }
}

/// Cavity amplitude trace for one qubit state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReadoutTrace {
    pub qubit_state: i8,
    pub times: Vec<f64>,
    #[serde(serialize_with = "complex_pairs")]
    pub alpha: Vec<C64>,
    #[serde(serialize_with = "complex_pair")]
    pub steady_state: C64,
}

fn complex_pairs<S: Serializer>(v: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|z| [z.re, z.im]))
}

fn complex_pair<S: Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa <= 0.0 {
        return Err(Error::Domain(format!("κ must be positive, got {kappa}")));
    }
    Ok(())
}

fn check_state(sigma: i8) -> Result<f64> {
    match sigma {
        1 | -1 => Ok(sigma as f64),
        _ => Err(Error::Domain(format!("qubit state must be ±1, got {sigma}"))),
    }
}

/// Steady state −g σ_z/(ω_r − iκ/2) of the static longitudinal coupling.
pub fn langevin_static_steady(omega_r: f64, g_zx: f64, kappa: f64, sigma: i8) -> Result<C64> {
    check_kappa(kappa)?;
    let s = check_state(sigma)?;
    Ok(-C64::new(g_zx * s, 0.0) / C64::new(omega_r, -0.5 * kappa))
}

/// a(t) = −g σ_z/(ω_r − iκ/2)·(1 − e^{−i(ω_r − iκ/2)t}) with a(0) = 0.
pub fn langevin_displacement_static(omega_r: f64, g_zx: f64, kappa: f64, sigma: i8, t: f64) -> Result<C64> {
    let steady = langevin_static_steady(omega_r, g_zx, kappa, sigma)?;
    let w = C64::new(omega_r, -0.5 * kappa);
    Ok(steady * (C64::new(1.0, 0.0) - (C64::new(0.0, -1.0) * w * t).exp()))
}

/// Rotating-frame steady state −i g̃ σ_z/κ of the modulated coupling.
pub fn langevin_modulated_steady(g_tilde: f64, kappa: f64, sigma: i8) -> Result<C64> {
    check_kappa(kappa)?;
    let s = check_state(sigma)?;
    Ok(C64::new(0.0, -g_tilde * s / kappa))
}

/// a_rot(t) = −(i g̃/κ) σ_z (1 − e^{−κt/2}) for coupling ḡ + g̃ cos(ω_r t).
pub fn langevin_displacement_modulated(g_tilde: f64, kappa: f64, sigma: i8, t: f64) -> Result<C64> {
    Ok(langevin_modulated_steady(g_tilde, kappa, sigma)? * (1.0 - (-0.5 * kappa * t).exp()))
}

/// |modulated steady state| / |static steady state| = (g̃/g)|ω_r − iκ/2|/κ.
pub fn modulation_boost(g_zx: f64, g_tilde: f64, omega_r: f64, kappa: f64) -> f64 {
    (g_tilde / g_zx).abs() * C64::new(omega_r, -0.5 * kappa).norm() / kappa
}

/// Readout mode for trace generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    Static,
    Modulated,
}

/// Closed-form traces on `samples` equally spaced times in [0, t_end] for σ_z = −1 and +1.
pub fn readout_traces(
    mode: ReadoutMode,
    omega_r: f64,
    g: f64,
    kappa: f64,
    t_end: f64,
    samples: usize,
) -> Result<Vec<ReadoutTrace>> {
    if samples < 2 || t_end <= 0.0 {
        return Err(Error::Domain("need at least two samples over a positive duration".into()));
    }
    let times: Vec<f64> = (0..samples).map(|k| t_end * k as f64 / (samples - 1) as f64).collect();
    [-1i8, 1].iter().map(|&sigma| {
        let (alpha, steady) = match mode {
            ReadoutMode::Static => (
                times.iter().map(|&t| langevin_displacement_static(omega_r, g, kappa, sigma, t)).collect::<Result<Vec<_>>>()?,
                langevin_static_steady(omega_r, g, kappa, sigma)?,
            ),
            ReadoutMode::Modulated => (
                times.iter().map(|&t| langevin_displacement_modulated(g, kappa, sigma, t)).collect::<Result<Vec<_>>>()?,
                langevin_modulated_steady(g, kappa, sigma)?,
            ),
        };
        Ok(ReadoutTrace { qubit_state: sigma, times: times.clone(), alpha, steady_state: steady })
    }).collect()
}

/// Fixed-step classical Runge-Kutta for a complex scalar ODE; returns y at every step.
pub fn rk4_complex<F>(f: F, y0: C64, t_end: f64, steps: usize) -> Vec<C64>
where
    F: Fn(f64, C64) -> C64,
{
    let h = t_end / steps as f64;
    let mut y = y0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y);
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + k1 * (0.5 * h));
        let k3 = f(t + 0.5 * h, y + k2 * (0.5 * h));
        let k4 = f(t + h, y + k3 * h);
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(y);
    }
    out
}

/// Lab-frame Langevin equation ȧ = −i(ω_r a + g(t) σ_z) − κa/2.
pub fn langevin_rhs(omega_r: f64, kappa: f64, sigma: f64, g: impl Fn(f64) -> f64) -> impl Fn(f64, C64) -> C64 {
    move |t, a| C64::new(0.0, -1.0) * (a * omega_r + g(t) * sigma) - a * (0.5 * kappa)
}
