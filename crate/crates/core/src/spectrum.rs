//! Mode spectra and coupling coefficients of the qubit-resonator device.
//!
//! Two routes are provided: closed forms valid around the origin of the
//! potential, and a numerical pipeline that locates the flux-dependent
//! minimum, Taylor expands the potential to fourth order there and maps
//! every mode onto a weakly anharmonic oscillator.

use crate::array::{ArrayBranch, BranchPotential};
use crate::error::{Error, Result};
use crate::lagrangian::{flux_map_from_phases, BoundModel, EnergyModel, Term, TermKind};
use crate::netlist::{FluxMap, PhaseOffset};
use crate::units::{CHARGE_ENERGY, FLUX_ENERGY};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::f64::consts::PI;

/// Convergence threshold on the potential gradient (GHz/rad).
pub const GRADIENT_TOL: f64 = 1e-10;
/// Smallest admissible ratio of Hessian eigenvalues at a minimum.
pub const PD_MARGIN: f64 = 1e-9;
const MAX_NEWTON_ITER: usize = 500;

/// Parameters of the inductively shunted transmon with a flux-tunable coupler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceParams {
    pub name: String,
    /// Qubit junction energy (GHz).
    pub ej_q: f64,
    /// Sum of the two coupling-branch junction energies (GHz); for arrays this
    /// is the per-junction energy summed over the two branches.
    pub ej_sigma: f64,
    /// Relative junction asymmetry (EJ1 − EJ2)/EJΣ.
    pub d: f64,
    /// Resonator capacitance (fF).
    pub c_ff: f64,
    /// Qubit shunt capacitance (fF).
    pub cq_ff: f64,
    /// Branch inductances (nH).
    pub l1_nh: f64,
    pub l2_nh: f64,
    /// Junctions per coupling branch.
    pub k: u32,
    /// Series inductance of each coupling branch (nH), if present.
    pub la_nh: Option<f64>,
}

impl DeviceParams {
    /// Single-junction coupler.
    pub fn k1() -> Self {
        Self::symmetric("k1", 10.0, 20.0, 0.08, 114.0, 70.0, 4.5, 1, None)
    }

    /// Nine-junction arrays.
    pub fn kn() -> Self {
        Self::symmetric("kn", 10.0, 160.0, 0.02, 102.0, 60.0, 5.0, 9, None)
    }

    /// Five-junction arrays with an added series inductance.
    pub fn add() -> Self {
        Self::symmetric("add", 5.0, 155.0, 0.02, 65.0, 50.0, 4.5, 5, Some(3.0))
    }

    #[allow(clippy::too_many_arguments)]
    fn symmetric(name: &str, ej_q: f64, ej_sigma: f64, d: f64, c: f64, cq: f64, l: f64, k: u32, la: Option<f64>) -> Self {
        DeviceParams {
            name: name.into(),
            ej_q,
            ej_sigma,
            d,
            c_ff: c,
            cq_ff: cq,
            l1_nh: l,
            l2_nh: l,
            k,
            la_nh: la,
        }
    }

    /// Look up a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "k1" => Ok(Self::k1()),
            "kn" => Ok(Self::kn()),
            "add" => Ok(Self::add()),
            other => Err(Error::Configuration(format!("unknown preset `{other}` (expected k1, kn or add)"))),
        }
    }

    /// Override one parameter by name. `L` sets both branch inductances.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match key {
            "EJq" => self.ej_q = value,
            "EJSigma" => self.ej_sigma = value,
            "d" => self.d = value,
            "C" => self.c_ff = value,
            "Cq" => self.cq_ff = value,
            "L" => {
                self.l1_nh = value;
                self.l2_nh = value;
            }
            "L1" => self.l1_nh = value,
            "L2" => self.l2_nh = value,
            "k" => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Domain(format!("k must be a positive integer, got {value}")));
                }
                self.k = value as u32;
            }
            "La" => self.la_nh = if value > 0.0 { Some(value) } else { None },
            other => return Err(Error::Configuration(format!("unknown parameter `{other}`"))),
        }
        self.validate()
    }

    /// Check positivity and range constraints.
    pub fn validate(&self) -> Result<()> {
        let positive = [("C", self.c_ff), ("Cq", self.cq_ff), ("L1", self.l1_nh), ("L2", self.l2_nh)];
        for (n, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{n} must be positive and finite, got {v}")));
            }
        }
        if !(self.ej_q >= 0.0 && self.ej_sigma >= 0.0) {
            return Err(Error::Domain("Josephson energies must be non-negative".into()));
        }
        if !(self.d.abs() <= 1.0) {
            return Err(Error::Domain(format!("asymmetry d must lie in [-1, 1], got {}", self.d)));
        }
        if self.k == 0 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        if let Some(la) = self.la_nh {
            if !(la > 0.0 && la.is_finite()) {
                return Err(Error::Domain(format!("La must be positive, got {la}")));
            }
        }
        Ok(())
    }

    pub fn ej1(&self) -> f64 {
        self.ej_sigma * (1.0 + self.d) / 2.0
    }

    pub fn ej2(&self) -> f64 {
        self.ej_sigma * (1.0 - self.d) / 2.0
    }

    pub fn ej_delta(&self) -> f64 {
        self.ej_sigma * self.d
    }

    /// Mean branch inductance used by the closed forms.
    pub fn l_mean(&self) -> f64 {
        0.5 * (self.l1_nh + self.l2_nh)
    }

    pub fn kf(&self) -> f64 {
        self.k as f64
    }

    /// Qubit charging energy E_C = e²/2(Cq + C/2) in GHz.
    pub fn e_c_qubit(&self) -> f64 {
        CHARGE_ENERGY / (self.cq_ff + self.c_ff / 2.0)
    }

    /// Resonator charging energy 2e²/C in GHz.
    pub fn e_c_resonator(&self) -> f64 {
        2.0 * CHARGE_ENERGY / self.c_ff
    }

    /// Energy model over (q, r) with flux symbols `phi_x` and `phi_Xb`.
    pub fn energy_model(&self) -> Result<EnergyModel> {
        self.validate()?;
        let cmat = DMatrix::from_diagonal(&DVector::from_vec(vec![self.cq_ff + self.c_ff / 2.0, self.c_ff / 2.0]));
        let row = |a: f64, b: f64| DVector::from_vec(vec![a, b]);
        let kf = self.kf();
        let mut terms = vec![Term {
            label: "EJq".into(),
            row: row(1.0, 0.0),
            offset: PhaseOffset::flux("phi_Xb", 1.0),
            kind: TermKind::Cosine { amplitude: self.ej_q, divisor: 1.0 },
        }];
        let branches = [("1", row(0.5, 0.5), self.l1_nh, self.ej1()), ("2", row(-0.5, 0.5), self.l2_nh, self.ej2())];
        for (tag, r, l, ej) in branches {
            match self.la_nh {
                None => {
                    terms.push(Term {
                        label: format!("L{tag}"),
                        row: r.clone(),
                        offset: PhaseOffset::default(),
                        kind: TermKind::Quadratic { coef: FLUX_ENERGY / (2.0 * l) },
                    });
                    terms.push(Term {
                        label: format!("J{tag}"),
                        row: r,
                        offset: PhaseOffset::flux("phi_x", 1.0),
                        kind: TermKind::Cosine { amplitude: kf * ej, divisor: kf },
                    });
                }
                Some(la) => {
                    let ab = ArrayBranch::new(self.k, ej, l, la)?;
                    terms.push(Term {
                        label: format!("B{tag}"),
                        row: r,
                        offset: PhaseOffset::flux("phi_x", 1.0),
                        kind: TermKind::ArrayBranch(BranchPotential::new(ab)?),
                    });
                }
            }
        }
        Ok(EnergyModel { var_names: vec!["q".into(), "r".into()], cmat, terms })
    }
}

/// Flux map for the preset model from phases in radians.
pub fn device_fluxes(phi_x: f64, phi_xb: f64) -> FluxMap {
    flux_map_from_phases(&[("phi_x", phi_x), ("phi_Xb", phi_xb)])
}

/// Per-mode harmonic and quartic data. Energies are E/h.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSpectrum {
    pub name: String,
    /// Harmonic frequency ω/2π (GHz).
    pub omega_ghz: f64,
    /// Charging energy (GHz).
    pub e_c_ghz: f64,
    /// Curvature of the potential along the mode (GHz/rad²).
    pub stiffness_ghz: f64,
    /// Characteristic impedance (Ω).
    pub z0_ohm: f64,
    /// Zero-point phase amplitude (rad).
    pub phi_zpf: f64,
    /// Quartic anharmonicity α/2π (MHz).
    pub alpha_mhz: f64,
    /// α/(ω + α).
    pub alpha_rel: f64,
    /// Corrected transition frequency (ω + α)/2π (GHz); qubit only.
    pub delta_ghz: Option<f64>,
}

impl ModeSpectrum {
    /// Assemble from charging energy, stiffness and quartic Taylor derivative U''''.
    pub fn from_expansion(name: &str, e_c: f64, stiffness: f64, u4: f64, qubit: bool) -> Result<Self> {
        if !(stiffness > 0.0) {
            return Err(Error::DoubleWell(format!("non-positive curvature {stiffness} GHz along mode {name}")));
        }
        let omega = (8.0 * e_c * stiffness).sqrt();
        let zpf = (2.0 * e_c / stiffness).powf(0.25);
        let alpha = u4 * zpf.powi(4) / 2.0;
        Ok(Self::assemble(name, e_c, stiffness, omega, alpha, qubit))
    }

    fn assemble(name: &str, e_c: f64, stiffness: f64, omega: f64, alpha: f64, qubit: bool) -> Self {
        // L_eff = P/K (nH), C_eff = CHARGE/E_C (fF); sqrt(nH/fF) = 1000 Ω.
        let z0 = (FLUX_ENERGY / stiffness * e_c / CHARGE_ENERGY).sqrt() * 1000.0;
        ModeSpectrum {
            name: name.into(),
            omega_ghz: omega,
            e_c_ghz: e_c,
            stiffness_ghz: stiffness,
            z0_ohm: z0,
            phi_zpf: (2.0 * e_c / stiffness).powf(0.25),
            alpha_mhz: alpha * 1000.0,
            alpha_rel: alpha / (omega + alpha),
            delta_ghz: qubit.then_some(omega + alpha),
        }
    }
}

/// How a coupling set was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMethod {
    ClosedForm,
    NumericMinimum,
}

/// The four parity-classified qubit-resonator couplings g/2π in MHz.
///
/// Even qubit powers map onto σz with σz = diag(−1, +1) in the lowest two
/// levels; the identity parts they generate are reported separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSet {
    /// (odd, odd), proportional to EJΔ.
    pub g_xx_mhz: f64,
    /// (even, odd), proportional to EJΣ.
    pub g_zx_mhz: f64,
    /// (odd, even), proportional to EJΔ.
    pub g_xz_mhz: f64,
    /// (even, even), proportional to EJΣ.
    pub g_zz_mhz: f64,
    /// Identity part of the (even, odd) term, a resonator drive.
    pub identity_zx_mhz: f64,
    /// Identity part of the (even, even) term, a resonator frequency shift.
    pub identity_zz_mhz: f64,
    pub method: CouplingMethod,
}

impl CouplingSet {
    /// Map Taylor coefficients c_mn onto couplings with zero-point amplitudes zq, zr.
    pub fn from_coefficients(c11: f64, c21: f64, c12: f64, c22: f64, zq: f64, zr: f64, method: CouplingMethod) -> Self {
        let g_zx = c21 * zq * zq * zr * 1000.0;
        let g_zz = c22 * zq * zq * zr * zr * 1000.0;
        CouplingSet {
            g_xx_mhz: c11 * zq * zr * 1000.0,
            g_zx_mhz: g_zx,
            g_xz_mhz: c12 * zq * zr * zr * 1000.0,
            g_zz_mhz: g_zz,
            identity_zx_mhz: 2.0 * g_zx,
            identity_zz_mhz: 2.0 * g_zz,
            method,
        }
    }
}

/// Dimensionless flux coefficient η = EJΣ L cos(φx/k) / (2k (Φ0/2π)²).
pub fn eta(ej_sigma: f64, k: u32, l_nh: f64, phi_x: f64) -> f64 {
    let kf = k as f64;
    ej_sigma * l_nh * (phi_x / kf).cos() / (2.0 * kf * FLUX_ENERGY)
}

fn eta_checked(p: &DeviceParams, phi_x: f64) -> Result<f64> {
    let e = eta(p.ej_sigma, p.k, p.l_mean(), phi_x);
    if e.abs() >= 1.0 {
        return Err(Error::Domain(format!("|eta| = {:.4} >= 1, closed forms invalid", e.abs())));
    }
    Ok(e)
}

fn bias_sign(phi_xb: f64) -> Result<f64> {
    let r = phi_xb.rem_euclid(2.0 * PI);
    if r.abs() < 1e-12 || (2.0 * PI - r).abs() < 1e-12 {
        Ok(1.0)
    } else if (r - PI).abs() < 1e-12 {
        Ok(-1.0)
    } else {
        Err(Error::Domain(format!("closed forms require phi_Xb in {{0, pi}}, got {phi_xb}")))
    }
}

/// Qubit stiffness and the quartic numerator of its anharmonicity.
fn qubit_closed_parts(p: &DeviceParams, phi_x: f64, phi_xb: f64) -> Result<(f64, f64)> {
    let s = bias_sign(phi_xb)?;
    let e = eta_checked(p, phi_x)?;
    let l = p.l_mean();
    let e_l = FLUX_ENERGY / (2.0 * l);
    let k2 = p.kf() * p.kf();
    // stiffness K and the quartic U'''' = −(s·EJq + E_L η/(4k²)) at the origin
    let stiffness = s * p.ej_q + e_l * (1.0 + e);
    let u4 = -(s * p.ej_q + e_l * e / (4.0 * k2));
    if !(stiffness > 0.0) {
        return Err(Error::DoubleWell(format!(
            "qubit curvature {stiffness:.4} GHz is not positive (L above the critical inductance)"
        )));
    }
    Ok((stiffness, u4))
}

/// Closed-form qubit spectrum at φXb ∈ {0, π}.
pub fn qubit_spectrum_closed_form(p: &DeviceParams, phi_x: f64, phi_xb: f64) -> Result<ModeSpectrum> {
    let (stiffness, u4) = qubit_closed_parts(p, phi_x, phi_xb)?;
    let e_c = p.e_c_qubit();
    let omega = (8.0 * e_c * stiffness).sqrt();
    let alpha = e_c * u4 / stiffness;
    Ok(ModeSpectrum::assemble("q", e_c, stiffness, omega, alpha, true))
}

/// Closed-form resonator spectrum.
pub fn resonator_spectrum_closed_form(p: &DeviceParams, phi_x: f64) -> Result<ModeSpectrum> {
    let e = eta(p.ej_sigma, p.k, p.l_mean(), phi_x);
    if e <= -1.0 {
        return Err(Error::Domain(format!("eta = {e:.4} <= -1, resonator unstable")));
    }
    let e = eta_checked(p, phi_x)?;
    let l = p.l_mean();
    let k2 = p.kf() * p.kf();
    let e_c = p.e_c_resonator();
    let stiffness = FLUX_ENERGY * (1.0 + e) / (2.0 * l);
    let omega = (8.0 * e_c * stiffness).sqrt();
    let alpha = -e * e_c / (4.0 * k2 * (1.0 + e));
    Ok(ModeSpectrum::assemble("r", e_c, stiffness, omega, alpha, false))
}

/// Relative resonator anharmonicity in its explicit form
/// η e² / (η e² − 4k²(1+η)^{3/2} ħ √(C/L)).
///
/// In canonical units e²/(ħ√(C/L)) becomes E_Cr/ω_0 with ω_0 the uncoupled
/// resonator frequency.
pub fn resonator_alpha_rel_closed_form(p: &DeviceParams, phi_x: f64) -> Result<f64> {
    let e = eta_checked(p, phi_x)?;
    let k2 = p.kf() * p.kf();
    let e_cr = p.e_c_resonator();
    let w0 = (8.0 * e_cr * FLUX_ENERGY / (2.0 * p.l_mean())).sqrt();
    let num = e * e_cr;
    Ok(num / (num - 4.0 * k2 * (1.0 + e).powf(1.5) * w0))
}

/// Closed-form couplings at φXb ∈ {0, π}, expanded at the origin.
pub fn couplings_closed_form(p: &DeviceParams, phi_x: f64, phi_xb: f64) -> Result<CouplingSet> {
    let (kq, _) = qubit_closed_parts(p, phi_x, phi_xb)?;
    let res = resonator_spectrum_closed_form(p, phi_x)?;
    let zq = (2.0 * p.e_c_qubit() / kq).powf(0.25);
    let zr = res.phi_zpf;
    let kf = p.kf();
    let (sn, cs) = (phi_x / kf).sin_cos();
    let c11 = p.ej_delta() * cs / (4.0 * kf) + FLUX_ENERGY * (p.l2_nh - p.l1_nh) / (4.0 * p.l1_nh * p.l2_nh);
    let c21 = -p.ej_sigma * sn / (16.0 * kf * kf);
    let c12 = -p.ej_delta() * sn / (16.0 * kf * kf);
    let c22 = -p.ej_sigma * cs / (64.0 * kf.powi(3));
    Ok(CouplingSet::from_coefficients(c11, c21, c12, c22, zq, zr, CouplingMethod::ClosedForm))
}

/// Curvature and fourth derivative of one coupling branch at the origin when
/// cos(φx/k) = c ∈ {±1}; k may be fractional for critical-count searches.
pub fn branch_anchor_derivs(k: f64, ej: f64, l_nh: f64, la_nh: Option<f64>, c: f64) -> (f64, f64) {
    let (gamma, beta) = match la_nh {
        Some(la) => (1.0 + la / l_nh, la * ej / FLUX_ENERGY),
        None => (1.0, 0.0),
    };
    let s1 = gamma + beta / k * c;
    let e2 = (FLUX_ENERGY / l_nh + ej / k * c) / s1;
    let e4 = -(ej * c / k.powi(3)) / s1.powi(4);
    (e2, e4)
}

/// Exact expansion at the origin for φx ∈ {0, kπ} (any preset, including added inductance).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorExpansion {
    pub qubit: ModeSpectrum,
    pub resonator: ModeSpectrum,
    pub couplings: CouplingSet,
}

/// Closed-form anchor expansion. `mu` selects φx = μkπ; φXb ∈ {0, π}.
pub fn anchor_closed_form(p: &DeviceParams, mu: i32, phi_xb: f64) -> Result<AnchorExpansion> {
    let s = bias_sign(phi_xb)?;
    let c = if mu.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let kf = p.kf();
    let (a2, a4) = branch_anchor_derivs(kf, p.ej1(), p.l1_nh, p.la_nh, c);
    let (b2, b4) = branch_anchor_derivs(kf, p.ej2(), p.l2_nh, p.la_nh, c);
    let kq = s * p.ej_q + 0.25 * (a2 + b2);
    let kr = 0.25 * (a2 + b2);
    let uq4 = -s * p.ej_q + (a4 + b4) / 16.0;
    let ur4 = (a4 + b4) / 16.0;
    let qubit = ModeSpectrum::from_expansion("q", p.e_c_qubit(), kq, uq4, true)?;
    let resonator = ModeSpectrum::from_expansion("r", p.e_c_resonator(), kr, ur4, false)?;
    let c11 = 0.25 * (a2 - b2);
    let c22 = (a4 + b4) / 16.0 / 4.0;
    let couplings =
        CouplingSet::from_coefficients(c11, 0.0, 0.0, c22, qubit.phi_zpf, resonator.phi_zpf, CouplingMethod::ClosedForm);
    Ok(AnchorExpansion { qubit, resonator, couplings })
}

/// A located potential minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub flux_map: FluxMap,
    pub phi_min: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// Single-well certificate: Hessian positive definite with margin.
    pub well_ok: bool,
    pub iterations: usize,
}

/// Damped Newton search for a stationary point, starting from `start` or 0.
///
/// Falls back to scaled gradient descent while the Hessian is indefinite.
pub fn minimize(bm: &BoundModel, start: Option<&DVector<f64>>) -> Result<(DVector<f64>, usize)> {
    let n = bm.dim();
    let mut x = start.cloned().unwrap_or_else(|| DVector::zeros(n));
    if x.len() != n {
        return Err(Error::Shape(format!("start vector has length {}, model has {n} variables", x.len())));
    }
    for it in 0..MAX_NEWTON_ITER {
        let g = bm.gradient(&x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("potential gradient is not finite".into()));
        }
        let gn = g.amax();
        if gn < GRADIENT_TOL {
            return Ok((x, it));
        }
        let h = bm.hessian(&x);
        let (dir, newton) = match h.clone().cholesky() {
            Some(ch) => (-ch.solve(&g), true),
            None => {
                let scale = h.symmetric_eigenvalues().amax().max(1.0);
                (-&g / scale, false)
            }
        };
        let u0 = bm.value(&x);
        let slope = g.dot(&dir);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-16 {
            let xn = &x + &dir * t;
            let un = bm.value(&xn);
            let descent = un <= u0 + 1e-4 * t * slope;
            if descent || (newton && bm.gradient(&xn).amax() < gn) {
                x = xn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return Err(Error::NoConvergence(format!("line search stalled with gradient {gn:.3e} GHz/rad")));
        }
    }
    Err(Error::NoConvergence(format!("Newton search exceeded {MAX_NEWTON_ITER} iterations")))
}

/// Certify that the Hessian is positive definite with the configured margin.
pub fn is_single_well(h: &DMatrix<f64>) -> bool {
    let ev = h.clone().symmetric_eigenvalues();
    let max = ev.amax();
    ev.min() > PD_MARGIN * max
}

/// Offsets (rad) along each variable used to probe for a second well.
const WELL_PROBES: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];

/// Search for a local minimum distinct from `phi_min`, starting from the
/// mirror image and from probe offsets along each variable.
///
/// A tilted double well has a positive-definite Hessian in either well, so
/// the curvature test alone cannot reject it.
pub fn second_minimum(bm: &BoundModel, phi_min: &DVector<f64>) -> Option<DVector<f64>> {
    let n = bm.dim();
    let mut seeds = vec![-phi_min];
    for i in 0..n {
        for s in WELL_PROBES {
            let mut x = phi_min.clone();
            x[i] += s;
            seeds.push(x);
        }
    }
    seeds.into_iter().find_map(|seed| {
        let (x, _) = minimize(bm, Some(&seed)).ok()?;
        ((&x - phi_min).amax() > 1e-3 && is_single_well(&bm.hessian(&x))).then_some(x)
    })
}

/// Locate the potential minimum of `model` at the given fluxes.
///
/// Fails with a double-well error when the stationary point is not a strict
/// minimum or when a second local minimum exists.
pub fn find_minimum(model: &EnergyModel, flux_map: &FluxMap, start: Option<&DVector<f64>>) -> Result<OperatingPoint> {
    let bm = model.bind(flux_map)?;
    let (phi_min, iterations) = minimize(&bm, start)?;
    let hessian = bm.hessian(&phi_min);
    if !is_single_well(&hessian) {
        return Err(Error::DoubleWell(format!(
            "stationary point {:?} has Hessian eigenvalues {:?}",
            phi_min.as_slice(),
            hessian.clone().symmetric_eigenvalues().as_slice()
        )));
    }
    if let Some(other) = second_minimum(&bm, &phi_min) {
        return Err(Error::DoubleWell(format!(
            "minima at {:?} and {:?}",
            phi_min.as_slice(),
            other.as_slice()
        )));
    }
    Ok(OperatingPoint { flux_map: flux_map.clone(), phi_min, hessian, well_ok: true, iterations })
}

/// Per-mode spectra and qubit-resonator couplings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumResult {
    pub modes: Vec<ModeSpectrum>,
    pub couplings: CouplingSet,
}

/// Expand the bound potential at `phi` and extract spectra and couplings.
///
/// Each mode uses the Hessian diagonal as stiffness (other variables held at
/// `phi`) and (C⁻¹)_mm as inverse mass.
pub fn spectrum_at(bm: &BoundModel, names: &[String], phi: &DVector<f64>, qubit: usize, resonator: usize) -> Result<SpectrumResult> {
    let n = bm.dim();
    if qubit >= n || resonator >= n || qubit == resonator {
        return Err(Error::Shape(format!("invalid mode indices ({qubit}, {resonator}) for {n} variables")));
    }
    let cinv = bm
        .cmat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Structure("capacitance matrix is singular".into()))?;
    let h = bm.hessian(phi);
    let mut modes = Vec::with_capacity(n);
    for m in 0..n {
        let mut ord = vec![0; n];
        ord[m] = 4;
        let u4 = bm.partial(phi, &ord);
        let e_c = CHARGE_ENERGY * cinv[(m, m)];
        modes.push(ModeSpectrum::from_expansion(&names[m], e_c, h[(m, m)], u4, m == qubit)?);
    }
    let coef = |a: usize, b: usize| {
        let mut ord = vec![0; n];
        ord[qubit] = a;
        ord[resonator] = b;
        bm.taylor_coefficient(phi, &ord)
    };
    let couplings = CouplingSet::from_coefficients(
        coef(1, 1),
        coef(2, 1),
        coef(1, 2),
        coef(2, 2),
        modes[qubit].phi_zpf,
        modes[resonator].phi_zpf,
        CouplingMethod::NumericMinimum,
    );
    Ok(SpectrumResult { modes, couplings })
}

/// Spectra and couplings expanded at a located minimum.
pub fn spectrum_numeric(model: &EnergyModel, op: &OperatingPoint, qubit: usize, resonator: usize) -> Result<SpectrumResult> {
    if !op.well_ok {
        return Err(Error::DoubleWell("operating point is not a certified single well".into()));
    }
    let bm = model.bind(&op.flux_map)?;
    spectrum_at(&bm, &model.var_names, &op.phi_min, qubit, resonator)
}

/// Device analysis at one flux point, with continuation seed.
pub fn analyze_device(
    model: &EnergyModel,
    phi_x: f64,
    phi_xb: f64,
    start: Option<&DVector<f64>>,
) -> Result<(OperatingPoint, SpectrumResult)> {
    let op = find_minimum(model, &device_fluxes(phi_x, phi_xb), start)?;
    let res = spectrum_numeric(model, &op, 0, 1)?;
    Ok((op, res))
}

/// Harmonic normal modes of the coupled system at `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalModes {
    /// ω/2π in GHz, one per eigenvector column.
    pub freqs_ghz: Vec<f64>,
    /// Orthonormal eigenvectors in mass-weighted coordinates.
    pub vectors: DMatrix<f64>,
}

/// Solve ω² = 8·CHARGE·eig(C⁻¹H) via the symmetric form C^{-1/2} H C^{-1/2}.
pub fn normal_modes(bm: &BoundModel, phi: &DVector<f64>) -> Result<NormalModes> {
    let cinv = bm
        .cmat
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Structure("capacitance matrix is singular".into()))?;
    let eig = cinv.symmetric_eigen();
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Structure("capacitance matrix is not positive definite".into()));
    }
    let sqrt_inv = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let m = &sqrt_inv * bm.hessian(phi) * &sqrt_inv;
    let m = (&m + m.transpose()) * 0.5;
    let dim = m.nrows();
    let se = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let mut freqs = Vec::with_capacity(idx.len());
    let mut vectors = DMatrix::zeros(dim, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        let lam = se.eigenvalues[i];
        if lam <= 0.0 {
            return Err(Error::DoubleWell(format!("normal mode with eigenvalue {lam:.3e}")));
        }
        freqs.push((8.0 * CHARGE_ENERGY * lam).sqrt());
        vectors.set_column(j, &se.eigenvectors.column(i));
    }
    Ok(NormalModes { freqs_ghz: freqs, vectors })
}

/// Reorder `next` so each column best overlaps the same column of `prev`.
///
/// Assignment is greedy by largest |overlap|; eigenvector signs are aligned.
pub fn track_modes(prev: &NormalModes, next: &NormalModes) -> NormalModes {
    let n = prev.vectors.ncols();
    let ov = prev.vectors.transpose() * &next.vectors;
    let mut pairs: Vec<(usize, usize, f64)> =
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, ov[(i, j)].abs())).collect();
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_prev = vec![false; n];
    let mut used_next = vec![false; n];
    let mut perm = vec![0; n];
    for (i, j, _) in pairs {
        if !used_prev[i] && !used_next[j] {
            used_prev[i] = true;
            used_next[j] = true;
            perm[i] = j;
        }
    }
    let mut vectors = DMatrix::zeros(next.vectors.nrows(), n);
    let mut freqs = Vec::with_capacity(n);
    for (i, &j) in perm.iter().enumerate() {
        let sign = if ov[(i, j)] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(i, &(next.vectors.column(j) * sign));
        freqs.push(next.freqs_ghz[j]);
    }
    NormalModes { freqs_ghz: freqs, vectors }
}

/// Transverse coupling of a device with slightly unequal branch inductances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymmetricTransverse {
    /// Amplitude of the junction-asymmetry part at cos(φx/k) = 1 (MHz).
    pub g_sym_mhz: f64,
    /// Inductance-asymmetry part (MHz).
    pub g_asym_mhz: f64,
    /// Total transverse coupling at the requested flux (MHz).
    pub g_total_mhz: f64,
    /// Flux φx in [0, kπ] where the total vanishes, from the linearized rule.
    pub zero_crossing: Option<f64>,
    /// Same flux from the exact origin expansion with L1 ≠ L2.
    pub zero_crossing_exact: Option<f64>,
}

/// Transverse coupling with L1,2 = L(1 ± δL) and junction asymmetry d.
pub fn asymmetric_transverse(p: &DeviceParams, delta_l: f64, d: f64, phi_x: f64) -> Result<AsymmetricTransverse> {
    if !(delta_l.abs() < 0.5) {
        return Err(Error::Domain(format!("relative inductance asymmetry {delta_l} is not small")));
    }
    let l = p.l_mean();
    let mut q = p.clone();
    q.d = d;
    q.l1_nh = l * (1.0 + delta_l);
    q.l2_nh = l * (1.0 - delta_l);
    q.validate()?;
    let kf = q.kf();
    let (kq, _) = qubit_closed_parts(&q, phi_x, 0.0)?;
    let zq = (2.0 * q.e_c_qubit() / kq).powf(0.25);
    let z = zq * resonator_spectrum_closed_form(&q, phi_x)?.phi_zpf * 1000.0;
    let g_sym = q.ej_delta() / (4.0 * kf) * z;
    let g_asym = FLUX_ENERGY * (q.l2_nh - q.l1_nh) / (4.0 * q.l1_nh * q.l2_nh) * z;
    let ratio = 2.0 * kf * FLUX_ENERGY * delta_l / (l * d * q.ej_sigma);
    let exact = kf * FLUX_ENERGY * (q.l1_nh - q.l2_nh) / (q.l1_nh * q.l2_nh * q.ej_delta());
    let crossing = |r: f64| (r.abs() < 1.0).then(|| kf * r.acos());
    Ok(AsymmetricTransverse {
        g_sym_mhz: g_sym,
        g_asym_mhz: g_asym,
        g_total_mhz: g_sym * (phi_x / kf).cos() + g_asym,
        zero_crossing: if d == 0.0 { None } else { crossing(ratio) },
        zero_crossing_exact: if d == 0.0 { None } else { crossing(exact) },
    })
}

/// Frequency band targeted for the resonator (GHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub low_ghz: f64,
    pub high_ghz: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band { low_ghz: 6.0, high_ghz: 8.0 }
    }
}

/// Design constraints derived from the closed forms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignLimits {
    /// η at φx = 0.
    pub eta: f64,
    /// Effective qubit Josephson energy at φx = 0 (GHz).
    pub ej_q_star: f64,
    /// Qubit charging energy (GHz).
    pub e_c: f64,
    /// Largest L keeping the resonator above the band's lower edge at every flux (nH).
    pub l_max: Option<f64>,
    /// Largest L keeping a single well at φXb = π for every flux (nH).
    pub l_crit: Option<f64>,
    /// Smallest (continuous) junction count keeping a single well at φXb = π.
    pub k_crit: Option<f64>,
}

/// Largest x in (lo, hi) with f(x) > 0, for f positive at lo and decreasing through one root.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Minimum resonator stiffness over flux, attained at φx = kπ.
fn worst_resonator_stiffness(k: f64, p: &DeviceParams, l: f64) -> f64 {
    let (a2, _) = branch_anchor_derivs(k, p.ej1(), l, p.la_nh, -1.0);
    let (b2, _) = branch_anchor_derivs(k, p.ej2(), l, p.la_nh, -1.0);
    0.25 * (a2 + b2)
}

fn branch_invertible(k: f64, p: &DeviceParams, l: f64) -> bool {
    match p.la_nh {
        None => true,
        Some(la) => {
            let gamma = 1.0 + la / l;
            let beta = la * p.ej1().max(p.ej2()) / FLUX_ENERGY;
            k * gamma / beta > 1.0
        }
    }
}

/// Compute η, EJq*, E_C, L_max, L_crit and k_crit.
pub fn design_limits(p: &DeviceParams, band: Band) -> Result<DesignLimits> {
    p.validate()?;
    let kf = p.kf();
    let eta0 = eta(p.ej_sigma, p.k, p.l_mean(), 0.0);
    let e_c = p.e_c_qubit();
    let ej_q_star = p.ej_q + FLUX_ENERGY * (1.0 + eta0) / (2.0 * p.l_mean());
    let e_cr = p.e_c_resonator();
    let valid = |k: f64, l: f64| branch_invertible(k, p, l);
    // Resonator band: ω_r,min(L) = sqrt(8 E_Cr K_r,min(L)) decreases with L.
    let l_max = bisect(
        |l| {
            if !valid(kf, l) {
                return f64::NAN;
            }
            let kr = worst_resonator_stiffness(kf, p, l);
            if kr <= 0.0 {
                -band.low_ghz
            } else {
                (8.0 * e_cr * kr).sqrt() - band.low_ghz
            }
        },
        1e-3,
        1e3,
    );
    // Single well at φXb = π: U_qq = −EJq + K_r,min > 0.
    let l_crit = bisect(|l| if valid(kf, l) { worst_resonator_stiffness(kf, p, l) - p.ej_q } else { f64::NAN }, 1e-3, 1e3);
    let k_lo = match p.la_nh {
        Some(la) => {
            let gamma = 1.0 + la / p.l_mean();
            let beta = la * p.ej1().max(p.ej2()) / FLUX_ENERGY;
            beta / gamma * (1.0 + 1e-12) + 1e-12
        }
        None => 1e-9,
    };
    let k_crit = bisect(|k| p.ej_q - worst_resonator_stiffness(k, p, p.l_mean()), k_lo, 1e6);
    Ok(DesignLimits { eta: eta0, ej_q_star, e_c, l_max, l_crit, k_crit })
}
