//! Scale-up algebra: one qubit with several resonators, two capacitively
//! coupled blocks, stray capacitance, coupled-resonator frequencies and the
//! per-link capacitance matrices of a four-block plaquette.

use crate::error::{Error, Result};
use crate::lagrangian::{build_energy_model, EnergyModel, Term, TermKind};
use crate::netlist::{parse, PhaseOffset};
use crate::reduce::{eliminate_massless_or_potential_free, ReductionReport};
use crate::spectrum::{eta, DeviceParams};
use crate::units::{CHARGE_ENERGY, FLUX_ENERGY};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

/// 2ab/(a + b), zero when both vanish.
fn pair_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Series combinations that mediate the resonator-resonator coupling (fF).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveCouplingCaps {
    pub c_gmu: f64,
    pub c_bmu: f64,
    pub c_mu: f64,
}

/// Effective capacitances; `cb = None` fuses the two resonator nodes (C_b → ∞).
pub fn effective_caps(cg1: f64, cg2: f64, cb: Option<f64>, c1: f64, c2: f64) -> Result<EffectiveCouplingCaps> {
    for (n, v) in [("Cg1", cg1), ("Cg2", cg2), ("C1", c1), ("C2", c2), ("Cb", cb.unwrap_or(0.0))] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{n} must be non-negative and finite, got {v}")));
        }
    }
    let c_gmu = pair_mean(cg1, cg2);
    let c_bmu = match cb {
        None => 2.0 * c_gmu,
        Some(cb) => pair_mean(cb, c_gmu),
    };
    Ok(EffectiveCouplingCaps { c_gmu, c_bmu, c_mu: pair_mean(c1, c2) })
}

/// One resonator arm attached to a shared qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorArm {
    pub c_ff: f64,
    pub l_nh: f64,
    pub ej_sigma: f64,
    pub k: u32,
    pub phi_x: f64,
}

/// Qubit parameters after attaching several resonator arms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiResonatorQubit {
    pub e_c: f64,
    pub ej_q_star: f64,
    pub omega_ghz: f64,
    pub alpha_mhz: f64,
    pub delta_ghz: f64,
    /// EJq relative to the summed inductive shunt (Φ0/2π)² Σ 1/(4L_l).
    pub shunt_ratio: f64,
    pub warning: Option<String>,
}

/// Qubit frequency and anharmonicity with C → Σ C_l and 1/L → Σ 1/L_l.
///
/// Each arm adds its own inductive and Josephson curvature; the flux
/// coefficient of every arm keeps its own η_l. A warning is attached when
/// EJq falls below the summed inductive shunt.
pub fn n_resonator_substitution(ej_q: f64, cq_ff: f64, arms: &[ResonatorArm]) -> Result<MultiResonatorQubit> {
    if arms.is_empty() {
        return Err(Error::Domain("at least one resonator arm is required".into()));
    }
    let mut c_sum = 0.0;
    let mut stiffness = ej_q;
    let mut quartic = ej_q;
    let mut shunt = 0.0;
    for a in arms {
        if !(a.c_ff > 0.0 && a.l_nh > 0.0 && a.k >= 1) {
            return Err(Error::Domain("arm capacitance, inductance and k must be positive".into()));
        }
        let e = eta(a.ej_sigma, a.k, a.l_nh, a.phi_x);
        let k2 = (a.k as f64).powi(2);
        c_sum += a.c_ff;
        stiffness += FLUX_ENERGY * (1.0 + e) / (2.0 * a.l_nh);
        quartic += FLUX_ENERGY * e / (8.0 * k2 * a.l_nh);
        shunt += FLUX_ENERGY / (4.0 * a.l_nh);
    }
    if stiffness <= 0.0 {
        return Err(Error::DoubleWell(format!("qubit curvature {stiffness:.4} GHz is not positive")));
    }
    let e_c = CHARGE_ENERGY / (cq_ff + c_sum / 2.0);
    let omega = (8.0 * e_c * stiffness).sqrt();
    let alpha = -e_c * quartic / stiffness;
    let shunt_ratio = ej_q / shunt;
    let warning = (shunt_ratio < 1.0).then(|| {
        format!("EJq = {ej_q} GHz is below the summed inductive shunt {shunt:.2} GHz; qubit anharmonicity is degraded")
    });
    Ok(MultiResonatorQubit {
        e_c,
        ej_q_star: stiffness,
        omega_ghz: omega,
        alpha_mhz: alpha * 1000.0,
        delta_ghz: omega + alpha,
        shunt_ratio,
        warning,
    })
}

/// One block of a coupled pair: the device plus its ground capacitance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockParams {
    pub device: DeviceParams,
    /// Capacitance from each qubit node to ground (fF).
    pub cg_ff: f64,
    /// Coupling-loop flux phase (rad).
    pub phi_x: f64,
}

/// Two blocks joined at their resonator nodes, fused (`cb_ff = None`) or through C_b.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoBlockParams {
    pub blocks: [BlockParams; 2],
    pub cb_ff: Option<f64>,
    /// Stray capacitance from each resonator node to ground (fF).
    pub cs_ff: f64,
}

impl TwoBlockParams {
    pub fn caps(&self) -> Result<EffectiveCouplingCaps> {
        let [a, b] = &self.blocks;
        effective_caps(a.cg_ff, b.cg_ff, self.cb_ff, a.device.c_ff, b.device.c_ff)
    }
}

/// Node-level netlist of the two-block circuit with the qubit, resonator and
/// auxiliary variables declared.
pub fn two_block_netlist(p: &TwoBlockParams) -> String {
    let mut s = String::from("ground g\n");
    let fused = p.cb_ff.is_none();
    for (i, b) in p.blocks.iter().enumerate() {
        let n = i + 1;
        let c = if fused { "c".to_string() } else { format!("c{n}") };
        let d = &b.device;
        let _ = writeln!(s, "cap Cq{n} {}fF a{n} b{n}", d.cq_ff);
        let _ = writeln!(s, "jj EJq{n} {}GHz a{n} b{n}", d.ej_q);
        let _ = writeln!(s, "cap Ca{n} {}fF a{n} {c}", d.c_ff);
        let _ = writeln!(s, "cap Cb{n} {}fF b{n} {c}", d.c_ff);
        let _ = writeln!(s, "ind La{n} {}nH a{n} {c}", d.l1_nh);
        let _ = writeln!(s, "ind Lb{n} {}nH b{n} {c}", d.l2_nh);
        if b.cg_ff > 0.0 {
            let _ = writeln!(s, "cap Cga{n} {}fF a{n} g", b.cg_ff);
            let _ = writeln!(s, "cap Cgb{n} {}fF b{n} g", b.cg_ff);
        }
        if !fused && p.cs_ff > 0.0 {
            let _ = writeln!(s, "cap Cs{n} {}fF {c} g", p.cs_ff);
        }
        let _ = writeln!(s, "var q{n} a{n}:1 b{n}:-1");
        let _ = writeln!(s, "var r{n} a{n}:1 b{n}:1 {c}:-2");
    }
    if fused {
        if p.cs_ff > 0.0 {
            let _ = writeln!(s, "cap Cs {}fF c g", p.cs_ff);
        }
        s.push_str("var xbar c:1 g:-1\n");
    } else {
        if let Some(cb) = p.cb_ff.filter(|&v| v > 0.0) {
            let _ = writeln!(s, "cap Cb {cb}fF c1 c2");
        }
        s.push_str("var xbar1 c1:1 g:-1\nvar xbar2 c2:1 g:-1\n");
    }
    s
}

/// Reduced kinetic matrix over (q1, r1, q2, r2) with the reduction record.
pub fn coupled_block_reduction(p: &TwoBlockParams) -> Result<(DMatrix<f64>, ReductionReport)> {
    let graph = parse(&two_block_netlist(p))?;
    let model = build_energy_model(&graph, None, None)?;
    let (reduced, report) = eliminate_massless_or_potential_free(&model)?;
    let order = ["q1", "r1", "q2", "r2"];
    let idx: Vec<usize> = order
        .iter()
        .map(|n| {
            reduced
                .var_names
                .iter()
                .position(|v| v == n)
                .ok_or_else(|| Error::Structure(format!("variable {n} missing after reduction")))
        })
        .collect::<Result<_>>()?;
    if reduced.var_names.len() != 4 {
        return Err(Error::Structure(format!("expected four system variables, found {:?}", reduced.var_names)));
    }
    Ok((reduced.cmat.select_rows(&idx).select_columns(&idx), report))
}

/// Coefficient of (φ̇_r1 − φ̇_r2)² in the fused variant with stray capacitance (fF).
pub fn stray_capacitance_rescale(cg1: f64, cg2: f64, cs: f64) -> f64 {
    let den = 2.0 * (2.0 * cg1 + 2.0 * cg2 + cs);
    if den == 0.0 {
        0.0
    } else {
        cg1 * cg2 / den
    }
}

/// Frequencies (GHz), impedances (Ω) and coupling (MHz) of two coupled resonators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledResonators {
    pub omega_r_ghz: [f64; 2],
    pub z0_ohm: [f64; 2],
    pub g_c_mhz: f64,
}

fn block_eta(b: &BlockParams) -> f64 {
    eta(b.device.ej_sigma, b.device.k, b.device.l_mean(), b.phi_x)
}

/// Closed-form coupled-resonator spectrum from C_bμ, C_μ and per-block η_i.
pub fn coupled_resonator_spectrum(p: &TwoBlockParams) -> Result<CoupledResonators> {
    let caps = p.caps()?;
    let [b1, b2] = &p.blocks;
    let (c1, c2) = (b1.device.c_ff, b2.device.c_ff);
    let (l1, l2) = (b1.device.l_mean(), b2.device.l_mean());
    let (e1, e2) = (block_eta(b1), block_eta(b2));
    if e1 <= -1.0 || e2 <= -1.0 {
        return Err(Error::Domain("eta <= -1 in a coupled block".into()));
    }
    let (cbm, cmu, cs) = (caps.c_bmu, caps.c_mu, c1 + c2);
    // fF and nH: 1/sqrt(fF·nH) = 1e12 rad/s
    let omega = |ci: f64, li: f64, ei: f64| {
        let num = (4.0 * cmu * cs + 2.0 * ci * cbm) * (1.0 + ei);
        let den = (2.0 * ci * ci * cbm + cmu * cs * (4.0 * ci + cbm)) * li;
        (num / den).sqrt() * 1e12
    };
    let w = [omega(c1, l1, e1), omega(c2, l2, e2)];
    let z0 = [2.0 * l1 * 1e-9 * w[0] / (1.0 + e1), 2.0 * l2 * 1e-9 * w[1] / (1.0 + e2)];
    let root = ((1.0 + e1) * (1.0 + e2) / ((4.0 * c1 + cbm) * (4.0 * c2 + cbm) * l1 * l2)).powf(0.25);
    let g_c = -cbm / 2.0 * root / (cbm * cs + 4.0 * c1 * c2).sqrt() * 1e12;
    Ok(CoupledResonators {
        omega_r_ghz: [w[0] / (2.0 * PI * 1e9), w[1] / (2.0 * PI * 1e9)],
        z0_ohm: z0,
        g_c_mhz: g_c / (2.0 * PI * 1e6),
    })
}

/// Coupled-resonator data from a 2×2 resonator capacitance block (fF) and
/// stiffnesses (GHz/rad²), by charge-basis quantization.
pub fn resonators_from_matrix(c_rr: &DMatrix<f64>, stiffness: [f64; 2]) -> Result<CoupledResonators> {
    let cinv = c_rr
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Structure("resonator capacitance block is singular".into()))?;
    let ec = cinv.map(|x| CHARGE_ENERGY * x);
    let mut w = [0.0; 2];
    let mut z = [0.0; 2];
    let mut zpf = [0.0; 2];
    for i in 0..2 {
        if !(stiffness[i] > 0.0 && ec[(i, i)] > 0.0) {
            return Err(Error::Domain("resonator stiffness and charging energy must be positive".into()));
        }
        w[i] = (8.0 * ec[(i, i)] * stiffness[i]).sqrt();
        zpf[i] = (2.0 * ec[(i, i)] / stiffness[i]).powf(0.25);
        z[i] = (FLUX_ENERGY / stiffness[i] * ec[(i, i)] / CHARGE_ENERGY).sqrt() * 1000.0;
    }
    // 8 E_C12 n1 n2 with n_i = i (a†−a)/(2 zpf_i)
    let g_c = -2.0 * ec[(0, 1)] / (zpf[0] * zpf[1]);
    Ok(CoupledResonators { omega_r_ghz: w, z0_ohm: z, g_c_mhz: g_c * 1000.0 })
}

/// Resonator stiffness P(1+η)/(2L) of a block (GHz/rad²).
pub fn block_resonator_stiffness(b: &BlockParams) -> f64 {
    FLUX_ENERGY * (1.0 + block_eta(b)) / (2.0 * b.device.l_mean())
}

/// Dressed frequencies ω_± (same unit as the inputs).
pub fn dressed_frequencies(omega1: f64, omega2: f64, g_c: f64) -> Result<(f64, f64)> {
    let mean = 0.5 * (omega1 * omega1 + omega2 * omega2);
    let disc = (omega1 * omega1 - omega2 * omega2).powi(2) + 16.0 * g_c * g_c * omega1 * omega2;
    if disc < 0.0 {
        return Err(Error::Domain("negative discriminant in dressed frequencies".into()));
    }
    let half = 0.5 * disc.sqrt();
    let minus = mean - half;
    if minus <= 0.0 {
        return Err(Error::Domain(format!("over-coupled resonators: omega_-^2 = {minus:.4e}")));
    }
    Ok(((mean + half).sqrt(), minus.sqrt()))
}

/// Normal-mode frequencies ω/2π (GHz) of a quadratic system with capacitance
/// matrix C (fF) and stiffness matrix K (GHz/rad²), ascending. Modes with zero
/// stiffness give zero frequency.
pub fn generalized_frequencies(c: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = c
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Structure("capacitance matrix is not positive definite".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Structure("singular Cholesky factor".into()))?;
    let m = &linv * k * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().map(|&l| (8.0 * CHARGE_ENERGY * l.max(0.0)).sqrt()).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Grid description consumed by the `grid` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub schema_version: u32,
    pub blocks: Vec<GridBlock>,
    pub links: Vec<GridLink>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBlock {
    pub name: String,
    /// Device preset name (k1, kn, add).
    pub preset: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub cg_ff: f64,
    #[serde(default)]
    pub phi_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLink {
    pub name: String,
    pub a: String,
    pub b: String,
    /// Coupling capacitance (fF); absent means fused resonator nodes.
    #[serde(default)]
    pub cb_ff: Option<f64>,
}

/// Per-link capacitance matrices and coupled-resonator data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub name: String,
    pub blocks: [String; 2],
    pub variables: Vec<String>,
    pub c_l: Vec<Vec<f64>>,
    pub c_tilde: Vec<Vec<f64>>,
    pub omega_r_ghz: [f64; 2],
    pub g_c_mhz: f64,
    pub omega_plus_ghz: f64,
    pub omega_minus_ghz: f64,
}

/// Plaquette result with the locality certificate of the assembled matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaquetteReport {
    pub links: Vec<LinkReport>,
    /// Largest entry of the reduced global matrix outside the allowed blocks,
    /// relative to its largest entry.
    pub max_offblock_rel: f64,
    pub locality_ok: bool,
    /// Number of distinct dressed frequencies across links.
    pub distinct_dressed: usize,
}

/// Link capacitance matrix over (x̄_i, x̄_j, r_i, r_j), or (x̄, r_i, r_j) when fused.
pub fn link_matrix(cg_i: f64, cg_j: f64, c_i: f64, c_j: f64, cb: Option<f64>) -> DMatrix<f64> {
    match cb {
        Some(cb) => DMatrix::from_row_slice(
            4,
            4,
            &[
                cb + 2.0 * cg_i,
                -cb,
                cg_i,
                0.0,
                -cb,
                cb + 2.0 * cg_j,
                0.0,
                cg_j,
                cg_i,
                0.0,
                (c_i + cg_i) / 2.0,
                0.0,
                0.0,
                cg_j,
                0.0,
                (c_j + cg_j) / 2.0,
            ],
        ),
        None => DMatrix::from_row_slice(
            3,
            3,
            &[2.0 * (cg_i + cg_j), cg_i, cg_j, cg_i, (c_i + cg_i) / 2.0, 0.0, cg_j, 0.0, (c_j + cg_j) / 2.0],
        ),
    }
}

fn aux_names(link: &str, fused: bool) -> Vec<String> {
    if fused {
        vec![format!("xbar_{link}")]
    } else {
        vec![format!("xbar_{link}_1"), format!("xbar_{link}_2")]
    }
}

/// Reduce a link matrix by eliminating its auxiliary (potential-free) variables.
fn reduce_link(c_l: &DMatrix<f64>, names: Vec<String>) -> Result<(DMatrix<f64>, ReductionReport)> {
    let n = c_l.nrows();
    let terms = (n - 2..n)
        .map(|i| {
            let mut row = DVector::zeros(n);
            row[i] = 1.0;
            Term {
                label: names[i].clone(),
                row,
                offset: PhaseOffset::default(),
                kind: TermKind::Quadratic { coef: 1.0 },
            }
        })
        .collect();
    let model = EnergyModel { var_names: names, cmat: c_l.clone(), terms };
    let (_, report) = eliminate_massless_or_potential_free(&model)?;
    let full = DMatrix::from_row_iterator(n, n, report.transformed_cmat.iter().flatten().copied());
    Ok((full, report))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Per-link matrices, dressed frequencies and the global locality check.
///
/// Every arm carries its own pair of ground capacitors C_g,i; the qubit
/// capacitance is Cq + Σ_l (C_il + C_g,i)/2 over the arms of that qubit.
pub fn plaquette_matrices(spec: &GridSpec) -> Result<PlaquetteReport> {
    let mut blocks = BTreeMap::new();
    for b in &spec.blocks {
        let mut d = DeviceParams::preset(&b.preset)?;
        for (k, v) in &b.params {
            d.set(k, *v)?;
        }
        if blocks.insert(b.name.clone(), BlockParams { device: d, cg_ff: b.cg_ff, phi_x: b.phi_x }).is_some() {
            return Err(Error::Configuration(format!("duplicate block `{}`", b.name)));
        }
    }
    let lookup = |n: &str| blocks.get(n).ok_or_else(|| Error::Configuration(format!("unknown block `{n}`")));
    // global variable list: qubits first, then per-link groups
    let block_names: Vec<&String> = blocks.keys().collect();
    let mut names: Vec<String> = block_names.iter().map(|n| format!("q_{n}")).collect();
    let mut groups: Vec<Vec<usize>> = (0..names.len()).map(|i| vec![i]).collect();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut links = Vec::new();
    for l in &spec.links {
        let (bi, bj) = (lookup(&l.a)?, lookup(&l.b)?);
        if l.a == l.b {
            return Err(Error::Configuration(format!("link `{}` joins a block to itself", l.name)));
        }
        let fused = l.cb_ff.is_none();
        let c_l = link_matrix(bi.cg_ff, bj.cg_ff, bi.device.c_ff, bj.device.c_ff, l.cb_ff);
        let mut local = aux_names(&l.name, fused);
        local.push(format!("r_{}_{}", l.name, l.a));
        local.push(format!("r_{}_{}", l.name, l.b));
        let (c_tilde, _) = reduce_link(&c_l, local.clone())?;
        let n = c_l.nrows();
        let c_rr = c_tilde.view((n - 2, n - 2), (2, 2)).into_owned();
        let cr = resonators_from_matrix(&c_rr, [block_resonator_stiffness(bi), block_resonator_stiffness(bj)])?;
        let (wp, wm) = dressed_frequencies(cr.omega_r_ghz[0], cr.omega_r_ghz[1], cr.g_c_mhz / 1000.0)?;
        let base = names.len();
        names.extend(local.iter().cloned());
        groups.push((base..base + n - 2).collect());
        groups.push((base + n - 2..base + n).collect());
        for r in 0..n {
            for c in 0..n {
                entries.push((base + r, base + c, c_l[(r, c)]));
            }
        }
        for (blk, b) in [(&l.a, bi), (&l.b, bj)] {
            let qi = block_names.iter().position(|n| *n == blk).unwrap_or(0);
            entries.push((qi, qi, (b.device.c_ff + b.cg_ff) / 2.0));
        }
        links.push(LinkReport {
            name: l.name.clone(),
            blocks: [l.a.clone(), l.b.clone()],
            variables: local,
            c_l: rows(&c_l),
            c_tilde: rows(&c_tilde),
            omega_r_ghz: cr.omega_r_ghz,
            g_c_mhz: cr.g_c_mhz,
            omega_plus_ghz: wp,
            omega_minus_ghz: wm,
        });
    }
    for (i, n) in block_names.iter().enumerate() {
        entries.push((i, i, blocks[*n].device.cq_ff));
    }
    let dim = names.len();
    let mut global = DMatrix::zeros(dim, dim);
    for (r, c, v) in entries {
        global[(r, c)] += v;
    }
    // eliminate every auxiliary variable at once and inspect the kept block
    let terms = (0..dim)
        .filter(|&i| !names[i].starts_with("xbar_"))
        .map(|i| {
            let mut row = DVector::zeros(dim);
            row[i] = 1.0;
            Term { label: names[i].clone(), row, offset: PhaseOffset::default(), kind: TermKind::Quadratic { coef: 1.0 } }
        })
        .collect();
    let model = EnergyModel { var_names: names.clone(), cmat: global, terms };
    let (reduced, _) = eliminate_massless_or_potential_free(&model)?;
    let group_of = |name: &str| groups.iter().position(|g| g.iter().any(|&i| names[i] == name));
    let scale = reduced.cmat.amax().max(f64::MIN_POSITIVE);
    let mut off = 0.0f64;
    for (a, na) in reduced.var_names.iter().enumerate() {
        for (b, nb) in reduced.var_names.iter().enumerate() {
            if group_of(na) != group_of(nb) {
                off = off.max(reduced.cmat[(a, b)].abs() / scale);
            }
        }
    }
    let mut dressed: Vec<f64> = links.iter().flat_map(|l| [l.omega_plus_ghz, l.omega_minus_ghz]).collect();
    dressed.sort_by(f64::total_cmp);
    dressed.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    Ok(PlaquetteReport { links, max_offblock_rel: off, locality_ok: off < 1e-12, distinct_dressed: dressed.len() })
}

/// Reduce the two-auxiliary-variable capacitance matrix over (x̄1, x̄2, r1, r2)
/// by successive unit-row transforms; returns the full transformed matrix.
pub fn two_block_tilde(cb: f64, cg1: f64, cg2: f64, c1: f64, c2: f64) -> Result<DMatrix<f64>> {
    let c = link_matrix(cg1, cg2, c1, c2, Some(cb));
    let names = vec!["xbar1".into(), "xbar2".into(), "r1".into(), "r2".into()];
    Ok(reduce_link(&c, names)?.0)
}

/// The self-consistent closed form of the reduced two-block matrix, with
/// resonator coupling C_bμ/8.
pub fn two_block_tilde_closed_form(cb: f64, cg1: f64, cg2: f64, c1: f64, c2: f64) -> DMatrix<f64> {
    let cgmu = pair_mean(cg1, cg2);
    let cbmu = pair_mean(cb, cgmu);
    let p2 = 2.0 * (cg1 + cg2) * (cb + cgmu) / (cb + 2.0 * cg1);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            cb + 2.0 * cg1,
            0.0,
            0.0,
            0.0,
            0.0,
            p2,
            0.0,
            0.0,
            0.0,
            0.0,
            c1 / 2.0 + cbmu / 8.0,
            -cbmu / 8.0,
            0.0,
            0.0,
            -cbmu / 8.0,
            c2 / 2.0 + cbmu / 8.0,
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::qubit_spectrum_closed_form;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn block(cg: f64) -> BlockParams {
        BlockParams { device: DeviceParams::k1(), cg_ff: cg, phi_x: 0.3 }
    }

    #[test]
    fn effective_cap_limits() {
        let e = effective_caps(5.0, 5.0, None, 100.0, 100.0).unwrap();
        assert_eq!(e.c_gmu, 5.0);
        assert_eq!(e.c_bmu, 10.0);
        let big = effective_caps(4.0, 7.0, Some(1e12), 1.0, 1.0).unwrap();
        assert!(rel(big.c_bmu, 2.0 * big.c_gmu) < 1e-10);
        assert_eq!(effective_caps(0.0, 7.0, Some(3.0), 1.0, 1.0).unwrap().c_bmu, 0.0);
        assert_eq!(effective_caps(4.0, 7.0, Some(0.0), 1.0, 1.0).unwrap().c_bmu, 0.0);
    }

    #[test]
    fn single_arm_matches_closed_form() {
        let p = DeviceParams::k1();
        let arm = ResonatorArm { c_ff: p.c_ff, l_nh: 4.5, ej_sigma: p.ej_sigma, k: 1, phi_x: 0.7 };
        let m = n_resonator_substitution(p.ej_q, p.cq_ff, &[arm]).unwrap();
        let q = qubit_spectrum_closed_form(&p, 0.7, 0.0).unwrap();
        assert!(rel(m.omega_ghz, q.omega_ghz) < 1e-12);
        assert!(rel(m.alpha_mhz, q.alpha_mhz) < 1e-12);
        let two = n_resonator_substitution(p.ej_q, p.cq_ff, &[arm, arm]).unwrap();
        assert!(rel(two.e_c, CHARGE_ENERGY / (p.cq_ff + p.c_ff)) < 1e-12);
        let four = n_resonator_substitution(p.ej_q, p.cq_ff, &[arm; 4]).unwrap();
        assert!(four.alpha_mhz.abs() < m.alpha_mhz.abs());
        assert!(four.warning.is_some());
    }

    #[test]
    fn fused_reduction_matches_closed_form() {
        let p = TwoBlockParams { blocks: [block(4.0), block(6.0)], cb_ff: None, cs_ff: 0.0 };
        let (c, report) = coupled_block_reduction(&p).unwrap();
        let caps = p.caps().unwrap();
        assert!(rel(c[(1, 3)], -caps.c_gmu / 4.0) < 1e-12);
        assert!(rel(c[(1, 1)], 114.0 / 2.0 + caps.c_gmu / 4.0) < 1e-12);
        assert!(rel(c[(0, 0)], 70.0 + (114.0 + 4.0) / 2.0) < 1e-12);
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(c[(0, 2)], 0.0);
        assert_eq!(report.kept_unchanged, vec!["q1", "r1", "q2", "r2"]);
    }

    #[test]
    fn capacitor_variant_and_limit() {
        let fused = TwoBlockParams { blocks: [block(4.0), block(6.0)], cb_ff: None, cs_ff: 0.0 };
        let cap = TwoBlockParams { cb_ff: Some(8.0), ..fused.clone() };
        let (c, _) = coupled_block_reduction(&cap).unwrap();
        let caps = cap.caps().unwrap();
        assert!(rel(c[(1, 3)], -caps.c_bmu / 8.0) < 1e-12);
        let huge = TwoBlockParams { cb_ff: Some(1e6 * caps.c_gmu), ..fused.clone() };
        let a = coupled_resonator_spectrum(&huge).unwrap();
        let b = coupled_resonator_spectrum(&fused).unwrap();
        assert!(rel(a.g_c_mhz, b.g_c_mhz) < 1e-4);
        assert!(rel(a.omega_r_ghz[0], b.omega_r_ghz[0]) < 1e-4);
        let off = TwoBlockParams { blocks: [block(0.0), block(6.0)], cb_ff: Some(8.0), cs_ff: 0.0 };
        let (c, _) = coupled_block_reduction(&off).unwrap();
        assert_eq!(c[(1, 3)], 0.0);
    }

    #[test]
    fn stray_rescaling() {
        let (g1, g2) = (4.0, 6.0);
        assert!(rel(stray_capacitance_rescale(g1, g2, 0.0), pair_mean(g1, g2) / 8.0) < 1e-14);
        let half = stray_capacitance_rescale(g1, g2, 2.0 * (g1 + g2));
        assert!(rel(half, 0.5 * stray_capacitance_rescale(g1, g2, 0.0)) < 1e-14);
        assert!(stray_capacitance_rescale(g1, g2, 1e15) < 1e-12);
        let p = TwoBlockParams { blocks: [block(g1), block(g2)], cb_ff: None, cs_ff: 3.0 };
        let (c, _) = coupled_block_reduction(&p).unwrap();
        assert!(rel(-c[(1, 3)] / 2.0, stray_capacitance_rescale(g1, g2, 3.0)) < 1e-12);
    }

    #[test]
    fn closed_form_and_matrix_paths_agree() {
        let p = TwoBlockParams { blocks: [block(4.0), BlockParams { phi_x: 1.1, ..block(6.0) }], cb_ff: Some(9.0), cs_ff: 0.0 };
        let cf = coupled_resonator_spectrum(&p).unwrap();
        let (c, _) = coupled_block_reduction(&p).unwrap();
        let c_rr = DMatrix::from_row_slice(2, 2, &[c[(1, 1)], c[(1, 3)], c[(3, 1)], c[(3, 3)]]);
        let m = resonators_from_matrix(&c_rr, [block_resonator_stiffness(&p.blocks[0]), block_resonator_stiffness(&p.blocks[1])]).unwrap();
        for i in 0..2 {
            assert!(rel(cf.omega_r_ghz[i], m.omega_r_ghz[i]) < 1e-10);
            assert!(rel(cf.z0_ohm[i], m.z0_ohm[i]) < 1e-10);
        }
        assert!(rel(cf.g_c_mhz, m.g_c_mhz) < 1e-10);
        assert!(cf.g_c_mhz < 0.0);
    }

    #[test]
    fn dressed_limits() {
        let (p, m) = dressed_frequencies(7.0, 6.5, 0.0).unwrap();
        assert_eq!((p, m), (7.0, 6.5));
        let (p, m) = dressed_frequencies(7.0, 7.0, 0.1).unwrap();
        assert!(rel(p * p, 49.0 + 2.0 * 0.1 * 7.0) < 1e-14);
        assert!(rel(m * m, 49.0 - 2.0 * 0.1 * 7.0) < 1e-14);
        assert!(dressed_frequencies(1.0, 1.0, 0.6).is_err());
    }

    #[test]
    fn fixed_bare_frequencies_give_eight_dressed_values() {
        let mut v: Vec<f64> = [0.01, 0.02, 0.03, 0.05]
            .iter()
            .flat_map(|&g| {
                let (p, m) = dressed_frequencies(7.0, 7.0, g).unwrap();
                [p, m]
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        assert_eq!(v.len(), 8);
    }

    #[test]
    fn app_b_reduction_pivots() {
        let (cb, g1, g2, c1, c2) = (7.0, 3.0, 5.0, 100.0, 90.0);
        let t = two_block_tilde(cb, g1, g2, c1, c2).unwrap();
        let e = two_block_tilde_closed_form(cb, g1, g2, c1, c2);
        assert!((t - e).amax() < 1e-12 * 100.0);
    }

    fn ring(cbs: [Option<f64>; 4], fluxes: [f64; 4]) -> GridSpec {
        let blocks = (1..=4)
            .map(|i| GridBlock {
                name: format!("Q{i}"),
                preset: "k1".into(),
                params: BTreeMap::new(),
                cg_ff: 5.0,
                phi_x: fluxes[i - 1],
            })
            .collect();
        let names = ["alpha", "beta", "gamma", "delta"];
        let links = (0..4)
            .map(|l| GridLink { name: names[l].into(), a: format!("Q{}", l + 1), b: format!("Q{}", (l + 1) % 4 + 1), cb_ff: cbs[l] })
            .collect();
        GridSpec { schema_version: 1, blocks, links }
    }

    #[test]
    fn plaquette_is_local_with_eight_frequencies() {
        let cbs = [Some(2.0), Some(4.0), Some(8.0), Some(16.0)];
        let r = plaquette_matrices(&ring(cbs, [0.1, 0.5, 0.9, 1.3])).unwrap();
        assert!(r.locality_ok, "{}", r.max_offblock_rel);
        assert_eq!(r.distinct_dressed, 8);
        // identical blocks: the in-phase mode never loads C_b, so all ω_+ coincide
        let same = plaquette_matrices(&ring(cbs, [0.0; 4])).unwrap();
        assert!(same.locality_ok);
        assert_eq!(same.distinct_dressed, 5);
        let w0 = same.links[0].omega_plus_ghz;
        assert!(same.links.iter().all(|l| rel(l.omega_plus_ghz, w0) < 1e-9));
        let fused = plaquette_matrices(&ring([None; 4], [0.0; 4])).unwrap();
        let caps = effective_caps(5.0, 5.0, None, 114.0, 114.0).unwrap();
        let t = &fused.links[0].c_tilde;
        assert!(rel(t[0][0], 2.0 * 10.0) < 1e-12);
        assert!(rel(-t[1][2], caps.c_gmu / 4.0) < 1e-12);
        let open = plaquette_matrices(&ring([Some(0.0), Some(4.0), Some(8.0), Some(16.0)], [0.0; 4])).unwrap();
        assert_eq!(open.links[0].c_tilde[2][3], 0.0);
        assert!(rel(open.links[0].c_tilde[2][2], 57.0) < 1e-12);
    }

    #[test]
    fn normal_mode_oracle_on_reduced_pair() {
        let p = TwoBlockParams { blocks: [block(4.0), block(6.0)], cb_ff: Some(5.0), cs_ff: 0.0 };
        let cf = coupled_resonator_spectrum(&p).unwrap();
        let (c, _) = coupled_block_reduction(&p).unwrap();
        let c_rr = DMatrix::from_row_slice(2, 2, &[c[(1, 1)], c[(1, 3)], c[(3, 1)], c[(3, 3)]]);
        let k = DMatrix::from_diagonal(&DVector::from_vec(vec![
            block_resonator_stiffness(&p.blocks[0]),
            block_resonator_stiffness(&p.blocks[1]),
        ]));
        let nm = generalized_frequencies(&c_rr, &k).unwrap();
        let (wp, wm) = dressed_frequencies(cf.omega_r_ghz[0], cf.omega_r_ghz[1], cf.g_c_mhz / 1000.0).unwrap();
        assert!(rel(wm, nm[0]) < 1e-10 && rel(wp, nm[1]) < 1e-10);
    }
}
