//! Energy models: capacitance matrix and potential over a variable basis.
//!
//! The kinetic energy is (Φ0/2π)²·½ φ̇ᵀ C φ̇ with C in fF; the potential is a
//! sum of terms, each a function of one linear combination of basis
//! variables plus a flux-dependent phase offset. All derivatives are analytic.

use crate::array::BranchPotential;
use crate::error::{Error, Result};
use crate::netlist::{
    assign_loop_fluxes, choose_spanning_tree, BranchKind, CircuitGraph, FluxMap, PhaseOffset, SpanningTree, TreeRule,
};
use crate::units::{CHARGE_ENERGY, FLUX_ENERGY};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Named linear combinations of node phases.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableBasis {
    pub names: Vec<String>,
    /// One row per variable, one column per node.
    pub rows: DMatrix<f64>,
    pub description: String,
}

impl VariableBasis {
    /// Validate that rows are independent and depend only on phase differences.
    pub fn new(names: Vec<String>, rows: DMatrix<f64>, description: impl Into<String>) -> Result<Self> {
        let (m, n) = rows.shape();
        if names.len() != m {
            return Err(Error::Shape(format!("{} names for {m} basis rows", names.len())));
        }
        if m + 1 != n {
            return Err(Error::Domain(format!("basis needs {} variables for {n} nodes, got {m}", n.saturating_sub(1))));
        }
        for i in 0..m {
            let s: f64 = rows.row(i).iter().sum();
            let scale: f64 = rows.row(i).iter().map(|x| x.abs()).sum();
            if s.abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::Domain(format!("variable '{}' depends on the overall phase", names[i])));
            }
        }
        let basis = Self { names, rows, description: description.into() };
        basis.node_transform()?;
        Ok(basis)
    }

    /// Default basis: every node phase relative to the ground node (or the last node).
    pub fn relative_to_ground(graph: &CircuitGraph) -> Self {
        let n = graph.nodes.len();
        let g = graph.ground.unwrap_or(n - 1);
        let mut names = Vec::new();
        let mut rows = DMatrix::zeros(n - 1, n);
        let mut r = 0;
        for i in (0..n).filter(|&i| i != g) {
            names.push(format!("phi_{}", graph.nodes[i]));
            rows[(r, i)] = 1.0;
            rows[(r, g)] = -1.0;
            r += 1;
        }
        Self { names, rows, description: format!("node phases relative to '{}'", graph.nodes[g]) }
    }

    /// Basis declared with `var` statements, if any.
    pub fn from_declarations(graph: &CircuitGraph) -> Result<Option<Self>> {
        if graph.variables.is_empty() {
            return Ok(None);
        }
        let mut rows = DMatrix::zeros(graph.variables.len(), graph.nodes.len());
        for (i, v) in graph.variables.iter().enumerate() {
            for &(node, c) in &v.coeffs {
                rows[(i, node)] += c;
            }
        }
        let names = graph.variables.iter().map(|v| v.name.clone()).collect();
        Self::new(names, rows, "declared variables").map(Some)
    }

    /// Map from basis coordinates to node phases (overall phase fixed to zero):
    /// an n × (n−1) matrix.
    pub fn node_transform(&self) -> Result<DMatrix<f64>> {
        let (m, n) = self.rows.shape();
        let mut t = DMatrix::zeros(n, n);
        t.view_mut((0, 0), (m, n)).copy_from(&self.rows);
        t.row_mut(m).fill(1.0);
        let inv = t.try_inverse().ok_or_else(|| Error::Domain("basis rows are linearly dependent".into()))?;
        Ok(inv.columns(0, m).into_owned())
    }
}

/// Shape of one potential term as a function of its argument s.
#[derive(Debug, Clone, PartialEq)]
pub enum TermKind {
    /// coef·s² (GHz).
    Quadratic { coef: f64 },
    /// −amplitude·cos(s/divisor) (GHz).
    Cosine { amplitude: f64, divisor: f64 },
    /// Added-inductance coupling branch; the offset is the branch's loop phase.
    ArrayBranch(BranchPotential),
}

/// One potential term: kind evaluated at s = row·φ + offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub label: String,
    pub row: DVector<f64>,
    pub offset: PhaseOffset,
    pub kind: TermKind,
}

impl TermKind {
    /// Value and first four derivatives with respect to the argument.
    fn derivs(&self, s: f64, offset: f64) -> [f64; 5] {
        match self {
            TermKind::Quadratic { coef } => {
                let s = s + offset;
                [coef * s * s, 2.0 * coef * s, 2.0 * coef, 0.0, 0.0]
            }
            TermKind::Cosine { amplitude, divisor } => {
                let a = (s + offset) / divisor;
                let (sn, cs) = a.sin_cos();
                let d = 1.0 / divisor;
                let a0 = *amplitude;
                [-a0 * cs, a0 * sn * d, a0 * cs * d * d, -a0 * sn * d.powi(3), -a0 * cs * d.powi(4)]
            }
            TermKind::ArrayBranch(bp) => bp.derivs(s, offset).unwrap_or([f64::NAN; 5]),
        }
    }
}

/// Circuit energy over a variable basis with flux symbols left unbound.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub var_names: Vec<String>,
    /// Capacitance matrix in fF.
    pub cmat: DMatrix<f64>,
    pub terms: Vec<Term>,
}

fn snap(x: f64) -> f64 {
    let d = 840.0;
    let r = (x * d).round() / d;
    if (x - r).abs() < 1e-12 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// Build the energy model of a circuit.
///
/// Without an explicit tree the inductor-first rule is used; without an
/// explicit basis the `var` declarations or the ground-relative default apply.
/// Impedance branches are environment ports and contribute no energy terms.
pub fn build_energy_model(
    graph: &CircuitGraph,
    tree: Option<&SpanningTree>,
    basis: Option<&VariableBasis>,
) -> Result<EnergyModel> {
    let owned_tree;
    let tree = match tree {
        Some(t) => t,
        None => {
            owned_tree = choose_spanning_tree(graph, TreeRule::Loose)?;
            &owned_tree
        }
    };
    let owned_basis;
    let basis = match basis {
        Some(b) => b,
        None => {
            owned_basis = match VariableBasis::from_declarations(graph)? {
                Some(b) => b,
                None => VariableBasis::relative_to_ground(graph),
            };
            &owned_basis
        }
    };
    if basis.rows.ncols() != graph.nodes.len() {
        return Err(Error::Shape(format!(
            "basis spans {} nodes, circuit has {}",
            basis.rows.ncols(),
            graph.nodes.len()
        )));
    }
    let t = basis.node_transform()?;
    let fluxes = assign_loop_fluxes(graph, tree)?;
    let m = basis.names.len();
    let mut cmat = DMatrix::zeros(m, m);
    let mut terms = Vec::new();
    for (i, br) in graph.branches.iter().enumerate() {
        let row = DVector::from_iterator(m, (0..m).map(|j| snap(t[(br.a, j)] - t[(br.b, j)])));
        let offset = fluxes.offsets[i].clone();
        let kind = match &br.kind {
            BranchKind::Capacitor { c_ff } => {
                cmat += &row * row.transpose() * *c_ff;
                continue;
            }
            BranchKind::Impedance { .. } => continue,
            BranchKind::Inductor { l_nh } => TermKind::Quadratic { coef: FLUX_ENERGY / (2.0 * l_nh) },
            BranchKind::Junction { ej_ghz } => TermKind::Cosine { amplitude: *ej_ghz, divisor: 1.0 },
            BranchKind::JunctionArray { ej_total_ghz, k, .. } => {
                TermKind::Cosine { amplitude: *ej_total_ghz, divisor: *k as f64 }
            }
        };
        terms.push(Term { label: br.name.clone(), row, offset, kind });
    }
    cmat.iter_mut().for_each(|x| *x = snap(*x));
    Ok(EnergyModel { var_names: basis.names.clone(), cmat, terms })
}

impl EnergyModel {
    pub fn dim(&self) -> usize {
        self.var_names.len()
    }

    /// Index of a variable by name.
    pub fn var(&self, name: &str) -> Result<usize> {
        self.var_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Configuration(format!("no variable '{name}'")))
    }

    /// Flux symbols referenced by the potential, sorted and deduplicated.
    pub fn flux_symbols(&self) -> Vec<String> {
        let mut v: Vec<String> = self.terms.iter().flat_map(|t| t.offset.flux.iter().map(|f| f.0.clone())).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Resolve all flux offsets.
    pub fn bind(&self, fluxes: &FluxMap) -> Result<BoundModel> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            terms.push(BoundTerm { row: t.row.clone(), offset: t.offset.eval(fluxes)?, kind: t.kind.clone() });
        }
        Ok(BoundModel { dim: self.dim(), cmat: self.cmat.clone(), terms })
    }

    /// Sum of inductive (quadratic) stiffness, ignoring offsets: Σ 2·coef·row rowᵀ.
    pub fn inductive_matrix(&self) -> DMatrix<f64> {
        let m = self.dim();
        let mut k = DMatrix::zeros(m, m);
        for t in &self.terms {
            if let TermKind::Quadratic { coef } = t.kind {
                k += &t.row * t.row.transpose() * (2.0 * coef);
            }
        }
        k
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BoundTerm {
    row: DVector<f64>,
    offset: f64,
    kind: TermKind,
}

/// Energy model with fluxes resolved; evaluation is pure.
///
/// Non-finite inputs produce NaN rather than an error.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundModel {
    dim: usize,
    pub cmat: DMatrix<f64>,
    terms: Vec<BoundTerm>,
}

impl BoundModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn each<F: FnMut(&DVector<f64>, [f64; 5])>(&self, phi: &DVector<f64>, mut f: F) {
        for t in &self.terms {
            let s = t.row.dot(phi);
            f(&t.row, t.kind.derivs(s, t.offset));
        }
    }

    /// Potential in GHz.
    pub fn value(&self, phi: &DVector<f64>) -> f64 {
        let mut v = 0.0;
        self.each(phi, |_, d| v += d[0]);
        v
    }

    pub fn gradient(&self, phi: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        self.each(phi, |row, d| g.axpy(d[1], row, 1.0));
        g
    }

    pub fn hessian(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        self.each(phi, |row, d| h += row * row.transpose() * d[2]);
        h
    }

    /// Mixed partial derivative; `orders[i]` is the derivative count in variable i
    /// (total order at most 4).
    pub fn partial(&self, phi: &DVector<f64>, orders: &[usize]) -> f64 {
        let total: usize = orders.iter().sum();
        assert!(total <= 4 && orders.len() == self.dim, "unsupported derivative multi-index");
        let mut v = 0.0;
        self.each(phi, |row, d| {
            let mut p = d[total];
            for (i, &o) in orders.iter().enumerate() {
                p *= row[i].powi(o as i32);
            }
            v += p;
        });
        v
    }

    /// Taylor coefficient ∂^α U / α! at `phi`.
    pub fn taylor_coefficient(&self, phi: &DVector<f64>, orders: &[usize]) -> f64 {
        let fact: f64 = orders.iter().map(|&o| (1..=o).product::<usize>() as f64).product();
        self.partial(phi, orders) / fact
    }
}

/// Kinetic part in charge form.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianForm {
    pub var_names: Vec<String>,
    /// Inverse capacitance matrix (1/fF).
    pub cinv: DMatrix<f64>,
    /// e²/(2h)·C⁻¹ in GHz, so that H_kin = 4 nᵀ E_C n with n = Q/2e.
    pub charging: DMatrix<f64>,
}

impl HamiltonianForm {
    /// Charging energy of one variable (GHz).
    pub fn charging_energy(&self, m: usize) -> f64 {
        self.charging[(m, m)]
    }

    /// Effective capacitance 1/(C⁻¹)_mm in fF.
    pub fn effective_capacitance(&self, m: usize) -> f64 {
        1.0 / self.cinv[(m, m)]
    }
}

/// Legendre transform of the kinetic term. A singular or indefinite
/// capacitance matrix signals that a variable must be eliminated first.
pub fn legendre_transform(model: &EnergyModel) -> Result<HamiltonianForm> {
    let c = &model.cmat;
    let sym = nalgebra::SymmetricEigen::new(c.clone());
    let max = sym.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = sym.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::Structure(
            "capacitance matrix is singular; eliminate the massless or potential-free variables first".into(),
        ));
    }
    let cinv = c.clone().try_inverse().ok_or_else(|| Error::Structure("capacitance matrix is singular".into()))?;
    let charging = &cinv * CHARGE_ENERGY;
    Ok(HamiltonianForm { var_names: model.var_names.clone(), cinv, charging })
}

/// Parity of a variable in a coupling term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// One of the four trigonometric coupling terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigTerm {
    /// "xx", "zx", "xz" or "zz" (qubit operator first).
    pub label: &'static str,
    /// Prefactor of the φ-dependent product at the given coupling flux.
    pub amplitude: f64,
    pub qubit_parity: Parity,
    pub resonator_parity: Parity,
}

/// The two symmetric coupling branches −A1 cos((φq+φr)/2k + φx/k) and
/// −A2 cos((φr−φq)/2k + φx/k), decomposed by parity.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingExpansion {
    pub k: f64,
    /// E_J1 + E_J2 (per-junction energies).
    pub ej_sigma: f64,
    /// E_J1 − E_J2.
    pub ej_delta: f64,
}

impl CouplingExpansion {
    /// Amplitudes at coupling flux φx (rad): with a = φq/2k, b = φr/2k,
    /// U_coupling = T1·sin a sin b + T2·cos a sin b + T3·sin a cos b + T4·cos a cos b.
    pub fn terms(&self, phi_x: f64) -> [TrigTerm; 4] {
        let k = self.k;
        let (s, c) = (phi_x / k).sin_cos();
        use Parity::{Even, Odd};
        [
            TrigTerm { label: "xx", amplitude: k * self.ej_delta * c, qubit_parity: Odd, resonator_parity: Odd },
            TrigTerm { label: "zx", amplitude: k * self.ej_sigma * s, qubit_parity: Even, resonator_parity: Odd },
            TrigTerm { label: "xz", amplitude: k * self.ej_delta * s, qubit_parity: Odd, resonator_parity: Even },
            TrigTerm { label: "zz", amplitude: -k * self.ej_sigma * c, qubit_parity: Even, resonator_parity: Even },
        ]
    }

    /// Sum of the four terms at (φq, φr).
    pub fn evaluate(&self, phi_x: f64, phi_q: f64, phi_r: f64) -> f64 {
        let (a, b) = (phi_q / (2.0 * self.k), phi_r / (2.0 * self.k));
        let t = self.terms(phi_x);
        t[0].amplitude * a.sin() * b.sin()
            + t[1].amplitude * a.cos() * b.sin()
            + t[2].amplitude * a.sin() * b.cos()
            + t[3].amplitude * a.cos() * b.cos()
    }
}

/// Locate the two coupling cosines in `model` and return their parity decomposition.
pub fn trig_expand_coupling(model: &EnergyModel, qubit_var: &str, res_var: &str) -> Result<CouplingExpansion> {
    let (q, r) = (model.var(qubit_var)?, model.var(res_var)?);
    let others_zero = |t: &Term| (0..model.dim()).filter(|&i| i != q && i != r).all(|i| t.row[i].abs() < 1e-14);
    let mut plus = None;
    let mut minus = None;
    for t in &model.terms {
        let TermKind::Cosine { amplitude, divisor } = t.kind else { continue };
        if !others_zero(t) || (t.row[r] - 0.5).abs() > 1e-12 || (t.row[q].abs() - 0.5).abs() > 1e-12 {
            continue;
        }
        let slot = if t.row[q] > 0.0 { &mut plus } else { &mut minus };
        if slot.is_some() {
            return Err(Error::Structure("more than two coupling branches found".into()));
        }
        *slot = Some((amplitude, divisor, t.offset.clone()));
    }
    let (Some((a1, k1, o1)), Some((a2, k2, o2))) = (plus, minus) else {
        return Err(Error::Structure("model lacks the symmetric two-branch coupling structure".into()));
    };
    let same_offset = o1.constant == o2.constant
        && o1.flux.len() == 1
        && o2.flux.len() == 1
        && (o1.flux[0].1 - o2.flux[0].1).abs() < 1e-12;
    if (k1 - k2).abs() > 0.0 || !same_offset {
        return Err(Error::Structure("coupling branches differ in junction count or flux threading".into()));
    }
    Ok(CouplingExpansion { k: k1, ej_sigma: (a1 + a2) / k1, ej_delta: (a1 - a2) / k1 })
}

/// Bind symbols to phases given in radians.
pub fn flux_map_from_phases(pairs: &[(&str, f64)]) -> FluxMap {
    pairs.iter().map(|&(s, phase)| (s.to_string(), phase / (2.0 * PI))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse;

    /// Qubit-resonator circuit with the (φq, φr) basis and loops oriented so
    /// both coupling junctions carry +φx.
    pub(crate) fn qubit_resonator(l1: f64, l2: f64, ej1: f64, ej2: f64, k: u32) -> CircuitGraph {
        let text = format!(
            "cap Cq 70fF a b\njj EJq 10GHz a b\ncap C1 114fF a c\nind L1 {l1}nH a c\njjarray J1 {}GHz k={k} a c\n\
             cap C2 114fF b c\nind L2 {l2}nH b c\njjarray J2 {}GHz k={k} b c\n\
             loop x1 J1:+ L1:-\nloop x2 J2:+ L2:-\nloop xb EJq:+ J2:+ J1:-\n\
             var q a:1 b:-1\nvar r a:1 b:1 c:-2\n",
            ej1 * k as f64,
            ej2 * k as f64
        );
        parse(&text).unwrap()
    }

    fn fluxes(x: f64, xb: f64) -> FluxMap {
        flux_map_from_phases(&[("x1", x), ("x2", x), ("xb", xb)])
    }

    #[test]
    fn kinetic_form_has_no_cross_term() {
        let g = qubit_resonator(4.5, 4.5, 10.8, 9.2, 1);
        let m = build_energy_model(&g, None, None).unwrap();
        // (2Cq + C)/4 and C/4 with the ½ of the kinetic energy absorbed into ½φ̇ᵀCφ̇
        assert!((m.cmat[(0, 0)] - (2.0 * 70.0 + 114.0) / 2.0).abs() < 1e-12);
        assert!((m.cmat[(1, 1)] - 114.0 / 2.0).abs() < 1e-12);
        assert_eq!(m.cmat[(0, 1)], 0.0);
    }

    #[test]
    fn potential_matches_closed_form() {
        let (l, ej1, ej2, ejq, k) = (4.5, 10.8, 9.2, 10.0, 3u32);
        let g = qubit_resonator(l, l, ej1, ej2, k);
        let m = build_energy_model(&g, None, None).unwrap();
        let (x, xb) = (0.7, 0.4);
        let b = m.bind(&fluxes(x, xb)).unwrap();
        let kf = k as f64;
        for (q, r) in [(0.0, 0.0), (0.3, -1.2), (-2.0, 0.5)] {
            let u = FLUX_ENERGY * (q * q + r * r) / (4.0 * l) - ejq * (q + xb + 0.0).cos()
                - kf * ej1 * (((r + q) / 2.0 + x) / kf).cos()
                - kf * ej2 * (((r - q) / 2.0 + x) / kf).cos();
            let v = b.value(&DVector::from_vec(vec![q, r]));
            assert!((u - v).abs() < 1e-10, "{u} vs {v}");
        }
    }

    #[test]
    fn inductive_cross_term_from_asymmetry() {
        let text = "cap C1 60fF a c\ncap C2 40fF b c\ncap Cq 10fF a b\nind L1 4nH a c\nind L2 5nH b c\n\
                    var Q a:1 b:-1\nvar R a:1 b:1 c:-2\n";
        let g = parse(text).unwrap();
        let m = build_energy_model(&g, None, None).unwrap();
        assert!((m.cmat[(0, 1)] - (60.0 - 40.0) / 4.0).abs() < 1e-12);
        let kmat = m.inductive_matrix();
        let expected = FLUX_ENERGY * (5.0 - 4.0) / (4.0 * 4.0 * 5.0);
        assert!(kmat[(0, 0)] > 0.0);
        assert!((kmat[(0, 1)] - expected).abs() < 1e-12);
    }

    #[test]
    fn legendre_of_resonator_and_singular_rejection() {
        let g = parse("cap C 114fF a b\nind L 4.5nH a b\n").unwrap();
        let m = build_energy_model(&g, None, None).unwrap();
        let h = legendre_transform(&m).unwrap();
        assert!((h.effective_capacitance(0) - 114.0).abs() < 1e-12);
        assert!((h.charging_energy(0) - CHARGE_ENERGY / 114.0).abs() < 1e-15);
        let singular = EnergyModel { var_names: vec!["a".into(), "b".into()], cmat: DMatrix::from_element(2, 2, 1.0), terms: vec![] };
        assert!(matches!(legendre_transform(&singular), Err(Error::Structure(_))));
    }

    #[test]
    fn qubit_charging_energy() {
        let g = qubit_resonator(4.5, 4.5, 10.0, 10.0, 1);
        let h = legendre_transform(&build_energy_model(&g, None, None).unwrap()).unwrap();
        // E_C = e²/(2(2Cq + C)/2)... (2e n)²/(2Cq + C) = 4 E_C n² with C_eff = (2Cq + C)/2
        assert!((h.effective_capacitance(0) - (2.0 * 70.0 + 114.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn trig_expansion_limits() {
        let g = qubit_resonator(4.5, 4.5, 10.8, 9.2, 1);
        let m = build_energy_model(&g, None, None).unwrap();
        let e = trig_expand_coupling(&m, "q", "r").unwrap();
        assert!((e.ej_sigma - 20.0).abs() < 1e-12 && (e.ej_delta - 1.6).abs() < 1e-12);
        let t = e.terms(PI / 2.0);
        assert!(t[0].amplitude.abs() < 1e-12 && t[3].amplitude.abs() < 1e-12);
        let t = e.terms(0.0);
        assert!(t[1].amplitude == 0.0 && t[2].amplitude == 0.0);
        let sym = trig_expand_coupling(&build_energy_model(&qubit_resonator(4.5, 4.5, 10.0, 10.0, 2), None, None).unwrap(), "q", "r").unwrap();
        for x in [0.0, 1.0, 2.5] {
            let t = sym.terms(x);
            assert_eq!(t[0].amplitude, 0.0);
            assert_eq!(t[2].amplitude, 0.0);
        }
        // the decomposition reproduces the two coupling cosines
        let x = 0.9;
        let b = m.bind(&fluxes(x, 0.0)).unwrap();
        for (q, r) in [(0.2, 0.1), (-1.0, 2.0)] {
            let phi = DVector::from_vec(vec![q, r]);
            let total = b.value(&phi);
            let rest = FLUX_ENERGY * (q * q + r * r) / (4.0 * 4.5) - 10.0 * q.cos();
            assert!((total - rest - e.evaluate(x, q, r)).abs() < 1e-10);
        }
    }

    #[test]
    fn trig_expansion_rejects_other_structures() {
        let g = parse("cap C 114fF a b\nind L 4.5nH a b\njj J 5GHz a b\nvar q a:1 b:-1\n").unwrap();
        let m = build_energy_model(&g, None, None).unwrap();
        assert!(matches!(trig_expand_coupling(&m, "q", "q"), Err(Error::Structure(_))));
    }

    #[test]
    fn symmetric_mixed_derivative() {
        for (ej1, ej2) in [(10.8, 9.2), (10.0, 10.0)] {
            let k = 2u32;
            let m = build_energy_model(&qubit_resonator(4.5, 4.5, ej1, ej2, k), None, None).unwrap();
            let b = m.bind(&fluxes(0.0, 0.0)).unwrap();
            let mixed = b.partial(&DVector::zeros(2), &[1, 1]);
            assert!((mixed - (ej1 - ej2) / (4.0 * k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_change_consistency() {
        let g = qubit_resonator(4.0, 5.0, 10.8, 9.2, 1);
        let m1 = build_energy_model(&g, None, None).unwrap();
        let ground = VariableBasis::relative_to_ground(&g);
        let m2 = build_energy_model(&g, None, Some(&ground)).unwrap();
        let (b1, b2) = (m1.bind(&fluxes(0.4, 0.2)).unwrap(), m2.bind(&fluxes(0.4, 0.2)).unwrap());
        // ground basis: (φa − φc, φb − φc); q = va − vb, r = va + vb
        for (va, vb) in [(0.1, 0.2), (-1.0, 0.7)] {
            let v1 = DVector::from_vec(vec![va - vb, va + vb]);
            let v2 = DVector::from_vec(vec![va, vb]);
            assert!((b1.value(&v1) - b2.value(&v2)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_overall_phase_basis() {
        let rows = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(VariableBasis::new(vec!["s".into()], rows, "").is_err());
    }
}
