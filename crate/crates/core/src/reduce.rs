//! Exact elimination of superfluous degrees of freedom.
//!
//! A variable with capacitance but no potential (or potential but no
//! capacitance) is decoupled by a congruence with a unit-row transform whose
//! distinguished row is the variable's row of the relevant quadratic form,
//! divided by its pivot. The decoupled variable is then dropped.

use crate::error::{Error, Result};
use crate::lagrangian::{EnergyModel, Term, TermKind};
use crate::netlist::{Branch, BranchKind, CircuitGraph};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Relative zero threshold for quadratic-form and potential coefficients.
pub const ZERO_THRESHOLD: f64 = 1e-14;

/// Record of an elimination, serializable for the CLI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    /// Variables of the input model, in order.
    pub variables: Vec<String>,
    pub eliminated: Vec<String>,
    /// "potential_free" or "massless", one entry per eliminated variable.
    pub eliminated_kind: Vec<String>,
    /// Composite transform R (new variables = R·old), row-major.
    pub transform: Vec<Vec<f64>>,
    /// Capacitance matrix (R⁻¹)ᵀ C R⁻¹ before the decoupled rows are dropped.
    pub transformed_cmat: Vec<Vec<f64>>,
    /// Kept variables whose rows of R are identity rows.
    pub kept_unchanged: Vec<String>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Unit-row transform: identity with row `c` replaced by `q[c,:]/q[c,c]`.
fn unit_row_transform(q: &DMatrix<f64>, c: usize) -> DMatrix<f64> {
    let n = q.nrows();
    let mut r = DMatrix::identity(n, n);
    let piv = q[(c, c)];
    for j in 0..n {
        r[(c, j)] = q[(c, j)] / piv;
    }
    r
}

/// Inverse of a unit-row transform (identity except row `c`, with r[c,c] = 1).
fn unit_row_inverse(r: &DMatrix<f64>, c: usize) -> DMatrix<f64> {
    let n = r.nrows();
    let mut inv = DMatrix::identity(n, n);
    for j in (0..n).filter(|&j| j != c) {
        inv[(c, j)] = -r[(c, j)];
    }
    inv
}

fn clean(m: &mut DMatrix<f64>, scale: f64) {
    m.iter_mut().for_each(|x| {
        if x.abs() < 1e-13 * scale {
            *x = 0.0
        }
    });
}

enum Candidate {
    PotentialFree,
    Massless,
}

fn classify(model: &EnergyModel, c: usize) -> Option<Candidate> {
    let cmax = model.cmat.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let rmax = model.terms.iter().flat_map(|t| t.row.iter()).fold(0.0f64, |a, &b| a.max(b.abs()));
    let kinetic = model.cmat.row(c).iter().any(|x| x.abs() > ZERO_THRESHOLD * cmax);
    let potential = model.terms.iter().any(|t| t.row[c].abs() > ZERO_THRESHOLD * rmax);
    match (kinetic, potential) {
        (true, false) => Some(Candidate::PotentialFree),
        (false, true) => Some(Candidate::Massless),
        _ => None,
    }
}

/// Remove every variable that appears in exactly one of the kinetic and
/// potential energies, one at a time in name order.
pub fn eliminate_massless_or_potential_free(model: &EnergyModel) -> Result<(EnergyModel, ReductionReport)> {
    let n = model.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| model.var_names[a].cmp(&model.var_names[b]));
    let mut cmat = model.cmat.clone();
    let mut terms = model.terms.clone();
    let mut r_total = DMatrix::<f64>::identity(n, n);
    let mut eliminated = Vec::new();
    let mut kinds = Vec::new();
    let cscale = cmat.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    for c in order {
        let current = EnergyModel { var_names: model.var_names.clone(), cmat: cmat.clone(), terms: terms.clone() };
        let r = match classify(&current, c) {
            Some(Candidate::PotentialFree) => {
                let r = unit_row_transform(&cmat, c);
                let rinv = unit_row_inverse(&r, c);
                cmat = rinv.transpose() * &cmat * &rinv;
                clean(&mut cmat, cscale);
                kinds.push("potential_free".to_string());
                r
            }
            Some(Candidate::Massless) => {
                let (r, new_terms) = eliminate_massless(&terms, c, &model.var_names[c])?;
                terms = new_terms;
                kinds.push("massless".to_string());
                r
            }
            None => continue,
        };
        r_total = r * r_total;
        eliminated.push(c);
    }
    let kept: Vec<usize> = (0..n).filter(|i| !eliminated.contains(i)).collect();
    let kept_unchanged = kept
        .iter()
        .filter(|&&i| (0..n).all(|j| r_total[(i, j)] == if i == j { 1.0 } else { 0.0 }))
        .map(|&i| model.var_names[i].clone())
        .collect();
    let reduced = EnergyModel {
        var_names: kept.iter().map(|&i| model.var_names[i].clone()).collect(),
        cmat: cmat.select_rows(&kept).select_columns(&kept),
        terms: terms
            .into_iter()
            .map(|t| Term { row: DVector::from_iterator(kept.len(), kept.iter().map(|&i| t.row[i])), ..t })
            .collect(),
    };
    let report = ReductionReport {
        variables: model.var_names.clone(),
        eliminated: eliminated.iter().map(|&i| model.var_names[i].clone()).collect(),
        eliminated_kind: kinds,
        transform: to_rows(&r_total),
        transformed_cmat: to_rows(&cmat),
        kept_unchanged,
    };
    Ok((reduced, report))
}

/// Minimize the inductive energy over a variable without capacitance. Each
/// quadratic term coef·(ρ·φ + o)² is rewritten with the minimizer substituted,
/// which shifts offsets linearly in the loop fluxes.
fn eliminate_massless(terms: &[Term], c: usize, name: &str) -> Result<(DMatrix<f64>, Vec<Term>)> {
    let n = terms.first().map_or(0, |t| t.row.len());
    let mut stiff = DMatrix::<f64>::zeros(n, n);
    let mut offset = crate::netlist::PhaseOffset::default();
    let mut denom = 0.0;
    for t in terms.iter().filter(|t| t.row[c] != 0.0) {
        match t.kind {
            TermKind::Quadratic { coef } => {
                stiff += &t.row * t.row.transpose() * (2.0 * coef);
                denom += coef * t.row[c] * t.row[c];
                offset = offset.add_scaled(&t.offset, coef * t.row[c]);
            }
            _ => {
                return Err(Error::Structure(format!(
                    "variable '{name}' enters the nonlinear term '{}' and cannot be eliminated",
                    t.label
                )))
            }
        }
    }
    // φ_c = Σ_j w_j φ_j + shift at the minimum
    let mut w = DVector::zeros(n);
    for t in terms.iter().filter(|t| t.row[c] != 0.0) {
        if let TermKind::Quadratic { coef } = t.kind {
            for j in (0..n).filter(|&j| j != c) {
                w[j] -= coef * t.row[c] * t.row[j] / denom;
            }
        }
    }
    let shift = crate::netlist::PhaseOffset::default().add_scaled(&offset, -1.0 / denom);
    let new_terms = terms
        .iter()
        .map(|t| {
            if t.row[c] == 0.0 {
                return t.clone();
            }
            let rc = t.row[c];
            let mut row = t.row.clone();
            row[c] = 0.0;
            row.axpy(rc, &w, 1.0);
            Term { label: t.label.clone(), row, offset: t.offset.add_scaled(&shift, rc), kind: t.kind.clone() }
        })
        .collect();
    Ok((unit_row_transform(&stiff, c), new_terms))
}

/// Merge parallel and series capacitors and inductors. Junctions, arrays and
/// impedances are never merged; branches named in loops and nodes named in
/// `var` statements or as ground are left alone.
pub fn series_parallel_simplify(graph: &CircuitGraph) -> CircuitGraph {
    let mut g = graph.clone();
    loop {
        if let Some(next) = merge_parallel(&g).or_else(|| merge_series(&g)) {
            g = next;
        } else {
            return g;
        }
    }
}

fn linear_pair(a: &BranchKind, b: &BranchKind, series: bool) -> Option<BranchKind> {
    match (a, b) {
        (BranchKind::Capacitor { c_ff: x }, BranchKind::Capacitor { c_ff: y }) => {
            Some(BranchKind::Capacitor { c_ff: if series { x * y / (x + y) } else { x + y } })
        }
        (BranchKind::Inductor { l_nh: x }, BranchKind::Inductor { l_nh: y }) => {
            Some(BranchKind::Inductor { l_nh: if series { x + y } else { x * y / (x + y) } })
        }
        _ => None,
    }
}

fn in_loop(g: &CircuitGraph, b: usize) -> bool {
    g.loops.iter().any(|l| l.branches.iter().any(|&(i, _)| i == b))
}

fn remove_branches(g: &CircuitGraph, drop: &[usize], add: Branch) -> CircuitGraph {
    let mut out = g.clone();
    let keep: Vec<usize> = (0..g.branches.len()).filter(|i| !drop.contains(i)).collect();
    let map: Vec<Option<usize>> = (0..g.branches.len()).map(|i| keep.iter().position(|&k| k == i)).collect();
    out.branches = keep.iter().map(|&i| g.branches[i].clone()).collect();
    out.branches.push(add);
    for l in out.loops.iter_mut() {
        for item in l.branches.iter_mut() {
            item.0 = map[item.0].expect("loop branches are never merged");
        }
    }
    out
}

fn merge_parallel(g: &CircuitGraph) -> Option<CircuitGraph> {
    for i in 0..g.branches.len() {
        for j in i + 1..g.branches.len() {
            let (a, b) = (&g.branches[i], &g.branches[j]);
            let same_nodes = (a.a == b.a && a.b == b.b) || (a.a == b.b && a.b == b.a);
            if !same_nodes || in_loop(g, i) || in_loop(g, j) {
                continue;
            }
            if let Some(kind) = linear_pair(&a.kind, &b.kind, false) {
                let merged = Branch { name: format!("{}_{}", a.name, b.name), kind, a: a.a, b: a.b };
                return Some(remove_branches(g, &[i, j], merged));
            }
        }
    }
    None
}

fn merge_series(g: &CircuitGraph) -> Option<CircuitGraph> {
    for node in 0..g.nodes.len() {
        if g.ground == Some(node) || g.variables.iter().any(|v| v.coeffs.iter().any(|&(n, _)| n == node)) {
            continue;
        }
        let incident: Vec<usize> = (0..g.branches.len()).filter(|&i| g.branches[i].a == node || g.branches[i].b == node).collect();
        if incident.len() != 2 || incident.iter().any(|&i| in_loop(g, i)) {
            continue;
        }
        let (x, y) = (&g.branches[incident[0]], &g.branches[incident[1]]);
        let far = |b: &Branch| if b.a == node { b.b } else { b.a };
        let (p, q) = (far(x), far(y));
        if p == q {
            continue;
        }
        let Some(kind) = linear_pair(&x.kind, &y.kind, true) else { continue };
        let merged = Branch { name: format!("{}_{}", x.name, y.name), kind, a: p, b: q };
        let mut out = remove_branches(g, &incident, merged);
        // drop the interior node and shift indices above it
        out.nodes.remove(node);
        let fix = |n: usize| if n > node { n - 1 } else { n };
        for b in out.branches.iter_mut() {
            b.a = fix(b.a);
            b.b = fix(b.b);
        }
        out.ground = out.ground.map(fix);
        for v in out.variables.iter_mut() {
            for item in v.coeffs.iter_mut() {
                item.0 = fix(item.0);
            }
        }
        return Some(out);
    }
    None
}
