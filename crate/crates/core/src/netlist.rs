//! Line-oriented circuit netlist: parsing, validation, spanning trees and
//! external-flux assignment.
//!
//! Statements (one per line, `#` starts a comment):
//!
//! ```text
//! node <name>
//! cap <name> <value>fF <a> <b>
//! ind <name> <value>nH <a> <b>
//! jj <name> <EJ>GHz <a> <b>
//! jjarray <name> <EJ_total>GHz k=<int> [cj=<value>fF] <a> <b>
//! imp <name> R=<ohm> Cz=<value>fF <a> <b>
//! loop <flux_symbol> <branch>:<+|-> ...
//! ground <node>
//! var <name> <node>:<coef> ...
//! ```
//!
//! A `+` orientation traverses a branch from its first to its second node.
//! `var` statements fix the variable basis used by the energy model; without
//! them node phases are measured against the ground node.

use crate::array::array_guard;
use crate::error::{Error, Result};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Element carried by a branch, in canonical units.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchKind {
    Capacitor { c_ff: f64 },
    Inductor { l_nh: f64 },
    Junction { ej_ghz: f64 },
    /// `ej_total_ghz` is k times the per-junction energy; `cj_ff` only feeds the guards.
    JunctionArray { ej_total_ghz: f64, k: u32, cj_ff: Option<f64> },
    Impedance { r_ohm: f64, cz_ff: f64 },
}

impl BranchKind {
    fn is_josephson_or_bath(&self) -> bool {
        matches!(self, BranchKind::Junction { .. } | BranchKind::JunctionArray { .. } | BranchKind::Impedance { .. })
    }
}

/// A two-terminal element between nodes `a` and `b` (indices into the node list).
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub name: String,
    pub kind: BranchKind,
    pub a: usize,
    pub b: usize,
}

/// A declared flux loop: an oriented closed chain of branches.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxLoop {
    pub symbol: String,
    /// (branch index, orientation ±1)
    pub branches: Vec<(usize, i8)>,
}

/// A declared basis variable as a combination of node phases.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
}

/// Validated circuit graph.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitGraph {
    pub nodes: Vec<String>,
    pub branches: Vec<Branch>,
    pub loops: Vec<FluxLoop>,
    pub ground: Option<usize>,
    pub variables: Vec<VarDecl>,
}

/// Tree-selection convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TreeRule {
    /// Junctions, arrays and impedances first, then inductors. A cycle made
    /// only of the first group is rejected.
    #[default]
    Burkard,
    /// Inductors first, then junctions, arrays and impedances; never fails.
    Loose,
}

/// Tree/chord partition of the branches.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    pub tree_branches: Vec<usize>,
    pub chord_branches: Vec<usize>,
}

/// Phase offset `constant + 2π Σ coef·Φ_symbol`, with fluxes in Φ0 fractions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseOffset {
    pub constant: f64,
    pub flux: Vec<(String, f64)>,
}

/// Bound flux values in Φ0 fractions, keyed by symbol.
pub type FluxMap = BTreeMap<String, f64>;

impl PhaseOffset {
    /// Offset of `coef·2πΦ_symbol`.
    pub fn flux(symbol: &str, coef: f64) -> Self {
        Self { constant: 0.0, flux: vec![(symbol.to_string(), coef)] }
    }

    /// Evaluate in radians; every symbol must be bound.
    pub fn eval(&self, fluxes: &FluxMap) -> Result<f64> {
        let mut v = self.constant;
        for (sym, coef) in &self.flux {
            let phi = fluxes
                .get(sym)
                .ok_or_else(|| Error::Configuration(format!("flux symbol '{sym}' is not bound")))?;
            v += coef * 2.0 * PI * phi;
        }
        Ok(v)
    }

    /// Linear combination self + s·other.
    pub fn add_scaled(&self, other: &PhaseOffset, s: f64) -> PhaseOffset {
        let mut map: BTreeMap<String, f64> = self.flux.iter().cloned().collect();
        for (sym, c) in &other.flux {
            *map.entry(sym.clone()).or_insert(0.0) += s * c;
        }
        PhaseOffset {
            constant: self.constant + s * other.constant,
            flux: map.into_iter().filter(|(_, c)| c.abs() > 1e-14).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.flux.is_empty()
    }
}

/// Per-branch phase offsets from the loop fluxes; tree branches carry none.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxAssignment {
    pub offsets: Vec<PhaseOffset>,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

struct Tok<'a> {
    text: &'a str,
    col: usize,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Tok { text: &line[s..i], col: line[..s].chars().count() + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Tok { text: &line[s..], col: line[..s].chars().count() + 1 });
    }
    out
}

/// Parse a number with one of the allowed unit suffixes, returning the canonical value.
fn parse_quantity(tok: &Tok, line: usize, units: &[(&str, f64)]) -> Result<f64> {
    for (suffix, scale) in units {
        if let Some(num) = tok.text.strip_suffix(suffix) {
            if let Ok(v) = num.parse::<f64>() {
                return positive(v * scale, tok, line);
            }
        }
    }
    let wanted: Vec<&str> = units.iter().map(|u| u.0).collect();
    Err(parse_err(line, tok.col, format!("expected a number with unit {wanted:?}, got '{}'", tok.text)))
}

fn positive(v: f64, tok: &Tok, line: usize) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(parse_err(line, tok.col, format!("element value must be positive, got '{}'", tok.text)))
    }
}

const CAP_UNITS: &[(&str, f64)] = &[("fF", 1.0), ("pF", 1e3)];
const IND_UNITS: &[(&str, f64)] = &[("nH", 1.0), ("pH", 1e-3), ("uH", 1e3)];
const EJ_UNITS: &[(&str, f64)] = &[("GHz", 1.0), ("MHz", 1e-3)];

struct Builder {
    nodes: Vec<String>,
    node_index: HashMap<String, usize>,
    declared: Vec<(usize, usize, usize)>,
    branches: Vec<Branch>,
    branch_index: HashMap<String, usize>,
    pending_loops: Vec<(usize, String, Vec<(String, i8, usize)>)>,
    pending_vars: Vec<(usize, String, Vec<(String, f64, usize)>)>,
    ground: Option<(String, usize, usize)>,
}

impl Builder {
    fn node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.node_index.get(name) {
            return i;
        }
        self.nodes.push(name.to_string());
        self.node_index.insert(name.to_string(), self.nodes.len() - 1);
        self.nodes.len() - 1
    }
}

fn valid_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
}

/// Parse netlist text into a validated graph.
pub fn parse(text: &str) -> Result<CircuitGraph> {
    let mut b = Builder {
        nodes: Vec::new(),
        node_index: HashMap::new(),
        declared: Vec::new(),
        branches: Vec::new(),
        branch_index: HashMap::new(),
        pending_loops: Vec::new(),
        pending_vars: Vec::new(),
        ground: None,
    };
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks = tokenize(content);
        let Some(head) = toks.first() else { continue };
        match head.text {
            "node" => {
                if toks.len() != 2 || !valid_ident(toks[1].text) {
                    return Err(parse_err(line_no, head.col, "expected: node <name>"));
                }
                let idx = b.node(toks[1].text);
                b.declared.push((idx, line_no, toks[1].col));
            }
            "cap" | "ind" | "jj" | "jjarray" | "imp" => parse_branch(&mut b, &toks, line_no)?,
            "loop" => {
                if toks.len() < 3 || !valid_ident(toks[1].text) {
                    return Err(parse_err(line_no, head.col, "expected: loop <symbol> <branch>:<+|-> ..."));
                }
                let mut items = Vec::new();
                for t in &toks[2..] {
                    let (name, sign) = t
                        .text
                        .rsplit_once(':')
                        .ok_or_else(|| parse_err(line_no, t.col, format!("expected <branch>:<+|->, got '{}'", t.text)))?;
                    let s = match sign {
                        "+" => 1,
                        "-" => -1,
                        _ => return Err(parse_err(line_no, t.col, format!("orientation must be + or -, got '{sign}'"))),
                    };
                    items.push((name.to_string(), s, t.col));
                }
                b.pending_loops.push((line_no, toks[1].text.to_string(), items));
            }
            "ground" => {
                if toks.len() != 2 {
                    return Err(parse_err(line_no, head.col, "expected: ground <node>"));
                }
                if b.ground.is_some() {
                    return Err(parse_err(line_no, head.col, "ground declared twice"));
                }
                b.ground = Some((toks[1].text.to_string(), line_no, toks[1].col));
            }
            "var" => {
                if toks.len() < 3 || !valid_ident(toks[1].text) {
                    return Err(parse_err(line_no, head.col, "expected: var <name> <node>:<coef> ..."));
                }
                let mut items = Vec::new();
                for t in &toks[2..] {
                    let (node, coef) = t
                        .text
                        .rsplit_once(':')
                        .ok_or_else(|| parse_err(line_no, t.col, format!("expected <node>:<coef>, got '{}'", t.text)))?;
                    let c = coef
                        .parse::<f64>()
                        .ok()
                        .filter(|c| c.is_finite())
                        .ok_or_else(|| parse_err(line_no, t.col, format!("invalid coefficient '{coef}'")))?;
                    items.push((node.to_string(), c, t.col));
                }
                b.pending_vars.push((line_no, toks[1].text.to_string(), items));
            }
            other => return Err(parse_err(line_no, head.col, format!("unknown statement '{other}'"))),
        }
    }
    finish(b)
}

fn parse_branch(b: &mut Builder, toks: &[Tok], line: usize) -> Result<()> {
    let head = &toks[0];
    let usage = |n: usize| -> Result<()> {
        if toks.len() != n {
            Err(parse_err(line, head.col, format!("'{}' expects {} fields, got {}", head.text, n - 1, toks.len() - 1)))
        } else {
            Ok(())
        }
    };
    let (kind, na, nb) = match head.text {
        "cap" => {
            usage(5)?;
            (BranchKind::Capacitor { c_ff: parse_quantity(&toks[2], line, CAP_UNITS)? }, 3, 4)
        }
        "ind" => {
            usage(5)?;
            (BranchKind::Inductor { l_nh: parse_quantity(&toks[2], line, IND_UNITS)? }, 3, 4)
        }
        "jj" => {
            usage(5)?;
            (BranchKind::Junction { ej_ghz: parse_quantity(&toks[2], line, EJ_UNITS)? }, 3, 4)
        }
        "jjarray" => {
            if toks.len() != 6 && toks.len() != 7 {
                return Err(parse_err(line, head.col, "expected: jjarray <name> <EJ>GHz k=<int> [cj=<v>fF] <a> <b>"));
            }
            let ej = parse_quantity(&toks[2], line, EJ_UNITS)?;
            let kt = &toks[3];
            let k = kt
                .text
                .strip_prefix("k=")
                .and_then(|v| v.parse::<u32>().ok())
                .filter(|&k| k >= 1)
                .ok_or_else(|| parse_err(line, kt.col, format!("expected k=<integer >= 1>, got '{}'", kt.text)))?;
            let cj = if toks.len() == 7 {
                let ct = &toks[4];
                let v = ct
                    .text
                    .strip_prefix("cj=")
                    .ok_or_else(|| parse_err(line, ct.col, format!("expected cj=<value>fF, got '{}'", ct.text)))?;
                Some(parse_quantity(&Tok { text: v, col: ct.col + 3 }, line, CAP_UNITS)?)
            } else {
                None
            };
            let n = toks.len();
            (BranchKind::JunctionArray { ej_total_ghz: ej, k, cj_ff: cj }, n - 2, n - 1)
        }
        _ => {
            usage(6)?;
            let rt = &toks[2];
            let r = rt
                .text
                .strip_prefix("R=")
                .map(|v| v.trim_end_matches("Ohm").trim_end_matches('Ω'))
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| parse_err(line, rt.col, format!("expected R=<ohm>, got '{}'", rt.text)))?;
            let r = positive(r, rt, line)?;
            let ct = &toks[3];
            let v = ct
                .text
                .strip_prefix("Cz=")
                .ok_or_else(|| parse_err(line, ct.col, format!("expected Cz=<value>fF, got '{}'", ct.text)))?;
            let cz = parse_quantity(&Tok { text: v, col: ct.col + 3 }, line, CAP_UNITS)?;
            (BranchKind::Impedance { r_ohm: r, cz_ff: cz }, 4, 5)
        }
    };
    let name = &toks[1];
    if !valid_ident(name.text) {
        return Err(parse_err(line, name.col, format!("invalid branch name '{}'", name.text)));
    }
    if b.branch_index.contains_key(name.text) {
        return Err(parse_err(line, name.col, format!("duplicate branch name '{}'", name.text)));
    }
    for t in [&toks[na], &toks[nb]] {
        if !valid_ident(t.text) {
            return Err(parse_err(line, t.col, format!("invalid node name '{}'", t.text)));
        }
    }
    if toks[na].text == toks[nb].text {
        return Err(parse_err(line, toks[nb].col, "branch endpoints must differ"));
    }
    if let BranchKind::JunctionArray { ej_total_ghz, k, cj_ff: Some(cj) } = &kind {
        let report = array_guard(ej_total_ghz / *k as f64, *cj);
        if !report.ratio_ok {
            return Err(parse_err(
                line,
                head.col,
                format!("array '{}' violates E_J/E_C >= 100 (ratio {:.1})", name.text, report.ej_over_ec),
            ));
        }
    }
    let a = b.node(toks[na].text);
    let bb = b.node(toks[nb].text);
    b.branch_index.insert(name.text.to_string(), b.branches.len());
    b.branches.push(Branch { name: name.text.to_string(), kind, a, b: bb });
    Ok(())
}

fn finish(b: Builder) -> Result<CircuitGraph> {
    if b.branches.is_empty() {
        return Err(Error::InvalidCircuit("netlist contains no branches".into()));
    }
    let mut touched = vec![false; b.nodes.len()];
    for br in &b.branches {
        touched[br.a] = true;
        touched[br.b] = true;
    }
    for &(idx, line, col) in &b.declared {
        if !touched[idx] {
            return Err(parse_err(line, col, format!("dangling node '{}'", b.nodes[idx])));
        }
    }
    let ground = match &b.ground {
        Some((name, line, col)) => Some(
            *b.node_index
                .get(name)
                .ok_or_else(|| parse_err(*line, *col, format!("unknown ground node '{name}'")))?,
        ),
        None => None,
    };
    let mut loops = Vec::new();
    let mut seen_symbols = HashMap::new();
    for (line, symbol, items) in &b.pending_loops {
        if seen_symbols.insert(symbol.clone(), ()).is_some() {
            return Err(parse_err(*line, 6, format!("duplicate loop symbol '{symbol}'")));
        }
        let mut branches = Vec::new();
        for (name, sign, col) in items {
            let idx = *b
                .branch_index
                .get(name)
                .ok_or_else(|| parse_err(*line, *col, format!("loop references unknown branch '{name}'")))?;
            if branches.iter().any(|&(i, _)| i == idx) {
                return Err(parse_err(*line, *col, format!("branch '{name}' repeated in loop")));
            }
            branches.push((idx, *sign));
        }
        check_closed(&b.branches, &branches).map_err(|m| parse_err(*line, 1, format!("loop '{symbol}': {m}")))?;
        loops.push(FluxLoop { symbol: symbol.clone(), branches });
    }
    let mut variables = Vec::new();
    for (line, name, items) in &b.pending_vars {
        if variables.iter().any(|v: &VarDecl| &v.name == name) {
            return Err(parse_err(*line, 5, format!("duplicate variable '{name}'")));
        }
        let mut coeffs = Vec::new();
        for (node, c, col) in items {
            let idx = *b
                .node_index
                .get(node)
                .ok_or_else(|| parse_err(*line, *col, format!("variable references unknown node '{node}'")))?;
            coeffs.push((idx, *c));
        }
        variables.push(VarDecl { name: name.clone(), coeffs });
    }
    let g = CircuitGraph { nodes: b.nodes, branches: b.branches, loops, ground, variables };
    if !g.is_connected() {
        return Err(Error::InvalidCircuit("circuit graph is not connected".into()));
    }
    Ok(g)
}

fn check_closed(branches: &[Branch], items: &[(usize, i8)]) -> std::result::Result<(), String> {
    let ends = |&(i, s): &(usize, i8)| {
        let br = &branches[i];
        if s > 0 {
            (br.a, br.b)
        } else {
            (br.b, br.a)
        }
    };
    let (start, mut head) = ends(&items[0]);
    for it in &items[1..] {
        let (tail, next) = ends(it);
        if tail != head {
            return Err(format!("branch '{}' does not continue the chain", branches[it.0].name));
        }
        head = next;
    }
    if head != start {
        return Err("branch chain is not closed".into());
    }
    Ok(())
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }
    /// Returns false if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

impl CircuitGraph {
    /// Index of a branch by name.
    pub fn branch(&self, name: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.name == name)
    }

    /// Index of a node by name.
    pub fn node(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.nodes.len());
        for br in &self.branches {
            uf.union(br.a, br.b);
        }
        (0..self.nodes.len()).all(|i| uf.find(i) == uf.find(0))
    }

    /// Non-fatal validation findings (array plasma-frequency guard).
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for br in &self.branches {
            if let BranchKind::JunctionArray { ej_total_ghz, k, cj_ff: Some(cj) } = &br.kind {
                let r = array_guard(ej_total_ghz / *k as f64, *cj);
                if !r.plasma_ok {
                    out.push(format!(
                        "array '{}' plasma frequency {:.2} GHz is below 20 GHz",
                        br.name, r.plasma_ghz
                    ));
                }
            }
        }
        out
    }

    /// Same graph with nodes, branches and loops sorted by name.
    pub fn canonical(&self) -> CircuitGraph {
        let mut node_order: Vec<usize> = (0..self.nodes.len()).collect();
        node_order.sort_by(|&a, &b| self.nodes[a].cmp(&self.nodes[b]));
        let mut node_map = vec![0; self.nodes.len()];
        for (new, &old) in node_order.iter().enumerate() {
            node_map[old] = new;
        }
        let mut br_order: Vec<usize> = (0..self.branches.len()).collect();
        br_order.sort_by(|&a, &b| self.branches[a].name.cmp(&self.branches[b].name));
        let mut br_map = vec![0; self.branches.len()];
        for (new, &old) in br_order.iter().enumerate() {
            br_map[old] = new;
        }
        let branches = br_order
            .iter()
            .map(|&i| {
                let br = &self.branches[i];
                Branch { name: br.name.clone(), kind: br.kind.clone(), a: node_map[br.a], b: node_map[br.b] }
            })
            .collect();
        let mut loops: Vec<FluxLoop> = self
            .loops
            .iter()
            .map(|l| FluxLoop {
                symbol: l.symbol.clone(),
                branches: l.branches.iter().map(|&(i, s)| (br_map[i], s)).collect(),
            })
            .collect();
        loops.sort_by(|a, b| a.symbol.cmp(&b.symbol));
        CircuitGraph {
            nodes: node_order.iter().map(|&i| self.nodes[i].clone()).collect(),
            branches,
            loops,
            ground: self.ground.map(|g| node_map[g]),
            variables: self
                .variables
                .iter()
                .map(|v| VarDecl { name: v.name.clone(), coeffs: v.coeffs.iter().map(|&(n, c)| (node_map[n], c)).collect() })
                .collect(),
        }
    }

    /// Canonical text form; parsing it yields [`CircuitGraph::canonical`].
    pub fn serialize(&self) -> String {
        let g = self.canonical();
        let mut s = String::new();
        for n in &g.nodes {
            let _ = writeln!(s, "node {n}");
        }
        for br in &g.branches {
            let (a, b) = (&g.nodes[br.a], &g.nodes[br.b]);
            let _ = match &br.kind {
                BranchKind::Capacitor { c_ff } => writeln!(s, "cap {} {c_ff}fF {a} {b}", br.name),
                BranchKind::Inductor { l_nh } => writeln!(s, "ind {} {l_nh}nH {a} {b}", br.name),
                BranchKind::Junction { ej_ghz } => writeln!(s, "jj {} {ej_ghz}GHz {a} {b}", br.name),
                BranchKind::JunctionArray { ej_total_ghz, k, cj_ff } => match cj_ff {
                    Some(cj) => writeln!(s, "jjarray {} {ej_total_ghz}GHz k={k} cj={cj}fF {a} {b}", br.name),
                    None => writeln!(s, "jjarray {} {ej_total_ghz}GHz k={k} {a} {b}", br.name),
                },
                BranchKind::Impedance { r_ohm, cz_ff } => writeln!(s, "imp {} R={r_ohm} Cz={cz_ff}fF {a} {b}", br.name),
            };
        }
        for l in &g.loops {
            let _ = write!(s, "loop {}", l.symbol);
            for &(i, sign) in &l.branches {
                let _ = write!(s, " {}:{}", g.branches[i].name, if sign > 0 { '+' } else { '-' });
            }
            s.push('\n');
        }
        if let Some(gn) = g.ground {
            let _ = writeln!(s, "ground {}", g.nodes[gn]);
        }
        for v in &g.variables {
            let _ = write!(s, "var {}", v.name);
            for &(n, c) in &v.coeffs {
                let _ = write!(s, " {}:{c}", g.nodes[n]);
            }
            s.push('\n');
        }
        s
    }

    /// Copy with one loop's orientation reversed.
    pub fn with_reversed_loop(&self, symbol: &str) -> Result<CircuitGraph> {
        let mut g = self.clone();
        let l = g
            .loops
            .iter_mut()
            .find(|l| l.symbol == symbol)
            .ok_or_else(|| Error::Configuration(format!("no loop '{symbol}'")))?;
        l.branches.reverse();
        for item in l.branches.iter_mut() {
            item.1 = -item.1;
        }
        Ok(g)
    }
}

/// Select a spanning tree under the given rule. Capacitors enter the tree
/// only when no other element can reach a node.
pub fn choose_spanning_tree(graph: &CircuitGraph, rule: TreeRule) -> Result<SpanningTree> {
    let n = graph.nodes.len();
    let mut uf = UnionFind::new(n);
    let mut in_tree = vec![false; graph.branches.len()];
    let group = |pred: &dyn Fn(&BranchKind) -> bool| -> Vec<usize> {
        graph.branches.iter().enumerate().filter(|(_, b)| pred(&b.kind)).map(|(i, _)| i).collect()
    };
    let jj = group(&|k| k.is_josephson_or_bath());
    let ind = group(&|k| matches!(k, BranchKind::Inductor { .. }));
    let cap = group(&|k| matches!(k, BranchKind::Capacitor { .. }));
    match rule {
        TreeRule::Burkard => {
            for &i in &jj {
                let br = &graph.branches[i];
                if !uf.union(br.a, br.b) {
                    return Err(Error::UnsupportedTopology(format!(
                        "junctions and impedances form a cycle closed by '{}'",
                        br.name
                    )));
                }
                in_tree[i] = true;
            }
            for &i in ind.iter().chain(&cap) {
                let br = &graph.branches[i];
                if uf.union(br.a, br.b) {
                    in_tree[i] = true;
                }
            }
        }
        TreeRule::Loose => {
            for &i in ind.iter().chain(&jj).chain(&cap) {
                let br = &graph.branches[i];
                if uf.union(br.a, br.b) {
                    in_tree[i] = true;
                }
            }
        }
    }
    let tree_branches: Vec<usize> = (0..graph.branches.len()).filter(|&i| in_tree[i]).collect();
    let chord_branches = (0..graph.branches.len()).filter(|&i| !in_tree[i]).collect();
    debug_assert_eq!(tree_branches.len(), n - 1);
    Ok(SpanningTree { tree_branches, chord_branches })
}

/// Oriented tree path between two nodes as (branch, sign) pairs.
fn tree_path(graph: &CircuitGraph, tree: &SpanningTree, from: usize, to: usize) -> Vec<(usize, i8)> {
    let mut adj: Vec<Vec<(usize, usize, i8)>> = vec![Vec::new(); graph.nodes.len()];
    for &i in &tree.tree_branches {
        let br = &graph.branches[i];
        adj[br.a].push((br.b, i, 1));
        adj[br.b].push((br.a, i, -1));
    }
    let mut prev: Vec<Option<(usize, usize, i8)>> = vec![None; graph.nodes.len()];
    let mut seen = vec![false; graph.nodes.len()];
    let mut q = VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = q.pop_front() {
        if u == to {
            break;
        }
        for &(v, br, s) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                prev[v] = Some((u, br, s));
                q.push_back(v);
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let (p, br, s) = prev[cur].expect("tree spans all nodes");
        path.push((br, s));
        cur = p;
    }
    path.reverse();
    path
}

fn chord_priority(kind: &BranchKind) -> u8 {
    match kind {
        BranchKind::Capacitor { .. } => 0,
        BranchKind::Impedance { .. } => 1,
        BranchKind::Inductor { .. } => 2,
        BranchKind::Junction { .. } => 3,
        BranchKind::JunctionArray { .. } => 4,
    }
}

fn rank(rows: &[Vec<f64>]) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..m.len()).max_by(|&a, &b| m[a][c].abs().partial_cmp(&m[b][c].abs()).unwrap()) else {
            break;
        };
        if m[p][c].abs() < 1e-9 {
            continue;
        }
        m.swap(r, p);
        for i in 0..m.len() {
            if i != r {
                let f = m[i][c] / m[r][c];
                for j in c..ncols {
                    m[i][j] -= f * m[r][j];
                }
            }
        }
        r += 1;
        if r == m.len() {
            break;
        }
    }
    r
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-10 {
        r
    } else if x.abs() < 1e-14 {
        0.0
    } else {
        x
    }
}

/// Distribute loop fluxes onto chord branches.
///
/// Each declared loop imposes Σ sign·φ_branch = 2πΦ. The declared loops are
/// completed to a cycle basis with flux-free fundamental cycles (capacitor
/// chords preferred), and the resulting square system fixes every chord offset.
pub fn assign_loop_fluxes(graph: &CircuitGraph, tree: &SpanningTree) -> Result<FluxAssignment> {
    let chords = &tree.chord_branches;
    let col_of: HashMap<usize, usize> = chords.iter().enumerate().map(|(c, &b)| (b, c)).collect();
    let nc = chords.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for l in &graph.loops {
        let mut v = vec![0.0; nc];
        for &(b, s) in &l.branches {
            if let Some(&c) = col_of.get(&b) {
                v[c] += s as f64;
            }
        }
        rows.push(v);
    }
    if rank(&rows) < rows.len() {
        return Err(Error::InvalidCircuit("declared flux loops are linearly dependent".into()));
    }
    let nloops = rows.len();
    let mut order: Vec<usize> = (0..nc).collect();
    order.sort_by_key(|&c| (chord_priority(&graph.branches[chords[c]].kind), c));
    for c in order {
        if rows.len() == nc {
            break;
        }
        let mut e = vec![0.0; nc];
        e[c] = 1.0;
        rows.push(e);
        if rank(&rows) < rows.len() {
            rows.pop();
        }
    }
    let mut offsets = vec![PhaseOffset::default(); graph.branches.len()];
    if nc == 0 || nloops == 0 {
        return Ok(FluxAssignment { offsets });
    }
    let a = nalgebra::DMatrix::from_fn(nc, nc, |i, j| rows[i][j]);
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::InvalidCircuit("flux loop system is singular".into()))?;
    for (c, &b) in chords.iter().enumerate() {
        let flux: Vec<(String, f64)> = graph
            .loops
            .iter()
            .enumerate()
            .map(|(j, l)| (l.symbol.clone(), snap(inv[(c, j)])))
            .filter(|(_, v)| *v != 0.0)
            .collect();
        offsets[b] = PhaseOffset { constant: 0.0, flux };
    }
    Ok(FluxAssignment { offsets })
}

/// Fundamental cycle of a chord: the chord traversed a→b followed by the tree path b→a.
pub fn fundamental_cycle(graph: &CircuitGraph, tree: &SpanningTree, chord: usize) -> Vec<(usize, i8)> {
    let br = &graph.branches[chord];
    let mut cyc = vec![(chord, 1)];
    cyc.extend(tree_path(graph, tree, br.b, br.a));
    cyc
}
