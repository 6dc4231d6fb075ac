//! Flux sweeps, table reproduction and result serialization.
//!
//! Points are split into fixed-size contiguous chunks that run in parallel.
//! Inside a chunk each minimum search starts from the previous minimum, so the
//! output depends only on the spec, never on the worker count.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::EnergyModel;
use crate::netlist::FluxMap;
use crate::spectrum::{
    couplings_closed_form, design_limits, device_fluxes, find_minimum, qubit_spectrum_closed_form,
    resonator_spectrum_closed_form, spectrum_numeric, Band, CouplingMethod, DeviceParams, SpectrumResult,
};

/// Version of the CSV/JSON sweep and table schemas.
pub const SCHEMA_VERSION: u32 = 1;
/// Points per continuation chunk.
pub const CHUNK: usize = 16;
/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 13] = [
    "method",
    "phi_x",
    "phi_xb",
    "delta_ghz",
    "omega_r_ghz",
    "alpha_q_rel",
    "alpha_r_rel",
    "g_xx_mhz",
    "g_zx_mhz",
    "g_xz_mhz",
    "g_zz_mhz",
    "well_ok",
    "error",
];

/// Which fluxes vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxAxis {
    PhiX,
    PhiXb,
    Both,
}

impl std::str::FromStr for FluxAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phi_x" => Ok(FluxAxis::PhiX),
            "phi_Xb" | "phi_xb" => Ok(FluxAxis::PhiXb),
            "both" => Ok(FluxAxis::Both),
            other => Err(Error::Configuration(format!("unknown axis `{other}` (phi_x, phi_Xb, both)"))),
        }
    }
}

/// Closed interval sampled at `points` equally spaced phases (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn fixed(value: f64) -> Self {
        AxisRange { start: value, end: value, points: 1 }
    }

    fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let n = (self.points - 1) as f64;
        (0..self.points).map(|i| self.start + (self.end - self.start) * i as f64 / n).collect()
    }
}

/// Circuit being swept.
#[derive(Debug, Clone)]
pub enum SweepSource {
    /// The qubit-resonator device in its (q, r) variables.
    Device(DeviceParams),
    /// A circuit built from a netlist; the listed loops follow φx and φXb.
    Model {
        name: String,
        model: EnergyModel,
        x_loops: Vec<String>,
        xb_loops: Vec<String>,
        qubit: usize,
        resonator: usize,
    },
}

impl SweepSource {
    fn name(&self) -> &str {
        match self {
            SweepSource::Device(p) => &p.name,
            SweepSource::Model { name, .. } => name,
        }
    }

    fn model(&self) -> Result<EnergyModel> {
        match self {
            SweepSource::Device(p) => p.energy_model(),
            SweepSource::Model { model, .. } => Ok(model.clone()),
        }
    }

    fn fluxes(&self, phi_x: f64, phi_xb: f64) -> FluxMap {
        match self {
            SweepSource::Device(_) => device_fluxes(phi_x, phi_xb),
            SweepSource::Model { x_loops, xb_loops, .. } => {
                let mut m = FluxMap::new();
                for l in x_loops {
                    m.insert(l.clone(), phi_x / (2.0 * PI));
                }
                for l in xb_loops {
                    m.insert(l.clone(), phi_xb / (2.0 * PI));
                }
                m
            }
        }
    }

    fn modes(&self) -> (usize, usize) {
        match self {
            SweepSource::Device(_) => (0, 1),
            SweepSource::Model { qubit, resonator, .. } => (*qubit, *resonator),
        }
    }

    fn metadata(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        if let SweepSource::Device(p) = self {
            m.insert("EJq".into(), p.ej_q);
            m.insert("EJSigma".into(), p.ej_sigma);
            m.insert("d".into(), p.d);
            m.insert("C".into(), p.c_ff);
            m.insert("Cq".into(), p.cq_ff);
            m.insert("L1".into(), p.l1_nh);
            m.insert("L2".into(), p.l2_nh);
            m.insert("k".into(), p.k as f64);
            if let Some(la) = p.la_nh {
                m.insert("La".into(), la);
            }
        }
        m
    }
}

/// A sweep request.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub source: SweepSource,
    pub axis: FluxAxis,
    pub phi_x: AxisRange,
    pub phi_xb: AxisRange,
}

impl SweepSpec {
    /// Sweep φx over one full period [0, 2kπ] at fixed φXb.
    pub fn full_period(p: DeviceParams, points: usize, phi_xb: f64) -> Self {
        let end = 2.0 * p.kf() * PI;
        SweepSpec {
            source: SweepSource::Device(p),
            axis: FluxAxis::PhiX,
            phi_x: AxisRange { start: 0.0, end, points },
            phi_xb: AxisRange::fixed(phi_xb),
        }
    }

    /// Check point counts and ranges.
    pub fn validate(&self) -> Result<()> {
        let bound = match &self.source {
            SweepSource::Device(p) => {
                p.validate()?;
                2.0 * p.kf() * PI * (1.0 + 1e-12)
            }
            SweepSource::Model { .. } => f64::INFINITY,
        };
        let check = |r: &AxisRange, varies: bool, name: &str| -> Result<()> {
            if varies && r.points < 2 {
                return Err(Error::Domain(format!("{name} axis needs at least 2 points")));
            }
            if !varies && r.points != 1 {
                return Err(Error::Domain(format!("{name} is fixed and takes a single point")));
            }
            for v in [r.start, r.end] {
                if !v.is_finite() || v.abs() > bound {
                    return Err(Error::Domain(format!("{name} = {v} outside ±2kπ")));
                }
            }
            Ok(())
        };
        let (vx, vxb) = match self.axis {
            FluxAxis::PhiX => (true, false),
            FluxAxis::PhiXb => (false, true),
            FluxAxis::Both => (true, true),
        };
        check(&self.phi_x, vx, "phi_x")?;
        check(&self.phi_xb, vxb, "phi_Xb")
    }

    /// Flux points with φXb outermost.
    fn points(&self) -> Vec<(f64, f64)> {
        let xs = self.phi_x.values();
        self.phi_xb.values().into_iter().flat_map(|xb| xs.iter().map(move |&x| (x, xb))).collect()
    }
}

/// One sweep point evaluated by one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: CouplingMethod,
    pub phi_x: f64,
    pub phi_xb: f64,
    pub delta_ghz: f64,
    pub omega_r_ghz: f64,
    pub alpha_q_rel: f64,
    pub alpha_r_rel: f64,
    pub g_xx_mhz: f64,
    pub g_zx_mhz: f64,
    pub g_xz_mhz: f64,
    pub g_zz_mhz: f64,
    pub well_ok: bool,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(method: CouplingMethod, phi_x: f64, phi_xb: f64, err: &Error) -> Self {
        SweepRow {
            method,
            phi_x,
            phi_xb,
            delta_ghz: f64::NAN,
            omega_r_ghz: f64::NAN,
            alpha_q_rel: f64::NAN,
            alpha_r_rel: f64::NAN,
            g_xx_mhz: f64::NAN,
            g_zx_mhz: f64::NAN,
            g_xz_mhz: f64::NAN,
            g_zz_mhz: f64::NAN,
            well_ok: false,
            error: Some(err.kind().to_string()),
        }
    }

    fn from_spectrum(phi_x: f64, phi_xb: f64, s: &SpectrumResult, qubit: usize, resonator: usize) -> Self {
        let q = &s.modes[qubit];
        let r = &s.modes[resonator];
        SweepRow {
            method: s.couplings.method,
            phi_x,
            phi_xb,
            delta_ghz: q.delta_ghz.unwrap_or(q.omega_ghz),
            omega_r_ghz: r.omega_ghz,
            alpha_q_rel: q.alpha_rel,
            alpha_r_rel: r.alpha_rel,
            g_xx_mhz: s.couplings.g_xx_mhz,
            g_zx_mhz: s.couplings.g_zx_mhz,
            g_xz_mhz: s.couplings.g_xz_mhz,
            g_zz_mhz: s.couplings.g_zz_mhz,
            well_ok: true,
            error: None,
        }
    }
}

/// Sweep output: numeric rows first, then closed-form rows, each in flux order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub case: String,
    pub code_version: String,
    pub parameters: BTreeMap<String, f64>,
    pub rows: Vec<SweepRow>,
}

fn numeric_chunk(
    model: &EnergyModel,
    source: &SweepSource,
    chunk: &[(f64, f64)],
) -> Vec<SweepRow> {
    let (qi, ri) = source.modes();
    let mut seed: Option<DVector<f64>> = None;
    chunk
        .iter()
        .map(|&(x, xb)| {
            let fl = source.fluxes(x, xb);
            let res = find_minimum(model, &fl, seed.as_ref())
                .and_then(|op| spectrum_numeric(model, &op, qi, ri).map(|s| (op, s)));
            match res {
                Ok((op, s)) => {
                    seed = Some(op.phi_min);
                    SweepRow::from_spectrum(x, xb, &s, qi, ri)
                }
                Err(e) => {
                    seed = None;
                    SweepRow::failed(CouplingMethod::NumericMinimum, x, xb, &e)
                }
            }
        })
        .collect()
}

fn closed_form_row(p: &DeviceParams, x: f64, xb: f64) -> SweepRow {
    let eval = || -> Result<SweepRow> {
        let q = qubit_spectrum_closed_form(p, x, xb)?;
        let r = resonator_spectrum_closed_form(p, x)?;
        let couplings = couplings_closed_form(p, x, xb)?;
        Ok(SweepRow::from_spectrum(x, xb, &SpectrumResult { modes: vec![q, r], couplings }, 0, 1))
    };
    eval().unwrap_or_else(|e| SweepRow::failed(CouplingMethod::ClosedForm, x, xb, &e))
}

fn on_bias_anchor(xb: f64) -> bool {
    xb.abs() < 1e-12 || (xb.abs() - PI).abs() < 1e-12
}

/// Run a sweep on the current rayon pool.
///
/// Closed-form rows are emitted for devices without an added inductance at
/// φXb ∈ {0, ±π}; every point gets a numeric row. Points that fail are kept
/// with `well_ok = false`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let model = spec.source.model()?;
    let points = spec.points();
    let mut rows: Vec<SweepRow> = points
        .par_chunks(CHUNK)
        .map(|c| numeric_chunk(&model, &spec.source, c))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if let SweepSource::Device(p) = &spec.source {
        if p.la_nh.is_none() {
            rows.extend(points.iter().filter(|(_, xb)| on_bias_anchor(*xb)).map(|&(x, xb)| closed_form_row(p, x, xb)));
        }
    }
    if rows.iter().all(|r| !r.well_ok) {
        return Err(Error::EmptyResult(format!("all {} sweep points failed", points.len())));
    }
    Ok(SweepResult {
        schema_version: SCHEMA_VERSION,
        case: spec.source.name().to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        parameters: spec.source.metadata(),
        rows,
    })
}

/// Run a sweep with at most `jobs` worker threads.
pub fn run_sweep_with_jobs(spec: &SweepSpec, jobs: Option<usize>) -> Result<SweepResult> {
    match jobs {
        None => run_sweep(spec),
        Some(0) => Err(Error::Configuration("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Resource(e.to_string()))?
            .install(|| run_sweep(spec)),
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

impl SweepResult {
    /// CSV with the fixed column order of `CSV_COLUMNS`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(io)?;
        for r in &self.rows {
            let method = match r.method {
                CouplingMethod::ClosedForm => "closed_form",
                CouplingMethod::NumericMinimum => "numeric_minimum",
            };
            let nums = [
                r.phi_x,
                r.phi_xb,
                r.delta_ghz,
                r.omega_r_ghz,
                r.alpha_q_rel,
                r.alpha_r_rel,
                r.g_xx_mhz,
                r.g_zx_mhz,
                r.g_xz_mhz,
                r.g_zz_mhz,
            ];
            let mut rec = vec![method.to_string()];
            rec.extend(nums.iter().map(|&v| fmt_f64(v)));
            rec.push(r.well_ok.to_string());
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// Pretty JSON mirroring the CSV rows with schema metadata.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Extremal values over the successful rows of one method.
    pub fn extrema(&self, method: CouplingMethod) -> Option<Extrema> {
        let rows: Vec<&SweepRow> = self.rows.iter().filter(|r| r.method == method && r.well_ok).collect();
        if rows.is_empty() {
            return None;
        }
        let span = |f: &dyn Fn(&SweepRow) -> f64| {
            rows.iter().map(|r| f(r)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        Some(Extrema {
            omega_r_ghz: span(&|r| r.omega_r_ghz),
            delta_ghz: span(&|r| r.delta_ghz),
            alpha_q_abs_pct: span(&|r| 100.0 * r.alpha_q_rel.abs()),
            alpha_r_abs_pct: span(&|r| 100.0 * r.alpha_r_rel.abs()),
            g_xx_max_mhz: span(&|r| r.g_xx_mhz.abs()).1,
            g_zx_max_mhz: span(&|r| r.g_zx_mhz.abs()).1,
            g_xz_max_mhz: span(&|r| r.g_xz_mhz.abs()).1,
            g_zz_max_mhz: span(&|r| r.g_zz_mhz.abs()).1,
        })
    }
}

/// Ranges (min, max) and absolute maxima over a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrema {
    pub omega_r_ghz: (f64, f64),
    pub delta_ghz: (f64, f64),
    pub alpha_q_abs_pct: (f64, f64),
    pub alpha_r_abs_pct: (f64, f64),
    pub g_xx_max_mhz: f64,
    pub g_zx_max_mhz: f64,
    pub g_xz_max_mhz: f64,
    pub g_zz_max_mhz: f64,
}

/// Expected value of one table row with its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Expect {
    /// |computed − target| ≤ tol.
    Value { target: f64, tol: f64 },
    /// Both band edges within tol of (lo, hi).
    Band { lo: f64, hi: f64, tol: f64 },
    /// computed ≤ bound.
    AtMost { bound: f64 },
}

/// Quantity keys understood by the table report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    OmegaR,
    Delta,
    GZx,
    GXx,
    GZz,
    GXz,
    AlphaQ,
    AlphaR,
    LMax,
    LCrit,
    KCrit,
}

/// Reference table entry: label, reference text, expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub quantity: Quantity,
    pub label: &'static str,
    pub reference: &'static str,
    pub expect: Expect,
}

const fn tol(quantity: Quantity, label: &'static str, reference: &'static str, expect: Expect) -> Tolerance {
    Tolerance { quantity, label, reference, expect }
}

/// Reference rows and tolerances for the three presets, the single source of truth.
pub fn tolerance_table(case: &str) -> Result<Vec<Tolerance>> {
    use Expect::*;
    use Quantity::*;
    let rows = match case {
        "k1" => vec![
            tol(OmegaR, "omega_r/2pi (GHz)", "6.2 - 8", Band { lo: 6.2, hi: 8.0, tol: 0.3 }),
            tol(Delta, "Delta/2pi (GHz)", "5.4 - 6.4", Band { lo: 5.4, hi: 6.4, tol: 0.2 }),
            tol(GZx, "g_zx max/2pi (MHz)", "53", Value { target: 53.0, tol: 2.0 }),
            tol(GXx, "g_xx max/2pi (MHz)", "49", Value { target: 49.0, tol: 2.0 }),
            tol(GZz, "g_zz max/2pi (MHz)", "5", Value { target: 5.0, tol: 1.0 }),
            tol(GXz, "g_xz max/2pi (MHz)", "6", Value { target: 6.0, tol: 1.0 }),
            tol(AlphaQ, "|alpha_rel q| (%)", "0.8 - 1.1", Band { lo: 0.8, hi: 1.1, tol: 0.15 }),
            tol(AlphaR, "|alpha_rel r| (%)", "<= 0.5", AtMost { bound: 0.6 }),
            tol(LMax, "L_max (nH)", "4.9", Value { target: 4.9, tol: 0.1 }),
            tol(LCrit, "L_crit (nH)", "5.6", Value { target: 5.6, tol: 0.1 }),
        ],
        "kn" => vec![
            tol(OmegaR, "omega_r/2pi (GHz)", "6 - 8", Band { lo: 6.0, hi: 8.0, tol: 0.3 }),
            tol(Delta, "Delta/2pi (GHz)", "5.3 - 6.3", Band { lo: 5.3, hi: 6.3, tol: 0.2 }),
            tol(GZx, "g_zx max/2pi (MHz)", "6", Value { target: 6.0, tol: 0.5 }),
            tol(GXx, "g_xx max/2pi (MHz)", "13", Value { target: 13.0, tol: 1.0 }),
            tol(GZz, "g_zz max/2pi (MHz)", "0.07", Value { target: 0.07, tol: 0.02 }),
            tol(GXz, "g_xz max/2pi (MHz)", "0.2", Value { target: 0.2, tol: 0.05 }),
            tol(AlphaQ, "|alpha_rel q| (%)", "0.9 - 1.5", Band { lo: 0.9, hi: 1.5, tol: 0.15 }),
            tol(AlphaR, "|alpha_rel r| (%)", "<= 0.007", AtMost { bound: 0.01 }),
            tol(LMax, "L_max (nH)", "5.0", Value { target: 5.0, tol: 0.1 }),
            tol(LCrit, "L_crit (nH)", "5.6", Value { target: 5.6, tol: 0.1 }),
        ],
        "add" => vec![
            tol(OmegaR, "omega_r/2pi (GHz)", "6 - 8", Band { lo: 6.0, hi: 8.0, tol: 0.3 }),
            tol(Delta, "Delta/2pi (GHz)", "4.8 - 5.8", Band { lo: 4.8, hi: 5.8, tol: 0.2 }),
            tol(GZx, "g_zx max/2pi (MHz)", "10", Value { target: 10.0, tol: 1.0 }),
            tol(GXx, "g_xx max/2pi (MHz)", "9", Value { target: 9.0, tol: 1.0 }),
            tol(GZz, "g_zz max/2pi (MHz)", "0.06", Value { target: 0.06, tol: 0.02 }),
            tol(GXz, "g_xz max/2pi (MHz)", "0.5", Value { target: 0.5, tol: 0.15 }),
            tol(AlphaQ, "|alpha_rel q| (%)", "1.1 - 2", Band { lo: 1.1, hi: 2.0, tol: 0.15 }),
            tol(AlphaR, "|alpha_rel r| (%)", "<= 0.003", AtMost { bound: 0.005 }),
            tol(KCrit, "k_crit", "3.3", Value { target: 3.3, tol: 0.2 }),
        ],
        other => return Err(Error::Configuration(format!("no reference table for case `{other}`"))),
    };
    Ok(rows)
}

/// One compared table row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub label: String,
    pub reference: String,
    pub expect: Expect,
    /// Computed value, or (min, max) for bands.
    pub computed: Vec<f64>,
    pub pass: bool,
}

/// Coupling values at the flux points where each coupling peaks in the closed forms.
///
/// g_xx and g_zz are taken at φx = 0, g_zx and g_xz at φx = kπ/2, all from
/// the numeric-minimum pipeline at φXb = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakCouplings {
    pub g_xx_mhz: f64,
    pub g_zx_mhz: f64,
    pub g_xz_mhz: f64,
    pub g_zz_mhz: f64,
}

/// Evaluate the couplings at their closed-form peak fluxes.
pub fn peak_couplings(p: &DeviceParams) -> Result<PeakCouplings> {
    let model = p.energy_model()?;
    let at = |x: f64| -> Result<SpectrumResult> {
        let op = find_minimum(&model, &device_fluxes(x, 0.0), None)?;
        spectrum_numeric(&model, &op, 0, 1)
    };
    let zero = at(0.0)?;
    let half = at(0.5 * p.kf() * PI)?;
    Ok(PeakCouplings {
        g_xx_mhz: zero.couplings.g_xx_mhz.abs(),
        g_zz_mhz: zero.couplings.g_zz_mhz.abs(),
        g_zx_mhz: half.couplings.g_zx_mhz.abs(),
        g_xz_mhz: half.couplings.g_xz_mhz.abs(),
    })
}

/// Table comparison for one preset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub schema_version: u32,
    pub case: String,
    /// Parameter column from the built-in preset.
    pub parameters: BTreeMap<String, f64>,
    pub rows: Vec<TableRow>,
    /// Sweep maxima over [0, 2kπ] for reference alongside the peak-point values.
    pub sweep_extrema: Extrema,
    pub peak_couplings: PeakCouplings,
    pub points: usize,
}

impl TableReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, q: Quantity) -> Option<&TableRow> {
        tolerance_table(&self.case).ok()?.iter().position(|t| t.quantity == q).map(|i| &self.rows[i])
    }
}

fn judge(expect: Expect, computed: &[f64]) -> bool {
    match expect {
        Expect::Value { target, tol } => computed.first().is_some_and(|v| (v - target).abs() <= tol),
        Expect::Band { lo, hi, tol } => {
            computed.len() == 2 && (computed[0] - lo).abs() <= tol && (computed[1] - hi).abs() <= tol
        }
        Expect::AtMost { bound } => computed.first().is_some_and(|v| *v <= bound),
    }
}

/// Reproduce a reference table from a fresh numeric sweep over one period.
pub fn table_report(case: &str, points: usize, jobs: Option<usize>) -> Result<TableReport> {
    let tolerances = tolerance_table(case)?;
    let p = DeviceParams::preset(case)?;
    let spec = SweepSpec::full_period(p.clone(), points, 0.0);
    let sweep = run_sweep_with_jobs(&spec, jobs)?;
    let ext = sweep
        .extrema(CouplingMethod::NumericMinimum)
        .ok_or_else(|| Error::EmptyResult("no valid numeric rows".into()))?;
    let peaks = peak_couplings(&p)?;
    let limits = design_limits(&p, Band::default())?;
    let opt = |v: Option<f64>| vec![v.unwrap_or(f64::NAN)];
    let rows = tolerances
        .iter()
        .map(|t| {
            let computed = match t.quantity {
                Quantity::OmegaR => vec![ext.omega_r_ghz.0, ext.omega_r_ghz.1],
                Quantity::Delta => vec![ext.delta_ghz.0, ext.delta_ghz.1],
                Quantity::GZx => vec![peaks.g_zx_mhz],
                Quantity::GXx => vec![peaks.g_xx_mhz],
                Quantity::GZz => vec![peaks.g_zz_mhz],
                Quantity::GXz => vec![peaks.g_xz_mhz],
                Quantity::AlphaQ => vec![ext.alpha_q_abs_pct.0, ext.alpha_q_abs_pct.1],
                Quantity::AlphaR => vec![ext.alpha_r_abs_pct.1],
                Quantity::LMax => opt(limits.l_max),
                Quantity::LCrit => opt(limits.l_crit),
                Quantity::KCrit => opt(limits.k_crit),
            };
            TableRow {
                label: t.label.to_string(),
                reference: t.reference.to_string(),
                expect: t.expect,
                pass: judge(t.expect, &computed),
                computed,
            }
        })
        .collect();
    Ok(TableReport {
        schema_version: SCHEMA_VERSION,
        case: case.to_string(),
        parameters: sweep.parameters,
        rows,
        sweep_extrema: ext,
        peak_couplings: peaks,
        points,
    })
}
