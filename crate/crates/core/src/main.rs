//! `circuitq` command-line interface.
//!
//! Exit codes: 0 on success, 1 on a domain error (a JSON error report is
//! written to stderr), 2 on a usage error.

use circuitq::dissipation::{readout_traces, BathSpec, ReadoutMode, ResonatorBath, DEFAULT_TEMPERATURE_K};
use circuitq::dynamics::phase_gate_simulate;
use circuitq::error::{Error, Result};
use circuitq::lagrangian::{build_energy_model, EnergyModel};
use circuitq::multiblock::{plaquette_matrices, GridSpec};
use circuitq::netlist::{parse, CircuitGraph, FluxMap};
use circuitq::reduce::eliminate_massless_or_potential_free;
use circuitq::spectrum::{device_fluxes, eta, find_minimum, spectrum_numeric, DeviceParams, ModeSpectrum, CouplingSet};
use circuitq::sweep::{run_sweep_with_jobs, table_report, AxisRange, FluxAxis, SweepSource, SweepSpec, SCHEMA_VERSION};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Complex;
use serde::Serialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "circuitq", version, about = "Quantize lumped superconducting circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Readout {
    Static,
    Modulated,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum and couplings at one flux point.
    Analyze {
        /// Netlist file; omit to use `--case`.
        netlist: Option<PathBuf>,
        /// Device preset (k1, kn, add).
        #[arg(long, conflicts_with = "netlist")]
        case: Option<String>,
        /// Loop flux as a fraction of Φ0, NAME=VALUE. A name also binds every
        /// loop named `NAME.<suffix>`.
        #[arg(long = "flux", value_name = "NAME=VALUE")]
        fluxes: Vec<String>,
        /// Preset parameter override, NAME=VALUE in canonical units.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Qubit variable name (netlist input).
        #[arg(long, default_value = "q")]
        qubit: String,
        /// Resonator variable name (netlist input).
        #[arg(long, default_value = "r")]
        resonator: String,
    },
    /// Flux sweep of a device preset.
    Sweep {
        /// Device preset (k1, kn, add).
        #[arg(long)]
        case: String,
        /// Swept flux: phi_x, phi_Xb or both.
        #[arg(long, default_value = "phi_x")]
        axis: String,
        /// Points per axis over one period.
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Fixed φx (rad) when the axis is phi_Xb.
        #[arg(long, default_value_t = 0.0)]
        phi_x: f64,
        /// Fixed φXb (rad) when the axis is phi_x.
        #[arg(long, default_value_t = 0.0)]
        phi_xb: f64,
        /// Preset parameter override, NAME=VALUE in canonical units.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format; defaults to the extension of `--out`, else csv.
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Worker cap.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare a preset against its reference table.
    Tables {
        /// Device preset (k1, kn, add).
        #[arg(long)]
        case: String,
        /// Output format.
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Sweep points used to locate extrema.
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Worker cap.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Link matrices and dressed frequencies of a block grid.
    Grid {
        /// Grid description (JSON).
        spec: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three-pulse controlled-phase sequence.
    GateSim {
        /// Four amplitudes over |q1 q2⟩ = 00, 01, 10, 11; each `re` or `re:im`.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        input: Option<Vec<String>>,
        /// Levels of (q1, r1, r2, q2).
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 4, 2])]
        truncations: Vec<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cavity displacement traces for both qubit states.
    Readout {
        /// Static coupling or coupling modulated at ω_r.
        #[arg(long, value_enum, default_value = "static")]
        mode: Readout,
        /// Resonator frequency ω_r/2π (GHz).
        #[arg(long, default_value_t = 7.0)]
        omega_r: f64,
        /// Longitudinal coupling, or its modulation amplitude, g/2π (MHz).
        #[arg(long, default_value_t = 50.0)]
        g: f64,
        /// Linewidth κ/2π (MHz).
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Duration (ns).
        #[arg(long, default_value_t = 1000.0)]
        t_end: f64,
        /// Number of time samples.
        #[arg(long, default_value_t = 201)]
        samples: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Resonator T1, T2 and Tφ from a series R–C_Z port.
    T1 {
        /// Device preset (k1, kn, add).
        #[arg(long, default_value = "k1")]
        case: String,
        /// Preset parameter override, NAME=VALUE in canonical units.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Ground capacitance of each qubit node (fF).
        #[arg(long, default_value_t = 5.0)]
        cg: f64,
        /// Port resistance (Ω).
        #[arg(long, default_value_t = 50.0)]
        r: f64,
        /// Port series capacitance (fF).
        #[arg(long, default_value_t = 10.0)]
        cz: f64,
        /// Bath temperature (K).
        #[arg(long, default_value_t = DEFAULT_TEMPERATURE_K)]
        temperature: f64,
        /// Coupling flux φx (rad) used for η.
        #[arg(long, default_value_t = 0.0)]
        phi_x: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eliminate massless and potential-free variables and report the transform.
    ExplainReduction {
        /// Netlist file.
        netlist: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure split by exit code.
enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            let report = serde_json::to_string(&e.report()).unwrap_or_else(|_| format!("{{\"message\":\"{e}\"}}"));
            eprintln!("{report}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Analyze { netlist, case, fluxes, params, qubit, resonator } => {
            let fluxes = parse_pairs(&fluxes, "--flux")?;
            let out = match (netlist, case) {
                (Some(path), None) => {
                    if !params.is_empty() {
                        return Err(Failure::Usage("--param applies to presets; edit the netlist instead".into()));
                    }
                    let graph = parse(&read(&path)?)?;
                    analyze_netlist(&graph, &fluxes, &qubit, &resonator)?
                }
                (None, Some(case)) => analyze_preset(&device(&case, &params)?, &fluxes)?,
                _ => return Err(Failure::Usage("give a netlist path or --case".into())),
            };
            emit(None, &json(&out)?)
        }
        Command::Sweep { case, axis, points, phi_x, phi_xb, params, out, format, jobs } => {
            let p = device(&case, &params)?;
            let axis: FluxAxis = axis.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
            if jobs == Some(0) {
                return Err(Failure::Usage("--jobs must be at least 1".into()));
            }
            let span = 2.0 * p.kf() * PI;
            let full = AxisRange { start: 0.0, end: span, points };
            let (rx, rxb) = match axis {
                FluxAxis::PhiX => (full, AxisRange::fixed(phi_xb)),
                FluxAxis::PhiXb => (AxisRange::fixed(phi_x), AxisRange { start: 0.0, end: 2.0 * PI, points }),
                FluxAxis::Both => (full, AxisRange { start: 0.0, end: 2.0 * PI, points }),
            };
            let spec = SweepSpec { source: SweepSource::Device(p), axis, phi_x: rx, phi_xb: rxb };
            let result = run_sweep_with_jobs(&spec, jobs)?;
            let text = match resolve_format(format, out.as_deref()) {
                Format::Csv => result.to_csv()?,
                Format::Json => result.to_json()?,
            };
            emit(out.as_deref(), &text)
        }
        Command::Tables { case, format, points, jobs, out } => {
            if jobs == Some(0) {
                return Err(Failure::Usage("--jobs must be at least 1".into()));
            }
            let report = table_report(&case, points, jobs)?;
            let text = match format {
                Format::Json => json(&report)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    let io = |e: csv::Error| Error::Io(e.to_string());
                    w.write_record(["label", "reference", "computed", "pass"]).map_err(io)?;
                    for r in &report.rows {
                        let computed = r.computed.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";");
                        w.write_record([r.label.as_str(), r.reference.as_str(), &computed, if r.pass { "pass" } else { "fail" }])
                            .map_err(io)?;
                    }
                    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
                    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))?
                }
            };
            emit(out.as_deref(), &text)
        }
        Command::Grid { spec, out } => {
            let spec: GridSpec = serde_json::from_str(&read(&spec)?)
                .map_err(|e| Error::Configuration(format!("grid description: {e}")))?;
            emit(out.as_deref(), &json(&plaquette_matrices(&spec)?)?)
        }
        Command::GateSim { input, truncations, out } => {
            let amps = match input {
                Some(v) if v.len() == 4 => {
                    let mut a = [Complex::new(0.0, 0.0); 4];
                    for (slot, s) in a.iter_mut().zip(&v) {
                        *slot = parse_complex(s)?;
                    }
                    a
                }
                Some(_) => return Err(Failure::Usage("--input takes four amplitudes".into())),
                None => [Complex::new(0.5, 0.0); 4],
            };
            let t: [usize; 4] = truncations
                .try_into()
                .map_err(|_| Failure::Usage("--truncations takes four values".into()))?;
            emit(out.as_deref(), &json(&phase_gate_simulate(amps, t)?)?)
        }
        Command::Readout { mode, omega_r, g, kappa, t_end, samples, out } => {
            // angular frequencies in rad/ns, times in ns
            let w = 2.0 * PI * omega_r;
            let g = 2.0 * PI * g * 1e-3;
            let k = 2.0 * PI * kappa * 1e-3;
            let mode = match mode {
                Readout::Static => ReadoutMode::Static,
                Readout::Modulated => ReadoutMode::Modulated,
            };
            let traces = readout_traces(mode, w, g, k, t_end, samples)?;
            let mut wtr = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::Io(e.to_string());
            wtr.write_record(["t_ns", "re_alpha_down", "im_alpha_down", "re_alpha_up", "im_alpha_up"]).map_err(io)?;
            let (down, up) = (&traces[0], &traces[1]);
            for (i, t) in down.times.iter().enumerate() {
                let (a, b) = (down.alpha[i], up.alpha[i]);
                wtr.write_record([t, &a.re, &a.im, &b.re, &b.im].map(|v| format!("{v}"))).map_err(io)?;
            }
            let bytes = wtr.into_inner().map_err(|e| Error::Io(e.to_string()))?;
            emit(out.as_deref(), &String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))?)
        }
        Command::T1 { case, params, cg, r, cz, temperature, phi_x, out } => {
            let p = device(&case, &params)?;
            let eta = eta(p.ej_sigma, p.k, p.l_mean(), phi_x);
            let res = ResonatorBath { c_ff: p.c_ff, cg_ff: cg, l_nh: p.l_mean(), eta };
            let bath = BathSpec { r_ohm: r, cz_ff: cz, temperature_k: temperature };
            let times = res.times(&bath)?;
            #[derive(Serialize)]
            struct T1Report {
                schema_version: u32,
                case: String,
                resonator: ResonatorBath,
                bath: BathSpec,
                omega_r_ghz: f64,
                t1_s: Option<f64>,
                t2_s: Option<f64>,
                tphi_s: Option<f64>,
                t1_closed_form_s: Option<f64>,
            }
            let finite = |v: f64| v.is_finite().then_some(v);
            let report = T1Report {
                schema_version: SCHEMA_VERSION,
                case: p.name.clone(),
                resonator: res,
                bath,
                omega_r_ghz: res.omega01() / (2.0 * PI * 1e9),
                t1_s: finite(times.t1_s),
                t2_s: finite(times.t2_s),
                tphi_s: finite(times.tphi_s),
                t1_closed_form_s: finite(res.t1_closed_form(&bath)?),
            };
            emit(out.as_deref(), &json(&report)?)
        }
        Command::ExplainReduction { netlist, out } => {
            let graph = parse(&read(&netlist)?)?;
            let model = build_energy_model(&graph, None, None)?;
            let (_, report) = eliminate_massless_or_potential_free(&model)?;
            emit(out.as_deref(), &json(&report)?)
        }
    }
}

/// Single-point analysis output.
#[derive(Serialize)]
struct AnalyzeReport {
    schema_version: u32,
    source: String,
    /// Bound loop fluxes (Φ0 fractions).
    fluxes: FluxMap,
    variables: Vec<String>,
    phi_min: Vec<f64>,
    well_ok: bool,
    iterations: usize,
    modes: Vec<ModeSpectrum>,
    qubit: String,
    resonator: String,
    couplings: CouplingSet,
    warnings: Vec<String>,
}

fn analyze_preset(p: &DeviceParams, fluxes: &[(String, f64)]) -> CliResult<AnalyzeReport> {
    let mut x = 0.0;
    let mut xb = 0.0;
    for (name, v) in fluxes {
        match name.as_str() {
            "phi_x" => x = *v,
            "phi_Xb" | "phi_xb" => xb = *v,
            other => return Err(Failure::Usage(format!("unknown flux `{other}` (phi_x, phi_Xb)"))),
        }
    }
    let model = p.energy_model()?;
    let map = device_fluxes(2.0 * PI * x, 2.0 * PI * xb);
    report(&model, map, format!("preset {}", p.name), 0, 1, Vec::new())
}

fn analyze_netlist(graph: &CircuitGraph, fluxes: &[(String, f64)], qubit: &str, resonator: &str) -> CliResult<AnalyzeReport> {
    let model = build_energy_model(graph, None, None)?;
    let mut map = FluxMap::new();
    for l in &graph.loops {
        map.insert(l.symbol.clone(), 0.0);
    }
    for (name, v) in fluxes {
        let prefix = format!("{name}.");
        let hits: Vec<String> = map.keys().filter(|s| *s == name || s.starts_with(&prefix)).cloned().collect();
        if hits.is_empty() {
            return Err(Failure::Usage(format!("no flux loop named `{name}`")));
        }
        for h in hits {
            map.insert(h, *v);
        }
    }
    let q = model.var(qubit)?;
    let r = model.var(resonator)?;
    report(&model, map, "netlist".into(), q, r, graph.warnings())
}

fn report(model: &EnergyModel, map: FluxMap, source: String, q: usize, r: usize, warnings: Vec<String>) -> CliResult<AnalyzeReport> {
    let op = find_minimum(model, &map, None)?;
    let spec = spectrum_numeric(model, &op, q, r)?;
    Ok(AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        source,
        fluxes: map,
        variables: model.var_names.clone(),
        phi_min: op.phi_min.iter().copied().collect(),
        well_ok: op.well_ok,
        iterations: op.iterations,
        modes: spec.modes,
        qubit: model.var_names[q].clone(),
        resonator: model.var_names[r].clone(),
        couplings: spec.couplings,
        warnings,
    })
}

/// Preset with overrides; an unknown parameter name is a usage error.
fn device(case: &str, params: &[String]) -> CliResult<DeviceParams> {
    let mut p = DeviceParams::preset(case).map_err(|e| Failure::Usage(e.to_string()))?;
    for (k, v) in parse_pairs(params, "--param")? {
        p.set(&k, v).map_err(|e| match e {
            Error::Configuration(m) => Failure::Usage(m),
            other => Failure::Domain(other),
        })?;
    }
    Ok(p)
}

fn parse_pairs(items: &[String], flag: &str) -> CliResult<Vec<(String, f64)>> {
    items
        .iter()
        .map(|s| {
            let (k, v) = s.split_once('=').ok_or_else(|| Failure::Usage(format!("{flag} expects NAME=VALUE, got `{s}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| Failure::Usage(format!("{flag}: `{v}` is not a number")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn parse_complex(s: &str) -> CliResult<Complex<f64>> {
    let bad = || Failure::Usage(format!("amplitude `{s}` is not `re` or `re:im`"));
    let (re, im) = match s.split_once(':') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => (s.trim().parse().map_err(|_| bad())?, 0.0),
    };
    Ok(Complex::new(re, im))
}

fn resolve_format(format: Option<Format>, out: Option<&Path>) -> Format {
    format.unwrap_or_else(|| match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map(|mut s| {
        s.push('\n');
        s
    })
    .map_err(|e| Error::Io(e.to_string()))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
