//! Acceptance criteria, one function per criterion.
//!
//! Runs without the libtest harness so that every criterion prints its
//! `criterion N: PASS|FAIL` line and individual checks, passing or not.
//! The process exits nonzero when any criterion fails. Tolerances are pinned
//! here.

use circuitq::dissipation::*;
use circuitq::dynamics::*;
use circuitq::lagrangian::build_energy_model;
use circuitq::multiblock::*;
use circuitq::netlist::{parse, FluxMap};
use circuitq::reduce::eliminate_massless_or_potential_free;
use circuitq::spectrum::*;
use circuitq::sweep::*;
use nalgebra::{Complex, DMatrix, DVector};
use proptest::test_runner::{Config, TestRunner};
use std::f64::consts::PI;
use std::time::Instant;

type C64 = Complex<f64>;

/// Outcome of one check inside a criterion.
struct Check {
    name: String,
    ok: bool,
    detail: String,
}

fn check(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), ok, detail: detail.into() }
}

fn within(name: &str, value: f64, target: f64, tol: f64) -> Check {
    check(name, (value - target).abs() <= tol, format!("{value:.6} vs {target} ± {tol}"))
}

fn band(name: &str, (lo, hi): (f64, f64), (tlo, thi): (f64, f64), tol: f64) -> Check {
    let ok = (lo - tlo).abs() <= tol && (hi - thi).abs() <= tol;
    check(name, ok, format!("[{lo:.4}, {hi:.4}] vs [{tlo}, {thi}] ± {tol}"))
}

fn at_most(name: &str, value: f64, bound: f64) -> Check {
    check(name, value <= bound, format!("{value:.3e} ≤ {bound}"))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn report(n: u32, title: &str, checks: Vec<Check>) -> bool {
    let ok = checks.iter().all(|c| c.ok);
    println!("criterion {n}: {} ({title})", if ok { "PASS" } else { "FAIL" });
    for c in &checks {
        println!("    [{}] {}: {}", if c.ok { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    ok
}

fn computed(r: &TableReport, q: Quantity) -> Vec<f64> {
    r.row(q).unwrap_or_else(|| panic!("missing row {q:?}")).computed.clone()
}

fn timed_table(case: &str) -> (TableReport, f64) {
    let t0 = Instant::now();
    let r = table_report(case, 201, Some(1)).unwrap();
    (r, t0.elapsed().as_secs_f64())
}

fn criterion_01_k1_table() -> bool {
    use Quantity::*;
    let (r, secs) = timed_table("k1");
    let v = |q| computed(&r, q);
    let pair = |q| {
        let c = v(q);
        (c[0], c[1])
    };
    report(
        1,
        "single-junction table",
        vec![
            within("g_zx max (MHz)", v(GZx)[0], 53.0, 2.0),
            within("g_xx max (MHz)", v(GXx)[0], 49.0, 2.0),
            within("g_zz max (MHz)", v(GZz)[0], 5.0, 1.0),
            within("g_xz max (MHz)", v(GXz)[0], 6.0, 1.0),
            band("omega_r band (GHz)", pair(OmegaR), (6.2, 8.0), 0.3),
            band("Delta band (GHz)", pair(Delta), (5.4, 6.4), 0.2),
            band("|alpha_rel q| band (%)", pair(AlphaQ), (0.8, 1.1), 0.15),
            at_most("|alpha_rel r| (%)", v(AlphaR)[0], 0.6),
            at_most("runtime (s)", secs, 60.0),
        ],
    )
}

fn criterion_02_kn_table() -> bool {
    use Quantity::*;
    let (r, secs) = timed_table("kn");
    let v = |q| computed(&r, q)[0];
    report(
        2,
        "nine-junction table",
        vec![
            within("g_zx max (MHz)", v(GZx), 6.0, 0.5),
            within("g_xx max (MHz)", v(GXx), 13.0, 1.0),
            within("g_zz max (MHz)", v(GZz), 0.07, 0.02),
            within("g_xz max (MHz)", v(GXz), 0.2, 0.05),
            at_most("|alpha_rel r| (%)", v(AlphaR), 0.01),
            at_most("runtime (s)", secs, 120.0),
        ],
    )
}

fn criterion_03_add_table() -> bool {
    use Quantity::*;
    let (r, secs) = timed_table("add");
    let v = |q| computed(&r, q)[0];
    report(
        3,
        "added-inductance table",
        vec![
            within("g_zx max (MHz)", v(GZx), 10.0, 1.0),
            within("g_xx max (MHz)", v(GXx), 9.0, 1.0),
            within("g_zz max (MHz)", v(GZz), 0.06, 0.02),
            within("g_xz max (MHz)", v(GXz), 0.5, 0.15),
            within("k_crit", v(KCrit), 3.3, 0.2),
            at_most("|alpha_rel r| (%)", v(AlphaR), 0.005),
            at_most("runtime (s)", secs, 180.0),
        ],
    )
}

fn criterion_04_design_limits() -> bool {
    let d = design_limits(&DeviceParams::k1(), Band::default()).unwrap();
    let l_max = d.l_max.unwrap_or(f64::NAN);
    let l_crit = d.l_crit.unwrap_or(f64::NAN);
    report(
        4,
        "design limits",
        vec![within("L_max (nH)", l_max, 4.9, 0.1), within("L_crit (nH)", l_crit, 5.6, 0.1)],
    )
}

fn criterion_05_flux_bias_boost() -> bool {
    let sweep = |xb: f64| run_sweep(&SweepSpec::full_period(DeviceParams::k1(), 201, xb)).unwrap();
    let zero = sweep(0.0);
    let pi = sweep(PI);
    let ez = zero.extrema(CouplingMethod::NumericMinimum).unwrap();
    let ep = pi.extrema(CouplingMethod::NumericMinimum).unwrap();
    let ratio = ep.g_zx_max_mhz / ez.g_zx_max_mhz;
    let numeric = |r: &SweepResult| -> Vec<f64> {
        r.rows
            .iter()
            .filter(|row| row.method == CouplingMethod::NumericMinimum && row.error.is_none())
            .map(|row| row.alpha_q_rel)
            .collect()
    };
    let (az, ap) = (numeric(&zero), numeric(&pi));
    let all_valid = az.len() == 201 && ap.len() == 201;
    let (dlo, dhi) = ep.delta_ghz;
    report(
        5,
        "flux-bias boost",
        vec![
            check("ratio of max |g_zx|", (1.7..=2.3).contains(&ratio), format!("{ratio:.4} in [1.7, 2.3]")),
            check(
                "Delta band at phi_Xb = pi (GHz)",
                dlo >= 2.3 && dhi <= 4.2,
                format!("[{dlo:.4}, {dhi:.4}] within [2.3, 4.2]"),
            ),
            check(
                "alpha_q negative at phi_Xb = 0",
                all_valid && az.iter().all(|&a| a < 0.0),
                format!("max {:.4e}", az.iter().cloned().fold(f64::MIN, f64::max)),
            ),
            check(
                "alpha_q positive at phi_Xb = pi",
                all_valid && ap.iter().all(|&a| a > 0.0),
                format!("min {:.4e}", ap.iter().cloned().fold(f64::MAX, f64::min)),
            ),
        ],
    )
}

fn criterion_06_anchor_exactness() -> bool {
    let mut checks = Vec::new();
    for p in [DeviceParams::k1(), DeviceParams::kn(), DeviceParams::add()] {
        let model = p.energy_model().unwrap();
        for mu in [0, 1] {
            let x = mu as f64 * p.kf() * PI;
            let (_, num) = analyze_device(&model, x, 0.0, None).unwrap();
            let a = anchor_closed_form(&p, mu, 0.0).unwrap();
            let (q, r, g, ga) = (&num.modes[0], &num.modes[1], &num.couplings, &a.couplings);
            let scale = ga.g_xx_mhz.abs().max(ga.g_zz_mhz.abs());
            let worst = [
                rel(q.omega_ghz, a.qubit.omega_ghz),
                rel(q.alpha_mhz, a.qubit.alpha_mhz),
                rel(r.omega_ghz, a.resonator.omega_ghz),
                rel(r.alpha_mhz, a.resonator.alpha_mhz),
                rel(g.g_xx_mhz, ga.g_xx_mhz),
                rel(g.g_zz_mhz, ga.g_zz_mhz),
                (g.g_zx_mhz - ga.g_zx_mhz).abs() / scale,
                (g.g_xz_mhz - ga.g_xz_mhz).abs() / scale,
            ]
            .into_iter()
            .fold(0.0, f64::max);
            checks.push(check(format!("{} at phi_x = {mu}k pi", p.name), worst < 1e-9, format!("max rel {worst:.2e}")));
        }
    }
    report(6, "anchor exactness", checks)
}

fn criterion_07_lang_firsov() -> bool {
    let two_pi = 2.0 * PI;
    let sys = LongitudinalSystem { omega_r: two_pi * 7.0, delta: two_pi * 5.5, g_zx: two_pi * 0.053, n: 40 };
    let lf = lang_firsov_diagonalize(&sys).unwrap();
    let ground = lf.transformed[(0, 0)].re + 0.5 * sys.delta;
    let shift_rel = rel(ground, -sys.g_zx * sys.g_zx / sys.omega_r);
    // spacings of the two qubit branches compared level by level
    let n = sys.n;
    let interior = n - TAIL_LEVELS;
    let d = |k: usize| lf.transformed[(k, k)].re;
    let mut spread = 0.0f64;
    for k in 1..interior {
        let down = d(k) - d(k - 1);
        let up = d(n + k) - d(n + k - 1);
        spread = spread.max((up - down).abs() / sys.omega_r);
    }
    report(
        7,
        "Lang-Firsov",
        vec![
            check("off-diagonal residual / |H|", lf.offdiag_rel < 1e-8, format!("{:.2e}", lf.offdiag_rel)),
            check("ground shift vs -g^2/omega_r", shift_rel < 1e-6, format!("rel {shift_rel:.2e}")),
            check("spacing independent of qubit state", spread < 1e-10, format!("rel {spread:.2e}")),
        ],
    )
}

fn criterion_08_phase_gate() -> bool {
    let c = |re: f64, im: f64| C64::new(re, im);
    let inputs: [[C64; 4]; 4] = [
        [c(0.5, 0.0); 4],
        [c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        [c(0.3, 0.1), c(-0.4, 0.2), c(0.5, -0.3), c(0.2, 0.6)],
        [c(0.7, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.7)],
    ];
    let mut checks = Vec::new();
    for (i, input) in inputs.into_iter().enumerate() {
        let r = phase_gate_simulate(input, [2, 4, 4, 2]).unwrap();
        checks.push(check(format!("input {i} fidelity"), r.fidelity >= 1.0 - 1e-8, format!("1 - F = {:.2e}", 1.0 - r.fidelity)));
        checks.push(check(format!("input {i} leakage"), r.leakage < 1e-9, format!("{:.2e}", r.leakage)));
    }
    let r = phase_gate_simulate([c(0.5, 0.0); 4], [2, 4, 4, 2]).unwrap();
    checks.push(check("gate fidelity", r.gate_fidelity >= 1.0 - 1e-8, format!("1 - F = {:.2e}", 1.0 - r.gate_fidelity)));
    let signs: Vec<f64> = r.output.iter().map(|z| z.re.signum()).collect();
    checks.push(check("diag(1, 1, 1, -1)", signs == [1.0, 1.0, 1.0, -1.0], format!("{signs:?}")));
    report(8, "phase gate", checks)
}

/// Harmonic frequencies of a model expanded at the origin with all fluxes zero.
fn origin_frequencies(model: &circuitq::lagrangian::EnergyModel) -> Vec<f64> {
    let flux: FluxMap = model.flux_symbols().into_iter().map(|s| (s, 0.0)).collect();
    let bm = model.bind(&flux).unwrap();
    let k = bm.hessian(&DVector::zeros(model.dim()));
    generalized_frequencies(&model.cmat, &k).unwrap()
}

/// Reduced two-block capacitance matrix as printed, resonator coupling C_bμ/4.
fn printed_tilde(cb: f64, cg1: f64, cg2: f64, c1: f64, c2: f64) -> DMatrix<f64> {
    let cgmu = 2.0 * cg1 * cg2 / (cg1 + cg2);
    let cbmu = 2.0 * cb * cgmu / (cb + cgmu);
    let p2 = 2.0 * (cg1 + cg2) * (cb + cgmu) / (cb + 2.0 * cg1);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            cb + 2.0 * cg1, 0.0, 0.0, 0.0,
            0.0, p2, 0.0, 0.0,
            0.0, 0.0, c1 / 2.0 + cbmu / 4.0, -cbmu / 4.0,
            0.0, 0.0, -cbmu / 4.0, c2 / 2.0 + cbmu / 4.0,
        ],
    )
}

fn criterion_09_reduction() -> bool {
    let mut runner = TestRunner::new(Config { cases: 256, failure_persistence: None, ..Config::default() });
    let caps = (0.1f64..50.0, 0.1f64..20.0, 0.1f64..20.0, 20.0f64..200.0, 20.0f64..200.0);
    let worst = std::cell::Cell::new(0.0f64);
    let worst_exact = std::cell::Cell::new(0.0f64);
    let bad_entries = std::cell::RefCell::new(std::collections::BTreeSet::new());
    let result = runner.run(&caps, |(cb, g1, g2, c1, c2)| {
        let t = two_block_tilde(cb, g1, g2, c1, c2).unwrap();
        let scale = t.amax();
        let printed = printed_tilde(cb, g1, g2, c1, c2);
        for (i, (a, b)) in t.iter().zip(printed.iter()).enumerate() {
            let e = (a - b).abs() / scale;
            worst.set(worst.get().max(e));
            if e >= 1e-12 {
                bad_entries.borrow_mut().insert((i % 4, i / 4));
            }
        }
        let exact = (&t - two_block_tilde_closed_form(cb, g1, g2, c1, c2)).amax() / scale;
        worst_exact.set(worst_exact.get().max(exact));
        Ok(())
    });
    let bad = bad_entries.into_inner();
    let mut checks = vec![
        check(
            "Ctilde matches printed matrix entry-for-entry (256 random draws)",
            result.is_ok() && bad.is_empty(),
            format!("max rel {:.2e}, mismatched entries {bad:?}", worst.get()),
        ),
        check(
            "Ctilde matches self-consistent C_bmu/8 form",
            worst_exact.get() < 1e-12,
            format!("max rel {:.2e}", worst_exact.get()),
        ),
    ];

    let block = |cg: f64, phi_x: f64| BlockParams { device: DeviceParams::k1(), cg_ff: cg, phi_x };
    for (cb, cs) in [(Some(5.0), 0.0), (Some(12.0), 3.0), (None, 2.0)] {
        let p = TwoBlockParams { blocks: [block(4.0, 0.0), block(6.0, 0.0)], cb_ff: cb, cs_ff: cs };
        let model = build_energy_model(&parse(&two_block_netlist(&p)).unwrap(), None, None).unwrap();
        let (reduced, _) = eliminate_massless_or_potential_free(&model).unwrap();
        let full: Vec<f64> = origin_frequencies(&model).into_iter().filter(|&w| w > 1e-6).collect();
        let kept = origin_frequencies(&reduced);
        let err = if full.len() == kept.len() {
            full.iter().zip(&kept).map(|(a, b)| rel(*b, *a)).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        checks.push(check(
            format!("kept frequencies invariant (C_b = {cb:?}, C_s = {cs})"),
            err < 1e-10,
            format!("{} modes, max rel {err:.2e}", kept.len()),
        ));
    }
    report(9, "reduction", checks)
}

fn criterion_10_coupled_resonators() -> bool {
    let block = |cg: f64, l: f64, phi_x: f64| {
        let mut d = DeviceParams::k1();
        d.set("L", l).unwrap();
        BlockParams { device: d, cg_ff: cg, phi_x }
    };
    let mut checks = Vec::new();
    let mut worst = 0.0f64;
    let mut tested = 0;
    for cb in [Some(0.5), Some(2.0), Some(8.0), Some(30.0), None] {
        for (cg, l2) in [(4.0, 4.5), (8.0, 4.7), (15.0, 4.3)] {
            let p = TwoBlockParams { blocks: [block(cg, 4.5, 0.2), block(cg + 1.0, l2, 0.9)], cb_ff: cb, cs_ff: 0.0 };
            let cf = coupled_resonator_spectrum(&p).unwrap();
            let w_mean = 0.5 * (cf.omega_r_ghz[0] + cf.omega_r_ghz[1]);
            if (cf.g_c_mhz / 1000.0).abs() / w_mean > 0.05 {
                continue;
            }
            let (c, _) = coupled_block_reduction(&p).unwrap();
            let c_rr = DMatrix::from_row_slice(2, 2, &[c[(1, 1)], c[(1, 3)], c[(3, 1)], c[(3, 3)]]);
            let k = DMatrix::from_diagonal(&DVector::from_vec(vec![
                block_resonator_stiffness(&p.blocks[0]),
                block_resonator_stiffness(&p.blocks[1]),
            ]));
            let oracle = generalized_frequencies(&c_rr, &k).unwrap();
            let (wp, wm) = dressed_frequencies(cf.omega_r_ghz[0], cf.omega_r_ghz[1], cf.g_c_mhz / 1000.0).unwrap();
            worst = worst.max(rel(wm, oracle[0]).max(rel(wp, oracle[1])));
            tested += 1;
        }
    }
    checks.push(check(
        "omega_+- vs normal-mode oracle (g_c/omega <= 0.05)",
        tested > 0 && worst < 1e-4,
        format!("{tested} configurations, max rel {worst:.2e}"),
    ));

    let b = block(5.0, 4.5, 0.3);
    let single = resonator_spectrum_closed_form(&b.device, b.phi_x).unwrap();
    let p = TwoBlockParams { blocks: [b.clone(), b], cb_ff: Some(0.0), cs_ff: 0.0 };
    let cf = coupled_resonator_spectrum(&p).unwrap();
    let w_err = rel(cf.omega_r_ghz[0], single.omega_ghz);
    let z_err = rel(cf.z0_ohm[0], single.z0_ohm);
    checks.push(check("g_c -> 0 recovers omega_r", w_err < 1e-10, format!("rel {w_err:.2e}")));
    checks.push(check("g_c -> 0 recovers Z_0", z_err < 1e-10, format!("rel {z_err:.2e}")));
    checks.push(check("g_c vanishes at C_b = 0", cf.g_c_mhz == 0.0, format!("{:.2e} MHz", cf.g_c_mhz)));
    report(10, "coupled resonators", checks)
}

/// Transverse coupling from the full model expanded at the origin.
fn numeric_gxx_origin(p: &DeviceParams, phi_x: f64) -> f64 {
    let model = p.energy_model().unwrap();
    let bm = model.bind(&device_fluxes(phi_x, 0.0)).unwrap();
    spectrum_at(&bm, &model.var_names, &DVector::zeros(2), 0, 1).unwrap().couplings.g_xx_mhz
}

/// Sign change of `f` on [lo, hi] by bisection.
fn root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> Option<f64> {
    let flo = f(lo);
    if flo.signum() == f(hi).signum() {
        return None;
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn criterion_11_asymmetry() -> bool {
    let base = DeviceParams::k1();
    let tol = 1e-3 * 2.0 * PI;
    let mut checks = Vec::new();
    let mut closed_ref = None;
    for s in [0.5, 1.0, 2.0] {
        let (dl, d) = (0.01 * s, base.d * s);
        let a = asymmetric_transverse(&base, dl, d, 0.0).unwrap();
        let closed = a.zero_crossing.unwrap_or(f64::NAN);
        let mut p = base.clone();
        p.d = d;
        p.l1_nh = base.l_mean() * (1.0 + dl);
        p.l2_nh = base.l_mean() * (1.0 - dl);
        let numeric = root(|x| numeric_gxx_origin(&p, x), 0.0, p.kf() * PI).unwrap_or(f64::NAN);
        let err = (numeric - closed).abs();
        checks.push(check(
            format!("zero crossing at (dL, d) = ({dl}, {d})"),
            err <= tol,
            format!("closed {closed:.6}, numeric {numeric:.6}, |diff| {err:.2e} ≤ {tol:.2e}"),
        ));
        let r = *closed_ref.get_or_insert(closed);
        checks.push(check(format!("scaling invariance at ratio {s}"), (closed - r).abs() < 1e-12, format!("{closed:.12}")));
    }
    report(11, "asymmetry", checks)
}

fn criterion_12_langevin() -> bool {
    let mut checks = Vec::new();
    let (omega_r, g, kappa) = (1.0, 0.05, 0.1);
    let t_end = 20.0 / kappa;
    let steps = 400_000;
    let h = t_end / steps as f64;
    let mut worst = 0.0f64;
    for sigma in [-1i8, 1] {
        let ode = rk4_complex(langevin_rhs(omega_r, kappa, sigma as f64, |_| g), C64::new(0.0, 0.0), t_end, steps);
        for (k, y) in ode.iter().enumerate() {
            let exact = langevin_displacement_static(omega_r, g, kappa, sigma, k as f64 * h).unwrap();
            worst = worst.max((y - exact).norm());
        }
    }
    checks.push(check("static closed form vs ODE", worst < 1e-9, format!("max |diff| {worst:.2e}")));

    let (omega_r, g_bar, g_tilde, kappa) = (1.0, 0.002, 0.002, 0.01);
    let t_end = 5.0 / kappa;
    let steps = 100_000;
    let h = t_end / steps as f64;
    let steady = langevin_modulated_steady(g_tilde, kappa, 1).unwrap().norm();
    let mut worst = 0.0f64;
    for sigma in [-1i8, 1] {
        let ode = rk4_complex(
            langevin_rhs(omega_r, kappa, sigma as f64, |t| g_bar + g_tilde * (omega_r * t).cos()),
            C64::new(0.0, 0.0),
            t_end,
            steps,
        );
        for (k, y) in ode.iter().enumerate().step_by(100) {
            let t = k as f64 * h;
            let envelope = y * C64::new(0.0, omega_r * t).exp();
            let rwa = langevin_displacement_modulated(g_tilde, kappa, sigma, t).unwrap();
            worst = worst.max((envelope - rwa).norm() / steady);
        }
    }
    checks.push(check("modulated envelope vs ODE (kappa/omega_r = 1e-2)", worst < 0.05, format!("max rel {worst:.3}")));

    let sep = |kappa: f64| {
        let up = langevin_modulated_steady(0.01, kappa, 1).unwrap();
        let down = langevin_modulated_steady(0.01, kappa, -1).unwrap();
        (up - down).norm()
    };
    let base = sep(1e-3) * 1e-3;
    let dev = [1e-3, 1e-2, 1e-1].iter().map(|&k| rel(sep(k) * k, base)).fold(0.0, f64::max);
    checks.push(check("separation scales as 1/kappa over two decades", dev < 1e-12, format!("max rel {dev:.2e}")));
    report(12, "Langevin", checks)
}

fn criterion_13_dissipation() -> bool {
    let p = DeviceParams::k1();
    let res = ResonatorBath { c_ff: p.c_ff, cg_ff: 5.0, l_nh: p.l_mean(), eta: eta(p.ej_sigma, p.k, p.l_mean(), 0.0) };
    let bath = BathSpec { r_ohm: 50.0, cz_ff: 10.0, temperature_k: DEFAULT_TEMPERATURE_K };
    let times = res.times(&bath).unwrap();
    let closed = res.t1_closed_form(&bath).unwrap();
    let nominal = 1.0 / times.t1_s;
    let no_cg = 1.0 / ResonatorBath { cg_ff: 0.0, ..res }.times(&bath).unwrap().t1_s;
    let no_cz = 1.0 / res.times(&BathSpec { cz_ff: 0.0, ..bath }).unwrap().t1_s;
    report(
        13,
        "dissipation",
        vec![
            check("T2 = 2 T1", times.t2_s == 2.0 * times.t1_s, format!("T1 {:.4e} s, T2 {:.4e} s", times.t1_s, times.t2_s)),
            check("1/T1 at C_g = 0", no_cg < 1e-20 * nominal, format!("{no_cg:.2e} vs nominal {nominal:.2e}")),
            check("1/T1 at C_Z = 0", no_cz < 1e-20 * nominal, format!("{no_cz:.2e} vs nominal {nominal:.2e}")),
            check("two T1 paths agree", rel(times.t1_s, closed) < 1e-9, format!("rel {:.2e}", rel(times.t1_s, closed))),
        ],
    )
}

fn criterion_14_determinism() -> bool {
    let spec = SweepSpec::full_period(DeviceParams::add(), 201, 0.0);
    let a = run_sweep_with_jobs(&spec, Some(1)).unwrap().to_csv().unwrap();
    let b = run_sweep_with_jobs(&spec, Some(4)).unwrap().to_csv().unwrap();
    let c = run_sweep_with_jobs(&spec, None).unwrap().to_csv().unwrap();
    let golden = include_str!("golden/add_phi_x_201.csv");
    report(
        14,
        "determinism",
        vec![
            check("repeat runs identical (1, 4, default workers)", a == b && b == c, format!("{} bytes", a.len())),
            check("matches checked-in golden CSV", a == golden, format!("{} vs {} bytes", a.len(), golden.len())),
        ],
    )
}

fn main() {
    let criteria: [(&str, fn() -> bool); 14] = [
        ("criterion_01_k1_table", criterion_01_k1_table),
        ("criterion_02_kn_table", criterion_02_kn_table),
        ("criterion_03_add_table", criterion_03_add_table),
        ("criterion_04_design_limits", criterion_04_design_limits),
        ("criterion_05_flux_bias_boost", criterion_05_flux_bias_boost),
        ("criterion_06_anchor_exactness", criterion_06_anchor_exactness),
        ("criterion_07_lang_firsov", criterion_07_lang_firsov),
        ("criterion_08_phase_gate", criterion_08_phase_gate),
        ("criterion_09_reduction", criterion_09_reduction),
        ("criterion_10_coupled_resonators", criterion_10_coupled_resonators),
        ("criterion_11_asymmetry", criterion_11_asymmetry),
        ("criterion_12_langevin", criterion_12_langevin),
        ("criterion_13_dissipation", criterion_13_dissipation),
        ("criterion_14_determinism", criterion_14_determinism),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        // A panic inside a criterion counts as a failure of that criterion only.
        if !std::panic::catch_unwind(run).unwrap_or(false) {
            failed.push(name);
        }
    }
    println!("\n{} of {} criteria pass", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}
