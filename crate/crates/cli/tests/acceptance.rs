//! Acceptance criteria, one line per criterion. Exits non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use num_complex::Complex64 as C64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use oemsim_cli::pipeline::{protocol_setup, Outcome, ProtocolOutcome};
use oemsim_cli::scenario::{load, LoadedScenario};
use oemsim_cli::run_scenario;
use oemsim_core::constants::HBAR;
use oemsim_core::grid::GridSpec;
use oemsim_core::mbloch_full::{integrate_full, linearize_check, FullConfig};
use oemsim_core::mbloch_reduced::{energy_ledger, integrate_reduced, TOL_LEDGER};
use oemsim_core::oem_steady::{approx_mirror, force_residual, solve_mirror};
use oemsim_core::optimize::optimize_input;
use oemsim_core::protocol::adiabaticity_margins;
use oemsim_core::{derive, PhysicalParams};

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn bundled() -> Vec<LoadedScenario> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load(p).unwrap()).collect()
}

fn scenario(name: &str) -> LoadedScenario {
    load(&scenarios_dir().join(format!("{name}.toml"))).unwrap()
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit,
        format!("runtime {:.2} s exceeds {limit} s", elapsed.as_secs_f64()),
    )
}

fn run_into(loaded: &LoadedScenario, dir: &Path) -> Outcome {
    run_scenario(loaded, dir)
        .unwrap_or_else(|e| panic!("{}: {e}", loaded.scenario.name))
        .1
}

// Brute-force roots of the SI force balance: uniform sign scan over the
// interval allowed by 0 <= n <= n_max, then bisection.
fn scan_roots(n_q: f64, params: &PhysicalParams) -> Vec<f64> {
    let dp = derive(params).unwrap();
    let f_rad = HBAR * dp.g0 * dp.max_photons(params);
    let lo = n_q * dp.eta_coul / dp.k_spring;
    let hi = (n_q * dp.eta_coul + f_rad) / dp.k_spring;
    let pad = 1e-3 * (hi - lo) + 1e-30;
    let (lo, hi) = (lo - pad, hi + pad);
    let f = |q: f64| force_residual(q, n_q, &dp, params);
    let n = 20_000;
    let mut roots = Vec::new();
    let (mut a, mut fa) = (lo, f(lo));
    for k in 1..=n {
        let b = lo + (hi - lo) * k as f64 / n as f64;
        let fb = f(b);
        if fa.signum() != fb.signum() {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            for _ in 0..200 {
                let m = 0.5 * (x0 + x1);
                let fm = f(m);
                if fm.signum() == f0.signum() {
                    x0 = m;
                    f0 = fm;
                } else {
                    x1 = m;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    roots
}

fn c1_steady_oracle() -> Check {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut cases: Vec<(PhysicalParams, f64)> = (0..100)
        .map(|_| {
            let mut p = PhysicalParams::reference();
            p.drive_power = 10f64.powf(rng.random_range(-6.0..-1.0));
            p.drive_detuning = rng.random_range(-20.0..20.0) * p.kappa;
            p.mirror_mass *= 10f64.powf(rng.random_range(-1.0..1.0));
            (p, 10f64.powf(rng.random_range(0.0..5.0)) - 1.0)
        })
        .collect();
    for n_q in [0.0, 1.0, 1e3, 8.3e4] {
        cases.push((PhysicalParams::reference(), n_q));
    }
    let mut worst: f64 = 0.0;
    for (p, n_q) in &cases {
        let oracle = scan_roots(*n_q, p)
            .into_iter()
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .ok_or("oracle found no root")?;
        let dp = derive(p).unwrap();
        let q = solve_mirror(*n_q, &dp, p, None).map_err(|e| e.to_string())?.q;
        worst = worst.max((q - oracle).abs() / oracle.abs());
    }
    ensure(worst <= 1e-10, format!("worst relative error {worst:.3e} > 1e-10"))?;
    let mut p = PhysicalParams::reference();
    p.drive_power = 0.0;
    let dp = derive(&p).unwrap();
    for n_q in [0.0, 17.0, 1e3, 1e5] {
        let q = solve_mirror(n_q, &dp, &p, None).map_err(|e| e.to_string())?.q;
        let exact = n_q * dp.eta_coul / (p.mirror_mass * p.omega_m * p.omega_m);
        ensure(q == exact && q == approx_mirror(n_q, &dp), format!("eps_c = 0: {q} != {exact}"))?;
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!(
        "{} parameter sets, worst relative error {worst:.2e}; eps_c = 0 linear law exact",
        cases.len()
    ))
}

fn c2_switching() -> Check {
    let start = Instant::now();
    let ps = protocol_setup(&scenario("storage_protocol").scenario).map_err(|e| e.to_string())?;
    let c = &ps.trace.control;
    let n0 = c.n_photon[0];
    let peak = (0..c.len()).max_by(|&a, &b| c.n_q[a].total_cmp(&c.n_q[b])).unwrap();
    let shift = ps.setup.derived.g0 * c.q[peak] / ps.setup.params.kappa;
    let frac_peak = c.n_photon[peak] / n0;
    let last = c.len() - 1;
    let frac_end = c.n_photon[last] / n0;
    let asym = (0..c.len())
        .map(|i| (c.n_photon[i] - c.n_photon[last - i]).abs() / n0)
        .fold(0.0, f64::max);
    ensure(shift >= 9.9, format!("peak G0 q = {shift:.3} kappa, short of 10"))?;
    ensure(frac_peak < 0.01, format!("n/n0 at peak charge = {frac_peak:.4e}"))?;
    ensure(frac_end > 0.99, format!("n/n0 after the reverse pulse = {frac_end:.6}"))?;
    ensure(asym < 1e-6, format!("up/down asymmetry {asym:.3e} of n0"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!(
        "peak G0 q = {shift:.3} kappa, n/n0 = {frac_peak:.4e} at peak, {frac_end:.8} after release, asymmetry {asym:.1e}"
    ))
}

fn cw_transmission(grid: &GridSpec) -> Result<f64, String> {
    let zero = vec![C64::new(0.0, 0.0); grid.n_tau];
    let input = vec![C64::new(1.0, 0.0); grid.n_tau];
    let st = integrate_reduced(&input, &zero, 1.0, 0.0, grid).map_err(|e| e.to_string())?;
    Ok(st.output.last().unwrap().norm_sqr())
}

fn c3_beer_lambert() -> Check {
    let start = Instant::now();
    let exact = (-2.0f64).exp();
    let g = GridSpec::default();
    let t1 = cw_transmission(&g)?;
    let t2 = cw_transmission(&g.refined(2))?;
    ensure((t1 - 0.1353).abs() <= 0.002, format!("transmission {t1}"))?;
    let ratio = (t1 - exact).abs() / (t2 - exact).abs();
    ensure((3.5..=4.5).contains(&ratio), format!("error ratio on doubling {ratio:.3}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("T = {t1:.8} (exact {exact:.8}), error ratio on grid doubling {ratio:.3}"))
}

fn protocol_outcomes(outcome: &Outcome) -> Vec<&ProtocolOutcome> {
    match outcome {
        Outcome::Protocol(p) => vec![p.as_ref()],
        Outcome::Sweep { runs, .. } => runs.iter().map(|(_, p)| p).collect(),
        _ => Vec::new(),
    }
}

fn c4_conservation() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut full_runs = 0;
    let mut worst_trace: f64 = 0.0;
    let mut worst_ledger: f64 = 0.0;
    for loaded in bundled() {
        let out = run_into(&loaded, &tmp.path().join(&loaded.scenario.name));
        for p in protocol_outcomes(&out) {
            let full = p.full.as_ref().ok_or("protocol run without the full model")?;
            full_runs += 1;
            worst_trace = worst_trace.max(full.max_trace_drift);
            worst_ledger = worst_ledger
                .max(p.report.ledger_residual_storage)
                .max(p.report.ledger_residual_retrieval);
        }
    }
    // default grid, Gaussian probe and a switching control
    let g = GridSpec::default();
    let x: Vec<C64> = g
        .taus()
        .iter()
        .map(|t| C64::new((-0.5 * ((t - 12.0) / 3.0).powi(2)).exp(), 0.0))
        .collect();
    let w: Vec<C64> = g
        .taus()
        .iter()
        .map(|t| C64::new(0.5 * (1.0 - ((t - 18.0) / 2.0).tanh()), 0.0))
        .collect();
    let st = integrate_reduced(&x, &w, 10.0, 0.1, &g).map_err(|e| e.to_string())?;
    let ledger = energy_ledger(&st).map_err(|e| e.to_string())?.residual;
    worst_ledger = worst_ledger.max(ledger);
    ensure(full_runs > 0, "no full-model run in the bundled scenarios".into())?;
    ensure(worst_trace <= 1e-8, format!("trace drift {worst_trace:.3e}"))?;
    ensure(worst_ledger <= TOL_LEDGER, format!("ledger residual {worst_ledger:.3e}"))?;
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "{full_runs} full runs, max trace drift {worst_trace:.2e}; max ledger residual {worst_ledger:.2e} (default grid {ledger:.2e})"
    ))
}

fn c5_linearization() -> Check {
    let start = Instant::now();
    let loaded = scenario("storage_protocol");
    let sc = &loaded.scenario;
    let ps = protocol_setup(sc).map_err(|e| e.to_string())?;
    let run = optimize_input(ps.d, &ps.storage_control, ps.delta_p, &ps.grid, &sc.optimize.options())
        .map_err(|e| e.to_string())?;
    let x = run.optimal_input();
    let reduced = integrate_reduced(x, &ps.storage_control, ps.d, ps.delta_p, &ps.grid).map_err(|e| e.to_string())?;
    let peak = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let w = ps.trace.storage_control().omega_tilde(ps.setup.params.gamma);
    let cfg = FullConfig {
        d: ps.d,
        delta_p: ps.delta_p,
        delta: ps.setup.derived.delta_tilde,
    };
    let deviation = |amp: f64| -> Result<f64, String> {
        let mu = amp / peak;
        let probe: Vec<C64> = x.iter().map(|z| z.conj() * mu).collect();
        let full = integrate_full(&probe, &w, &cfg, &ps.grid, None).map_err(|e| e.to_string())?;
        Ok(linearize_check(&full, &reduced, mu).map_err(|e| e.to_string())?.max())
    };
    let a0 = sc.probe.amplitude;
    let d0 = deviation(a0)?;
    let d_int = deviation(a0 / 2f64.sqrt())?;
    let d_amp = deviation(a0 / 2.0)?;
    let intensity_ratio = d0 / d_int;
    let amplitude_ratio = d0 / d_amp;
    ensure(d0 < 0.01, format!("deviation {d0:.3e} at amplitude {a0}"))?;
    ensure(
        (intensity_ratio / 2.0 - 1.0).abs() < 0.1,
        format!("halving the peak intensity changes the deviation by {intensity_ratio:.3}x"),
    )?;
    within(start.elapsed(), 120.0)?;
    Ok(format!(
        "deviation {d0:.3e} at |alpha| = {a0}; halving intensity {intensity_ratio:.3}x, halving amplitude {amplitude_ratio:.3}x"
    ))
}

fn c6_protocol() -> Check {
    let start = Instant::now();
    let loaded = scenario("storage_protocol");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let Outcome::Protocol(p) = run_into(&loaded, tmp.path()) else {
        return Err("storage_protocol is not a protocol run".into());
    };
    let r = &p.report;
    ensure(r.optical_depth == 25.0, format!("d = {}", r.optical_depth))?;
    ensure(p.photon_fraction_hold < 0.01, format!("control not closed during hold: {:.3e}", p.photon_fraction_hold))?;
    ensure(r.eta_s > 0.5, format!("eta_s = {:.4}", r.eta_s))?;
    // re-emission happens after the release pulse: most of the output must
    // leave after the hold, the rest is the leak through the residual control
    ensure(p.hold_emission < 0.5, format!("{:.3e} of the output leaves during the hold", p.hold_emission))?;
    ensure(p.overlap >= 0.99, format!("overlap {:.5}", p.overlap))?;
    within(start.elapsed(), 300.0)?;
    Ok(format!(
        "d = 25 backward: overlap {:.5}, eta_s {:.4}, eta_total {:.4}, hold emission {:.1e}",
        p.overlap, r.eta_s, r.eta_total, p.hold_emission
    ))
}

fn c7_optimizer() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let Outcome::Optimize { optimization } = run_into(&scenario("optimize"), &tmp.path().join("o")) else {
        return Err("optimize scenario returned another outcome".into());
    };
    let etas = &optimization.eta_total;
    let worst_drop = etas.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    ensure(worst_drop <= 1e-6, format!("eta decreased by {worst_drop:.3e}"))?;
    ensure(
        optimization.converged && optimization.iterations <= 20,
        format!("converged = {} after {} iterations", optimization.converged, optimization.iterations),
    )?;
    let Outcome::Depths(table) = run_into(&scenario("optimize_depth"), &tmp.path().join("d")) else {
        return Err("optimize_depth returned another outcome".into());
    };
    let eta = |d: f64| {
        table
            .points
            .iter()
            .find(|p| p.optical_depth == d)
            .map(|p| p.eta_total)
            .ok_or(format!("d = {d} missing"))
    };
    let series = [1.0, 5.0, 10.0, 25.0, 50.0].map(eta);
    let series: Vec<f64> = series.into_iter().collect::<Result<_, _>>()?;
    ensure(series.windows(2).all(|w| w[1] > w[0]), format!("not strictly increasing: {series:?}"))?;
    let e100 = eta(100.0)?;
    ensure(e100 >= 0.9, format!("eta(100) = {e100:.4}"))?;
    let e01 = eta(0.1)?;
    ensure(e01 < 0.1, format!("eta(0.1) = {e01:.4}"))?;
    within(start.elapsed(), 600.0)?;
    Ok(format!(
        "d = 10 converged in {} iterations (eta {:.4}); eta(d) = {:?} at d = 1,5,10,25,50; eta(100) = {e100:.4}; eta(0.1) = {e01:.4}; 1 - eta ~ d^{:.3} on [10, 100]",
        optimization.iterations,
        etas.last().unwrap(),
        series.iter().map(|e| (e * 1e4).round() / 1e4).collect::<Vec<_>>(),
        table.large_depth_exponent.unwrap_or(f64::NAN)
    ))
}

fn c8_adiabaticity() -> Check {
    let start = Instant::now();
    let loaded = scenario("storage_protocol");
    let mut sc = loaded.scenario.clone();
    sc.params.optical_depth = Some(10.0);
    let margins = |sc: &oemsim_cli::Scenario| {
        let ps = protocol_setup(sc).map_err(|e| e.to_string())?;
        adiabaticity_margins(&ps.trace.storage_control(), ps.d, ps.delta_p, ps.setup.params.gamma)
            .map_err(|e| e.to_string())
    };
    let width = sc.schedule.as_ref().unwrap().width;
    ensure(width >= 10.0, format!("bundled width {width}/gamma"))?;
    let m1 = margins(&sc)?;
    let mut wide = sc.clone();
    let s = wide.schedule.as_mut().unwrap();
    s.width *= 2.0;
    s.center *= 2.0;
    s.t_storage *= 2.0;
    s.hold *= 2.0;
    let m2 = margins(&wide)?;
    ensure(m1.rate < 0.1 && m1.amplitude < 0.1, format!("margins {m1:?}"))?;
    let ratio = m1.rate / m2.rate;
    ensure((ratio / 2.0 - 1.0).abs() < 0.1, format!("rate margin ratio on width doubling {ratio:.3}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "d = 10, width {width}/gamma: rate {:.3e}, amplitude {:.3e}; width x2: rate ratio {ratio:.3}, amplitude ratio {:.3}",
        m1.rate,
        m1.amplitude,
        m1.amplitude / m2.amplitude
    ))
}

fn c9_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for loaded in bundled() {
        let name = &loaded.scenario.name;
        let a = tmp.path().join("a").join(name);
        let b = tmp.path().join("b").join(name);
        let ma = run_scenario(&loaded, &a).map_err(|e| e.to_string())?.0;
        let mb = run_scenario(&loaded, &b).map_err(|e| e.to_string())?.0;
        ensure(ma.scenario_hash == mb.scenario_hash, format!("{name}: scenario hash differs"))?;
        ensure(ma.files.len() == mb.files.len(), format!("{name}: file lists differ"))?;
        for (fa, fb) in ma.files.iter().zip(&mb.files) {
            if fa.path.extension().is_some_and(|e| e == "csv") {
                let ba = std::fs::read(a.join(&fa.path)).map_err(|e| e.to_string())?;
                let bb = std::fs::read(b.join(&fb.path)).map_err(|e| e.to_string())?;
                ensure(ba == bb, format!("{name}: {} differs between runs", fa.path.display()))?;
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} CSV files byte-identical across two runs of every bundled scenario"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("steady-state oracle equivalence", c1_steady_oracle),
        ("charge-controlled switching", c2_switching),
        ("Beer-Lambert attenuation", c3_beer_lambert),
        ("conservation suites", c4_conservation),
        ("full/reduced consistency", c5_linearization),
        ("storage and backward retrieval", c6_protocol),
        ("optimizer properties", c7_optimizer),
        ("adiabaticity checker", c8_adiabaticity),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} PASS {name} ({secs:.2} s): {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name} ({secs:.2} s): {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
