//! End-to-end acceptance checks. Each test prints one line
//! `ACCEPTANCE <id> PASS|FAIL <title>: <details>` and then asserts.

use std::time::Instant;

use pnc_core::dynamics::{thermalization_curve, LevelSystem, NoiseSpec, PulseSequence, DEFAULT_WINDOW_NS};
use pnc_core::elastics::{BandModel, EigenOptions, Parity};
use pnc_core::fitkit::{
    fit_cell, fit_circle, fit_ellipse, fit_recovery, summarize_cells, synthetic_ensemble, CurveModel, Ellipse,
    PointSet2D,
};
use pnc_core::geometry::{build_nanobeam_mesh, build_unit_cell_mesh, CellParam, Resolution, UnitCellParams};
use pnc_core::material::Material;
use pnc_core::rates::{linear_rate, raman_rate, single_phonon_rates, OrbitalSystem, RamanMode, RateModel};
use pnc_core::spectrum::{
    compute_dos, frequency_grid, gap_depletion, parameter_sweep, widest_gap, CellGeometry, DosOptions, Gap,
    PipelineConfig, DEFAULT_DOS_K_POINTS,
};
use pnc_core::tempfit::{crossing_report, fit_power_model, select_model, synthetic_series, PowerFit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 6.626_070_15e-34;
const KB: f64 = 1.380_649e-23;

fn report(id: u32, title: &str, pass: bool, details: &str) {
    println!("ACCEPTANCE C{id} {} {title}: {details}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {details}");
}

fn rel(x: f64, target: f64) -> f64 {
    (x - target) / target
}

// ============================================================================
// Bands and DOS
// ============================================================================

#[test]
fn c1_bandgap_reproduction() {
    let start = Instant::now();
    let (reference_center, reference_width) = (59.1, 17.3);
    let mut lines = Vec::new();
    let mut centers = Vec::new();
    let mut ok = true;
    for res in [Resolution::new(24, 8, 4), Resolution::new(28, 10, 5)] {
        let cfg = PipelineConfig { resolution: res, ..PipelineConfig::default() };
        let dofs = cfg.geometry.mesh(res).unwrap().n_dofs();
        let (_, gaps) = cfg.gaps().unwrap();
        let inside: Vec<&Gap> = gaps.iter().filter(|g| g.f_hi > 30.0 && g.f_lo < 100.0).collect();
        let one = inside.len() == 1;
        let g = widest_gap(&gaps).expect("no gap");
        let (dc, dw) = (rel(g.center(), reference_center), rel(g.width(), reference_width));
        ok &= one && dofs <= 6000 && dc.abs() <= 0.15 && dw.abs() <= 0.30;
        centers.push(g.center());
        lines.push(format!(
            "res {}x{}x{} ({dofs} DOF): {} gap(s), center {:.2} GHz ({:+.1}%), width {:.2} GHz ({:+.1}%)",
            res.nx,
            res.ny,
            res.nz,
            inside.len(),
            g.center(),
            100.0 * dc,
            g.width(),
            100.0 * dw
        ));
    }
    let toward = (centers[1] - reference_center).abs() < (centers[0] - reference_center).abs();
    let elapsed = start.elapsed().as_secs_f64();
    ok &= toward && elapsed < 600.0;
    report(
        1,
        "bandgap reproduction",
        ok,
        &format!("{}; refinement moves center toward 59.1: {toward}; {elapsed:.0} s", lines.join("; ")),
    );
}

#[test]
fn c2_dos_depletion() {
    let cfg = PipelineConfig { n_k: DEFAULT_DOS_K_POINTS, ..PipelineConfig::default() };
    let (bands, gaps) = cfg.gaps().unwrap();
    let gap = widest_gap(&gaps).expect("no gap");
    let opts = DosOptions::default();
    let grid = frequency_grid(0.0, cfg.f_max, 2001);
    let dos = compute_dos(&bands, &grid, &opts).unwrap();
    let dep = gap_depletion(&dos, &gap, 5.0 * opts.broadening_ghz).unwrap();
    let depleted = dep.ratio() < 1e-3;

    let beam = PipelineConfig {
        geometry: CellGeometry::Nanobeam { width: 90.0, thickness: 70.0, period: UnitCellParams::MEASURED.a },
        resolution: Resolution::new(8, 6, 4),
        n_k: DEFAULT_DOS_K_POINTS,
        ..PipelineConfig::default()
    };
    let beam_bands = beam.band_structure().unwrap();
    let beam_dos = compute_dos(&beam_bands, &frequency_grid(50.0, 70.0, 401), &opts).unwrap();
    let beam_min = beam_dos.dos.iter().cloned().fold(f64::INFINITY, f64::min);
    let zero_branches = beam_bands.frequencies[0].iter().filter(|&&f| f < 0.5).count();
    let ok = depleted && beam_min > 0.0 && zero_branches == 4;
    report(
        2,
        "DOS depletion",
        ok,
        &format!(
            "gap [{:.2}, {:.2}] GHz max/median {:.2e} (< 1e-3, {} GHz edge margin); nanobeam min DOS in 50-70 GHz {:.3e}; {} branches from f = 0",
            gap.f_lo,
            gap.f_hi,
            dep.ratio(),
            5.0 * opts.broadening_ghz,
            beam_min,
            zero_branches
        ),
    );
}

#[test]
fn c3_tolerance_sweep() {
    let cfg = PipelineConfig::default();
    let (_, gaps) = cfg.gaps().unwrap();
    let base = widest_gap(&gaps).expect("no gap");
    let p = UnitCellParams::MEASURED;
    let sd = UnitCellParams::MEASURED_SD;

    let t_sweep = parameter_sweep(&cfg, CellParam::T, &[p.t - 3.0, p.t + 3.0]).unwrap();
    let width_change = t_sweep.iter().map(|s| rel(s.width_ghz, base.width()).abs()).fold(0.0, f64::max);
    let width_ok = (0.10..=0.30).contains(&width_change);

    let mut worst = (0.0_f64, "");
    for param in CellParam::ALL {
        let v = p.get(param);
        let s = sd.get(param);
        for point in parameter_sweep(&cfg, param, &[v - s, v + s]).unwrap() {
            let shift = if point.width_ghz > 0.0 { rel(point.center_ghz, base.center()).abs() } else { f64::INFINITY };
            if shift > worst.0 {
                worst = (shift, param.name());
            }
        }
    }
    let center_ok = worst.0 < 0.04;
    report(
        3,
        "tolerance sweep",
        width_ok && center_ok,
        &format!(
            "t +/- 3 nm changes width by up to {:.1}% (10-30%: {width_ok}); largest center shift over one S.D. {:.2}% from {} (< 4%: {center_ok})",
            100.0 * width_change,
            100.0 * worst.0,
            worst.1
        ),
    );
}

// ============================================================================
// Rates
// ============================================================================

#[test]
fn c4_rate_model_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut balance = 0.0_f64;
    for _ in 0..1000 {
        let delta = rng.random_range(1.0..500.0);
        let t = rng.random_range(0.1..300.0);
        let sys = OrbitalSystem::new(delta).unwrap();
        let m = RateModel { chi_rho: 1e-4, chi_rho_sq: 0.0, ..RateModel::default() };
        let (up, down) = single_phonon_rates(&sys, &m, t).unwrap();
        let x = H * delta * 1e9 / (KB * t);
        balance = balance.max(((down / up) / x.exp() - 1.0).abs());
    }

    let sys = OrbitalSystem::new(50.0).unwrap();
    let m = RateModel { chi_rho: 1e-4, chi_rho_sq: 3e-7, ..RateModel::default() };
    let mut raman = 0.0_f64;
    for t in [2.0, 4.4, 12.0, 20.0] {
        let c = raman_rate(&sys, &m, t, RamanMode::ClosedForm).unwrap();
        let n = raman_rate(&sys, &m, t, RamanMode::NumericIntegral).unwrap();
        raman = raman.max((n / c - 1.0).abs());
    }

    let t_hot = 50.0 * H * 50.0e9 / KB;
    let (up, down) = single_phonon_rates(&sys, &m, t_hot).unwrap();
    let lin = linear_rate(&sys, &m, t_hot);
    let (dev_up, dev_down) = (rel(up, lin).abs(), rel(down, lin).abs());
    let elapsed = start.elapsed().as_secs_f64();

    let ok = balance < 1e-12 && raman < 1e-6 && dev_up < 0.01 && dev_down < 0.01 && elapsed < 1.0;
    report(
        4,
        "rate-model identities",
        ok,
        &format!(
            "detailed balance max err {balance:.1e} (< 1e-12); Raman quadrature max err {raman:.1e} (< 1e-6); at kT = 50 h Delta up {:.4}% / down {:.4}% from linear (< 1%); {:.3} s",
            100.0 * dev_up,
            100.0 * dev_down,
            elapsed
        ),
    );
}

// ============================================================================
// Pump-probe
// ============================================================================

#[test]
fn c5_pump_probe_roundtrip() {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for t1 in [34.0, 486.0] {
        let system = LevelSystem::from_t1(t1, 0.5).unwrap();
        let taus: Vec<f64> = (1..=25).map(|i| 5.0 * t1 * i as f64 / 25.0).collect();
        let template = PulseSequence::new(0.0);
        let clean = thermalization_curve(&system, &template, &taus, DEFAULT_WINDOW_NS, None).unwrap();
        let shape = clean.iter().map(|&(tau, r)| (r - (1.0 - (-tau / t1).exp())).abs()).fold(0.0, f64::max);
        let noise = Some(NoiseSpec { level: 0.02, seed: 2 });
        let noisy = thermalization_curve(&system, &template, &taus, DEFAULT_WINDOW_NS, noise).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = noisy.into_iter().unzip();
        let fit = fit_recovery(&x, &y, None).unwrap();
        let err = rel(fit.t1, t1);
        ok &= err.abs() < 0.05 && shape < 0.03;
        parts.push(format!(
            "T1 {t1} ns: fitted {:.1} ns ({:+.1}%, < 5%), noiseless max deviation from 1 - exp(-tau/T1) {:.2}% (< 3%)",
            fit.t1,
            100.0 * err,
            100.0 * shape
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 30.0;
    report(5, "pump-probe roundtrip", ok, &format!("{}; {elapsed:.1} s", parts.join("; ")));
}

// ============================================================================
// Temperature fits
// ============================================================================

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

/// Uniform uncertainty giving the quoted standard error on the offset.
fn quoted_sigma(temps: &[f64], exponent: u32, a_err: f64) -> f64 {
    let n = temps.len() as f64;
    let s1: f64 = temps.iter().map(|t| t.powi(exponent as i32)).sum();
    let s2: f64 = temps.iter().map(|t| t.powi(2 * exponent as i32)).sum();
    a_err / (s2 / (n * s2 - s1 * s1)).sqrt()
}

#[test]
fn c6_temperature_fit_recovery() {
    let published = [
        ("bulk", 1.47, 0.68, 0.36, 1, grid(4.0, 20.0, 2.0)),
        ("nanobeam", 1.62, 0.47, 0.34, 1, grid(4.0, 20.0, 2.0)),
        ("PnC linear", -0.35, 0.15, 0.04, 1, grid(4.0, 12.5, 0.5)),
        ("PnC cubic", 0.52, 6.3e-4, 0.06, 3, grid(4.0, 20.0, 1.0)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, a, b, a_err, p, temps) in &published {
        let sigma = vec![quoted_sigma(temps, *p, *a_err); temps.len()];
        let (mut ha, mut hb) = (0, 0);
        for seed in 0..100 {
            let d = synthetic_series(*a, *b, *p, temps, &sigma, seed).unwrap();
            let f = fit_power_model(&d, *p).unwrap();
            ha += usize::from((f.a - a).abs() < 2.0 * f.a_err);
            hb += usize::from((f.b - b).abs() < 2.0 * f.b_err);
        }
        ok &= ha >= 90 && hb >= 90;
        parts.push(format!("{name}: A {ha}/100, B {hb}/100 within 2 SE"));
    }
    let temps = grid(4.0, 20.0, 1.0);
    let sigma = vec![quoted_sigma(&temps, 3, 0.06); temps.len()];
    let wins = (0..100)
        .filter(|&seed| {
            let d = synthetic_series(0.52, 6.3e-4, 3, &temps, &sigma, seed).unwrap();
            select_model(&d, &[3, 5, 7]).unwrap().winner().exponent == 3
        })
        .count();
    ok &= wins >= 95;
    report(
        6,
        "temperature-fit recovery",
        ok,
        &format!("{} (>= 90 each); T^3 ranked first in {wins}/100 (>= 95)", parts.join("; ")),
    );
}

#[test]
fn c7_crossing_check() {
    let bulk = PowerFit { exponent: 1, a: 1.47, b: 0.68, a_err: 0.36, b_err: 0.04, cov_ab: 0.0, chi2: 0.0, dof: 0 };
    let pnc = PowerFit { exponent: 3, a: 0.52, b: 6.3e-4, a_err: 0.06, b_err: 0.0, cov_ab: 0.0, chi2: 0.0, dof: 0 };
    let r = crossing_report(&bulk, &pnc, 4.4, 20.0);
    report(
        7,
        "crossing check",
        (0.8..=1.4).contains(&r.ratio),
        &format!(
            "bulk at 4.4 K {:.3} MHz, PnC at 20 K {:.3} MHz, ratio {:.3} (in [0.8, 1.4])",
            r.reference_rate, r.elevated_rate, r.ratio
        ),
    );
}

// ============================================================================
// Geometry fits
// ============================================================================

#[test]
fn c8_geometry_fitting() {
    let n = 73;
    let ens = synthetic_ensemble(&UnitCellParams::MEASURED, &UnitCellParams::MEASURED_SD, n, 0.1, 8).unwrap();
    let fits: Vec<_> = ens.iter().map(|(_, c)| fit_cell(c).unwrap()).collect();
    let rows = summarize_cells(&fits).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for row in &rows {
        let param: CellParam = row.name.parse().unwrap();
        let drawn: Vec<f64> =
            ens.iter().take(if param == CellParam::A { n - 1 } else { n }).map(|(p, _)| p.get(param)).collect();
        let drawn_mean = drawn.iter().sum::<f64>() / drawn.len() as f64;
        let table_sd = UnitCellParams::MEASURED_SD.get(param);
        let bound = 0.5 * table_sd / (n as f64).sqrt();
        let mean_ok = (row.mean - drawn_mean).abs() < bound;
        let sd_ok = rel(row.sd, table_sd).abs() < 0.25;
        ok &= mean_ok && sd_ok;
        parts.push(format!(
            "{} mean {:.2} vs drawn {:.2} (|d| {:.3} < {:.3}), SD {:.2} vs {:.1} ({:+.0}%)",
            row.name,
            row.mean,
            drawn_mean,
            (row.mean - drawn_mean).abs(),
            bound,
            row.sd,
            table_sd,
            100.0 * rel(row.sd, table_sd)
        ));
    }

    let e = Ellipse { center: [0.0, 0.0], a: 47.85, b: 44.95, rotation: 0.0 };
    let ring: PointSet2D = (0..60).map(|i| e.point_at(i as f64 * 0.1047)).collect::<Vec<_>>().into();
    let ef = fit_ellipse(&ring).unwrap();
    let arc: PointSet2D = (0..20)
        .map(|i| {
            let t = std::f64::consts::FRAC_PI_2 * i as f64 / 19.0;
            [16.9 * t.cos(), 16.9 * t.sin()]
        })
        .collect::<Vec<_>>()
        .into();
    let cf = fit_circle(&arc).unwrap();
    let exact = (ef.a - 47.85).abs().max((ef.b - 44.95).abs()).max((cf.radius - 16.9).abs());
    ok &= exact < 1e-9;
    report(
        8,
        "geometry fitting",
        ok,
        &format!("{} cells, 0.1 nm edge noise: {}; noiseless conic max error {exact:.1e} nm", n, parts.join("; ")),
    );
}

// ============================================================================
// FEM and Jacobian oracles
// ============================================================================

#[test]
fn c9_fem_oracles() {
    let mat = Material::diamond();
    let mesh = build_unit_cell_mesh(&UnitCellParams::MEASURED, Resolution::default()).unwrap();
    let model = BandModel::new(&mesh, &mat).unwrap();
    let f0 = model.solve_k(0.0, 8, &EigenOptions::default()).unwrap().frequencies_ghz;
    let null = f0.iter().filter(|&&f| f < 0.5).count();
    let null_ok = null >= 3 && f0[..null].iter().all(|&f| f < 0.5);

    let beam = build_nanobeam_mesh(90.0, 70.0, 130.0, Resolution::new(6, 4, 4)).unwrap();
    let s = mat.stiffness_voigt().try_inverse().unwrap();
    let speed = (1.0 / s[(0, 0)] / mat.density).sqrt();
    let k = 0.05;
    let modes = BandModel::new(&beam, &mat).unwrap().solve_k(k, 6, &EigenOptions::default()).unwrap();
    let f = modes
        .frequencies_ghz
        .iter()
        .zip(&modes.parities)
        .find(|(_, p)| **p == (Parity::Even, Parity::Even))
        .map(|(f, _)| *f)
        .unwrap();
    let fem = 2.0 * std::f64::consts::PI * f * 1e9 / (k * std::f64::consts::PI / 130e-9);
    let speed_err = rel(fem, speed);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut jac = 0.0_f64;
    for _ in 0..200 {
        for model in CurveModel::ALL {
            let (x, p): (f64, Vec<f64>) = match model {
                CurveModel::Recovery => (rng.random_range(0.5..50.0), vec![rng.random_range(1.0..300.0)]),
                CurveModel::Lorentzian => (
                    rng.random_range(-500.0..500.0),
                    vec![
                        rng.random_range(-50.0..50.0),
                        rng.random_range(50.0..800.0),
                        rng.random_range(0.1..10.0),
                        rng.random_range(-1.0..1.0),
                    ],
                ),
                CurveModel::Saturation => {
                    (rng.random_range(0.0..5.0), vec![rng.random_range(0.5..100.0), rng.random_range(0.2..3.0)])
                }
                CurveModel::Gaussian => (
                    rng.random_range(-10.0..10.0),
                    vec![rng.random_range(0.5..50.0), rng.random_range(-2.0..2.0), rng.random_range(0.5..5.0)],
                ),
            };
            let mut g = vec![0.0; p.len()];
            model.gradient(x, &p, &mut g);
            let scale = p.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for i in 0..p.len() {
                let h = 1e-6 * p[i].abs().max(1e-3);
                let (mut up, mut dn) = (p.clone(), p.clone());
                up[i] += h;
                dn[i] -= h;
                let fd = (model.predict(x, &up) - model.predict(x, &dn)) / (2.0 * h);
                jac = jac.max((fd - g[i]).abs() / scale.max(fd.abs()));
            }
        }
    }
    let ok = null_ok && speed_err.abs() < 0.03 && jac < 1e-6;
    report(
        9,
        "FEM oracles",
        ok,
        &format!(
            "{null} null modes at k = 0, highest {:.2e} GHz (< 0.5); rod speed FEM {fem:.0} vs {speed:.0} m/s ({:+.2}%, < 3%); Jacobian max rel err {jac:.1e} (< 1e-6)",
            f0[..null].iter().cloned().fold(0.0, f64::max),
            100.0 * speed_err
        ),
    );
}
