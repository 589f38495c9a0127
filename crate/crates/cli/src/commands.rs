//! Subcommand implementations. Each one computes everything first and
//! writes its artifacts afterwards, so a failing run leaves no partial
//! numeric output behind.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use pnc_core::dynamics::{
    simulate_sequence, thermalization_curve, LevelSystem, NoiseSpec, PulseSequence, DEFAULT_WINDOW_NS,
};
use pnc_core::elastics::{band_diagram_with, BandModel, BandStructure, EigenOptions};
use pnc_core::fitkit::{fit_cell, fit_recovery, summarize_cells, CellContours, PointSet2D};
use pnc_core::geometry::Resolution;
use pnc_core::rates::{total_relaxation, OrbitalSystem, RateConvention, RateModel};
use pnc_core::spectrum::{
    compute_dos, find_complete_gaps, frequency_grid, gap_depletion, parameter_sweep, widest_gap, write_sweep_csv, Gap,
};
use pnc_core::tempfit::{select_model, RateSeries};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::plot::fig1b_script;
use crate::{Command, FitGeomArgs, FitT1Args, FitTempArgs, PumpProbeArgs, RatesArgs};

/// Reference gap the `gap` report is compared against, GHz.
pub const REFERENCE_GAP_CENTER_GHZ: f64 = 59.1;
pub const REFERENCE_GAP_WIDTH_GHZ: f64 = 17.3;
/// Relative tolerances on the reference centre and width.
pub const GAP_CENTER_TOLERANCE: f64 = 0.15;
pub const GAP_WIDTH_TOLERANCE: f64 = 0.30;
/// Band window in which exactly one complete gap is expected, GHz.
pub const GAP_SEARCH_WINDOW_GHZ: (f64, f64) = (30.0, 100.0);

pub fn dispatch(command: &Command, cfg: &RunConfig) -> CliResult<Option<PathBuf>> {
    match command {
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(None)
        }
        Command::Bands => bands(cfg).map(Some),
        Command::Dos => dos(cfg).map(Some),
        Command::Gap => gap(cfg).map(Some),
        Command::Sweep(_) => sweep(cfg).map(Some),
        Command::Rates(a) => rates(cfg, a).map(Some),
        Command::Pumpprobe(a) => pumpprobe(cfg, a).map(Some),
        Command::FitT1(a) => fit_t1(cfg, a).map(Some),
        Command::FitTemp(a) => fit_temp(cfg, a).map(Some),
        Command::FitGeom(a) => fit_geom(cfg, a).map(Some),
    }
}

// ============================================================================
// Artifacts
// ============================================================================

/// Files of one run, written together once the computation has finished.
struct Artifacts {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new(cfg: &RunConfig, subcommand: &str, args: &str) -> Self {
        let id = cfg.run_id.clone().unwrap_or_else(|| default_run_id(cfg, subcommand, args));
        let dir = cfg.output_root().join(id).join(subcommand);
        let mut a = Artifacts { dir, files: Vec::new() };
        a.add("config.toml", cfg.to_toml().into_bytes());
        a
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn add_json(&mut self, name: &str, value: &Value) {
        let mut text = serde_json::to_string_pretty(value).expect("report serialises");
        text.push('\n');
        self.add(name, text.into_bytes());
    }

    fn write(self) -> CliResult<PathBuf> {
        let err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Output { path, source }
        };
        std::fs::create_dir_all(&self.dir).map_err(err(&self.dir))?;
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, bytes).map_err(err(&path))?;
        }
        Ok(self.dir)
    }
}

fn default_run_id(cfg: &RunConfig, subcommand: &str, args: &str) -> String {
    let mut h = std::hash::DefaultHasher::new();
    let mut keyed = cfg.clone();
    keyed.output_dir = None;
    keyed.to_toml().hash(&mut h);
    subcommand.hash(&mut h);
    args.hash(&mut h);
    format!("run-{:016x}", h.finish())
}

fn csv_bytes<F>(f: F) -> Vec<u8>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let bad = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(bad)?;
    rdr.deserialize().collect::<Result<Vec<T>, _>>().map_err(bad)
}

fn gap_json(g: &Gap) -> Value {
    json!({ "f_lo_GHz": g.f_lo, "f_hi_GHz": g.f_hi, "center_GHz": g.center(), "width_GHz": g.width() })
}

// ============================================================================
// Band structure, DOS, gaps, sweeps
// ============================================================================

fn band_structure(cfg: &RunConfig, k: &[f64]) -> CliResult<(BandStructure, usize)> {
    let [nx, ny, nz] = cfg.resolution;
    let mesh = cfg.geometry().mesh(Resolution::new(nx, ny, nz))?;
    let model = BandModel::new(&mesh, &cfg.material())?;
    let bands = band_diagram_with(&model, k, cfg.n_bands, &EigenOptions::default())?;
    Ok((bands, model.n_dofs()))
}

fn bands(cfg: &RunConfig) -> CliResult<PathBuf> {
    let (bands, dofs) = band_structure(cfg, &cfg.k_samples())?;
    let mut out = Artifacts::new(cfg, "bands", "");
    out.add("bands.csv", csv_bytes(|b| bands.write_csv(b)));
    out.add_json("report.json", &json!({ "dofs": dofs, "k_points": bands.k.len(), "bands": bands.n_bands() }));
    out.write()
}

fn dos(cfg: &RunConfig) -> CliResult<PathBuf> {
    let k = match &cfg.k_path {
        Some(k) => k.clone(),
        None => pnc_core::elastics::uniform_k_path(cfg.dos_k_points),
    };
    let (bands, dofs) = band_structure(cfg, &k)?;
    let gaps = find_complete_gaps(&bands, cfg.f_max_GHz)?;
    let grid = frequency_grid(0.0, cfg.f_max_GHz, cfg.dos_grid_points);
    let dos = compute_dos(&bands, &grid, &cfg.dos_options())?;
    if let Some(first) = dos.warnings.first() {
        eprintln!("warning: {first}");
        if dos.warnings.len() > 1 {
            eprintln!("warning: {} more sampling warnings in report.json", dos.warnings.len() - 1);
        }
    }
    let margin = 5.0 * cfg.dos_broadening_GHz;
    let depletion: Vec<Value> = gaps
        .iter()
        .map(|g| match gap_depletion(&dos, g, margin) {
            Ok(d) => json!({ "max_inside": d.max_inside, "median_outside": d.median_outside, "ratio": d.ratio() }),
            Err(_) => Value::Null,
        })
        .collect();

    let mut out = Artifacts::new(cfg, "dos", "");
    out.add("bands.csv", csv_bytes(|b| bands.write_csv(b)));
    out.add("dos.csv", csv_bytes(|b| dos.write_csv(b)));
    out.add("fig1b.gp", fig1b_script("bands.csv", "dos.csv", &gaps, cfg.f_max_GHz, "fig1b.png").into_bytes());
    out.add_json(
        "report.json",
        &json!({
            "dofs": dofs,
            "k_points": bands.k.len(),
            "gaps": gaps.iter().map(gap_json).collect::<Vec<_>>(),
            "depletion": depletion,
            "dos_integral": dos.integral(),
            "warnings": dos.warnings,
        }),
    );
    out.write()
}

fn gap(cfg: &RunConfig) -> CliResult<PathBuf> {
    let (bands, dofs) = band_structure(cfg, &cfg.k_samples())?;
    let gaps = find_complete_gaps(&bands, cfg.f_max_GHz)?;
    let widest = widest_gap(&gaps);
    let (lo, hi) = GAP_SEARCH_WINDOW_GHZ;
    let in_window = gaps.iter().filter(|g| g.f_hi > lo && g.f_lo < hi).count();

    let reference = widest.map(|g| {
        let dc = g.center() / REFERENCE_GAP_CENTER_GHZ - 1.0;
        let dw = g.width() / REFERENCE_GAP_WIDTH_GHZ - 1.0;
        json!({
            "center_GHz": REFERENCE_GAP_CENTER_GHZ,
            "width_GHz": REFERENCE_GAP_WIDTH_GHZ,
            "center_rel_deviation": dc,
            "width_rel_deviation": dw,
            "center_tolerance": GAP_CENTER_TOLERANCE,
            "width_tolerance": GAP_WIDTH_TOLERANCE,
            "center_within_tolerance": dc.abs() <= GAP_CENTER_TOLERANCE,
            "width_within_tolerance": dw.abs() <= GAP_WIDTH_TOLERANCE,
        })
    });
    match widest {
        Some(g) => println!(
            "widest gap: center {:.3} GHz, width {:.3} GHz (reference {REFERENCE_GAP_CENTER_GHZ} / {REFERENCE_GAP_WIDTH_GHZ} GHz)",
            g.center(),
            g.width()
        ),
        None => println!("no complete gap below {} GHz", cfg.f_max_GHz),
    }

    let mut out = Artifacts::new(cfg, "gap", "");
    let mut csv = String::from("f_lo_GHz,f_hi_GHz,center_GHz,width_GHz\n");
    for g in &gaps {
        csv.push_str(&format!("{},{},{},{}\n", g.f_lo, g.f_hi, g.center(), g.width()));
    }
    out.add("gaps.csv", csv.into_bytes());
    out.add_json(
        "report.json",
        &json!({
            "dofs": dofs,
            "k_points": bands.k.len(),
            "gaps": gaps.iter().map(gap_json).collect::<Vec<_>>(),
            "widest": widest.as_ref().map(gap_json),
            "gaps_in_window": in_window,
            "single_gap_in_window": in_window == 1,
            "reference": reference,
        }),
    );
    out.write()
}

fn sweep(cfg: &RunConfig) -> CliResult<PathBuf> {
    if cfg.k_path.is_some() {
        return Err(CliError::Config("sweeps sample k uniformly; remove k_path and set k_points".into()));
    }
    let points = parameter_sweep(&cfg.pipeline(), cfg.sweep_param, &cfg.sweep_values_nm)?;
    let mut out = Artifacts::new(cfg, "sweep", "");
    out.add("sweep.csv", csv_bytes(|b| write_sweep_csv(&points, b)));
    out.write()
}

// ============================================================================
// Rates and pump-probe
// ============================================================================

fn parse_range(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Config(format!("temperature range '{spec}' is not LO:HI:N"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !(hi >= lo) {
        return Err(bad());
    }
    Ok(frequency_grid(lo, hi, n))
}

fn rates(cfg: &RunConfig, a: &RatesArgs) -> CliResult<PathBuf> {
    let temps = match (&a.temp_k, &a.temp_range) {
        (Some(t), _) => t.clone(),
        (None, Some(r)) => parse_range(r)?,
        (None, None) => return Err(CliError::Config("give --temp-k or --temp-range".into())),
    };
    if let Some(t) = temps.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(CliError::Config(format!("temperature {t} K is not a non-negative number")));
    }
    let system = OrbitalSystem::new(a.delta_ghz)?;
    let model = RateModel {
        chi_rho: a.chi_rho,
        chi_rho_sq: a.chi_rho_sq,
        convention: if a.angular { RateConvention::Angular } else { RateConvention::PlainFrequency },
        raman_multiplicity: a.raman_channels,
    };
    model.validate()?;
    let rows = temps.iter().map(|&t| total_relaxation(&system, &model, t)).collect::<pnc_core::Result<Vec<_>>>()?;

    let mut csv = String::from("temperature_K,gamma_up_MHz,gamma_down_MHz,gamma_raman_MHz,t1_ns\n");
    for r in &rows {
        let t1 = r.t1_ns.unwrap_or(f64::INFINITY);
        csv.push_str(&format!("{},{},{},{},{}\n", r.temperature, r.gamma_up, r.gamma_down, r.gamma_raman, t1));
    }
    let mut out = Artifacts::new(cfg, "rates", &format!("{a:?}"));
    out.add("rates.csv", csv.into_bytes());
    out.write()
}

fn pumpprobe(cfg: &RunConfig, a: &PumpProbeArgs) -> CliResult<PathBuf> {
    let mut system = match (a.t1_ns, a.gamma_up, a.gamma_down) {
        (Some(t1), _, _) => LevelSystem::from_t1(t1, a.up_over_down)?,
        (None, Some(up), Some(down)) => LevelSystem::new(up, down),
        _ => return Err(CliError::Config("give --t1-ns or both --gamma-up and --gamma-down".into())),
    };
    if let Some(v) = a.omega {
        system.omega = v;
    }
    if let Some(v) = a.gamma_opt {
        system.gamma_opt = v;
    }
    if let Some(v) = a.beta {
        system.beta = v;
    }
    system.validate()?;
    let t1 = system.t1_ns();
    let taus = match &a.taus {
        Some(t) => t.clone(),
        None if t1.is_finite() => (1..=25).map(|i| 5.0 * t1 * i as f64 / 25.0).collect(),
        None => return Err(CliError::Config("orbital rates vanish; give --taus explicitly".into())),
    };
    let mut template = PulseSequence::new(0.0);
    if let Some(v) = a.width_ns {
        template.width_ns = v;
    }
    if let Some(v) = a.step_ns {
        template.step_ns = v;
    }
    template.validate()?;
    let window = a.window_ns.unwrap_or(DEFAULT_WINDOW_NS);
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(CliError::Config(format!("noise must be non-negative, got {}", a.noise)));
    }
    let noise = (a.noise > 0.0).then_some(NoiseSpec { level: a.noise, seed: cfg.seed });

    let curve = thermalization_curve(&system, &template, &taus, window, noise)?;
    let trace_tau = a.trace_tau.unwrap_or_else(|| taus.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let trace = simulate_sequence(&system, &PulseSequence { delay_ns: trace_tau, ..template })?;
    let (tau_v, ratio_v): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
    let fit = match fit_recovery(&tau_v, &ratio_v, None) {
        Ok(f) => json!({ "t1_ns": f.t1, "t1_err_ns": f.t1_err }),
        Err(e) => {
            eprintln!("warning: recovery fit failed: {e}");
            Value::Null
        }
    };

    let mut csv = String::from("tau_ns,ratio\n");
    for (t, r) in &curve {
        csv.push_str(&format!("{t},{r}\n"));
    }
    let mut out = Artifacts::new(cfg, "pumpprobe", &format!("{a:?}"));
    out.add("ratio.csv", csv.into_bytes());
    out.add("trace.csv", csv_bytes(|b| trace.write_csv(b)));
    out.add_json(
        "report.json",
        &json!({
            "t1_injected_ns": t1,
            "gamma_up_MHz": system.gamma_up,
            "gamma_down_MHz": system.gamma_down,
            "omega_MHz": system.omega,
            "gamma_opt_MHz": system.gamma_opt,
            "beta": system.beta,
            "noise": a.noise,
            "seed": cfg.seed,
            "window_ns": window,
            "trace_tau_ns": trace_tau,
            "fit": fit,
        }),
    );
    out.write()
}

// ============================================================================
// Fits
// ============================================================================

#[derive(Debug, Deserialize)]
struct RecoveryRow {
    tau_ns: f64,
    ratio: f64,
    sigma: Option<f64>,
}

fn fit_t1(cfg: &RunConfig, a: &FitT1Args) -> CliResult<PathBuf> {
    let rows: Vec<RecoveryRow> = read_csv(&a.input)?;
    let taus: Vec<f64> = rows.iter().map(|r| r.tau_ns).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let sigma: Option<Vec<f64>> = rows.iter().map(|r| r.sigma).collect();
    if sigma.is_none() && rows.iter().any(|r| r.sigma.is_some()) {
        return Err(CliError::Config("sigma must be given for every row or for none".into()));
    }
    let fit = fit_recovery(&taus, &ratios, sigma.as_deref())?;
    let t_end = taus.iter().copied().fold(0.0, f64::max);
    let mut csv = String::from("tau_ns,ratio_fit\n");
    for t in frequency_grid(0.0, t_end, 201) {
        csv.push_str(&format!("{t},{}\n", fit.fit.predict(t)));
    }
    let mut out = Artifacts::new(cfg, "fit-t1", &input_key(&a.input));
    out.add("fit.csv", csv.into_bytes());
    out.add_json(
        "report.json",
        &json!({
            "t1_ns": fit.t1,
            "t1_err_ns": fit.t1_err,
            "chi2": fit.fit.chi2,
            "dof": fit.fit.dof,
            "points": rows.len(),
            "weighted": sigma.is_some(),
        }),
    );
    out.write()
}

#[allow(non_snake_case)]
#[derive(Debug, Deserialize)]
struct RateRow {
    temperature_K: f64,
    rate_MHz: f64,
    sigma_MHz: f64,
}

fn fit_temp(cfg: &RunConfig, a: &FitTempArgs) -> CliResult<PathBuf> {
    let rows: Vec<RateRow> = read_csv(&a.input)?;
    let mut series = RateSeries::new(
        rows.iter().map(|r| r.temperature_K).collect(),
        rows.iter().map(|r| r.rate_MHz).collect(),
        rows.iter().map(|r| r.sigma_MHz).collect(),
    )?;
    if let Some(t_max) = a.t_max {
        series = series.below(t_max)?;
    }
    let ranking = select_model(&series, &a.models)?;
    for f in &ranking.fits {
        if f.unphysical_offset() {
            eprintln!("warning: T^{} fit has a negative offset A = {} MHz", f.exponent, f.a);
        }
    }
    let fits: Vec<Value> = ranking
        .fits
        .iter()
        .map(|f| {
            json!({
                "exponent": f.exponent,
                "A_MHz": f.a,
                "A_err_MHz": f.a_err,
                "B": f.b,
                "B_err": f.b_err,
                "cov_AB": f.cov_ab,
                "chi2": f.chi2,
                "dof": f.dof,
                "reduced_chi2": f.reduced_chi2(),
                "negative_offset": f.unphysical_offset(),
            })
        })
        .collect();

    let t_lo = series.temperatures.iter().copied().fold(f64::INFINITY, f64::min);
    let t_hi = series.temperatures.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut by_exp: Vec<_> = ranking.fits.iter().collect();
    by_exp.sort_by_key(|f| f.exponent);
    let mut csv = String::from("temperature_K");
    for f in &by_exp {
        csv.push_str(&format!(",rate_T{}_MHz", f.exponent));
    }
    csv.push('\n');
    for t in frequency_grid(t_lo, t_hi, 200) {
        csv.push_str(&t.to_string());
        for f in &by_exp {
            csv.push_str(&format!(",{}", f.predict(t)));
        }
        csv.push('\n');
    }

    let mut out = Artifacts::new(cfg, "fit-temp", &format!("{}|{:?}|{:?}", input_key(&a.input), a.models, a.t_max));
    out.add("curves.csv", csv.into_bytes());
    out.add_json(
        "report.json",
        &json!({
            "points": series.len(),
            "t_max_K": a.t_max,
            "best_exponent": ranking.winner().exponent,
            "chi2_margins": ranking.margins(),
            "fits": fits,
        }),
    );
    out.write()
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    file: PathBuf,
    role: String,
    cell: usize,
}

#[derive(Debug, Deserialize)]
struct PointRow {
    x_nm: f64,
    y_nm: f64,
}

/// Reads the contours listed in a manifest, grouped by cell index.
/// Tether edges are assigned to the upper or lower side by their mean y.
pub fn read_manifest(path: &Path) -> CliResult<Vec<CellContours>> {
    let rows: Vec<ManifestRow> = read_csv(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cells: BTreeMap<usize, (CellContours, Vec<PointSet2D>)> = BTreeMap::new();
    for row in rows {
        let file = base.join(&row.file);
        let points: Vec<PointRow> = read_csv(&file)?;
        let set = PointSet2D::new(points.iter().map(|p| [p.x_nm, p.y_nm]).collect());
        let entry = cells.entry(row.cell).or_default();
        match row.role.trim().to_ascii_lowercase().as_str() {
            "block" if entry.0.block.is_none() => entry.0.block = Some(set),
            "block" => return Err(CliError::Config(format!("cell {} has more than one block contour", row.cell))),
            "corner" => entry.0.corners.push(set),
            "tether-edge" => entry.1.push(set),
            other => {
                return Err(CliError::Config(format!(
                    "unknown role '{other}' for {} (expected block, corner or tether-edge)",
                    row.file.display()
                )))
            }
        }
    }
    let mean_y = |s: &PointSet2D| s.points.iter().map(|p| p[1]).sum::<f64>() / s.len().max(1) as f64;
    cells
        .into_iter()
        .map(|(id, (mut c, mut edges))| match edges.len() {
            0 => Ok(c),
            2 => {
                edges.sort_by(|p, q| mean_y(q).total_cmp(&mean_y(p)));
                c.tether_lower = edges.pop();
                c.tether_upper = edges.pop();
                Ok(c)
            }
            n => Err(CliError::Config(format!("cell {id} has {n} tether edges; expected 0 or 2"))),
        })
        .collect()
}

fn fit_geom(cfg: &RunConfig, a: &FitGeomArgs) -> CliResult<PathBuf> {
    let cells = read_manifest(&a.manifest)?;
    let fits = cells.iter().map(fit_cell).collect::<pnc_core::Result<Vec<_>>>()?;
    let summary = summarize_cells(&fits)?;
    let mut csv = String::from("parameter,average_nm,sd_nm\n");
    for s in &summary {
        csv.push_str(&format!("{},{},{}\n", s.name, s.mean, s.sd));
    }
    let mut out = Artifacts::new(cfg, "fit-geom", &input_key(&a.manifest));
    out.add("geometry.csv", csv.into_bytes());
    out.add_json(
        "report.json",
        &json!({
            "cells": cells.len(),
            "parameters": summary.iter().map(|s| json!({ "name": s.name, "n": s.n, "average_nm": s.mean, "sd_nm": s.sd })).collect::<Vec<_>>(),
        }),
    );
    out.write()
}

/// Input identity for the run id: the path and the file contents.
fn input_key(path: &Path) -> String {
    let contents = std::fs::read(path).unwrap_or_default();
    let mut h = std::hash::DefaultHasher::new();
    contents.hash(&mut h);
    format!("{}#{:016x}", path.display(), h.finish())
}
