//! Python bindings: band structures and gaps, relaxation rates, pump-probe
//! curves and the curve and contour fits.
//!
//! Errors caused by bad inputs raise `ValueError`; solver and fit failures
//! raise `RuntimeError`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pnc_core::dynamics::{thermalization_curve, LevelSystem, NoiseSpec, PulseSequence, DEFAULT_WINDOW_NS};
use pnc_core::fitkit::{self, PointSet2D};
use pnc_core::geometry::{Resolution, UnitCellParams};
use pnc_core::material::Material;
use pnc_core::rates::{self, OrbitalSystem, RateConvention, RateModel};
use pnc_core::spectrum::{self, CellGeometry, PipelineConfig};
use pnc_core::tempfit::{self, RateSeries};

fn to_py(e: pnc_core::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn points(pts: Vec<(f64, f64)>) -> PointSet2D {
    PointSet2D::new(pts.into_iter().map(|(x, y)| [x, y]).collect())
}

// ============================================================================
// Band structure
// ============================================================================

/// Averages of the measured cell geometry, nm.
#[pyfunction]
fn measured_geometry(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let p = UnitCellParams::MEASURED;
    let d = PyDict::new(py);
    for (k, v) in [("w", p.w), ("h", p.h), ("a", p.a), ("t", p.t), ("r", p.r), ("d", p.d)] {
        d.set_item(k, v)?;
    }
    Ok(d)
}

#[allow(clippy::too_many_arguments)]
fn pipeline(
    w: f64,
    h: f64,
    a: f64,
    t: f64,
    r: f64,
    d: f64,
    resolution: (usize, usize, usize),
    k_points: usize,
    n_bands: usize,
    f_max: f64,
) -> PipelineConfig {
    PipelineConfig {
        geometry: CellGeometry::UnitCell(UnitCellParams { w, h, a, t, r, d }),
        material: Material::diamond(),
        resolution: Resolution::new(resolution.0, resolution.1, resolution.2),
        n_k: k_points,
        n_bands,
        f_max,
        ..PipelineConfig::default()
    }
}

/// Band structure of the block-tether cell. Returns a dict with `k`,
/// `frequencies` (one list per k point, GHz), `parity_y` and `parity_z`.
#[pyfunction]
#[pyo3(signature = (w=95.7, h=89.9, a=129.6, t=22.1, r=16.9, d=70.3, resolution=(24, 8, 4), k_points=20, n_bands=40))]
#[allow(clippy::too_many_arguments)]
fn band_structure(
    py: Python<'_>,
    w: f64,
    h: f64,
    a: f64,
    t: f64,
    r: f64,
    d: f64,
    resolution: (usize, usize, usize),
    k_points: usize,
    n_bands: usize,
) -> PyResult<Bound<'_, PyDict>> {
    let cfg = pipeline(w, h, a, t, r, d, resolution, k_points, n_bands, spectrum::DEFAULT_F_MAX_GHZ);
    let bands = py.detach(|| cfg.band_structure()).map_err(to_py)?;
    let parity = |axis: usize| -> Vec<Vec<&'static str>> {
        bands
            .parities
            .iter()
            .map(|row| row.iter().map(|p| if axis == 0 { p.0.as_str() } else { p.1.as_str() }).collect())
            .collect()
    };
    let out = PyDict::new(py);
    out.set_item("k", bands.k.clone())?;
    out.set_item("frequencies", bands.frequencies.clone())?;
    out.set_item("parity_y", parity(0))?;
    out.set_item("parity_z", parity(1))?;
    Ok(out)
}

/// Complete gaps below `f_max` GHz as `(f_lo, f_hi)` pairs.
#[pyfunction]
#[pyo3(signature = (w=95.7, h=89.9, a=129.6, t=22.1, r=16.9, d=70.3, resolution=(24, 8, 4), k_points=20, n_bands=40, f_max=100.0))]
#[allow(clippy::too_many_arguments)]
fn complete_gaps(
    py: Python<'_>,
    w: f64,
    h: f64,
    a: f64,
    t: f64,
    r: f64,
    d: f64,
    resolution: (usize, usize, usize),
    k_points: usize,
    n_bands: usize,
    f_max: f64,
) -> PyResult<Vec<(f64, f64)>> {
    let cfg = pipeline(w, h, a, t, r, d, resolution, k_points, n_bands, f_max);
    let (_, gaps) = py.detach(|| cfg.gaps()).map_err(to_py)?;
    Ok(gaps.iter().map(|g| (g.f_lo, g.f_hi)).collect())
}

// ============================================================================
// Rates and dynamics
// ============================================================================

/// Bose-Einstein occupation of a mode at `delta_ghz` and `temperature_k`.
#[pyfunction]
fn bose_occupation(delta_ghz: f64, temperature_k: f64) -> f64 {
    rates::bose_occupation(delta_ghz, temperature_k)
}

/// Orbital relaxation rates (MHz) and single-phonon T1 (ns) at one temperature.
#[pyfunction]
#[pyo3(signature = (delta_ghz, temperature_k, chi_rho=0.0, chi_rho_sq=0.0, angular=false, raman_channels=2.0))]
fn relaxation_rates(
    py: Python<'_>,
    delta_ghz: f64,
    temperature_k: f64,
    chi_rho: f64,
    chi_rho_sq: f64,
    angular: bool,
    raman_channels: f64,
) -> PyResult<Bound<'_, PyDict>> {
    let system = OrbitalSystem::new(delta_ghz).map_err(to_py)?;
    let model = RateModel {
        chi_rho,
        chi_rho_sq,
        convention: if angular { RateConvention::Angular } else { RateConvention::PlainFrequency },
        raman_multiplicity: raman_channels,
    };
    model.validate().map_err(to_py)?;
    let r = rates::total_relaxation(&system, &model, temperature_k).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("gamma_up", r.gamma_up)?;
    out.set_item("gamma_down", r.gamma_down)?;
    out.set_item("gamma_raman", r.gamma_raman)?;
    out.set_item("total", r.total)?;
    out.set_item("t1_ns", r.t1_ns)?;
    Ok(out)
}

/// Pump-probe recovery ratio at each delay for an orbital T1 (ns).
#[pyfunction]
#[pyo3(signature = (t1_ns, taus, up_over_down=0.5, noise=0.0, seed=1, window_ns=DEFAULT_WINDOW_NS))]
fn pump_probe_curve(
    py: Python<'_>,
    t1_ns: f64,
    taus: Vec<f64>,
    up_over_down: f64,
    noise: f64,
    seed: u64,
    window_ns: f64,
) -> PyResult<Vec<f64>> {
    let system = LevelSystem::from_t1(t1_ns, up_over_down).map_err(to_py)?;
    let noise = (noise > 0.0).then_some(NoiseSpec { level: noise, seed });
    let curve = py
        .detach(|| thermalization_curve(&system, &PulseSequence::new(0.0), &taus, window_ns, noise))
        .map_err(to_py)?;
    Ok(curve.into_iter().map(|(_, r)| r).collect())
}

// ============================================================================
// Fits
// ============================================================================

/// Fit of `1 - exp(-tau / t1)`; returns `(t1, t1_err)`.
#[pyfunction]
#[pyo3(signature = (taus, ratios, sigma=None))]
fn fit_recovery(taus: Vec<f64>, ratios: Vec<f64>, sigma: Option<Vec<f64>>) -> PyResult<(f64, f64)> {
    let f = fitkit::fit_recovery(&taus, &ratios, sigma.as_deref()).map_err(to_py)?;
    Ok((f.t1, f.t1_err))
}

/// Lorentzian fit; returns a dict with `center`, `fwhm`, `amplitude`, `offset`.
#[pyfunction]
#[pyo3(signature = (freq, counts, sigma=None))]
fn fit_lorentzian(
    py: Python<'_>,
    freq: Vec<f64>,
    counts: Vec<f64>,
    sigma: Option<Vec<f64>>,
) -> PyResult<Bound<'_, PyDict>> {
    let f = fitkit::fit_lorentzian(&freq, &counts, sigma.as_deref()).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("center", f.center)?;
    out.set_item("fwhm", f.fwhm)?;
    out.set_item("amplitude", f.amplitude)?;
    out.set_item("offset", f.offset)?;
    Ok(out)
}

fn power_fit_dict<'py>(py: Python<'py>, f: &tempfit::PowerFit) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("exponent", f.exponent)?;
    out.set_item("a", f.a)?;
    out.set_item("b", f.b)?;
    out.set_item("a_err", f.a_err)?;
    out.set_item("b_err", f.b_err)?;
    out.set_item("chi2", f.chi2)?;
    out.set_item("dof", f.dof)?;
    out.set_item("negative_offset", f.unphysical_offset())?;
    Ok(out)
}

/// Weighted fits of `A + B T^p` for each exponent, best first.
#[pyfunction]
#[pyo3(signature = (temperatures, rates, sigmas, exponents=vec![1, 3, 5, 7]))]
fn select_power_model(
    py: Python<'_>,
    temperatures: Vec<f64>,
    rates: Vec<f64>,
    sigmas: Vec<f64>,
    exponents: Vec<u32>,
) -> PyResult<Vec<Bound<'_, PyDict>>> {
    let series = RateSeries::new(temperatures, rates, sigmas).map_err(to_py)?;
    let ranking = tempfit::select_model(&series, &exponents).map_err(to_py)?;
    ranking.fits.iter().map(|f| power_fit_dict(py, f)).collect()
}

/// Ellipse through `(x, y)` points; returns `(cx, cy, a, b, rotation)`.
#[pyfunction]
fn fit_ellipse(pts: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64, f64, f64)> {
    let e = fitkit::fit_ellipse(&points(pts)).map_err(to_py)?;
    Ok((e.center[0], e.center[1], e.a, e.b, e.rotation))
}

/// Circle through `(x, y)` points; returns `(cx, cy, radius)`.
#[pyfunction]
fn fit_circle(pts: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let c = fitkit::fit_circle(&points(pts)).map_err(to_py)?;
    Ok((c.center[0], c.center[1], c.radius))
}

/// Minimum tether width from its upper and lower edges.
#[pyfunction]
fn fit_tether_width(upper: Vec<(f64, f64)>, lower: Vec<(f64, f64)>) -> PyResult<f64> {
    Ok(fitkit::fit_tether_width(&points(upper), &points(lower)).map_err(to_py)?.t)
}

#[pymodule]
fn pnc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(measured_geometry, m)?)?;
    m.add_function(wrap_pyfunction!(band_structure, m)?)?;
    m.add_function(wrap_pyfunction!(complete_gaps, m)?)?;
    m.add_function(wrap_pyfunction!(bose_occupation, m)?)?;
    m.add_function(wrap_pyfunction!(relaxation_rates, m)?)?;
    m.add_function(wrap_pyfunction!(pump_probe_curve, m)?)?;
    m.add_function(wrap_pyfunction!(fit_recovery, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lorentzian, m)?)?;
    m.add_function(wrap_pyfunction!(select_power_model, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ellipse, m)?)?;
    m.add_function(wrap_pyfunction!(fit_circle, m)?)?;
    m.add_function(wrap_pyfunction!(fit_tether_width, m)?)?;
    Ok(())
}
