//! Built-in one-dimensional curve models and their fits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmOptions, Residuals};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveModel {
    /// `1 - exp(-x / t1)`.
    Recovery,
    /// `offset + amplitude * g^2 / ((x - center)^2 + g^2)` with `g = fwhm / 2`.
    Lorentzian,
    /// `i_max * (1 - exp(-x / p_sat))`.
    Saturation,
    /// `amplitude * exp(-(x - mean)^2 / (2 sd^2))`.
    Gaussian,
}

impl CurveModel {
    pub const ALL: [CurveModel; 4] =
        [CurveModel::Recovery, CurveModel::Lorentzian, CurveModel::Saturation, CurveModel::Gaussian];

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            CurveModel::Recovery => &["t1"],
            CurveModel::Lorentzian => &["center", "fwhm", "amplitude", "offset"],
            CurveModel::Saturation => &["i_max", "p_sat"],
            CurveModel::Gaussian => &["amplitude", "mean", "sd"],
        }
    }

    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    pub fn predict(self, x: f64, p: &[f64]) -> f64 {
        match self {
            CurveModel::Recovery => 1.0 - (-x / p[0]).exp(),
            CurveModel::Lorentzian => {
                let g = 0.5 * p[1];
                let u = x - p[0];
                p[3] + p[2] * g * g / (u * u + g * g)
            }
            CurveModel::Saturation => p[0] * (1.0 - (-x / p[1]).exp()),
            CurveModel::Gaussian => {
                let z = (x - p[1]) / p[2];
                p[0] * (-0.5 * z * z).exp()
            }
        }
    }

    /// Partial derivatives of `predict` with respect to each parameter.
    pub fn gradient(self, x: f64, p: &[f64], out: &mut [f64]) {
        match self {
            CurveModel::Recovery => {
                let t = p[0];
                out[0] = -(-x / t).exp() * x / (t * t);
            }
            CurveModel::Lorentzian => {
                let g = 0.5 * p[1];
                let u = x - p[0];
                let d = u * u + g * g;
                out[0] = p[2] * g * g * 2.0 * u / (d * d);
                out[1] = p[2] * g * u * u / (d * d);
                out[2] = g * g / d;
                out[3] = 1.0;
            }
            CurveModel::Saturation => {
                let e = (-x / p[1]).exp();
                out[0] = 1.0 - e;
                out[1] = -p[0] * e * x / (p[1] * p[1]);
            }
            CurveModel::Gaussian => {
                let u = x - p[1];
                let s2 = p[2] * p[2];
                let e = (-0.5 * u * u / s2).exp();
                out[0] = e;
                out[1] = p[0] * e * u / s2;
                out[2] = p[0] * e * u * u / (s2 * p[2]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: CurveModel,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Weighted residual sum of squares.
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.model.param_names().iter().position(|n| *n == name)?;
        Some((self.params[i], self.std_errors[i]))
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.model.predict(x, &self.params)
    }
}

struct CurveResiduals<'a> {
    model: CurveModel,
    x: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
}

impl Residuals for CurveResiduals<'_> {
    fn n_params(&self) -> usize {
        self.model.n_params()
    }
    fn n_residuals(&self) -> usize {
        self.x.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for i in 0..self.x.len() {
            out[i] = (self.model.predict(self.x[i], p) - self.y[i]) * self.w[i];
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let mut g = vec![0.0; self.model.n_params()];
        for i in 0..self.x.len() {
            self.model.gradient(self.x[i], p, &mut g);
            for (j, gj) in g.iter().enumerate() {
                out[(i, j)] = gj * self.w[i];
            }
        }
    }
}

fn check_series(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<()> {
    if x.len() != y.len() {
        return Err(invalid(format!("{} abscissae but {} values", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("data must be finite"));
    }
    if let Some(s) = sigma {
        if s.len() != x.len() {
            return Err(invalid(format!("{} values but {} uncertainties", x.len(), s.len())));
        }
        if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("uncertainties must be positive"));
        }
    }
    Ok(())
}

/// Weighted least-squares fit of `model`. With `sigma = None` the points are
/// equally weighted and the standard errors use the residual scatter.
pub fn fit_nonlinear(
    model: CurveModel,
    x: &[f64],
    y: &[f64],
    sigma: Option<&[f64]>,
    init: &[f64],
    opts: &LmOptions,
) -> Result<FitResult> {
    check_series(x, y, sigma)?;
    let w = match sigma {
        Some(s) => s.iter().map(|v| 1.0 / v).collect(),
        None => vec![1.0; x.len()],
    };
    let problem = CurveResiduals { model, x, y, w };
    let opts = LmOptions { scale_covariance: opts.scale_covariance || sigma.is_none(), ..*opts };
    let sol = minimize(&problem, init, &opts)?;
    Ok(FitResult {
        model,
        params: sol.params,
        std_errors: sol.std_errors,
        chi2: sol.cost,
        dof: sol.dof,
        iterations: sol.iterations,
    })
}

// ============================================================================
// Recovery
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryFit {
    pub t1: f64,
    pub t1_err: f64,
    pub fit: FitResult,
}

/// One-parameter fit of `ratio = 1 - exp(-tau / t1)`.
pub fn fit_recovery(taus: &[f64], ratios: &[f64], sigma: Option<&[f64]>) -> Result<RecoveryFit> {
    check_series(taus, ratios, sigma)?;
    if taus.len() < 3 {
        return Err(invalid("recovery fit needs at least 3 points"));
    }
    if ratios.iter().all(|&r| r <= 0.0) {
        return Err(Error::Fit("no recovery: all ratios are non-positive".into()));
    }
    // Points that carry information on t1 lie strictly inside (0, 1).
    let mut guesses: Vec<f64> = taus
        .iter()
        .zip(ratios)
        .filter(|&(&t, &r)| t > 0.0 && r > 0.0 && r < 1.0 - 1e-9)
        .map(|(&t, &r)| -t / (1.0 - r).ln())
        .collect();
    if guesses.is_empty() {
        return Err(Error::Fit("t1 is not identifiable: no point lies on the rising part of the curve".into()));
    }
    guesses.sort_by(f64::total_cmp);
    let init = guesses[guesses.len() / 2];
    let fit = fit_nonlinear(CurveModel::Recovery, taus, ratios, sigma, &[init], &LmOptions::default())?;
    if !(fit.params[0] > 0.0) {
        return Err(Error::Fit(format!("fitted t1 = {} is not positive", fit.params[0])));
    }
    Ok(RecoveryFit { t1: fit.params[0], t1_err: fit.std_errors[0], fit })
}

// ============================================================================
// Lorentzian
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub fit: FitResult,
}

pub fn fit_lorentzian(freq: &[f64], counts: &[f64], sigma: Option<&[f64]>) -> Result<LorentzianFit> {
    check_series(freq, counts, sigma)?;
    if freq.len() < 5 {
        return Err(invalid("Lorentzian fit needs at least 5 points"));
    }
    let (imax, &ymax) = counts.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let ymin = counts.iter().copied().fold(f64::INFINITY, f64::min);
    let (xlo, xhi) = freq.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(ymax > ymin) {
        return Err(Error::NonConvergence { iterations: 0, message: "data has no peak".into(), best: None });
    }
    let half = 0.5 * (ymax + ymin);
    let above: Vec<f64> = freq.iter().zip(counts).filter(|(_, &c)| c >= half).map(|(&f, _)| f).collect();
    let width =
        above.iter().copied().fold(f64::NEG_INFINITY, f64::max) - above.iter().copied().fold(f64::INFINITY, f64::min);
    let fwhm0 = if width > 0.0 { width } else { (xhi - xlo) / freq.len() as f64 };
    let init = [freq[imax], fwhm0, ymax - ymin, ymin];
    let fit = fit_nonlinear(CurveModel::Lorentzian, freq, counts, sigma, &init, &LmOptions::default())?;
    let p = &fit.params;
    if !(p[0] >= xlo && p[0] <= xhi && p[1].abs() > 0.0 && p[2] > 0.0) {
        return Err(Error::NonConvergence {
            iterations: fit.iterations,
            message: "fitted peak lies outside the data or has no amplitude".into(),
            best: Some(p.clone()),
        });
    }
    Ok(LorentzianFit { center: p[0], fwhm: p[1].abs(), amplitude: p[2], offset: p[3], fit })
}

// ============================================================================
// Saturation
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub i_max: f64,
    pub p_sat: f64,
    /// Data decrease by more than 3 combined standard deviations somewhere.
    pub non_monotonic: bool,
    pub fit: FitResult,
}

impl SaturationFit {
    /// Slope of the fitted curve at zero power.
    pub fn initial_slope(&self) -> f64 {
        self.i_max / self.p_sat
    }
}

pub fn fit_saturation(power: &[f64], counts: &[f64], sigma: Option<&[f64]>) -> Result<SaturationFit> {
    check_series(power, counts, sigma)?;
    if power.len() < 3 {
        return Err(invalid("saturation fit needs at least 3 points"));
    }
    let mut order: Vec<usize> = (0..power.len()).collect();
    order.sort_by(|&a, &b| power[a].total_cmp(&power[b]));
    let sd = |i: usize| sigma.map_or(0.0, |s| s[i]);
    let non_monotonic = order.windows(2).any(|w| {
        let (a, b) = (w[0], w[1]);
        counts[b] < counts[a] - 3.0 * (sd(a).powi(2) + sd(b).powi(2)).sqrt()
    });
    if non_monotonic {
        log::warn!("saturation data decrease beyond their uncertainties");
    }
    let ymax = counts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(ymax > 0.0) {
        return Err(Error::Fit("saturation data have no positive counts".into()));
    }
    let knee = order
        .iter()
        .find(|&&i| counts[i] >= (1.0 - (-1.0f64).exp()) * ymax)
        .map_or(power[order[order.len() / 2]], |&i| power[i]);
    let init = [ymax, if knee > 0.0 { knee } else { 1.0 }];
    let fit = fit_nonlinear(CurveModel::Saturation, power, counts, sigma, &init, &LmOptions::default())?;
    Ok(SaturationFit { i_max: fit.params[0], p_sat: fit.params[1], non_monotonic, fit })
}
