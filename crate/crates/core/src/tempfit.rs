//! Power-law fits `A + B T^p` to temperature-dependent relaxation rates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_EXPONENTS: [u32; 4] = [1, 3, 5, 7];

/// Rates (MHz) with one-sigma uncertainties (MHz) at temperatures (K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub temperatures: Vec<f64>,
    pub rates: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl RateSeries {
    pub fn new(temperatures: Vec<f64>, rates: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        let n = temperatures.len();
        if rates.len() != n || sigmas.len() != n {
            return Err(invalid(format!("{n} temperatures, {} rates and {} uncertainties", rates.len(), sigmas.len())));
        }
        if n < 2 {
            return Err(invalid("need at least two points"));
        }
        if temperatures.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(invalid("temperatures must be finite and non-negative"));
        }
        if rates.iter().any(|r| !r.is_finite()) {
            return Err(invalid("rates must be finite"));
        }
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("uncertainties must be positive"));
        }
        Ok(RateSeries { temperatures, rates, sigmas })
    }

    pub fn len(&self) -> usize {
        self.temperatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperatures.is_empty()
    }

    /// Points with `T < t_max`.
    pub fn below(&self, t_max: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.temperatures[i] < t_max).collect();
        RateSeries::new(
            keep.iter().map(|&i| self.temperatures[i]).collect(),
            keep.iter().map(|&i| self.rates[i]).collect(),
            keep.iter().map(|&i| self.sigmas[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: u32,
    pub a: f64,
    pub b: f64,
    pub a_err: f64,
    pub b_err: f64,
    pub cov_ab: f64,
    /// Weighted residual sum of squares.
    pub chi2: f64,
    pub dof: usize,
}

impl PowerFit {
    pub fn predict(&self, t: f64) -> f64 {
        self.a + self.b * t.powi(self.exponent as i32)
    }

    /// A negative zero-temperature rate has no physical meaning.
    pub fn unphysical_offset(&self) -> bool {
        self.a < 0.0
    }

    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }
}

/// Weighted linear least squares in the basis `{1, T^p}`.
pub fn fit_power_model(data: &RateSeries, exponent: u32) -> Result<PowerFit> {
    if exponent == 0 {
        return Err(invalid("exponent must be at least 1"));
    }
    let p = exponent as i32;
    // Powers are taken of T / T_max to keep the normal matrix well scaled.
    let t_ref = data.temperatures.iter().copied().fold(0.0, f64::max);
    if !(t_ref > 0.0) {
        return Err(Error::Fit("all temperatures are zero".into()));
    }
    let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..data.len() {
        let w = 1.0 / (data.sigmas[i] * data.sigmas[i]);
        let u = (data.temperatures[i] / t_ref).powi(p);
        s0 += w;
        s1 += w * u;
        s2 += w * u * u;
        r0 += w * data.rates[i];
        r1 += w * u * data.rates[i];
    }
    let det = s0 * s2 - s1 * s1;
    if !(det > 1e-12 * s0 * s2) {
        return Err(Error::Fit("design matrix is rank deficient (temperatures do not vary)".into()));
    }
    let a = (s2 * r0 - s1 * r1) / det;
    let bu = (s0 * r1 - s1 * r0) / det;
    let scale = t_ref.powi(p);
    let b = bu / scale;
    let chi2 = (0..data.len())
        .map(|i| {
            let u = (data.temperatures[i] / t_ref).powi(p);
            ((data.rates[i] - a - bu * u) / data.sigmas[i]).powi(2)
        })
        .sum();
    Ok(PowerFit {
        exponent,
        a,
        b,
        a_err: (s2 / det).sqrt(),
        b_err: (s0 / det).sqrt() / scale,
        cov_ab: -s1 / det / scale,
        chi2,
        dof: data.len() - 2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRanking {
    /// Fits ordered by increasing weighted residual sum of squares.
    pub fits: Vec<PowerFit>,
}

impl ModelRanking {
    pub fn winner(&self) -> &PowerFit {
        &self.fits[0]
    }

    /// `chi2` of each fit minus that of the winner, in ranking order.
    pub fn margins(&self) -> Vec<f64> {
        let best = self.fits[0].chi2;
        self.fits.iter().map(|f| f.chi2 - best).collect()
    }
}

pub fn select_model(data: &RateSeries, exponents: &[u32]) -> Result<ModelRanking> {
    if exponents.is_empty() {
        return Err(invalid("no exponents to compare"));
    }
    let mut fits = exponents.iter().map(|&p| fit_power_model(data, p)).collect::<Result<Vec<_>>>()?;
    fits.sort_by(|x, y| x.chi2.total_cmp(&y.chi2).then(x.exponent.cmp(&y.exponent)));
    Ok(ModelRanking { fits })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub t_ref: f64,
    pub t_elevated: f64,
    /// Reference (bulk) rate at `t_ref`, MHz.
    pub reference_rate: f64,
    /// Device rate at `t_elevated`, MHz.
    pub elevated_rate: f64,
    /// `elevated_rate / reference_rate`.
    pub ratio: f64,
}

pub fn crossing_report(bulk: &PowerFit, pnc: &PowerFit, t_ref: f64, t_elevated: f64) -> CrossingReport {
    let reference_rate = bulk.predict(t_ref);
    let elevated_rate = pnc.predict(t_elevated);
    CrossingReport { t_ref, t_elevated, reference_rate, elevated_rate, ratio: elevated_rate / reference_rate }
}

/// Rates `A + B T^p` at `temperatures` with Gaussian noise of standard
/// deviation `sigma` per point.
pub fn synthetic_series(
    a: f64,
    b: f64,
    exponent: u32,
    temperatures: &[f64],
    sigma: &[f64],
    seed: u64,
) -> Result<RateSeries> {
    if sigma.len() != temperatures.len() {
        return Err(invalid("one uncertainty per temperature is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let rates = temperatures
        .iter()
        .zip(sigma)
        .map(|(&t, &s)| a + b * t.powi(exponent as i32) + s * unit.sample(&mut rng))
        .collect();
    RateSeries::new(temperatures.to_vec(), rates, sigma.to_vec())
}
