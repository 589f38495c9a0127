//! Sample statistics with a Gaussian fit to the histogram.

use serde::{Deserialize, Serialize};

use super::lm::LmOptions;
use super::models::{fit_nonlinear, CurveModel, FitResult};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub bin_centers: Vec<f64>,
    pub counts: Vec<f64>,
    /// Gaussian fit `(amplitude, mean, sd)` to the histogram.
    pub gaussian: Option<FitResult>,
    /// Set when the spread is zero or the Gaussian fit failed.
    pub degenerate: bool,
}

pub fn gaussian_histogram_stats(values: &[f64], bins: usize) -> Result<HistogramStats> {
    if values.len() < 10 {
        return Err(invalid(format!("need at least 10 samples, got {}", values.len())));
    }
    if bins < 3 {
        return Err(invalid("need at least 3 bins"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if !(hi > lo) {
        return Ok(HistogramStats {
            n,
            mean,
            sd: 0.0,
            bin_centers: vec![lo],
            counts: vec![n as f64],
            gaussian: None,
            degenerate: true,
        });
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1.0;
    }
    let bin_centers: Vec<f64> = (0..bins).map(|i| lo + (i as f64 + 0.5) * width).collect();
    // Poisson weights, with empty bins treated as one count.
    let sigma: Vec<f64> = counts.iter().map(|c: &f64| c.max(1.0).sqrt()).collect();
    let peak = n as f64 * width / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let gaussian = fit_nonlinear(
        CurveModel::Gaussian,
        &bin_centers,
        &counts,
        Some(&sigma),
        &[peak, mean, sd],
        &LmOptions::default(),
    )
    .ok()
    .map(|mut f| {
        f.params[2] = f.params[2].abs();
        f
    });
    let degenerate = gaussian.is_none();
    Ok(HistogramStats { n, mean, sd, bin_centers, counts, gaussian, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_samples_are_degenerate() {
        let s = gaussian_histogram_stats(&[4.2; 12], 8).unwrap();
        assert_eq!(s.sd, 0.0);
        assert!(s.degenerate && s.gaussian.is_none());
    }

    #[test]
    fn too_few_samples_are_rejected() {
        assert!(gaussian_histogram_stats(&[1.0; 9], 5).is_err());
    }
}
