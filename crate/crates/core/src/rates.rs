//! Phonon-driven relaxation between the two ground-state orbital branches:
//! single-phonon absorption/emission and the elastic two-phonon Raman rate.
//!
//! Splittings are ordinary frequencies in GHz and the occupation argument is
//! `h * delta / (k_B T)`. Coupling products are expressed so that rates come
//! out in MHz: `chi_rho` in MHz/GHz^3 and `chi_rho_sq` in MHz/GHz^5.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Planck constant (J s), exact SI value.
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Boltzmann constant (J/K), exact SI value.
pub const BOLTZMANN_K: f64 = 1.380_649e-23;
/// `k_B / h` in GHz per kelvin.
pub const KB_OVER_H_GHZ_PER_K: f64 = BOLTZMANN_K / PLANCK_H * 1e-9;

/// Upper limit of the Raman integral in units of `k_B T / h`.
pub const RAMAN_CUTOFF: f64 = 50.0;
/// Relative tolerance of the Raman quadrature.
pub const RAMAN_RTOL: f64 = 1e-9;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalSystem {
    /// Ground-state orbital splitting (GHz).
    pub delta_gs: f64,
    /// Excited-state splitting (GHz); informational only.
    pub delta_es: Option<f64>,
}

impl OrbitalSystem {
    pub fn new(delta_gs: f64) -> Result<Self> {
        let s = OrbitalSystem { delta_gs, delta_es: None };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_gs > 0.0 && self.delta_gs.is_finite()) {
            return Err(invalid(format!("ground-state splitting must be positive, got {}", self.delta_gs)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateConvention {
    /// Rates in MHz of ordinary frequency.
    #[default]
    PlainFrequency,
    /// Rates multiplied by 2 pi (angular units, 1/us).
    Angular,
}

impl RateConvention {
    pub fn factor(self) -> f64 {
        match self {
            RateConvention::PlainFrequency => 1.0,
            RateConvention::Angular => TWO_PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    /// Single-phonon coupling times DOS, MHz/GHz^3.
    pub chi_rho: f64,
    /// Two-phonon product, MHz/GHz^5.
    pub chi_rho_sq: f64,
    pub convention: RateConvention,
    /// Number of Raman channels entering the total (up and down: 2).
    pub raman_multiplicity: f64,
}

impl Default for RateModel {
    fn default() -> Self {
        RateModel { chi_rho: 0.0, chi_rho_sq: 0.0, convention: RateConvention::default(), raman_multiplicity: 2.0 }
    }
}

impl RateModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("chi_rho", self.chi_rho),
            ("chi_rho_sq", self.chi_rho_sq),
            ("raman_multiplicity", self.raman_multiplicity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Coupling that reproduces a measured linear slope `dGamma/dT` (MHz/K)
    /// of `gamma_up + gamma_down` in the high-temperature limit.
    pub fn chi_rho_from_linear_slope(slope_mhz_per_k: f64, delta_ghz: f64) -> f64 {
        slope_mhz_per_k / (2.0 * TWO_PI * delta_ghz * delta_ghz * KB_OVER_H_GHZ_PER_K)
    }

    /// Two-phonon product for which one Raman channel equals
    /// `coeff * T^3` (MHz with T in K).
    pub fn chi_rho_sq_from_cubic(coeff_mhz_per_k3: f64, delta_ghz: f64) -> f64 {
        let pi = std::f64::consts::PI;
        coeff_mhz_per_k3 / (2.0 * pi.powi(3) / 3.0 * delta_ghz * delta_ghz * KB_OVER_H_GHZ_PER_K.powi(3))
    }
}

/// Bose–Einstein occupation of a mode at `delta` GHz. Zero at `T = 0`.
pub fn bose_occupation(delta: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    1.0 / (delta / (KB_OVER_H_GHZ_PER_K * temperature)).exp_m1()
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("temperature must be non-negative, got {t}")));
    }
    Ok(())
}

/// `(gamma_up, gamma_down)` in the model's rate units.
pub fn single_phonon_rates(system: &OrbitalSystem, model: &RateModel, temperature: f64) -> Result<(f64, f64)> {
    system.validate()?;
    model.validate()?;
    check_temperature(temperature)?;
    let d = system.delta_gs;
    let base = TWO_PI * model.chi_rho * d * d * d * model.convention.factor();
    let n = bose_occupation(d, temperature);
    Ok((base * n, base * (n + 1.0)))
}

/// High-temperature form shared by both single-phonon rates:
/// `2 pi chi_rho delta^2 k_B T / h`.
pub fn linear_rate(system: &OrbitalSystem, model: &RateModel, temperature: f64) -> f64 {
    let d = system.delta_gs;
    TWO_PI * model.chi_rho * d * d * KB_OVER_H_GHZ_PER_K * temperature * model.convention.factor()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RamanMode {
    ClosedForm,
    NumericIntegral,
}

/// `x^2 e^x / (e^x - 1)^2`, i.e. `n (n + 1) x^2` with its limit 1 at 0.
fn raman_integrand(x: f64) -> f64 {
    if x < 1e-8 {
        return 1.0;
    }
    let em1 = x.exp_m1();
    x * x * (em1 + 1.0) / (em1 * em1)
}

/// One elastic Raman channel.
pub fn raman_rate(system: &OrbitalSystem, model: &RateModel, temperature: f64, mode: RamanMode) -> Result<f64> {
    system.validate()?;
    model.validate()?;
    check_temperature(temperature)?;
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let d = system.delta_gs;
    let thermal = KB_OVER_H_GHZ_PER_K * temperature;
    let prefactor = TWO_PI * model.chi_rho_sq * d * d * thermal.powi(3) * model.convention.factor();
    let integral = match mode {
        RamanMode::ClosedForm => std::f64::consts::PI.powi(2) / 3.0,
        RamanMode::NumericIntegral => {
            // Integral of n(n+1) nu^2 over nu, scaled to x = h nu / k_B T.
            let out = quadrature::double_exponential::integrate(raman_integrand, 0.0, RAMAN_CUTOFF, 1e-12);
            if !(out.error_estimate <= RAMAN_RTOL * out.integral.abs()) {
                return Err(Error::Numerical(format!(
                    "Raman quadrature error estimate {:e} exceeds tolerance",
                    out.error_estimate
                )));
            }
            out.integral
        }
    };
    Ok(prefactor * integral)
}

/// Rates at one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub temperature: f64,
    pub gamma_up: f64,
    pub gamma_down: f64,
    /// One Raman channel.
    pub gamma_raman: f64,
    /// `gamma_up + gamma_down + multiplicity * gamma_raman`.
    pub total: f64,
    /// `1 / (gamma_up + gamma_down)` in ns (rates in MHz); `None` when the
    /// single-phonon rates vanish.
    pub t1_ns: Option<f64>,
}

pub fn total_relaxation(system: &OrbitalSystem, model: &RateModel, temperature: f64) -> Result<RateSet> {
    let (up, down) = single_phonon_rates(system, model, temperature)?;
    let raman = raman_rate(system, model, temperature, RamanMode::ClosedForm)?;
    let single = up + down;
    Ok(RateSet {
        temperature,
        gamma_up: up,
        gamma_down: down,
        gamma_raman: raman,
        total: single + model.raman_multiplicity * raman,
        t1_ns: if single > 0.0 { Some(1e3 / single) } else { None },
    })
}

/// Lowest temperature in `(t_lo, t_hi)` K at which the Raman contribution
/// (`multiplicity * gamma_raman`) overtakes `gamma_up + gamma_down`.
/// `None` when it does not cross inside the bracket.
pub fn crossover_temperature(system: &OrbitalSystem, model: &RateModel, t_lo: f64, t_hi: f64) -> Result<Option<f64>> {
    if !(t_hi > t_lo && t_lo > 0.0) {
        return Err(invalid("crossover bracket must satisfy 0 < t_lo < t_hi"));
    }
    let excess = |t: f64| -> Result<f64> {
        let r = total_relaxation(system, model, t)?;
        Ok(model.raman_multiplicity * r.gamma_raman - (r.gamma_up + r.gamma_down))
    };
    // Scan for the first sign change, then bisect.
    let steps = 400;
    let mut prev_t = t_lo;
    if excess(t_lo)? > 0.0 {
        return Ok(Some(t_lo));
    }
    for i in 1..=steps {
        let t = t_lo + (t_hi - t_lo) * i as f64 / steps as f64;
        let v = excess(t)?;
        if v > 0.0 {
            let (mut a, mut b) = (prev_t, t);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if excess(m)? > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
                if b - a < 1e-12 * b {
                    break;
                }
            }
            return Ok(Some(0.5 * (a + b)));
        }
        prev_t = t;
    }
    Ok(None)
}
