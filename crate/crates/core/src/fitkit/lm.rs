//! Damped Gauss–Newton (Levenberg–Marquardt) least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A least-squares problem `min |r(p)|^2`.
pub trait Residuals {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// Row-major `n_residuals x n_params` derivative of the residuals.
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmOptions {
    /// Initial damping as a multiple of the largest diagonal of `J^T J`.
    /// Zero gives undamped Gauss–Newton steps until a step is rejected.
    pub initial_damping: f64,
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
    /// Scale the covariance by the reduced residual sum of squares; use
    /// when the residuals are not normalised by known uncertainties.
    pub scale_covariance: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            initial_damping: 1e-3,
            max_iterations: 500,
            step_tolerance: 1e-10,
            gradient_tolerance: 1e-12,
            scale_covariance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmSolution {
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Sum of squared residuals at the solution.
    pub cost: f64,
    pub dof: usize,
    /// Accepted steps.
    pub iterations: usize,
}

fn cost_of(problem: &dyn Residuals, p: &[f64], r: &mut [f64]) -> f64 {
    problem.residuals(p, r);
    r.iter().map(|v| v * v).sum()
}

/// Minimises the residual norm starting at `init`.
pub fn minimize(problem: &dyn Residuals, init: &[f64], opts: &LmOptions) -> Result<LmSolution> {
    let np = problem.n_params();
    let nr = problem.n_residuals();
    if init.len() != np {
        return Err(invalid(format!("expected {np} initial parameters, got {}", init.len())));
    }
    if nr < np {
        return Err(Error::Fit(format!("{nr} residuals cannot determine {np} parameters")));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial parameters must be finite"));
    }

    let mut p = init.to_vec();
    let mut r = vec![0.0; nr];
    let mut trial_r = vec![0.0; nr];
    let mut cost = cost_of(problem, &p, &mut r);
    if !cost.is_finite() {
        return Err(Error::Fit("residuals are not finite at the initial point".into()));
    }
    let mut jac = DMatrix::zeros(nr, np);
    let mut lambda = f64::NAN;
    let mut iterations = 0;
    let mut evaluations = 0;

    loop {
        problem.jacobian(&p, &mut jac);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        if grad.amax() < opts.gradient_tolerance {
            break;
        }
        if lambda.is_nan() {
            let scale = (0..np).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
            lambda = opts.initial_damping * scale;
        }

        let mut accepted = false;
        let mut converged = false;
        while !accepted {
            evaluations += 1;
            if evaluations > opts.max_iterations * 10 || iterations >= opts.max_iterations {
                return Err(Error::NonConvergence {
                    iterations,
                    message: format!("cost {cost:.6e} after {evaluations} evaluations"),
                    best: Some(p),
                });
            }
            let mut a = jtj.clone();
            for i in 0..np {
                let d = if jtj[(i, i)] > 0.0 { jtj[(i, i)] } else { 1.0 };
                a[(i, i)] += lambda * d;
            }
            let Some(chol) = a.cholesky() else {
                lambda = if lambda > 0.0 { lambda * 10.0 } else { 1e-12 };
                continue;
            };
            let step = chol.solve(&(-&grad));
            let norm_p = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let small = step.norm() <= opts.step_tolerance * (norm_p + opts.step_tolerance);
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_cost = cost_of(problem, &trial, &mut trial_r);
            if trial_cost.is_finite() && trial_cost <= cost {
                p = trial;
                std::mem::swap(&mut r, &mut trial_r);
                cost = trial_cost;
                lambda /= 10.0;
                iterations += 1;
                accepted = true;
                converged = small;
            } else if small {
                converged = true;
                break;
            } else {
                lambda = if lambda > 0.0 { lambda * 10.0 } else { 1e-3 * jtj.diagonal().amax().max(1e-300) };
            }
        }
        if converged {
            break;
        }
    }

    problem.jacobian(&p, &mut jac);
    let dof = nr - np;
    let jtj = jac.transpose() * &jac;
    // A singular normal matrix leaves some directions undetermined; their
    // uncertainties are reported as NaN.
    let cov = jtj.try_inverse().unwrap_or_else(|| DMatrix::from_element(np, np, f64::NAN));
    let scale = if opts.scale_covariance && dof > 0 { cost / dof as f64 } else { 1.0 };
    let cov = cov * scale;
    let std_errors = (0..np).map(|i| cov[(i, i)].abs().sqrt()).collect();
    let covariance = (0..np).map(|i| (0..np).map(|j| cov[(i, j)]).collect()).collect();
    Ok(LmSolution { params: p, std_errors, covariance, cost, dof, iterations })
}
