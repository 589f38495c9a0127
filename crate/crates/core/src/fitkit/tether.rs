//! Tether width from the upper and lower edge contours.
//!
//! Each edge follows a symmetric waist profile around a shared waist
//! position `x0`:
//!
//! ```text
//! upper: y = y_u + c_u * g(x - x0, k_u)
//! lower: y = y_l - c_l * g(x - x0, k_l)
//! g(u, k) = u^2 / (1 + k |u|)
//! ```
//!
//! which is parabolic near the waist and opens linearly beyond `|u| ~ 1/k`.
//! The sharpness is fitted as `k = k_max q^2 / (1 + q^2)` with `k_max` a
//! hundred times the inverse half-span of the data, so both the parabola
//! `k = 0` and the sharp-corner limit stay at finite parameters. The tether
//! width is `y_u - y_l`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::conic::PointSet2D;
use super::lm::{minimize, LmOptions, Residuals};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TetherFit {
    /// Vertical gap at the waist.
    pub t: f64,
    pub waist_x: f64,
    pub upper_y: f64,
    pub lower_y: f64,
    /// Curvature and sharpness of each edge `[c, k]`.
    pub upper_shape: [f64; 2],
    pub lower_shape: [f64; 2],
}

impl TetherFit {
    pub fn upper_at(&self, x: f64) -> f64 {
        self.upper_y + self.upper_shape[0] * profile(x - self.waist_x, self.upper_shape[1])
    }

    pub fn lower_at(&self, x: f64) -> f64 {
        self.lower_y - self.lower_shape[0] * profile(x - self.waist_x, self.lower_shape[1])
    }
}

pub(crate) fn profile(u: f64, k: f64) -> f64 {
    u * u / (1.0 + k * u.abs())
}

/// `(dg/du, dg/dk)`.
fn profile_grad(u: f64, k: f64) -> (f64, f64) {
    let q = 1.0 + k * u.abs();
    ((2.0 * u + k * u * u.abs()) / (q * q), -u * u * u.abs() / (q * q))
}

/// Parameters `[x0, y_u, y_l, c_u, q_u, c_l, q_l]`.
struct WaistResiduals<'a> {
    upper: &'a [[f64; 2]],
    lower: &'a [[f64; 2]],
    k_max: f64,
}

impl WaistResiduals<'_> {
    fn sharpness(&self, q: f64) -> f64 {
        self.k_max * q * q / (1.0 + q * q)
    }

    fn sharpness_grad(&self, q: f64) -> f64 {
        self.k_max * 2.0 * q / (1.0 + q * q).powi(2)
    }
}

impl Residuals for WaistResiduals<'_> {
    fn n_params(&self) -> usize {
        7
    }
    fn n_residuals(&self) -> usize {
        self.upper.len() + self.lower.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (su, sl) = (self.sharpness(p[4]), self.sharpness(p[6]));
        for (o, q) in out.iter_mut().zip(self.upper) {
            *o = p[1] + p[3] * profile(q[0] - p[0], su) - q[1];
        }
        for (o, q) in out[self.upper.len()..].iter_mut().zip(self.lower) {
            *o = p[2] - p[5] * profile(q[0] - p[0], sl) - q[1];
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        let (su, sl) = (self.sharpness(p[4]), self.sharpness(p[6]));
        let (gu, gl) = (self.sharpness_grad(p[4]), self.sharpness_grad(p[6]));
        for (i, q) in self.upper.iter().enumerate() {
            let u = q[0] - p[0];
            let (du, ds) = profile_grad(u, su);
            out[(i, 0)] = -p[3] * du;
            out[(i, 1)] = 1.0;
            out[(i, 3)] = profile(u, su);
            out[(i, 4)] = p[3] * ds * gu;
        }
        let off = self.upper.len();
        for (i, q) in self.lower.iter().enumerate() {
            let u = q[0] - p[0];
            let (du, ds) = profile_grad(u, sl);
            out[(off + i, 0)] = p[5] * du;
            out[(off + i, 2)] = 1.0;
            out[(off + i, 5)] = -profile(u, sl);
            out[(off + i, 6)] = -p[5] * ds * gl;
        }
    }
}

/// Fits both tether edges with the shared-waist profile.
pub fn fit_tether_width(upper: &PointSet2D, lower: &PointSet2D) -> Result<TetherFit> {
    for (edge, name) in [(upper, "upper"), (lower, "lower")] {
        if edge.len() < 5 {
            return Err(invalid(format!("{name} edge needs at least 5 points, got {}", edge.len())));
        }
        if edge.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("points must be finite"));
        }
    }
    let lowest = |pts: &[[f64; 2]], sign: f64| -> [f64; 2] {
        *pts.iter().min_by(|a, b| (sign * a[1]).total_cmp(&(sign * b[1]))).unwrap()
    };
    let wu = lowest(&upper.points, 1.0);
    let wl = lowest(&lower.points, -1.0);
    let x0 = 0.5 * (wu[0] + wl[0]);

    let bracketed = |pts: &[[f64; 2]]| pts.iter().any(|q| q[0] < x0) && pts.iter().any(|q| q[0] > x0);
    if !bracketed(&upper.points) || !bracketed(&lower.points) {
        return Err(Error::Fit("edges do not bracket a waist".into()));
    }
    let span = upper.points.iter().chain(&lower.points).map(|q| (q[0] - x0).abs()).fold(0.0, f64::max);
    let curvature = |pts: &[[f64; 2]], y0: f64, sign: f64| {
        let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), q| {
            let g = profile(q[0] - x0, 1.0 / span);
            (n + sign * (q[1] - y0) * g, d + g * g)
        });
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    };
    let init = [
        x0,
        wu[1],
        wl[1],
        curvature(&upper.points, wu[1], 1.0),
        (1.0f64 / 99.0).sqrt(),
        curvature(&lower.points, wl[1], -1.0),
        (1.0f64 / 99.0).sqrt(),
    ];
    let problem = WaistResiduals { upper: &upper.points, lower: &lower.points, k_max: 100.0 / span };
    let sol = minimize(&problem, &init, &LmOptions::default())?;
    let p = &sol.params;

    let (xmin, xmax) = upper
        .points
        .iter()
        .chain(&lower.points)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), q| (a.min(q[0]), b.max(q[0])));
    if !(p[3] > 0.0 && p[5] > 0.0 && p[0] > xmin && p[0] < xmax) {
        return Err(Error::Fit("edges show no waist".into()));
    }
    Ok(TetherFit {
        t: p[1] - p[2],
        waist_x: p[0],
        upper_y: p[1],
        lower_y: p[2],
        upper_shape: [p[3], problem.sharpness(p[4])],
        lower_shape: [p[5], problem.sharpness(p[6])],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(t: f64, x0: f64) -> (PointSet2D, PointSet2D) {
        let xs: Vec<f64> = (-15..=15).map(|i| x0 + i as f64 * 2.0).collect();
        let up = xs.iter().map(|&x| [x, 1.0 + t / 2.0 + 0.05 * profile(x - x0, 1.0 / 12.0)]).collect();
        let lo = xs.iter().map(|&x| [x, 1.0 - t / 2.0 - 0.05 * profile(x - x0, 1.0 / 12.0)]).collect();
        (PointSet2D::new(up), PointSet2D::new(lo))
    }

    #[test]
    fn noiseless_edges_give_the_width() {
        let (u, l) = edges(22.1, 3.3);
        let f = fit_tether_width(&u, &l).unwrap();
        assert!((f.t - 22.1).abs() < 1e-6, "{}", f.t);
        assert!((f.waist_x - 3.3).abs() < 1e-6);
    }

    #[test]
    fn parabolic_edges_converge() {
        let xs: Vec<f64> = (-10..=10).map(|i| i as f64).collect();
        let u = PointSet2D::new(xs.iter().map(|&x| [x, 8.0 + 0.1 * x * x]).collect());
        let l = PointSet2D::new(xs.iter().map(|&x| [x, -8.0 - 0.1 * x * x]).collect());
        let f = fit_tether_width(&u, &l).unwrap();
        assert!((f.t - 16.0).abs() < 1e-6 && f.upper_shape[1] < 1e-6);
    }

    #[test]
    fn monotone_edges_are_rejected() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let u = PointSet2D::new(xs.iter().map(|&x| [x, 10.0 + x]).collect());
        let l = PointSet2D::new(xs.iter().map(|&x| [x, -10.0 + x]).collect());
        assert!(fit_tether_width(&u, &l).is_err());
    }
}
