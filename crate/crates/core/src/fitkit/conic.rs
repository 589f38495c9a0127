//! Ellipse and circle fits to contour points.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, Matrix2, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmOptions, Residuals};
use crate::error::{invalid, Error, Result};

/// Contour points `(x, y)` in nm.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointSet2D {
    pub points: Vec<[f64; 2]>,
}

impl PointSet2D {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        PointSet2D { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn validate(&self, min: usize, what: &str) -> Result<()> {
        if self.points.len() < min {
            return Err(invalid(format!("{what} fit needs at least {min} points, got {}", self.points.len())));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("points must be finite"));
        }
        Ok(())
    }

    fn centroid(&self) -> [f64; 2] {
        let n = self.points.len() as f64;
        let (sx, sy) = self.points.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
        [sx / n, sy / n]
    }

    /// Centroid and RMS distance from it.
    fn normalisation(&self) -> ([f64; 2], f64) {
        let c = self.centroid();
        let n = self.points.len() as f64;
        let ms = self.points.iter().map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sum::<f64>() / n;
        (c, ms.sqrt())
    }

    /// Ratio of the smaller to the larger principal spread.
    fn flatness(&self) -> f64 {
        let c = self.centroid();
        let mut m = Matrix2::<f64>::zeros();
        for p in &self.points {
            let d = [p[0] - c[0], p[1] - c[1]];
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] += d[i] * d[j];
                }
            }
        }
        let e = m.symmetric_eigenvalues();
        let (lo, hi) = (e.min(), e.max());
        if hi <= 0.0 {
            0.0
        } else {
            (lo.max(0.0) / hi).sqrt()
        }
    }
}

impl From<Vec<[f64; 2]>> for PointSet2D {
    fn from(points: Vec<[f64; 2]>) -> Self {
        PointSet2D { points }
    }
}

const COLLINEAR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: [f64; 2],
    /// Semi-major axis.
    pub a: f64,
    /// Semi-minor axis.
    pub b: f64,
    /// Angle of the major axis in `(-pi/2, pi/2]`; zero for circles.
    pub rotation: f64,
}

impl Ellipse {
    pub fn point_at(&self, phi: f64) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        let (u, v) = (self.a * phi.cos(), self.b * phi.sin());
        [self.center[0] + u * c - v * s, self.center[1] + u * s + v * c]
    }

    /// Semi-axes `(along x, along y)`, taking whichever axis lies closer
    /// to each coordinate direction.
    pub fn semi_axes_xy(&self) -> (f64, f64) {
        if self.rotation.abs() <= PI / 4.0 {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }

    fn canonical(center: [f64; 2], a: f64, b: f64, rotation: f64) -> Self {
        let (mut a, mut b, mut rot) = (a.abs(), b.abs(), rotation);
        if b > a {
            std::mem::swap(&mut a, &mut b);
            rot += FRAC_PI_2;
        }
        rot = rot.rem_euclid(PI);
        if rot > FRAC_PI_2 {
            rot -= PI;
        }
        if (a - b).abs() <= 1e-12 * a {
            rot = 0.0;
        }
        Ellipse { center, a, b, rotation: rot }
    }
}

// ============================================================================
// Direct conic fit
// ============================================================================

/// Ellipse-constrained algebraic fit on normalised coordinates, returned as
/// conic coefficients `[A, B, C, D, E, F]` in the original frame.
fn direct_conic(points: &PointSet2D) -> Result<[f64; 6]> {
    let (c, s) = points.normalisation();
    let n = points.len();
    let mut d1 = DMatrix::zeros(n, 3);
    let mut d2 = DMatrix::zeros(n, 3);
    for (i, p) in points.points.iter().enumerate() {
        let (x, y) = ((p[0] - c[0]) / s, (p[1] - c[1]) / s);
        d1[(i, 0)] = x * x;
        d1[(i, 1)] = x * y;
        d1[(i, 2)] = y * y;
        d2[(i, 0)] = x;
        d2[(i, 1)] = y;
        d2[(i, 2)] = 1.0;
    }
    let s1: Matrix3<f64> = (d1.transpose() * &d1).fixed_view::<3, 3>(0, 0).into();
    let s2: Matrix3<f64> = (d1.transpose() * &d2).fixed_view::<3, 3>(0, 0).into();
    let s3: Matrix3<f64> = (d2.transpose() * &d2).fixed_view::<3, 3>(0, 0).into();
    let s3_inv = s3.try_inverse().ok_or_else(|| Error::Fit("degenerate point set".into()))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // Inverse of the ellipse constraint matrix applied from the left.
    let reduced = Matrix3::from_rows(&[m.row(2) * 0.5, -m.row(1), m.row(0) * 0.5]);
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in reduced.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-9 * lambda.re.abs().max(1.0) {
            continue;
        }
        let shifted = reduced - Matrix3::identity() * lambda.re;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors");
        let (k, _) = svd.singular_values.argmin();
        let v: Vector3<f64> = v_t.row(k).transpose();
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond > 0.0 && best.as_ref().map_or(true, |(c0, _)| cond > *c0) {
            best = Some((cond, v));
        }
    }
    let (_, a1) = best.ok_or_else(|| Error::Fit("points do not determine an ellipse".into()))?;
    let a2 = t * a1;
    // Undo the normalisation x' = (x - cx)/s.
    let (aa, bb, cc, dd, ee, ff) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);
    let (cx, cy) = (c[0], c[1]);
    let s2_ = s * s;
    let a = aa / s2_;
    let b = bb / s2_;
    let cq = cc / s2_;
    let d = dd / s - 2.0 * a * cx - b * cy;
    let e = ee / s - 2.0 * cq * cy - b * cx;
    let f = ff + a * cx * cx + b * cx * cy + cq * cy * cy - dd / s * cx - ee / s * cy;
    Ok([a, b, cq, d, e, f])
}

fn conic_to_ellipse(q: [f64; 6]) -> Result<Ellipse> {
    let [a, b, c, d, e, f] = q;
    let det = 4.0 * a * c - b * b;
    if !(det > 0.0) {
        return Err(Error::Fit("fitted conic is not an ellipse".into()));
    }
    let x0 = (b * e - 2.0 * c * d) / det;
    let y0 = (b * d - 2.0 * a * e) / det;
    let f0 = f + 0.5 * (d * x0 + e * y0);
    let eig = SymmetricEigen::new(Matrix2::new(a, 0.5 * b, 0.5 * b, c));
    let mut axes = [0.0; 2];
    for (i, ax) in axes.iter_mut().enumerate() {
        let v = -f0 / eig.eigenvalues[i];
        if !(v > 0.0) {
            return Err(Error::Fit("fitted conic is an imaginary ellipse".into()));
        }
        *ax = v.sqrt();
    }
    let v0 = eig.eigenvectors.column(0);
    let rot = v0[1].atan2(v0[0]);
    Ok(Ellipse::canonical([x0, y0], axes[0], axes[1], rot))
}

// ============================================================================
// Geometric refinement
// ============================================================================

/// Orthogonal-distance ellipse fit with one angular parameter per point.
struct EllipseDistance<'a> {
    points: &'a [[f64; 2]],
}

impl Residuals for EllipseDistance<'_> {
    fn n_params(&self) -> usize {
        5 + self.points.len()
    }
    fn n_residuals(&self) -> usize {
        2 * self.points.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let (s, c) = p[4].sin_cos();
        for (i, q) in self.points.iter().enumerate() {
            let (sp, cp) = p[5 + i].sin_cos();
            let (u, v) = (p[2] * cp, p[3] * sp);
            out[2 * i] = p[0] + u * c - v * s - q[0];
            out[2 * i + 1] = p[1] + u * s + v * c - q[1];
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        let (s, c) = p[4].sin_cos();
        for i in 0..self.points.len() {
            let (sp, cp) = p[5 + i].sin_cos();
            let (u, v) = (p[2] * cp, p[3] * sp);
            let (rx, ry) = (2 * i, 2 * i + 1);
            out[(rx, 0)] = 1.0;
            out[(ry, 1)] = 1.0;
            out[(rx, 2)] = cp * c;
            out[(ry, 2)] = cp * s;
            out[(rx, 3)] = -sp * s;
            out[(ry, 3)] = sp * c;
            out[(rx, 4)] = -u * s - v * c;
            out[(ry, 4)] = u * c - v * s;
            out[(rx, 5 + i)] = -p[2] * sp * c - p[3] * cp * s;
            out[(ry, 5 + i)] = -p[2] * sp * s + p[3] * cp * c;
        }
    }
}

/// Refinement is skipped above this many points; the dense normal matrix
/// grows with the square of the point count.
const MAX_REFINE_POINTS: usize = 2000;

/// Direct least-squares ellipse fit followed by orthogonal-distance
/// refinement.
pub fn fit_ellipse(points: &PointSet2D) -> Result<Ellipse> {
    points.validate(6, "ellipse")?;
    if points.flatness() < COLLINEAR {
        return Err(Error::Fit("points are collinear".into()));
    }
    let init = conic_to_ellipse(direct_conic(points)?)?;
    if points.len() > MAX_REFINE_POINTS {
        return Ok(init);
    }
    let (s, c) = init.rotation.sin_cos();
    let mut p0 = vec![init.center[0], init.center[1], init.a, init.b, init.rotation];
    for q in &points.points {
        let (dx, dy) = (q[0] - init.center[0], q[1] - init.center[1]);
        let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
        p0.push((v / init.b).atan2(u / init.a));
    }
    let problem = EllipseDistance { points: &points.points };
    let sol = minimize(&problem, &p0, &LmOptions::default())?;
    let p = &sol.params;
    Ok(Ellipse::canonical([p[0], p[1]], p[2], p[3], p[4]))
}

// ============================================================================
// Circle
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

struct CircleDistance<'a> {
    points: &'a [[f64; 2]],
}

impl Residuals for CircleDistance<'_> {
    fn n_params(&self) -> usize {
        3
    }
    fn n_residuals(&self) -> usize {
        self.points.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (o, q) in out.iter_mut().zip(self.points) {
            *o = (q[0] - p[0]).hypot(q[1] - p[1]) - p[2];
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        for (i, q) in self.points.iter().enumerate() {
            let d = (q[0] - p[0]).hypot(q[1] - p[1]).max(1e-300);
            out[(i, 0)] = -(q[0] - p[0]) / d;
            out[(i, 1)] = -(q[1] - p[1]) / d;
            out[(i, 2)] = -1.0;
        }
    }
}

/// Algebraic circle fit followed by geometric refinement.
pub fn fit_circle(points: &PointSet2D) -> Result<Circle> {
    points.validate(3, "circle")?;
    if points.flatness() < COLLINEAR {
        return Err(Error::Fit("points are collinear".into()));
    }
    let (c, s) = points.normalisation();
    let n = points.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut rhs = DMatrix::zeros(n, 1);
    for (i, p) in points.points.iter().enumerate() {
        let (x, y) = ((p[0] - c[0]) / s, (p[1] - c[1]) / s);
        a[(i, 0)] = x;
        a[(i, 1)] = y;
        a[(i, 2)] = 1.0;
        rhs[(i, 0)] = -(x * x + y * y);
    }
    let sol =
        a.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::Fit(format!("algebraic circle fit failed: {e}")))?;
    let (xc, yc) = (-0.5 * sol[(0, 0)], -0.5 * sol[(1, 0)]);
    let r2 = xc * xc + yc * yc - sol[(2, 0)];
    if !(r2 > 0.0) {
        return Err(Error::Fit("algebraic circle fit is imaginary".into()));
    }
    let init = [c[0] + s * xc, c[1] + s * yc, s * r2.sqrt()];
    let problem = CircleDistance { points: &points.points };
    let sol = minimize(&problem, &init, &LmOptions::default())?;
    Ok(Circle { center: [sol.params[0], sol.params[1]], radius: sol.params[2].abs() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_ellipse_is_recovered() {
        let truth = Ellipse { center: [3.0, -2.0], a: 47.85, b: 44.95, rotation: 0.3 };
        let pts: Vec<[f64; 2]> = (0..40).map(|i| truth.point_at(i as f64 * 0.157)).collect();
        let e = fit_ellipse(&pts.into()).unwrap();
        assert!((e.a - truth.a).abs() < 1e-9);
        assert!((e.b - truth.b).abs() < 1e-9);
        assert!((e.rotation - truth.rotation).abs() < 1e-9);
        assert!((e.center[0] - 3.0).abs() < 1e-9 && (e.center[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn circle_reports_zero_rotation() {
        let truth = Ellipse { center: [0.0, 0.0], a: 10.0, b: 10.0, rotation: 0.0 };
        let pts: Vec<[f64; 2]> = (0..12).map(|i| truth.point_at(i as f64 * 0.5)).collect();
        let e = fit_ellipse(&pts.into()).unwrap();
        assert_eq!(e.rotation, 0.0);
        assert!((e.a - 10.0).abs() < 1e-9 && (e.b - 10.0).abs() < 1e-9);
    }

    #[test]
    fn three_points_give_the_circumcircle() {
        let c = fit_circle(&vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]].into()).unwrap();
        assert!(c.center[0].abs() < 1e-12 && c.center[1].abs() < 1e-12);
        assert!((c.radius - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_points_are_rejected() {
        let pts: Vec<[f64; 2]> = (0..8).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(fit_ellipse(&pts.clone().into()), Err(Error::Fit(_))));
        assert!(matches!(fit_circle(&pts.into()), Err(Error::Fit(_))));
    }
}
