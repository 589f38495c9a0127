//! Per-cell contour fits and ensemble statistics of the in-plane cell
//! parameters.
//!
//! Each cell contributes the visible arc of its block (ellipse), the rounded
//! corners where the block meets the tethers (circles) and the two edges of
//! the tether to its right (waist profile). Block spacing comes from the
//! centres of consecutive blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::conic::{fit_circle, fit_ellipse, Circle, Ellipse, PointSet2D};
use super::tether::{fit_tether_width, profile as waist_profile, TetherFit};
use crate::error::{invalid, Error, Result};
use crate::geometry::UnitCellParams;

/// Contours of one cell, in a frame shared by the whole ensemble.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CellContours {
    pub block: Option<PointSet2D>,
    pub corners: Vec<PointSet2D>,
    pub tether_upper: Option<PointSet2D>,
    pub tether_lower: Option<PointSet2D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub block: Option<Ellipse>,
    pub corners: Vec<Circle>,
    pub tether: Option<TetherFit>,
}

pub fn fit_cell(cell: &CellContours) -> Result<CellFit> {
    let block = cell.block.as_ref().map(fit_ellipse).transpose()?;
    let corners = cell.corners.iter().map(fit_circle).collect::<Result<Vec<_>>>()?;
    let tether = match (&cell.tether_upper, &cell.tether_lower) {
        (Some(u), Some(l)) => Some(fit_tether_width(u, l)?),
        (None, None) => None,
        _ => return Err(invalid("tether needs both an upper and a lower edge")),
    };
    Ok(CellFit { block, corners, tether })
}

/// Sample statistics of one parameter over the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; NaN for a single value.
    pub sd: f64,
}

fn summary(name: &str, v: &[f64]) -> Option<ParamSummary> {
    if v.is_empty() {
        return None;
    }
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { f64::NAN };
    Some(ParamSummary { name: name.into(), n, mean, sd })
}

/// Mean and spread of `w`, `h`, `a`, `t` and `r` over fitted cells given in
/// chain order. `a` is taken from consecutive cells that both have a block;
/// each corner contributes one `r` value.
pub fn summarize_cells(fits: &[CellFit]) -> Result<Vec<ParamSummary>> {
    let blocks: Vec<Option<&Ellipse>> = fits.iter().map(|f| f.block.as_ref()).collect();
    let w: Vec<f64> = blocks.iter().flatten().map(|e| 2.0 * e.semi_axes_xy().0).collect();
    let h: Vec<f64> = blocks.iter().flatten().map(|e| 2.0 * e.semi_axes_xy().1).collect();
    let a: Vec<f64> = blocks
        .windows(2)
        .filter_map(|p| match (p[0], p[1]) {
            (Some(x), Some(y)) => {
                Some(((y.center[0] - x.center[0]).powi(2) + (y.center[1] - x.center[1]).powi(2)).sqrt())
            }
            _ => None,
        })
        .collect();
    let t: Vec<f64> = fits.iter().filter_map(|f| f.tether.map(|t| t.t)).collect();
    let r: Vec<f64> = fits.iter().flat_map(|f| f.corners.iter().map(|c| c.radius)).collect();
    let rows: Vec<ParamSummary> =
        [("w", &w), ("h", &h), ("a", &a), ("t", &t), ("r", &r)].iter().filter_map(|(n, v)| summary(n, v)).collect();
    if rows.is_empty() {
        return Err(Error::Fit("no contours to summarise".into()));
    }
    Ok(rows)
}

// ============================================================================
// Synthetic contours
// ============================================================================

/// Contours of a cell whose block is centred at `(x0, 0)` with Gaussian
/// noise of `noise` nm on each coordinate. Block and corners follow the exact
/// outline; the tether to the next block (`params.a` further on) follows the
/// waist profile with width `params.t` and sharpness `1/r`.
pub fn synthetic_cell_contours<R: Rng>(
    params: &UnitCellParams,
    x0: f64,
    noise: f64,
    rng: &mut R,
) -> Result<CellContours> {
    let profile = params.profile()?;
    let fillet = profile.fillet.ok_or_else(|| invalid("synthetic contours need a rounded corner (r > 0 and t < h)"))?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(invalid("noise must be non-negative"));
    }
    let jitter = Normal::new(0.0, 1.0).expect("unit normal");
    let mut jit = |p: [f64; 2]| [p[0] + noise * jitter.sample(rng), p[1] + noise * jitter.sample(rng)];
    let (sx, sy) = (profile.semi_x, profile.semi_y);

    // Visible block arc: everything the fillets leave uncovered.
    let theta_e = (fillet.x_ellipse / sx).clamp(-1.0, 1.0).acos();
    let mut block = Vec::new();
    let per_side = 30;
    for (lo, hi) in [
        (theta_e, std::f64::consts::PI - theta_e),
        (std::f64::consts::PI + theta_e, 2.0 * std::f64::consts::PI - theta_e),
    ] {
        for i in 0..per_side {
            let th = lo + (hi - lo) * i as f64 / (per_side - 1) as f64;
            block.push(jit([x0 + sx * th.cos(), sy * th.sin()]));
        }
    }

    // Fillet arc from the tether tangent point to the ellipse tangent point.
    let ye = profile.half_width(fillet.x_ellipse);
    let phi_lo = (ye - fillet.cy).atan2(fillet.x_ellipse - fillet.cx);
    let phi_hi = -std::f64::consts::FRAC_PI_2;
    let arc: Vec<[f64; 2]> = (0..12)
        .map(|i| {
            let phi = phi_lo + (phi_hi - phi_lo) * i as f64 / 11.0;
            [fillet.cx + fillet.radius * phi.cos(), fillet.cy + fillet.radius * phi.sin()]
        })
        .collect();
    let corners = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .iter()
        .map(|&(mx, my)| PointSet2D::new(arc.iter().map(|p| jit([x0 + mx * p[0], my * p[1]])).collect()))
        .collect();

    // Tether edges between this block and the next, following the waist
    // profile from the tether edge up to the block tangent points.
    let n_edge = 31;
    let half_len = 0.5 * params.a - fillet.x_ellipse;
    let k = 1.0 / fillet.radius;
    let c = (ye - profile.half_tether) / waist_profile(half_len, k);
    let xs: Vec<f64> = (0..n_edge).map(|i| -half_len + 2.0 * half_len * i as f64 / (n_edge - 1) as f64).collect();
    let mid = x0 + 0.5 * params.a;
    let edge_y = |u: f64| profile.half_tether + c * waist_profile(u, k);
    let upper = xs.iter().map(|&u| jit([mid + u, edge_y(u)])).collect();
    let lower = xs.iter().map(|&u| jit([mid + u, -edge_y(u)])).collect();

    Ok(CellContours {
        block: Some(PointSet2D::new(block)),
        corners,
        tether_upper: Some(PointSet2D::new(upper)),
        tether_lower: Some(PointSet2D::new(lower)),
    })
}

/// A chain of `n` cells with parameters drawn independently from
/// `N(mean, sd)` (redrawn until the outline is valid). Returns the drawn
/// parameters with their contours.
pub fn synthetic_ensemble(
    mean: &UnitCellParams,
    sd: &UnitCellParams,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<Vec<(UnitCellParams, CellContours)>> {
    if n == 0 {
        return Err(invalid("ensemble must contain at least one cell"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(n);
    let mut x0 = 0.0;
    for _ in 0..n {
        let mut drawn = None;
        for _ in 0..1000 {
            let mut g = |m: f64, s: f64| m + s * unit.sample(&mut rng);
            let p = UnitCellParams {
                w: g(mean.w, sd.w),
                h: g(mean.h, sd.h),
                a: g(mean.a, sd.a),
                t: g(mean.t, sd.t),
                r: g(mean.r, sd.r),
                d: g(mean.d, sd.d),
            };
            if p.r > 0.0 && p.t < p.h && p.profile().is_ok() {
                drawn = Some(p);
                break;
            }
        }
        let p = drawn.ok_or_else(|| invalid("parameter spread too wide to draw a valid cell"))?;
        let contours = synthetic_cell_contours(&p, x0, noise, &mut rng)?;
        x0 += p.a;
        out.push((p, contours));
    }
    Ok(out)
}
