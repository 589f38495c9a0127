//! Complete bandgaps, phonon density of states and fabrication-tolerance
//! sweeps built on the band solver.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::elastics::{band_diagram_with, uniform_k_path, BandModel, BandStructure, EigenOptions};
use crate::error::{invalid, Error, Result};
use crate::geometry::{build_nanobeam_mesh, build_unit_cell_mesh, CellParam, Mesh, Resolution, UnitCellParams};
use crate::material::Material;

pub const DEFAULT_F_MAX_GHZ: f64 = 100.0;
pub const DEFAULT_N_BANDS: usize = 40;
pub const DEFAULT_BAND_K_POINTS: usize = 20;
pub const DEFAULT_DOS_K_POINTS: usize = 40;
pub const DEFAULT_BROADENING_GHZ: f64 = 0.5;

/// A complete bandgap, `f_hi > f_lo >= 0` (GHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Gap {
    pub fn center(&self) -> f64 {
        0.5 * (self.f_lo + self.f_hi)
    }

    pub fn width(&self) -> f64 {
        self.f_hi - self.f_lo
    }

    pub fn contains(&self, f: f64) -> bool {
        f > self.f_lo && f < self.f_hi
    }
}

// ============================================================================
// Gap detection
// ============================================================================

/// Complete gaps with `f_lo < f_max`. Requires the highest computed band to
/// reach `f_max` at every k, otherwise modes below `f_max` may be missing.
pub fn find_complete_gaps(bands: &BandStructure, f_max: f64) -> Result<Vec<Gap>> {
    if !(f_max > 0.0) {
        return Err(invalid(format!("f_max must be positive, got {f_max}")));
    }
    bands.validate()?;
    if bands.n_bands() == 0 {
        return Err(Error::Coverage("band structure has no bands".into()));
    }
    for (k, row) in bands.k.iter().zip(&bands.frequencies) {
        let top = *row.last().expect("non-empty row");
        if top < f_max {
            return Err(Error::Coverage(format!(
                "highest band reaches only {top:.3} GHz at k = {k}, below f_max = {f_max} GHz; request more bands"
            )));
        }
    }
    Ok(find_complete_gaps_unchecked(bands, f_max))
}

/// Gap search without the coverage precondition: the answer is exact for
/// the bands given, which is what synthetic band sets need.
///
/// A gap is an open interval between two occupied frequency ranges, so the
/// region below the lowest band and above the highest one never counts.
/// Gaps starting below `f_max` are reported in full even if they extend
/// past it.
pub fn find_complete_gaps_unchecked(bands: &BandStructure, f_max: f64) -> Vec<Gap> {
    let mut ranges: Vec<(f64, f64)> = (0..bands.n_bands())
        .map(|b| {
            bands
                .frequencies
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| (lo.min(row[b]), hi.max(row[b])))
        })
        .collect();
    ranges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps = Vec::new();
    let mut covered_to = f64::NEG_INFINITY;
    for (lo, hi) in ranges {
        if covered_to.is_finite() && lo > covered_to && covered_to < f_max {
            gaps.push(Gap { f_lo: covered_to.max(0.0), f_hi: lo });
        }
        covered_to = covered_to.max(hi);
    }
    gaps
}

/// Widest of the given gaps, if any.
pub fn widest_gap(gaps: &[Gap]) -> Option<Gap> {
    gaps.iter().copied().max_by(|a, b| a.width().total_cmp(&b.width()))
}

// ============================================================================
// Density of states
// ============================================================================

/// DOS on a frequency grid, states per GHz per unit cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosCurve {
    pub frequencies: Vec<f64>,
    pub dos: Vec<f64>,
    /// Resolution warnings raised while building the curve.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosOptions {
    pub broadening_ghz: f64,
    /// Turn under-sampling warnings into errors.
    pub strict: bool,
}

impl Default for DosOptions {
    fn default() -> Self {
        DosOptions { broadening_ghz: DEFAULT_BROADENING_GHZ, strict: false }
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn frequency_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Trapezoid weights over the k samples, normalized to sum to 1. A single
/// sample gets weight 1.
fn k_weights(k: &[f64]) -> Result<Vec<f64>> {
    let n = k.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let span = k[n - 1] - k[0];
    if !(span > 0.0) {
        return Err(invalid("k samples must span a non-empty interval"));
    }
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = k[i + 1] - k[i];
        if h < 0.0 {
            return Err(invalid("k samples must be ascending"));
        }
        w[i] += 0.5 * h / span;
        w[i + 1] += 0.5 * h / span;
    }
    Ok(w)
}

/// Gaussian-broadened DOS. Each band carries one state per unit cell.
pub fn compute_dos(bands: &BandStructure, grid: &[f64], opts: &DosOptions) -> Result<DosCurve> {
    let sigma = opts.broadening_ghz;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("broadening must be positive, got {sigma}")));
    }
    bands.validate()?;
    let weights = k_weights(&bands.k)?;
    let mut warnings = Vec::new();
    for b in 0..bands.n_bands() {
        let band = bands.band(b);
        let worst = band.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        if worst >= 3.0 * sigma {
            let msg = format!(
                "band {b} jumps {worst:.3} GHz between adjacent k samples (limit {:.3} GHz); add k points or widen the broadening",
                3.0 * sigma
            );
            if opts.strict {
                return Err(Error::Resolution(msg));
            }
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let reach = 8.0 * sigma;
    let dos = grid
        .iter()
        .map(|&f| {
            let mut acc = 0.0;
            for (row, &w) in bands.frequencies.iter().zip(&weights) {
                for &fb in row {
                    let d = f - fb;
                    if d.abs() < reach {
                        acc += w * norm * (-0.5 * (d / sigma).powi(2)).exp();
                    }
                }
            }
            acc
        })
        .collect();
    Ok(DosCurve { frequencies: grid.to_vec(), dos, warnings })
}

impl DosCurve {
    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.frequencies.windows(2).zip(self.dos.windows(2)).map(|(f, d)| 0.5 * (f[1] - f[0]) * (d[0] + d[1])).sum()
    }

    /// Maximal grid intervals where the DOS stays below `threshold`,
    /// excluding runs touching either end of the grid.
    pub fn low_intervals(&self, threshold: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for (i, &d) in self.dos.iter().enumerate() {
            match (d < threshold, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    if s > 0 {
                        out.push((self.frequencies[s], self.frequencies[i - 1]));
                    }
                    start = None;
                }
                _ => {}
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "frequency_GHz,dos_per_GHz")?;
        for (f, d) in self.frequencies.iter().zip(&self.dos) {
            writeln!(out, "{f},{d}")?;
        }
        Ok(())
    }
}

/// DOS depletion inside a gap: maximum DOS over the gap interior (shrunk by
/// `margin` GHz at each edge to clear the kernel tails) against the median
/// DOS over grid points outside the gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Depletion {
    pub max_inside: f64,
    pub median_outside: f64,
}

impl Depletion {
    pub fn ratio(&self) -> f64 {
        self.max_inside / self.median_outside
    }
}

pub fn gap_depletion(dos: &DosCurve, gap: &Gap, margin: f64) -> Result<Depletion> {
    let (lo, hi) = (gap.f_lo + margin, gap.f_hi - margin);
    if !(hi > lo) {
        return Err(invalid("gap narrower than twice the margin"));
    }
    let mut inside = f64::NEG_INFINITY;
    let mut outside = Vec::new();
    for (&f, &d) in dos.frequencies.iter().zip(&dos.dos) {
        if f >= lo && f <= hi {
            inside = inside.max(d);
        } else if !gap.contains(f) {
            outside.push(d);
        }
    }
    if !inside.is_finite() || outside.is_empty() {
        return Err(invalid("grid does not sample both the gap and its surroundings"));
    }
    outside.sort_by(f64::total_cmp);
    let m = outside.len();
    let median = if m % 2 == 1 { outside[m / 2] } else { 0.5 * (outside[m / 2 - 1] + outside[m / 2]) };
    Ok(Depletion { max_inside: inside, median_outside: median })
}

// ============================================================================
// Pipeline
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CellGeometry {
    UnitCell(UnitCellParams),
    /// Uniform rectangular beam; lengths in nm.
    Nanobeam {
        width: f64,
        thickness: f64,
        period: f64,
    },
}

impl CellGeometry {
    pub fn mesh(&self, res: Resolution) -> Result<Mesh> {
        match self {
            CellGeometry::UnitCell(p) => build_unit_cell_mesh(p, res),
            CellGeometry::Nanobeam { width, thickness, period } => {
                build_nanobeam_mesh(*width, *thickness, *period, res)
            }
        }
    }
}

/// Everything that determines a band structure.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub geometry: CellGeometry,
    pub material: Material,
    pub resolution: Resolution,
    pub n_k: usize,
    pub n_bands: usize,
    pub f_max: f64,
    pub eigen: EigenOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            geometry: CellGeometry::UnitCell(UnitCellParams::MEASURED),
            material: Material::diamond(),
            resolution: Resolution::default(),
            n_k: DEFAULT_BAND_K_POINTS,
            n_bands: DEFAULT_N_BANDS,
            f_max: DEFAULT_F_MAX_GHZ,
            eigen: EigenOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn band_structure(&self) -> Result<BandStructure> {
        let mesh = self.geometry.mesh(self.resolution)?;
        let model = BandModel::new(&mesh, &self.material)?;
        band_diagram_with(&model, &uniform_k_path(self.n_k), self.n_bands, &self.eigen)
    }

    /// Bands and the complete gaps below `f_max`.
    pub fn gaps(&self) -> Result<(BandStructure, Vec<Gap>)> {
        let bands = self.band_structure()?;
        let gaps = find_complete_gaps(&bands, self.f_max)?;
        Ok((bands, gaps))
    }
}

// ============================================================================
// Parameter sweeps
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value_nm: f64,
    /// Centre of the widest complete gap; NaN when no gap is open.
    pub center_ghz: f64,
    /// Width of the widest complete gap; 0 when closed.
    pub width_ghz: f64,
}

/// Runs the full pipeline for each value of `param`. A closed gap is recorded
/// with width 0 and centre NaN. Rows keep the order of `values`.
pub fn parameter_sweep(base: &PipelineConfig, param: CellParam, values: &[f64]) -> Result<Vec<SweepPoint>> {
    let params = match base.geometry {
        CellGeometry::UnitCell(p) => p,
        CellGeometry::Nanobeam { .. } => {
            return Err(invalid("parameter sweeps need a block-tether unit cell"));
        }
    };
    for &v in values {
        params.with(param, v).validate()?;
    }
    values
        .par_iter()
        .map(|&v| {
            let mut cfg = base.clone();
            cfg.geometry = CellGeometry::UnitCell(params.with(param, v));
            let (_, gaps) = cfg.gaps()?;
            Ok(match widest_gap(&gaps) {
                Some(g) => SweepPoint { value_nm: v, center_ghz: g.center(), width_ghz: g.width() },
                None => SweepPoint { value_nm: v, center_ghz: f64::NAN, width_ghz: 0.0 },
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "param_value_nm,center_GHz,width_GHz")?;
    for p in points {
        writeln!(out, "{},{},{}", p.value_nm, p.center_ghz, p.width_ghz)?;
    }
    Ok(())
}
