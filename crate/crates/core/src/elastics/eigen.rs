//! Generalized Hermitian eigensolvers for the reduced Bloch pencil.
//!
//! The default route is shift-invert: factor `K - sigma M` once, then build a
//! block Krylov basis of `(K - sigma M)^-1 M`, M-orthonormalized with
//! classical Gram–Schmidt applied twice, and extract Ritz pairs from the
//! projected matrix. Eigenvalues closest to the shift converge first. The
//! dense route reduces to a standard Hermitian problem through the Cholesky
//! factor of `M` and is meant for small systems and as a cross-check.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::banded::{BandLdl, HermitianBand};
use super::bloch::BlochProblem;
use crate::error::{invalid, Error, Result};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Frequencies whose squared angular value lies in `[-(2 pi * FLOOR)^2, 0)`
/// are treated as round-off and clamped to zero.
pub const FREQUENCY_FLOOR_GHZ: f64 = 1e-3;

/// Systems up to this size may fall back to the dense solver.
pub const DENSE_FALLBACK_MAX_DOFS: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    /// Shift-invert, dense fallback for small systems if it fails.
    Auto,
    ShiftInvert,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Modes closest to this frequency are returned; 0 means lowest modes.
    pub target_ghz: f64,
    pub block_size: usize,
    /// Relative Ritz residual for convergence.
    pub tol: f64,
    /// Cap on the Krylov basis size; `None` picks one from `n_modes`.
    pub max_basis: Option<usize>,
    pub seed: u64,
    /// Confirm with a Sylvester inertia count that no mode below the highest
    /// returned one was skipped (costs one extra factorization).
    pub verify_inertia: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            method: EigenMethod::Auto,
            target_ghz: 0.0,
            block_size: 6,
            tol: 1e-9,
            max_basis: None,
            seed: 0x5eed,
            verify_inertia: false,
        }
    }
}

/// Eigenpairs at one wavevector, sorted by frequency.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub k: f64,
    pub frequencies_ghz: Vec<f64>,
    /// Squared angular frequencies (rad^2/s^2).
    pub eigenvalues: Vec<f64>,
    /// Mass-orthonormal mode shapes in reduced coordinates.
    pub modes: Vec<Vec<Complex64>>,
}

pub fn frequency_ghz(eigenvalue: f64) -> Result<f64> {
    let floor = (TWO_PI * 1e9 * FREQUENCY_FLOOR_GHZ).powi(2);
    if eigenvalue >= 0.0 {
        Ok(eigenvalue.sqrt() / (TWO_PI * 1e9))
    } else if eigenvalue >= -floor {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!(
            "negative eigenvalue {eigenvalue:e} below the frequency floor ({:.3e} GHz imaginary)",
            (-eigenvalue).sqrt() / (TWO_PI * 1e9)
        )))
    }
}

/// Lowest (or target-nearest) `n_modes` eigenpairs of one Bloch pencil.
pub fn solve_bands(problem: &BlochProblem, n_modes: usize, opts: &EigenOptions) -> Result<ModeSet> {
    let n = problem.n();
    if n_modes == 0 || n_modes > n {
        return Err(invalid(format!("n_modes must be in 1..={n}, got {n_modes}")));
    }
    let (vals, vecs) = match opts.method {
        EigenMethod::Dense => dense_pairs(problem, n_modes, opts)?,
        EigenMethod::ShiftInvert => shift_invert_pairs(problem, n_modes, opts)?,
        EigenMethod::Auto => match shift_invert_pairs(problem, n_modes, opts) {
            Ok(r) => r,
            Err(e) if n <= DENSE_FALLBACK_MAX_DOFS => {
                log::warn!("shift-invert failed at k = {} ({e}); using dense solver", problem.k);
                dense_pairs(problem, n_modes, opts)?
            }
            Err(e) => return Err(e),
        },
    };
    let mut frequencies = Vec::with_capacity(vals.len());
    for &v in &vals {
        frequencies.push(frequency_ghz(v).map_err(|e| Error::Numerical(format!("at k = {}: {e}", problem.k)))?);
    }
    Ok(ModeSet {
        k: problem.k,
        frequencies_ghz: frequencies,
        eigenvalues: vals,
        modes: vecs.into_iter().map(canonical_phase).collect(),
    })
}

/// Rotates a mode so that its largest component is real and positive.
fn canonical_phase(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let mut best = Complex64::default();
    for z in &v {
        if z.norm_sqr() > best.norm_sqr() * (1.0 + 1e-9) {
            best = *z;
        }
    }
    if best.norm() > 0.0 {
        let rot = best.conj() / best.norm();
        for z in &mut v {
            *z *= rot;
        }
    }
    v
}

fn shift_for(opts: &EigenOptions) -> f64 {
    if opts.target_ghz > 0.0 {
        (TWO_PI * 1e9 * opts.target_ghz).powi(2)
    } else {
        // Slightly below zero so the rigid modes keep the factor definite.
        -(TWO_PI * 1e9).powi(2)
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(alpha: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct KrylovBasis<'a> {
    problem: &'a BlochProblem,
    factor: BandLdl,
    v: Vec<Vec<Complex64>>,
    mv: Vec<Vec<Complex64>>,
    w: Vec<Vec<Complex64>>,
    /// Projected operator `V^H M W`, grown incrementally (row-major, square).
    h: Vec<Vec<Complex64>>,
}

impl KrylovBasis<'_> {
    /// M-orthonormalizes `x` against the basis and appends it. Returns false
    /// when `x` lies (numerically) inside the current span.
    fn push(&mut self, mut x: Vec<Complex64>) -> bool {
        let n0 = self.m_norm(&x);
        if !(n0 > 0.0) {
            return false;
        }
        for _ in 0..2 {
            for (vi, mvi) in self.v.iter().zip(&self.mv) {
                let c = dot(mvi, &x);
                axpy(-c, vi, &mut x);
            }
        }
        let mx = self.problem.mass.mul_vec(&x);
        let nrm = dot(&x, &mx).re.max(0.0).sqrt();
        if !(nrm > 1e-10 * n0) {
            return false;
        }
        let inv = 1.0 / nrm;
        x.iter_mut().for_each(|z| *z *= inv);
        let mx: Vec<Complex64> = mx.into_iter().map(|z| z * inv).collect();
        let mut w = mx.clone();
        self.factor.solve_in_place(&mut w);
        // Extend the projected matrix.
        let s = self.v.len();
        for (i, row) in self.h.iter_mut().enumerate() {
            row.push(dot(&self.mv[i], &w));
        }
        let mut new_row: Vec<Complex64> = (0..s).map(|j| dot(&mx, &self.w[j])).collect();
        new_row.push(dot(&mx, &w));
        self.h.push(new_row);
        self.v.push(x);
        self.mv.push(mx);
        self.w.push(w);
        true
    }

    fn m_norm(&self, x: &[Complex64]) -> f64 {
        let mx = self.problem.mass.mul_vec(x);
        dot(x, &mx).re.max(0.0).sqrt()
    }

    fn len(&self) -> usize {
        self.v.len()
    }

    /// Ritz pairs `(theta, y)` sorted by decreasing `|theta|`.
    fn ritz(&self) -> Vec<(f64, Vec<Complex64>)> {
        let s = self.len();
        let hm = DMatrix::from_fn(s, s, |i, j| 0.5 * (self.h[i][j] + self.h[j][i].conj()));
        let eig = SymmetricEigen::new(hm);
        let mut pairs: Vec<(f64, Vec<Complex64>)> =
            (0..s).map(|c| (eig.eigenvalues[c], eig.eigenvectors.column(c).iter().copied().collect())).collect();
        pairs.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
        pairs
    }

    fn combine(&self, set: &[Vec<Complex64>], y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.problem.n()];
        for (col, &c) in set.iter().zip(y) {
            axpy(c, col, &mut out);
        }
        out
    }
}

fn shift_invert_pairs(
    problem: &BlochProblem,
    n_modes: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let n = problem.n();
    let sigma = shift_for(opts);
    let bw = problem.reduction.bandwidth();
    let factor = HermitianBand::from_pencil(&problem.stiffness, &problem.mass, sigma, bw).factorize()?;
    let block = opts.block_size.max(1).min(n);
    let cap = opts.max_basis.unwrap_or_else(|| (4 * n_modes + 12 * block).max(n_modes + 2 * block)).min(n);

    let mut basis = KrylovBasis { problem, factor, v: Vec::new(), mv: Vec::new(), w: Vec::new(), h: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    };

    let mut frontier: Vec<usize> = Vec::new();
    while frontier.len() < block && basis.len() < cap {
        let before = basis.len();
        if basis.push(random_vec(&mut rng)) {
            frontier.push(before);
        }
    }

    let mut last_failure = String::new();
    loop {
        if basis.len() >= (n_modes + block).min(n) || basis.len() >= cap {
            let ritz = basis.ritz();
            let mut worst: f64 = 0.0;
            let mut done = ritz.len() >= n_modes;
            let mut chosen = Vec::new();
            for (theta, y) in ritz.iter().take(n_modes) {
                let wy = basis.combine(&basis.w, y);
                let vy = basis.combine(&basis.v, y);
                let r: Vec<Complex64> = wy.iter().zip(&vy).map(|(a, b)| a - b * *theta).collect();
                let rel = basis.m_norm(&r) / theta.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                if rel > opts.tol {
                    done = false;
                }
                chosen.push((sigma + 1.0 / theta, vy));
            }
            if done {
                chosen.sort_by(|a, b| a.0.total_cmp(&b.0));
                if opts.verify_inertia && opts.target_ghz <= 0.0 {
                    let top = chosen.last().map(|c| c.0).unwrap_or(0.0);
                    let next = ritz.get(n_modes).map(|(t, _)| sigma + 1.0 / t);
                    let probe = match next {
                        Some(nx) if nx > top => 0.5 * (top + nx),
                        _ => top + 1e-6 * top.abs().max(1.0),
                    };
                    let f = HermitianBand::from_pencil(&problem.stiffness, &problem.mass, probe, bw).factorize()?;
                    let below = f.negative_pivots();
                    if below != n_modes {
                        return Err(Error::Numerical(format!(
                            "inertia check failed at k = {}: {below} eigenvalues below {probe:e}, {n_modes} returned",
                            problem.k
                        )));
                    }
                }
                return Ok(chosen.into_iter().unzip());
            }
            last_failure = format!("worst relative Ritz residual {worst:e} with basis {}", basis.len());
            if basis.len() >= cap {
                return Err(Error::NonConvergence {
                    iterations: basis.len(),
                    message: format!("shift-invert at k = {}: {last_failure}", problem.k),
                    best: None,
                });
            }
        }
        // Next block: images of the newest block under the operator.
        let mut next = Vec::new();
        for &idx in &frontier {
            if basis.len() >= cap {
                break;
            }
            let before = basis.len();
            if basis.push(basis.w[idx].clone()) {
                next.push(before);
            }
        }
        // Deflated directions are replaced with fresh random ones.
        while next.len() < block && basis.len() < cap {
            let before = basis.len();
            if basis.push(random_vec(&mut rng)) {
                next.push(before);
            } else {
                break;
            }
        }
        if next.is_empty() {
            if basis.len() >= cap || basis.len() >= n {
                // Nothing more to add; the next pass reports.
                if basis.len() < (n_modes + block).min(n) {
                    return Err(Error::NonConvergence {
                        iterations: basis.len(),
                        message: format!("Krylov space exhausted at k = {} ({last_failure})", problem.k),
                        best: None,
                    });
                }
                continue;
            }
            return Err(Error::Numerical("Krylov basis stagnated".into()));
        }
        frontier = next;
    }
}

/// Dense Cholesky-reduced Hermitian eigensolve. O(n^3).
pub fn dense_pairs(
    problem: &BlochProblem,
    n_modes: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let n = problem.n();
    let to_dense = |a: &super::assembly::CsrMatrix<Complex64>| {
        let mut d = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                d[(i, j)] = x;
            }
        }
        d
    };
    let k = to_dense(&problem.stiffness);
    let m = to_dense(&problem.mass);
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let chol = m.cholesky().ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_k = l.solve_lower_triangular(&k).ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let a = l
        .solve_lower_triangular(&linv_k.adjoint())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(a);
    let target = if opts.target_ghz > 0.0 { shift_for(opts) } else { f64::NEG_INFINITY };
    let mut idx: Vec<usize> = (0..n).collect();
    if target.is_finite() {
        idx.sort_by(|&a, &b| (eig.eigenvalues[a] - target).abs().total_cmp(&(eig.eigenvalues[b] - target).abs()));
    } else {
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    }
    idx.truncate(n_modes);
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lh = l.adjoint();
    let mut vals = Vec::with_capacity(n_modes);
    let mut vecs = Vec::with_capacity(n_modes);
    for c in idx {
        let y = eig.eigenvectors.column(c).into_owned();
        let x = lh.solve_upper_triangular(&y).ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
        vals.push(eig.eigenvalues[c]);
        vecs.push(x.iter().copied().collect());
    }
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::elastics::assembly::assemble;
    use crate::elastics::bloch::BlochReduction;
    use crate::geometry::{build_unit_cell_mesh, Resolution, UnitCellParams};
    use crate::material::Material;

    fn problem(k: f64) -> BlochProblem {
        let mesh = build_unit_cell_mesh(&UnitCellParams::MEASURED, Resolution::new(6, 4, 4)).unwrap();
        let ops = assemble(&mesh, &Material::diamond()).unwrap();
        let red = Arc::new(BlochReduction::new(&mesh, &ops).unwrap());
        BlochProblem::new(red, &ops, k).unwrap()
    }

    #[test]
    fn shift_invert_matches_dense() {
        let p = problem(0.3);
        let si = EigenOptions { method: EigenMethod::ShiftInvert, verify_inertia: true, ..Default::default() };
        let dn = EigenOptions { method: EigenMethod::Dense, ..Default::default() };
        let a = solve_bands(&p, 20, &si).unwrap();
        let b = solve_bands(&p, 20, &dn).unwrap();
        for (x, y) in a.frequencies_ghz.iter().zip(&b.frequencies_ghz) {
            assert!((x - y).abs() < 1e-6 * (1.0 + y), "{x} vs {y}");
        }
    }

    #[test]
    fn modes_are_mass_orthonormal() {
        let p = problem(0.7);
        let m = solve_bands(&p, 12, &EigenOptions::default()).unwrap();
        for (i, u) in m.modes.iter().enumerate() {
            let mu = p.mass.mul_vec(u);
            for (j, v) in m.modes.iter().enumerate() {
                let g: Complex64 = v.iter().zip(&mu).map(|(a, b)| a.conj() * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).norm() < 1e-8, "G[{j},{i}] = {g}");
            }
        }
    }

    #[test]
    fn target_selects_nearest_modes() {
        let p = problem(0.5);
        let low = solve_bands(&p, 30, &EigenOptions { method: EigenMethod::Dense, ..Default::default() }).unwrap();
        let target = low.frequencies_ghz[20];
        let opts = EigenOptions { target_ghz: target, ..Default::default() };
        let near = solve_bands(&p, 3, &opts).unwrap();
        assert!(near.frequencies_ghz.iter().any(|f| (f - target).abs() < 1e-6 * target));
    }

    #[test]
    fn frequency_floor_clamps_round_off() {
        assert_eq!(frequency_ghz(-1.0).unwrap(), 0.0);
        assert!(frequency_ghz(-(TWO_PI * 1e9).powi(2)).is_err());
        assert!((frequency_ghz((TWO_PI * 5e9).powi(2)).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn bad_mode_count_is_rejected() {
        let p = problem(0.0);
        assert!(solve_bands(&p, 0, &EigenOptions::default()).is_err());
        assert!(solve_bands(&p, p.n() + 1, &EigenOptions::default()).is_err());
    }
}
