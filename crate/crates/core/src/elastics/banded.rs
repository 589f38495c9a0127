//! Banded `L D L^H` factorization of complex Hermitian matrices.

use num_complex::Complex64;

use super::assembly::CsrMatrix;
use crate::error::{Error, Result};

/// Lower band of a Hermitian matrix, row-major, `bw + 1` entries per row.
#[derive(Debug, Clone)]
pub struct HermitianBand {
    n: usize,
    bw: usize,
    data: Vec<Complex64>,
}

impl HermitianBand {
    /// `a - shift * b` for two operators sharing a pattern of half-bandwidth `bw`.
    pub fn from_pencil(a: &CsrMatrix<Complex64>, b: &CsrMatrix<Complex64>, shift: f64, bw: usize) -> Self {
        let n = a.n;
        let mut data = vec![Complex64::default(); n * (bw + 1)];
        for i in 0..n {
            let (ca, va) = a.row(i);
            let (cb, vb) = b.row(i);
            for (&j, &v) in ca.iter().zip(va) {
                if j <= i {
                    assert!(i - j <= bw, "entry outside declared band");
                    data[i * (bw + 1) + bw + j - i] += v;
                }
            }
            for (&j, &v) in cb.iter().zip(vb) {
                if j <= i {
                    data[i * (bw + 1) + bw + j - i] -= v * shift;
                }
            }
        }
        HermitianBand { n, bw, data }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + self.bw + j - i
    }

    /// Factorizes in place without pivoting. Fails on a (numerically) zero
    /// pivot, which means the shift sits on an eigenvalue.
    pub fn factorize(mut self) -> Result<BandLdl> {
        let (n, bw) = (self.n, self.bw);
        let scale = (0..n).map(|i| self.data[self.idx(i, i)].norm()).fold(0.0, f64::max);
        let mut d = vec![0.0; n];
        let mut w = vec![Complex64::default(); bw];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.data[self.idx(i, j)];
                if klo < j {
                    let row_j = &self.data[self.idx(j, klo)..self.idx(j, j)];
                    let wi = &w[klo - lo..j - lo];
                    for (a, b) in wi.iter().zip(row_j) {
                        s -= a * b.conj();
                    }
                }
                let lij = s / d[j];
                let p = self.idx(i, j);
                self.data[p] = lij;
                w[j - lo] = lij * d[j];
            }
            let mut diag = self.data[self.idx(i, i)].re;
            for k in lo..i {
                diag -= (w[k - lo] * self.data[self.idx(i, k)].conj()).re;
            }
            if !(diag.abs() > 1e-14 * scale) || !diag.is_finite() {
                return Err(Error::Numerical(format!(
                    "zero pivot at row {i} of {n} (pivot {diag:e}, scale {scale:e})"
                )));
            }
            d[i] = diag;
            let p = self.idx(i, i);
            self.data[p] = Complex64::new(1.0, 0.0);
        }
        Ok(BandLdl { band: self, d })
    }
}

#[derive(Debug, Clone)]
pub struct BandLdl {
    band: HermitianBand,
    d: Vec<f64>,
}

impl BandLdl {
    pub fn n(&self) -> usize {
        self.band.n
    }

    /// Number of negative pivots, i.e. eigenvalues of the pencil below the shift.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn solve_in_place(&self, x: &mut [Complex64]) {
        let HermitianBand { n, bw, .. } = self.band;
        let data = &self.band.data;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &data[self.band.idx(i, lo)..self.band.idx(i, i)];
            let mut s = x[i];
            for (l, xv) in row.iter().zip(&x[lo..i]) {
                s -= l * xv;
            }
            x[i] = s;
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= *di;
        }
        for j in (0..n).rev() {
            let lo = j.saturating_sub(bw);
            let xj = x[j];
            let row = &data[self.band.idx(j, lo)..self.band.idx(j, j)];
            for (l, xk) in row.iter().zip(&mut x[lo..j]) {
                *xk -= l.conj() * xj;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_band(n: usize, bw: usize, shift_diag: f64) -> CsrMatrix<Complex64> {
        // Deterministic Hermitian band matrix.
        let mut dense = vec![vec![Complex64::default(); n]; n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let v = if i == j {
                    Complex64::new(shift_diag + (i as f64 * 0.7).sin(), 0.0)
                } else {
                    Complex64::new(((i * 31 + j * 17) as f64).sin(), ((i * 7 + j * 3) as f64).cos())
                };
                dense[i][j] = v;
                dense[j][i] = v.conj();
            }
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) <= bw {
                    cols.push(j);
                    vals.push(dense[i][j]);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    fn zero_like(a: &CsrMatrix<Complex64>) -> CsrMatrix<Complex64> {
        CsrMatrix { vals: vec![Complex64::default(); a.vals.len()], ..a.clone() }
    }

    #[test]
    fn solves_indefinite_systems() {
        let (n, bw) = (40, 5);
        let a = random_band(n, bw, 0.3);
        let f = HermitianBand::from_pencil(&a, &zero_like(&a), 0.0, bw).factorize().unwrap();
        let x_true: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0 - i as f64 * 0.5)).collect();
        let mut b = a.mul_vec(&x_true);
        f.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x_true) {
            assert!((u - v).norm() < 1e-8 * (1.0 + v.norm()), "{u} vs {v}");
        }
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        let (n, bw) = (30, 3);
        let a = random_band(n, bw, 20.0);
        let f = HermitianBand::from_pencil(&a, &zero_like(&a), 0.0, bw).factorize().unwrap();
        assert_eq!(f.negative_pivots(), 0);
        // Dense check through nalgebra's Hermitian eigensolver.
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let eig = nalgebra::SymmetricEigen::new(dense).eigenvalues;
        let mut sorted: Vec<f64> = eig.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let shift = 0.5 * (sorted[6] + sorted[7]);
        let mut ident = zero_like(&a);
        for i in 0..n {
            let (c, _) = a.row(i);
            let p = a.row_ptr[i] + c.binary_search(&i).unwrap();
            ident.vals[p] = Complex64::new(1.0, 0.0);
        }
        let f = HermitianBand::from_pencil(&a, &ident, shift, bw).factorize().unwrap();
        assert_eq!(f.negative_pivots(), 7);
    }
}
