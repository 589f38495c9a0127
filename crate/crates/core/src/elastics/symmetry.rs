//! Mirror parities of mode shapes under y- and z-reflection.
//!
//! The reflection acts on a displacement field as a proper vector:
//! `(R_y u)(x, y, z) = S_y u(x, -y, z)` with `S_y = diag(1, -1, 1)`, and
//! likewise for z. A mode is even when `R u = u` and odd when `R u = -u`.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mesh;

/// Overlap magnitude required for a definite parity.
pub const PARITY_THRESHOLD: f64 = 0.9;

/// Modes closer than this (GHz) are classified as one degenerate cluster.
pub const DEGENERACY_TOL_GHZ: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

impl Parity {
    pub fn from_overlap(overlap: f64) -> Self {
        if overlap > PARITY_THRESHOLD {
            Parity::Even
        } else if overlap < -PARITY_THRESHOLD {
            Parity::Odd
        } else {
            Parity::Mixed
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::Mixed => "mixed",
        }
    }

    /// Eigenvalue of the reflection: +1, -1, or `None` for mixed.
    pub fn sign(self) -> Option<f64> {
        match self {
            Parity::Even => Some(1.0),
            Parity::Odd => Some(-1.0),
            Parity::Mixed => None,
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Parity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "even" => Ok(Parity::Even),
            "odd" => Ok(Parity::Odd),
            "mixed" => Ok(Parity::Mixed),
            _ => Err(Error::InvalidParameter(format!("unknown parity '{s}'"))),
        }
    }
}

/// Node maps of the two mid-plane mirrors of a mesh.
#[derive(Debug, Clone)]
pub struct Mirrors {
    /// `maps[0]` for y, `maps[1]` for z.
    maps: [Vec<usize>; 2],
}

/// Sign of displacement component `c` under reflection of `axis`.
#[inline]
pub fn component_sign(axis: usize, c: usize) -> f64 {
    if axis == c {
        -1.0
    } else {
        1.0
    }
}

impl Mirrors {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        let y = mesh
            .mirror_map(1)
            .ok_or_else(|| Error::ClassificationUnsupported("mesh is not symmetric under y -> -y".into()))?;
        let z = mesh
            .mirror_map(2)
            .ok_or_else(|| Error::ClassificationUnsupported("mesh is not symmetric under z -> -z".into()))?;
        Ok(Mirrors { maps: [y, z] })
    }

    /// Node map for `axis` (1 = y, 2 = z).
    pub fn map(&self, axis: usize) -> &[usize] {
        &self.maps[axis - 1]
    }

    /// `R u` for a full nodal field.
    pub fn reflect(&self, axis: usize, u: &[Complex64]) -> Vec<Complex64> {
        let map = self.map(axis);
        let mut out = vec![Complex64::default(); u.len()];
        for (node, &m) in map.iter().enumerate() {
            for c in 0..3 {
                out[3 * node + c] = u[3 * m + c] * component_sign(axis, c);
            }
        }
        out
    }

    /// Normalized overlap `<u, R u> / <u, u>` in [-1, 1].
    pub fn overlap(&self, axis: usize, u: &[Complex64]) -> f64 {
        let ru = self.reflect(axis, u);
        let num: f64 = u.iter().zip(&ru).map(|(a, b)| (a.conj() * b).re).sum();
        let den: f64 = u.iter().map(|a| a.norm_sqr()).sum();
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn classify(&self, u: &[Complex64]) -> (Parity, Parity) {
        (Parity::from_overlap(self.overlap(1, u)), Parity::from_overlap(self.overlap(2, u)))
    }

    /// Joint classification of a degenerate set of modes. The span is
    /// rotated onto eigenvectors of `P_y + 2 P_z` (projected reflections),
    /// which separates the four parity classes whenever the span admits a
    /// parity-pure basis. Returns the rotated modes with their parities.
    pub fn classify_cluster(&self, modes: &[Vec<Complex64>]) -> Vec<(Vec<Complex64>, (Parity, Parity))> {
        if modes.len() == 1 {
            return vec![(modes[0].clone(), self.classify(&modes[0]))];
        }
        // Euclidean orthonormal basis of the span.
        let mut basis: Vec<Vec<Complex64>> = Vec::new();
        for m in modes {
            let mut v = m.clone();
            for _ in 0..2 {
                for b in &basis {
                    let c: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                    v.iter_mut().zip(b).for_each(|(y, x)| *y -= c * x);
                }
            }
            let n: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n > 1e-12 {
                v.iter_mut().for_each(|z| *z /= n);
                basis.push(v);
            }
        }
        let s = basis.len();
        let ry: Vec<Vec<Complex64>> = basis.iter().map(|b| self.reflect(1, b)).collect();
        let rz: Vec<Vec<Complex64>> = basis.iter().map(|b| self.reflect(2, b)).collect();
        let c = DMatrix::from_fn(s, s, |i, j| {
            let py: Complex64 = basis[i].iter().zip(&ry[j]).map(|(a, b)| a.conj() * b).sum();
            let pz: Complex64 = basis[i].iter().zip(&rz[j]).map(|(a, b)| a.conj() * b).sum();
            py + pz * 2.0
        });
        let c = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order
            .into_iter()
            .map(|col| {
                let mut v = vec![Complex64::default(); basis[0].len()];
                for (b, &w) in basis.iter().zip(eig.eigenvectors.column(col).iter()) {
                    v.iter_mut().zip(b).for_each(|(y, x)| *y += w * x);
                }
                let p = self.classify(&v);
                (v, p)
            })
            .collect()
    }
}

/// Parities of one full nodal mode shape on `mesh`.
pub fn classify_symmetry(mode: &[Complex64], mesh: &Mesh) -> Result<(Parity, Parity)> {
    if mode.len() != mesh.n_dofs() {
        return Err(Error::InvalidParameter(format!(
            "mode has {} entries, mesh has {} DOFs",
            mode.len(),
            mesh.n_dofs()
        )));
    }
    Ok(Mirrors::new(mesh)?.classify(mode))
}

/// Mirror-parity sector of the displacement space. `None` leaves that mirror
/// unconstrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SymmetrySector {
    pub y: Option<Parity>,
    pub z: Option<Parity>,
}

impl SymmetrySector {
    pub const NONE: SymmetrySector = SymmetrySector { y: None, z: None };

    pub fn new(y: Option<Parity>, z: Option<Parity>) -> Result<Self> {
        if y == Some(Parity::Mixed) || z == Some(Parity::Mixed) {
            return Err(Error::InvalidParameter("a symmetry sector needs definite parities".into()));
        }
        Ok(SymmetrySector { y, z })
    }

    /// The four sectors of both mirrors.
    pub fn all_four() -> [SymmetrySector; 4] {
        use Parity::{Even, Odd};
        [(Even, Even), (Even, Odd), (Odd, Even), (Odd, Odd)].map(|(y, z)| SymmetrySector { y: Some(y), z: Some(z) })
    }

    /// Sectors for the mirrors flagged as usable.
    pub fn split(use_y: bool, use_z: bool) -> Vec<SymmetrySector> {
        let opts = |on: bool| if on { vec![Some(Parity::Even), Some(Parity::Odd)] } else { vec![None] };
        let mut out = Vec::new();
        for y in opts(use_y) {
            for z in opts(use_z) {
                out.push(SymmetrySector { y, z });
            }
        }
        out
    }

    pub fn parity_y(&self) -> Parity {
        self.y.unwrap_or(Parity::Mixed)
    }

    pub fn parity_z(&self) -> Parity {
        self.z.unwrap_or(Parity::Mixed)
    }
}
