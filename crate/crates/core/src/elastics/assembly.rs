//! Global stiffness and mass assembly.

use num_complex::Complex64;
use rayon::prelude::*;

use super::element::{hex8_matrices, ElementMatrix};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::material::Material;

/// Compressed sparse row matrix with a 3x3-block pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Copy + Default> CsrMatrix<T> {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => T::default(),
        }
    }
}

impl CsrMatrix<f64> {
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn mul_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| x[j] * a).sum()
            })
            .collect()
    }

    /// `x^T A y`.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl CsrMatrix<Complex64> {
    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::default(); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    /// Frobenius norm of `A - A^H` relative to that of `A`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                norm += a.norm_sqr();
                diff += (a - self.get(j, i).conj()).norm_sqr();
            }
        }
        if norm == 0.0 {
            0.0
        } else {
            (diff / norm).sqrt()
        }
    }
}

/// Real symmetric stiffness and mass of the unreduced mesh, 3 DOFs per node
/// ordered `(ux, uy, uz)`.
#[derive(Debug, Clone)]
pub struct GlobalOperators {
    pub stiffness: CsrMatrix<f64>,
    pub mass: CsrMatrix<f64>,
}

impl GlobalOperators {
    /// Rigid translation along `dir` as a DOF vector.
    pub fn translation(&self, dir: usize) -> Vec<f64> {
        (0..self.stiffness.n).map(|i| if i % 3 == dir { 1.0 } else { 0.0 }).collect()
    }

    /// Total mass seen by a uniform unit translation along x.
    pub fn total_mass(&self) -> f64 {
        let t = self.translation(0);
        self.mass.quad_form(&t, &t)
    }
}

/// Node-to-node adjacency through shared elements, sorted.
fn node_adjacency(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_nodes()];
    for el in &mesh.elements {
        for &a in el {
            adj[a].extend_from_slice(el);
        }
    }
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
    }
    adj
}

fn block_pattern(adj: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut row_ptr = Vec::with_capacity(3 * adj.len() + 1);
    let mut cols = Vec::new();
    row_ptr.push(0);
    for nbrs in adj {
        for _ in 0..3 {
            for &m in nbrs {
                cols.extend_from_slice(&[3 * m, 3 * m + 1, 3 * m + 2]);
            }
            row_ptr.push(cols.len());
        }
    }
    (row_ptr, cols)
}

/// Assembles stiffness and consistent mass over all elements. Free surfaces
/// need no treatment: zero traction is the natural boundary condition.
pub fn assemble(mesh: &Mesh, material: &Material) -> Result<GlobalOperators> {
    material.validate()?;
    let c = material.stiffness_voigt();
    let locals: Vec<Option<(ElementMatrix, ElementMatrix)>> = mesh
        .elements
        .par_iter()
        .map(|el| {
            let coords: [[f64; 3]; 8] = std::array::from_fn(|i| mesh.nodes[el[i]]);
            hex8_matrices(&coords, &c, material.density)
        })
        .collect();

    let adj = node_adjacency(mesh);
    let (row_ptr, cols) = block_pattern(&adj);
    let mut kv = vec![0.0; cols.len()];
    let mut mv = vec![0.0; cols.len()];
    for (e, (el, local)) in mesh.elements.iter().zip(locals).enumerate() {
        let (ke, me) =
            local.ok_or_else(|| Error::Assembly(format!("element {e} has a singular or inverted Jacobian")))?;
        for (a, &na) in el.iter().enumerate() {
            for (b, &nb) in el.iter().enumerate() {
                let slot = adj[na].binary_search(&nb).expect("adjacency covers element");
                for da in 0..3 {
                    let base = row_ptr[3 * na + da] + 3 * slot;
                    for db in 0..3 {
                        kv[base + db] += ke[(3 * a + da, 3 * b + db)];
                        mv[base + db] += me[(3 * a + da, 3 * b + db)];
                    }
                }
            }
        }
    }
    let n = mesh.n_dofs();
    Ok(GlobalOperators {
        stiffness: CsrMatrix { n, row_ptr: row_ptr.clone(), cols: cols.clone(), vals: kv },
        mass: CsrMatrix { n, row_ptr, cols, vals: mv },
    })
}
