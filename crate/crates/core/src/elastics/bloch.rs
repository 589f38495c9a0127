//! Bloch-periodic reduction by eliminating the slave face, optionally
//! restricted to one mirror-parity sector.
//!
//! Slave DOFs are written as `exp(i*pi*k) * master`, with `k` the reduced
//! wavevector `k_x a / pi`. With `u = T q` the reduced pencil is
//! `(T^H K T, T^H M T)`, Hermitian by construction. In a parity sector each
//! column of `T` is a symmetrized combination over one mirror orbit of
//! nodes, so `T^H K T` is exactly the block of the operator on that sector.

use std::collections::VecDeque;
use std::sync::Arc;

use num_complex::Complex64;

use super::assembly::{CsrMatrix, GlobalOperators};
use super::symmetry::{component_sign, Mirrors, SymmetrySector};
use crate::error::{invalid, Result};
use crate::geometry::Mesh;

/// Where one global DOF lands in the reduced space.
#[derive(Debug, Clone, Copy)]
struct DofImage {
    col: usize,
    coef: f64,
    /// Bloch phase exponent, 0 for independent nodes and 1 for slaves.
    exp: i8,
}

/// k-independent part of the reduction: DOF numbering, bandwidth-reducing
/// ordering and the scatter map from global to reduced entries.
#[derive(Debug, Clone)]
pub struct BlochReduction {
    sector: SymmetrySector,
    /// Per global DOF, `None` when the sector forces it to zero.
    dof_map: Vec<Option<DofImage>>,
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// Per global CSR entry: reduced slot, coefficient and phase exponent
    /// `e_j - e_i`. Entries outside the sector carry `usize::MAX`.
    scatter: Vec<(usize, f64, i8)>,
    bandwidth: usize,
}

impl BlochReduction {
    pub fn new(mesh: &Mesh, ops: &GlobalOperators) -> Result<Self> {
        Self::with_sector(mesh, ops, SymmetrySector::NONE)
    }

    /// Reduction onto one parity sector. The mesh must be mirror symmetric
    /// for every constrained mirror; the operators are assumed to share
    /// that symmetry (see `Material::is_mirror_symmetric`).
    pub fn with_sector(mesh: &Mesh, ops: &GlobalOperators, sector: SymmetrySector) -> Result<Self> {
        let n = mesh.n_nodes();
        if ops.stiffness.n != 3 * n {
            return Err(invalid("operators do not match the mesh"));
        }
        let sector = SymmetrySector::new(sector.y, sector.z)?;
        let mut master_of: Vec<usize> = (0..n).collect();
        let mut is_slave = vec![false; n];
        for (&m, &s) in mesh.master_face.iter().zip(&mesh.slave_face) {
            master_of[s] = m;
            is_slave[s] = true;
        }

        // Group elements as (node map, per-component sign, character).
        let mut group: Vec<(Vec<usize>, [f64; 3], f64)> = vec![((0..n).collect(), [1.0; 3], 1.0)];
        if sector.y.is_some() || sector.z.is_some() {
            let mirrors = Mirrors::new(mesh)?;
            for (axis, parity) in [(1, sector.y), (2, sector.z)] {
                if let Some(p) = parity {
                    let chi = p.sign().expect("definite parity");
                    let map = mirrors.map(axis);
                    let signs: [f64; 3] = std::array::from_fn(|c| component_sign(axis, c));
                    let mut extended = Vec::new();
                    for (gmap, gs, gchi) in &group {
                        let composed: Vec<usize> = gmap.iter().map(|&v| map[v]).collect();
                        let s: [f64; 3] = std::array::from_fn(|c| gs[c] * signs[c]);
                        extended.push((composed, s, gchi * chi));
                    }
                    group.extend(extended);
                }
            }
        }

        // Orbit representatives among independent nodes.
        let mut rep = vec![usize::MAX; n];
        let mut reps = Vec::new();
        for i in 0..n {
            if is_slave[i] || rep[i] != usize::MAX {
                continue;
            }
            for (g, _, _) in &group {
                let j = g[i];
                if is_slave[j] {
                    return Err(invalid("mirror maps a master node onto the slave face"));
                }
                rep[j] = i;
            }
            reps.push(i);
        }

        // Rep-level adjacency for the bandwidth-reducing order.
        let mut rep_index = vec![usize::MAX; n];
        for (r, &i) in reps.iter().enumerate() {
            rep_index[i] = r;
        }
        let rep_of = |node: usize| rep_index[rep[master_of[node]]];
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); reps.len()];
        for el in &mesh.elements {
            for &a in el {
                let ra = rep_of(a);
                for &b in el {
                    adj[ra].push(rep_of(b));
                }
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        let order = reverse_cuthill_mckee(&adj);

        // Columns: surviving components of each representative, in RCM order.
        let mut first_col = vec![[usize::MAX; 3]; reps.len()];
        let mut n_cols = 0;
        for &r in &order {
            let i = reps[r];
            for c in 0..3 {
                let stabilized_ok = group.iter().all(|(g, s, chi)| g[i] != i || chi * s[c] > 0.0);
                if stabilized_ok {
                    first_col[r][c] = n_cols;
                    n_cols += 1;
                }
            }
        }

        // Global DOF images. Orbit sizes follow from the distinct images.
        let mut dof_map = vec![None; 3 * n];
        for node in 0..n {
            let m = master_of[node];
            let exp = if is_slave[node] { 1 } else { 0 };
            let r = rep_index[rep[m]];
            let i = reps[r];
            let mut images: Vec<usize> = group.iter().map(|(g, _, _)| g[i]).collect();
            images.sort_unstable();
            images.dedup();
            let norm = 1.0 / (images.len() as f64).sqrt();
            let (_, s, chi) = group.iter().find(|(g, _, _)| g[i] == m).expect("node in its orbit");
            for c in 0..3 {
                let col = first_col[r][c];
                if col != usize::MAX {
                    dof_map[3 * node + c] = Some(DofImage { col, coef: chi * s[c] * norm, exp });
                }
            }
        }

        // Reduced pattern from rep adjacency.
        let mut col_rep = vec![0; n_cols];
        for (r, cs) in first_col.iter().enumerate() {
            for &c in cs.iter().filter(|&&c| c != usize::MAX) {
                col_rep[c] = r;
            }
        }
        let mut row_ptr = Vec::with_capacity(n_cols + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        let mut bandwidth = 0;
        for (row, &r) in col_rep.iter().enumerate() {
            let start = cols.len();
            for &nb in &adj[r] {
                for &c in first_col[nb].iter().filter(|&&c| c != usize::MAX) {
                    cols.push(c);
                    bandwidth = bandwidth.max(row.abs_diff(c));
                }
            }
            cols[start..].sort_unstable();
            row_ptr.push(cols.len());
        }

        let k = &ops.stiffness;
        let mut scatter = Vec::with_capacity(k.nnz());
        for gi in 0..k.n {
            let (gcols, _) = k.row(gi);
            for &gj in gcols {
                let entry = match (dof_map[gi], dof_map[gj]) {
                    (Some(a), Some(b)) => {
                        let span = &cols[row_ptr[a.col]..row_ptr[a.col + 1]];
                        let pos = span.binary_search(&b.col).expect("reduced pattern covers entry");
                        (row_ptr[a.col] + pos, a.coef * b.coef, b.exp - a.exp)
                    }
                    _ => (usize::MAX, 0.0, 0),
                };
                scatter.push(entry);
            }
        }

        Ok(BlochReduction { sector, dof_map, n_cols, row_ptr, cols, scatter, bandwidth })
    }

    pub fn sector(&self) -> SymmetrySector {
        self.sector
    }

    pub fn n_reduced(&self) -> usize {
        self.n_cols
    }

    /// Half-bandwidth of the reduced operators in the chosen ordering.
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn reduce(&self, a: &CsrMatrix<f64>, phase: Complex64) -> CsrMatrix<Complex64> {
        let mut vals = vec![Complex64::default(); self.cols.len()];
        let conj = phase.conj();
        for (&(slot, coef, e), &v) in self.scatter.iter().zip(&a.vals) {
            if slot == usize::MAX {
                continue;
            }
            let f = match e {
                0 => Complex64::new(coef, 0.0),
                1 => phase * coef,
                _ => conj * coef,
            };
            vals[slot] += f * v;
        }
        CsrMatrix { n: self.n_reduced(), row_ptr: self.row_ptr.clone(), cols: self.cols.clone(), vals }
    }

    /// Full nodal field from reduced coordinates at Bloch phase `phase`.
    pub fn expand(&self, q: &[Complex64], phase: Complex64) -> Vec<Complex64> {
        self.dof_map
            .iter()
            .map(|img| match img {
                Some(d) if d.exp == 0 => q[d.col] * d.coef,
                Some(d) => q[d.col] * d.coef * phase,
                None => Complex64::default(),
            })
            .collect()
    }

    /// Reduced coordinates of a full field: the orthogonal projection of its
    /// independent (non-slave) part onto the reduced space.
    pub fn restrict(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut q = vec![Complex64::default(); self.n_reduced()];
        for (d, &v) in self.dof_map.iter().zip(u) {
            if let Some(d) = d {
                if d.exp == 0 {
                    q[d.col] += v * d.coef;
                }
            }
        }
        q
    }
}

/// Bloch phase for reduced wavevector `k` (`k = 1` is the zone edge).
pub fn bloch_phase(k: f64) -> Complex64 {
    Complex64::from_polar(1.0, std::f64::consts::PI * k)
}

/// Reduced Hermitian pencil at one wavevector.
#[derive(Debug, Clone)]
pub struct BlochProblem {
    /// Reduced wavevector `k_x a / pi`.
    pub k: f64,
    pub stiffness: CsrMatrix<Complex64>,
    pub mass: CsrMatrix<Complex64>,
    pub reduction: Arc<BlochReduction>,
}

impl BlochProblem {
    /// `k` must lie in `[-1, 1]`; negative values are the time-reversed partners.
    pub fn new(reduction: Arc<BlochReduction>, ops: &GlobalOperators, k: f64) -> Result<Self> {
        if !(k.is_finite() && (-1.0..=1.0).contains(&k)) {
            return Err(invalid(format!("reduced wavevector {k} outside [-1, 1]")));
        }
        let phase = bloch_phase(k);
        Ok(BlochProblem {
            k,
            stiffness: reduction.reduce(&ops.stiffness, phase),
            mass: reduction.reduce(&ops.mass, phase),
            reduction,
        })
    }

    pub fn phase(&self) -> Complex64 {
        bloch_phase(self.k)
    }

    pub fn n(&self) -> usize {
        self.stiffness.n
    }

    pub fn expand(&self, q: &[Complex64]) -> Vec<Complex64> {
        self.reduction.expand(q, self.phase())
    }
}

/// Reverse Cuthill–McKee ordering of an undirected graph; `order[pos] = node`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree = |i: usize| adj[i].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree(i)).expect("unvisited node");
        let start = pseudo_peripheral(adj, seed, &visited);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree(u), u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize, blocked: &[bool]) -> usize {
    let bfs = |s: usize| -> (usize, Vec<usize>) {
        let mut depth = vec![usize::MAX; adj.len()];
        depth[s] = 0;
        let mut queue = VecDeque::from([s]);
        let mut last_level = vec![s];
        let mut ecc = 0;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !blocked[u] && depth[u] == usize::MAX {
                    depth[u] = depth[v] + 1;
                    if depth[u] > ecc {
                        ecc = depth[u];
                        last_level.clear();
                    }
                    if depth[u] == ecc {
                        last_level.push(u);
                    }
                    queue.push_back(u);
                }
            }
        }
        (ecc, last_level)
    };
    let mut current = seed;
    let (mut ecc, mut level) = bfs(current);
    for _ in 0..8 {
        let candidate = *level.iter().min_by_key(|&&u| (adj[u].len(), u)).expect("non-empty level");
        let (e2, l2) = bfs(candidate);
        if e2 <= ecc {
            break;
        }
        current = candidate;
        ecc = e2;
        level = l2;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastics::assembly::assemble;
    use crate::elastics::symmetry::Mirrors;
    use crate::geometry::{build_unit_cell_mesh, Resolution, UnitCellParams};
    use crate::material::Material;

    fn setup() -> (Mesh, GlobalOperators, Arc<BlochReduction>) {
        let mesh = build_unit_cell_mesh(&UnitCellParams::MEASURED, Resolution::new(8, 4, 4)).unwrap();
        let ops = assemble(&mesh, &Material::diamond()).unwrap();
        let red = Arc::new(BlochReduction::new(&mesh, &ops).unwrap());
        (mesh, ops, red)
    }

    #[test]
    fn reduced_operators_are_hermitian() {
        let (_, ops, red) = setup();
        for k in [0.0, 0.13, 0.5, 0.97, 1.0] {
            let p = BlochProblem::new(red.clone(), &ops, k).unwrap();
            assert!(p.stiffness.hermiticity_defect() < 1e-12);
            assert!(p.mass.hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn reduction_matches_explicit_transform() {
        let (mesh, ops, red) = setup();
        let p = BlochProblem::new(red.clone(), &ops, 0.37).unwrap();
        // q^H K_red q == u^H K u for u = T q.
        let q: Vec<Complex64> =
            (0..p.n()).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let u = p.expand(&q);
        assert_eq!(u.len(), mesh.n_dofs());
        let ku = ops.stiffness.mul_complex(&u);
        let full: Complex64 = u.iter().zip(&ku).map(|(a, b)| a.conj() * b).sum();
        let kq = p.stiffness.mul_vec(&q);
        let red_val: Complex64 = q.iter().zip(&kq).map(|(a, b)| a.conj() * b).sum();
        assert!((full - red_val).norm() < 1e-10 * full.norm());
        assert_eq!(red.restrict(&u), q);
    }

    #[test]
    fn rcm_keeps_the_band_narrow() {
        let (_, _, red) = setup();
        // One x-layer holds 5 * 5 nodes. Folding the periodic ring puts two
        // layers in each level set, so the band spans about four layers.
        assert!(red.bandwidth() <= 3 * 5 * 5 * 4, "bandwidth {}", red.bandwidth());
        assert!(red.bandwidth() < red.n_reduced() / 2);
    }

    #[test]
    fn sector_columns_partition_the_space() {
        let (mesh, ops, full) = setup();
        let total: usize = SymmetrySector::all_four()
            .iter()
            .map(|&s| BlochReduction::with_sector(&mesh, &ops, s).unwrap().n_reduced())
            .sum();
        assert_eq!(total, full.n_reduced());
    }

    #[test]
    fn sector_fields_have_definite_parity() {
        let (mesh, ops, _) = setup();
        let mirrors = Mirrors::new(&mesh).unwrap();
        for s in SymmetrySector::all_four() {
            let red = Arc::new(BlochReduction::with_sector(&mesh, &ops, s).unwrap());
            let p = BlochProblem::new(red.clone(), &ops, 0.4).unwrap();
            let q: Vec<Complex64> = (0..p.n()).map(|i| Complex64::new(1.0 + (i as f64).sin(), 0.3)).collect();
            let u = p.expand(&q);
            assert!((mirrors.overlap(1, &u) - s.y.unwrap().sign().unwrap()).abs() < 1e-12);
            assert!((mirrors.overlap(2, &u) - s.z.unwrap().sign().unwrap()).abs() < 1e-12);
            let back = red.restrict(&u);
            for (a, b) in back.iter().zip(&q) {
                assert!((a - b).norm() < 1e-12);
            }
            assert!(p.stiffness.hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn out_of_zone_wavevector_is_rejected() {
        let (_, ops, red) = setup();
        assert!(BlochProblem::new(red, &ops, 1.5).is_err());
    }
}
