//! Band structures along a path of reduced wavevectors.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::assembly::{assemble, GlobalOperators};
use super::bloch::{BlochProblem, BlochReduction};
use super::eigen::{solve_bands, EigenOptions};
use super::symmetry::{Mirrors, Parity, SymmetrySector, DEGENERACY_TOL_GHZ};
use crate::error::{invalid, Error, Result};
use crate::geometry::Mesh;
use crate::material::Material;

/// Assembled operators of one cell plus the Bloch reductions of every
/// symmetry sector in use.
#[derive(Debug, Clone)]
pub struct BandModel {
    ops: GlobalOperators,
    sectors: Vec<(SymmetrySector, Arc<BlochReduction>)>,
    mirrors: Option<Mirrors>,
    n_dofs: usize,
}

/// Eigenpairs at one wavevector merged over all sectors.
#[derive(Debug, Clone)]
pub struct KPointModes {
    pub k: f64,
    pub frequencies_ghz: Vec<f64>,
    pub parities: Vec<(Parity, Parity)>,
    /// Full nodal mode shapes (slave face included), mass-orthonormal.
    pub modes: Vec<Vec<Complex64>>,
}

impl BandModel {
    /// Splits into mirror-parity sectors whenever mesh and material allow it.
    pub fn new(mesh: &Mesh, material: &Material) -> Result<Self> {
        Self::build(mesh, material, true)
    }

    /// Solves the unsplit problem; parities come from overlaps only.
    pub fn unsplit(mesh: &Mesh, material: &Material) -> Result<Self> {
        Self::build(mesh, material, false)
    }

    fn build(mesh: &Mesh, material: &Material, split: bool) -> Result<Self> {
        mesh.validate()?;
        let ops = assemble(mesh, material)?;
        let mirrors = Mirrors::new(mesh).ok();
        let symmetric = mirrors.is_some() && split;
        let use_y = symmetric && material.is_mirror_symmetric(1);
        let use_z = symmetric && material.is_mirror_symmetric(2);
        let sectors = SymmetrySector::split(use_y, use_z)
            .into_iter()
            .map(|s| Ok((s, Arc::new(BlochReduction::with_sector(mesh, &ops, s)?))))
            .collect::<Result<Vec<_>>>()?;
        Ok(BandModel { ops, sectors, mirrors, n_dofs: mesh.n_dofs() })
    }

    pub fn operators(&self) -> &GlobalOperators {
        &self.ops
    }

    pub fn sectors(&self) -> impl Iterator<Item = (SymmetrySector, &Arc<BlochReduction>)> {
        self.sectors.iter().map(|(s, r)| (*s, r))
    }

    /// Size of the Bloch-reduced problem summed over sectors.
    pub fn n_reduced(&self) -> usize {
        self.sectors.iter().map(|(_, r)| r.n_reduced()).sum()
    }

    /// Lowest `n_modes` modes at `k` with parities. Sectors are enlarged
    /// until each one's highest computed mode lies above the merged cut.
    pub fn solve_k(&self, k: f64, n_modes: usize, opts: &EigenOptions) -> Result<KPointModes> {
        let total = self.n_reduced();
        if n_modes == 0 || n_modes > total {
            return Err(invalid(format!("n_modes must be in 1..={total}, got {n_modes}")));
        }
        let ns = self.sectors.len();
        let step = n_modes.div_ceil(ns);
        let mut want: Vec<usize> =
            self.sectors.iter().map(|(_, r)| if ns == 1 { n_modes } else { (step + 4).min(r.n_reduced()) }).collect();
        let mut results: Vec<Option<(Vec<f64>, Vec<Vec<Complex64>>)>> = vec![None; ns];
        loop {
            for (i, (_, red)) in self.sectors.iter().enumerate() {
                let stale = results[i].as_ref().map_or(true, |r| r.0.len() != want[i]);
                if stale {
                    let p = BlochProblem::new(red.clone(), &self.ops, k)?;
                    let m = solve_bands(&p, want[i], opts)?;
                    let fields = m.modes.iter().map(|q| p.expand(q)).collect();
                    results[i] = Some((m.frequencies_ghz, fields));
                }
            }
            let mut all: Vec<f64> = results.iter().flat_map(|r| r.as_ref().unwrap().0.iter().copied()).collect();
            if all.len() < n_modes {
                return Err(Error::Numerical("sector solves returned too few modes".into()));
            }
            all.sort_by(f64::total_cmp);
            let cut = all[n_modes - 1];
            let mut grew = false;
            for (i, (_, red)) in self.sectors.iter().enumerate() {
                let f = &results[i].as_ref().unwrap().0;
                let top = f.last().copied().unwrap_or(f64::NEG_INFINITY);
                if ns > 1 && top <= cut && want[i] < red.n_reduced() {
                    want[i] = (want[i] + step).min(red.n_reduced());
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }

        let mut entries: Vec<(f64, SymmetrySector, Vec<Complex64>)> = Vec::new();
        for ((sector, _), r) in self.sectors.iter().zip(results) {
            let (f, modes) = r.unwrap();
            entries.extend(f.into_iter().zip(modes).map(|(f, m)| (f, *sector, m)));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        entries.truncate(n_modes);
        let (freqs, parities, modes) = self.attach_parities(entries);
        Ok(KPointModes { k, frequencies_ghz: freqs, parities, modes })
    }

    /// Definite parities come from the sector; unconstrained mirrors are
    /// classified from overlaps, jointly within degenerate clusters.
    fn attach_parities(
        &self,
        entries: Vec<(f64, SymmetrySector, Vec<Complex64>)>,
    ) -> (Vec<f64>, Vec<(Parity, Parity)>, Vec<Vec<Complex64>>) {
        let mut freqs = Vec::with_capacity(entries.len());
        let mut parities = Vec::with_capacity(entries.len());
        let mut modes = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            // Cluster: consecutive modes of the same sector within tolerance.
            let mut j = i + 1;
            while j < entries.len()
                && entries[j].1 == entries[i].1
                && entries[j].0 - entries[j - 1].0 <= DEGENERACY_TOL_GHZ
            {
                j += 1;
            }
            let sector = entries[i].1;
            let needs_overlap = sector.y.is_none() || sector.z.is_none();
            match (&self.mirrors, needs_overlap) {
                (Some(mirrors), true) => {
                    let cluster: Vec<Vec<Complex64>> = entries[i..j].iter().map(|e| e.2.clone()).collect();
                    let rotated = if j - i > 1 {
                        mirrors.classify_cluster(&cluster)
                    } else {
                        vec![(cluster[0].clone(), mirrors.classify(&cluster[0]))]
                    };
                    for (e, (m, (py, pz))) in entries[i..j].iter().zip(rotated) {
                        freqs.push(e.0);
                        parities.push((sector.y.unwrap_or(py), sector.z.unwrap_or(pz)));
                        modes.push(if j - i > 1 { m } else { e.2.clone() });
                    }
                }
                _ => {
                    for e in &entries[i..j] {
                        freqs.push(e.0);
                        parities.push((sector.parity_y(), sector.parity_z()));
                        modes.push(e.2.clone());
                    }
                }
            }
            i = j;
        }
        (freqs, parities, modes)
    }

    /// Number of full-mesh DOFs (3 per node).
    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }
}

/// Frequencies and parities on a k path. `frequencies[ik][band]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    pub k: Vec<f64>,
    pub frequencies: Vec<Vec<f64>>,
    pub parities: Vec<Vec<(Parity, Parity)>>,
}

impl BandStructure {
    /// Builds a structure from raw frequencies (all parities mixed), sorting
    /// each k row. Useful for synthetic band sets.
    pub fn from_frequencies(k: Vec<f64>, mut frequencies: Vec<Vec<f64>>) -> Result<Self> {
        if k.len() != frequencies.len() {
            return Err(invalid("one frequency row per k sample is required"));
        }
        for row in &mut frequencies {
            row.sort_by(f64::total_cmp);
        }
        let parities = frequencies.iter().map(|r| vec![(Parity::Mixed, Parity::Mixed); r.len()]).collect();
        let b = BandStructure { k, frequencies, parities };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let nb = self.frequencies.first().map_or(0, Vec::len);
        if self.frequencies.len() != self.k.len() || self.parities.len() != self.k.len() {
            return Err(invalid("band structure rows do not match the k samples"));
        }
        for (row, par) in self.frequencies.iter().zip(&self.parities) {
            if row.len() != nb || par.len() != nb {
                return Err(invalid("band count differs between k samples"));
            }
            if row.iter().any(|f| !f.is_finite() || *f < -1e-3) {
                return Err(invalid("negative or non-finite frequency"));
            }
            if row.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid("frequencies must be sorted per k"));
            }
        }
        Ok(())
    }

    pub fn n_bands(&self) -> usize {
        self.frequencies.first().map_or(0, Vec::len)
    }

    /// Frequencies of sorted band `b` across all k.
    pub fn band(&self, b: usize) -> Vec<f64> {
        self.frequencies.iter().map(|r| r[b]).collect()
    }

    /// CSV with columns `k_reduced,band_index,frequency_GHz,parity_y,parity_z`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k_reduced,band_index,frequency_GHz,parity_y,parity_z")?;
        for ((k, row), par) in self.k.iter().zip(&self.frequencies).zip(&self.parities) {
            for (b, (f, (py, pz))) in row.iter().zip(par).enumerate() {
                writeln!(out, "{k},{b},{f},{py},{pz}")?;
            }
        }
        Ok(())
    }
}

/// `n` uniform samples of `[0, 1]`; a single sample is `k = 0`.
pub fn uniform_k_path(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Band structure of `mesh` over `k_path` (ascending, within [0, 1]).
pub fn band_diagram(mesh: &Mesh, material: &Material, k_path: &[f64], n_modes: usize) -> Result<BandStructure> {
    let model = BandModel::new(mesh, material)?;
    band_diagram_with(&model, k_path, n_modes, &EigenOptions::default())
}

/// Band diagram on a prepared model. k points are solved in parallel and
/// merged in path order.
pub fn band_diagram_with(
    model: &BandModel,
    k_path: &[f64],
    n_modes: usize,
    opts: &EigenOptions,
) -> Result<BandStructure> {
    if k_path.is_empty() {
        return Err(invalid("empty k path"));
    }
    if k_path.iter().any(|k| !(0.0..=1.0).contains(k)) {
        return Err(invalid("k path must lie within [0, 1]"));
    }
    if k_path.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("k path must be ascending"));
    }
    let rows: Vec<(Vec<f64>, Vec<(Parity, Parity)>)> = k_path
        .par_iter()
        .map(|&k| model.solve_k(k, n_modes, opts).map(|m| (m.frequencies_ghz, m.parities)).map_err(|e| with_k(e, k)))
        .collect::<Result<Vec<_>>>()?;
    let (frequencies, parities) = rows.into_iter().unzip();
    Ok(BandStructure { k: k_path.to_vec(), frequencies, parities })
}

fn with_k(e: Error, k: f64) -> Error {
    match e {
        Error::Numerical(m) if !m.contains("k =") => Error::Numerical(format!("at k = {k}: {m}")),
        Error::NonConvergence { iterations, message, best } if !message.contains("k =") => {
            Error::NonConvergence { iterations, message: format!("at k = {k}: {message}"), best }
        }
        other => other,
    }
}
