//! Parametric block–tether unit cells and uniform nanobeam segments, meshed
//! into extruded 8-node hexahedra.
//!
//! The planar outline is `|y| <= f(x)` for a half-width profile `f`, which
//! makes a mapped quad mesh possible: every x-station gets the same number of
//! nodes spread uniformly between `-f(x)` and `f(x)`. The quads are extruded
//! through the slab thickness. Both periodic faces sit on the tether where
//! `f = t/2`, so their node sets coincide exactly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Nanometres to metres.
pub const NM: f64 = 1e-9;

/// Geometric tolerance (metres) used when matching nodes across faces.
pub const NODE_MATCH_TOL: f64 = 1e-15;

// ============================================================================
// Parameters
// ============================================================================

/// The six lengths (nm) of one block–tether unit cell.
///
/// `w` is the block extent along the beam axis (x), `h` across it (y), `a` the
/// lattice constant, `t` the tether width, `r` the junction fillet radius and
/// `d` the slab thickness (z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCellParams {
    pub w: f64,
    pub h: f64,
    pub a: f64,
    pub t: f64,
    pub r: f64,
    pub d: f64,
}

/// Parameter names accepted by [`UnitCellParams::with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellParam {
    W,
    H,
    A,
    T,
    R,
    D,
}

impl CellParam {
    pub const ALL: [CellParam; 6] =
        [CellParam::W, CellParam::H, CellParam::T, CellParam::R, CellParam::A, CellParam::D];

    pub fn name(self) -> &'static str {
        match self {
            CellParam::W => "w",
            CellParam::H => "h",
            CellParam::A => "a",
            CellParam::T => "t",
            CellParam::R => "r",
            CellParam::D => "d",
        }
    }
}

impl std::str::FromStr for CellParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "w" => Ok(CellParam::W),
            "h" => Ok(CellParam::H),
            "a" => Ok(CellParam::A),
            "t" => Ok(CellParam::T),
            "r" => Ok(CellParam::R),
            "d" => Ok(CellParam::D),
            other => Err(invalid(format!("unknown cell parameter '{other}'"))),
        }
    }
}

impl UnitCellParams {
    /// Averages of the SEM-measured geometry of the fabricated crystal.
    pub const MEASURED: UnitCellParams = UnitCellParams { w: 95.7, h: 89.9, a: 129.6, t: 22.1, r: 16.9, d: 70.3 };

    /// Standard deviations belonging to [`UnitCellParams::MEASURED`].
    pub const MEASURED_SD: UnitCellParams = UnitCellParams { w: 4.9, h: 4.2, a: 2.6, t: 3.0, r: 5.6, d: 3.7 };

    pub fn get(&self, p: CellParam) -> f64 {
        match p {
            CellParam::W => self.w,
            CellParam::H => self.h,
            CellParam::A => self.a,
            CellParam::T => self.t,
            CellParam::R => self.r,
            CellParam::D => self.d,
        }
    }

    /// Copy with one parameter replaced.
    pub fn with(mut self, p: CellParam, value: f64) -> Self {
        match p {
            CellParam::W => self.w = value,
            CellParam::H => self.h = value,
            CellParam::A => self.a = value,
            CellParam::T => self.t = value,
            CellParam::R => self.r = value,
            CellParam::D => self.d = value,
        }
        self
    }

    /// Checks the scalar invariants and that the fillet can be built.
    pub fn validate(&self) -> Result<()> {
        self.profile().map(|_| ())
    }

    /// Half-width profile of the planar outline.
    pub fn profile(&self) -> Result<Profile> {
        let UnitCellParams { w, h, a, t, r, d } = *self;
        for (name, v) in [("w", w), ("h", h), ("a", a), ("t", t), ("d", d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(invalid(format!("r must be non-negative, got {r}")));
        }
        if w >= a || h >= a {
            return Err(invalid(format!("block ({w} x {h} nm) does not fit in a {a} nm cell")));
        }
        if t > h {
            return Err(invalid(format!("tether width {t} exceeds block height {h}")));
        }
        Profile::new(w / 2.0, h / 2.0, t / 2.0, r, a / 2.0)
    }
}

// ============================================================================
// Outline profile
// ============================================================================

/// Circle tangent to the tether edge `y = t/2` and externally tangent to the
/// ellipse, filling the concave corner at `x > 0` (mirrored for `x < 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fillet {
    /// x of the tangent point on the ellipse.
    pub x_ellipse: f64,
    /// Circle centre; the tangent point on the tether edge is `(cx, t/2)`.
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Half-width `f(x)` of the block–tether outline, in nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub semi_x: f64,
    pub semi_y: f64,
    pub half_tether: f64,
    pub half_period: f64,
    pub fillet: Option<Fillet>,
}

impl Profile {
    fn new(semi_x: f64, semi_y: f64, half_tether: f64, r: f64, half_period: f64) -> Result<Self> {
        let fillet = if r > 0.0 && half_tether < semi_y {
            Some(construct_fillet(semi_x, semi_y, half_tether, r, half_period)?)
        } else {
            None
        };
        Ok(Profile { semi_x, semi_y, half_tether, half_period, fillet })
    }

    /// Constant-width strip (nanobeam).
    pub fn strip(half_width: f64, half_period: f64) -> Self {
        Profile { semi_x: 0.0, semi_y: half_width, half_tether: half_width, half_period, fillet: None }
    }

    fn ellipse(&self, x: f64) -> f64 {
        if self.semi_x <= 0.0 || x.abs() >= self.semi_x {
            0.0
        } else {
            let u = x / self.semi_x;
            self.semi_y * (1.0 - u * u).sqrt()
        }
    }

    pub fn half_width(&self, x: f64) -> f64 {
        let ax = x.abs();
        if let Some(f) = &self.fillet {
            if ax >= f.x_ellipse && ax <= f.cx {
                let dx = ax - f.cx;
                return f.cy - (f.radius * f.radius - dx * dx).max(0.0).sqrt();
            }
        }
        self.ellipse(ax).max(self.half_tether)
    }
}

fn construct_fillet(sx: f64, sy: f64, tau: f64, r: f64, half_period: f64) -> Result<Fillet> {
    // Offset curve of the ellipse at distance r; find the parameter where it
    // reaches height tau + r. Both terms grow monotonically on [0, pi/2].
    let offset_point = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let norm = (sy * sy * c * c + sx * sx * s * s).sqrt();
        (sx * c + r * sy * c / norm, sy * s + r * sx * s / norm)
    };
    let target = tau + r;
    let (mut lo, mut hi) = (0.0_f64, std::f64::consts::FRAC_PI_2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if offset_point(mid).1 < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    let (cx, cy) = offset_point(theta);
    if !(cx.is_finite() && cy.is_finite()) {
        return Err(invalid("fillet construction produced a non-finite centre"));
    }
    if cx > half_period * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "fillet of radius {r} nm does not fit: tangent point at x = {cx:.3} nm lies beyond the cell edge {half_period} nm"
        )));
    }
    Ok(Fillet { x_ellipse: sx * theta.cos(), cx, cy: target, radius: r })
}

// ============================================================================
// Mesh
// ============================================================================

/// Elements per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Resolution {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Resolution { nx, ny, nz }
    }

    /// Number of independent DOFs after folding the periodic face.
    pub fn reduced_dofs(&self) -> usize {
        3 * self.nx * (self.ny + 1) * (self.nz + 1)
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::new(24, 8, 4)
    }
}

/// Hexahedral mesh of one period, coordinates in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<[f64; 3]>,
    /// Standard hex8 ordering: bottom face counter-clockwise, then top face.
    pub elements: Vec<[usize; 8]>,
    /// Nodes on `x = x_min`.
    pub master_face: Vec<usize>,
    /// Nodes on `x = x_max`, paired index-by-index with `master_face`.
    pub slave_face: Vec<usize>,
    /// Nodes on the traction-free lateral surfaces (|y| = f(x) or |z| = d/2).
    pub free_surface: Vec<usize>,
    /// Lattice period (m).
    pub period: f64,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Independent DOFs once the slave face is eliminated.
    pub fn n_reduced_dofs(&self) -> usize {
        3 * (self.nodes.len() - self.slave_face.len())
    }

    fn corners(&self, e: usize) -> [[f64; 3]; 8] {
        let el = &self.elements[e];
        std::array::from_fn(|i| self.nodes[el[i]])
    }

    /// Solid volume by 2x2x2 Gauss integration of the element Jacobians.
    pub fn volume(&self) -> f64 {
        (0..self.elements.len()).map(|e| crate::elastics::element::hex8_volume(&self.corners(e))).sum()
    }

    /// Minimum Jacobian determinant over all elements and Gauss points.
    pub fn min_jacobian(&self) -> f64 {
        (0..self.elements.len())
            .map(|e| crate::elastics::element::hex8_min_jacobian(&self.corners(e)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Map `node -> node'` where `node'` is the mirror image of `node` under
    /// negation of coordinate `axis` (1 = y, 2 = z). Returns `None` when some
    /// node has no partner.
    pub fn mirror_map(&self, axis: usize) -> Option<Vec<usize>> {
        assert!(axis < 3);
        let scale = self.period.max(1e-30);
        let key = |p: [f64; 3]| -> [i64; 3] { std::array::from_fn(|i| (p[i] / scale * 1e9).round() as i64) };
        let mut index = std::collections::HashMap::with_capacity(self.nodes.len());
        for (i, p) in self.nodes.iter().enumerate() {
            index.insert(key(*p), i);
        }
        let mut map = Vec::with_capacity(self.nodes.len());
        for p in &self.nodes {
            let mut q = *p;
            q[axis] = -q[axis];
            let k = key(q);
            // Rounding can put a mirrored coordinate one quantum off.
            let found = index.get(&k).copied().or_else(|| {
                let mut hit = None;
                'search: for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(&j) = index.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                                hit = Some(j);
                                break 'search;
                            }
                        }
                    }
                }
                hit
            })?;
            let r = self.nodes[found];
            let dist = ((r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2) + (r[2] - q[2]).powi(2)).sqrt();
            if dist > 1e-6 * scale {
                return None;
            }
            map.push(found);
        }
        Some(map)
    }

    /// Checks element validity and the periodic face correspondence.
    pub fn validate(&self) -> Result<()> {
        if self.master_face.len() != self.slave_face.len() {
            return Err(Error::Meshing("periodic faces have different node counts".into()));
        }
        for (&m, &s) in self.master_face.iter().zip(&self.slave_face) {
            let (pm, ps) = (self.nodes[m], self.nodes[s]);
            let dx = ps[0] - pm[0] - self.period;
            let dyz = (ps[1] - pm[1]).abs().max((ps[2] - pm[2]).abs());
            if dx.abs() > 1e-9 * self.period || dyz > 1e-9 * self.period {
                return Err(Error::Meshing(format!("periodic nodes {m} and {s} do not correspond")));
            }
        }
        let jmin = self.min_jacobian();
        if !(jmin > 0.0) {
            return Err(Error::Meshing(format!("element with non-positive Jacobian ({jmin:e})")));
        }
        Ok(())
    }
}

/// Meshes the block–tether unit cell centred on the origin, x in
/// `[-a/2, a/2]`, z in `[-d/2, d/2]`.
pub fn build_unit_cell_mesh(params: &UnitCellParams, res: Resolution) -> Result<Mesh> {
    if res.nx < 4 || res.ny < 4 || res.nz < 4 {
        return Err(invalid(format!(
            "unit-cell resolution must be at least 4 per axis, got ({}, {}, {})",
            res.nx, res.ny, res.nz
        )));
    }
    let profile = params.profile()?;
    let xs = graded_stations(&profile, res.nx);
    extrude(&profile, &xs, res, params.d)
}

/// Meshes a rectangular beam segment of one period (all lengths in nm).
pub fn build_nanobeam_mesh(width: f64, thickness: f64, period: f64, res: Resolution) -> Result<Mesh> {
    for (name, v) in [("width", width), ("thickness", thickness), ("period", period)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if res.nx == 0 || res.ny == 0 || res.nz == 0 {
        return Err(invalid("resolution must be at least 1 per axis"));
    }
    let profile = Profile::strip(width / 2.0, period / 2.0);
    let xs: Vec<f64> = (0..=res.nx).map(|i| -period / 2.0 + period * i as f64 / res.nx as f64).collect();
    extrude(&profile, &xs, res, thickness)
}

/// x stations equidistributing `dx + |df|`, so the steep flanks of the block
/// get as many stations as the flat parts.
fn graded_stations(profile: &Profile, nx: usize) -> Vec<f64> {
    let half = profile.half_period;
    let samples = 8192;
    let mut xs = Vec::with_capacity(samples + 1);
    let mut cum = Vec::with_capacity(samples + 1);
    let mut acc = 0.0;
    let mut prev_f = profile.half_width(-half);
    for i in 0..=samples {
        let x = -half + 2.0 * half * i as f64 / samples as f64;
        let f = profile.half_width(x);
        if i > 0 {
            acc += 2.0 * half / samples as f64 + (f - prev_f).abs();
        }
        prev_f = f;
        xs.push(x);
        cum.push(acc);
    }
    let total = acc;
    let mut out = Vec::with_capacity(nx + 1);
    let mut seg = 0;
    for i in 0..=nx {
        let target = total * i as f64 / nx as f64;
        while seg + 1 < samples && cum[seg + 1] < target {
            seg += 1;
        }
        let (c0, c1) = (cum[seg], cum[seg + 1]);
        let s = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        out.push(xs[seg] + s * (xs[seg + 1] - xs[seg]));
    }
    // Enforce exact mirror symmetry and exact end points.
    let sym: Vec<f64> = (0..=nx).map(|i| 0.5 * (out[i] - out[nx - i])).collect();
    let mut sym = sym;
    sym[0] = -half;
    sym[nx] = half;
    sym
}

fn extrude(profile: &Profile, xs_nm: &[f64], res: Resolution, thickness_nm: f64) -> Result<Mesh> {
    let nx = xs_nm.len() - 1;
    let (ny, nz) = (res.ny, res.nz);
    let node_id = |i: usize, j: usize, k: usize| (i * (ny + 1) + j) * (nz + 1) + k;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for &x in xs_nm {
        let f = if (x.abs() - profile.half_period).abs() < 1e-12 * profile.half_period {
            // Both periodic faces must see the same width bit-for-bit.
            profile.half_width(profile.half_period)
        } else {
            profile.half_width(x)
        };
        if !(f > 0.0) {
            return Err(Error::Meshing(format!("zero half-width at x = {x} nm")));
        }
        for j in 0..=ny {
            let eta = -1.0 + 2.0 * j as f64 / ny as f64;
            for k in 0..=nz {
                let z = -0.5 * thickness_nm + thickness_nm * k as f64 / nz as f64;
                nodes.push([x * NM, f * eta * NM, z * NM]);
            }
        }
    }

    let mut elements = Vec::with_capacity(nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                elements.push([
                    node_id(i, j, k),
                    node_id(i + 1, j, k),
                    node_id(i + 1, j + 1, k),
                    node_id(i, j + 1, k),
                    node_id(i, j, k + 1),
                    node_id(i + 1, j, k + 1),
                    node_id(i + 1, j + 1, k + 1),
                    node_id(i, j + 1, k + 1),
                ]);
            }
        }
    }

    let mut master_face = Vec::new();
    let mut slave_face = Vec::new();
    for j in 0..=ny {
        for k in 0..=nz {
            master_face.push(node_id(0, j, k));
            slave_face.push(node_id(nx, j, k));
        }
    }
    let mut free_surface = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                if j == 0 || j == ny || k == 0 || k == nz {
                    free_surface.push(node_id(i, j, k));
                }
            }
        }
    }

    let mesh = Mesh { nodes, elements, master_face, slave_face, free_surface, period: 2.0 * profile.half_period * NM };
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measured_cell_meshes() {
        let mesh = build_unit_cell_mesh(&UnitCellParams::MEASURED, Resolution::new(16, 16, 8)).unwrap();
        assert_eq!(mesh.elements.len(), 16 * 16 * 8);
        assert_eq!(mesh.master_face.len(), 17 * 9);
        mesh.validate().unwrap();
    }

    #[test]
    fn fillet_is_tangent_to_both_curves() {
        let p = UnitCellParams::MEASURED.profile().unwrap();
        let f = p.fillet.unwrap();
        // Tangent to the tether edge.
        assert!((f.cy - f.radius - p.half_tether).abs() < 1e-12);
        // Continuous with the ellipse at the tangent point.
        let xe = f.x_ellipse;
        let ell = p.semi_y * (1.0 - (xe / p.semi_x).powi(2)).sqrt();
        let arc = f.cy - (f.radius.powi(2) - (xe - f.cx).powi(2)).sqrt();
        assert!((ell - arc).abs() < 1e-9, "{ell} vs {arc}");
        assert!(f.cx < p.half_period);
    }

    #[test]
    fn oversized_fillet_is_rejected() {
        let p = UnitCellParams { r: 60.0, ..UnitCellParams::MEASURED };
        assert!(matches!(p.validate(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn invalid_scalars_are_rejected() {
        let base = UnitCellParams::MEASURED;
        assert!(base.with(CellParam::W, 140.0).validate().is_err());
        assert!(base.with(CellParam::T, 95.0).validate().is_err());
        assert!(base.with(CellParam::D, 0.0).validate().is_err());
        assert!(base.with(CellParam::R, -1.0).validate().is_err());
        assert!(build_unit_cell_mesh(&base, Resolution::new(3, 8, 8)).is_err());
    }

    #[test]
    fn degenerate_uniform_cell_is_a_straight_beam() {
        let p = UnitCellParams { w: 80.0, h: 80.0, a: 130.0, t: 80.0, r: 0.0, d: 70.0 };
        let mesh = build_unit_cell_mesh(&p, Resolution::new(8, 4, 4)).unwrap();
        let expected = 80.0 * 130.0 * 70.0 * NM.powi(3);
        assert!((mesh.volume() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn nanobeam_minimal_mesh() {
        let mesh = build_nanobeam_mesh(90.0, 70.0, 130.0, Resolution::new(4, 4, 4)).unwrap();
        assert_eq!(mesh.elements.len(), 64);
        let expected = 90.0 * 70.0 * 130.0 * NM.powi(3);
        assert!((mesh.volume() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn mirror_maps_exist_for_symmetric_cells() {
        let mesh = build_unit_cell_mesh(&UnitCellParams::MEASURED, Resolution::new(12, 6, 4)).unwrap();
        for axis in [1, 2] {
            let map = mesh.mirror_map(axis).expect("mirror map");
            for (i, &j) in map.iter().enumerate() {
                assert_eq!(map[j], i);
                let (p, q) = (mesh.nodes[i], mesh.nodes[j]);
                assert!((p[axis] + q[axis]).abs() < 1e-18);
            }
        }
    }

    #[test]
    fn stations_are_symmetric_and_increasing() {
        let p = UnitCellParams::MEASURED.profile().unwrap();
        let xs = graded_stations(&p, 24);
        for i in 0..24 {
            assert!(xs[i + 1] > xs[i]);
            assert_eq!(xs[i], -xs[24 - i]);
        }
    }
}
