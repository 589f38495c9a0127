use pnc_core::geometry::{build_nanobeam_mesh, build_unit_cell_mesh, Resolution, UnitCellParams, NM};
use pnc_core::Error;
use proptest::prelude::*;

// ============================================================================
// Planar area oracle
// ============================================================================

/// Outline of the block–tether cell built from its definition: ellipse,
/// tether strip, and a fillet circle of radius `r` sitting on the tether
/// edge and touching the ellipse. The fillet centre is found by bisection on
/// a brute-force point-to-ellipse distance.
struct Outline {
    sx: f64,
    sy: f64,
    tau: f64,
    half_a: f64,
    fillet: Option<(f64, f64, f64, f64)>, // (x_touch, cx, cy, r)
}

fn nearest_on_ellipse(sx: f64, sy: f64, p: (f64, f64)) -> (f64, f64, f64) {
    let dist = |th: f64| ((sx * th.cos() - p.0).powi(2) + (sy * th.sin() - p.1).powi(2)).sqrt();
    // Coarse scan then golden-section refinement.
    let n = 4000;
    let mut best = 0;
    for i in 0..=n {
        if dist(i as f64 / n as f64 * std::f64::consts::FRAC_PI_2)
            < dist(best as f64 / n as f64 * std::f64::consts::FRAC_PI_2)
        {
            best = i;
        }
    }
    let step = std::f64::consts::FRAC_PI_2 / n as f64;
    let (mut lo, mut hi) = ((best as f64 - 1.0) * step, (best as f64 + 1.0) * step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if dist(m1) < dist(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let th = 0.5 * (lo + hi);
    (dist(th), sx * th.cos(), sy * th.sin())
}

impl Outline {
    fn new(p: &UnitCellParams) -> Self {
        let (sx, sy, tau) = (p.w / 2.0, p.h / 2.0, p.t / 2.0);
        let fillet = if p.r > 0.0 && tau < sy {
            let cy = tau + p.r;
            // Centre outside the ellipse at height cy, distance r from it.
            let x_in = sx * (1.0 - (cy / sy).powi(2)).max(0.0).sqrt();
            let (mut lo, mut hi) = (x_in, sx + p.r);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if nearest_on_ellipse(sx, sy, (mid, cy)).0 < p.r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let cx = 0.5 * (lo + hi);
            let (_, xt, _) = nearest_on_ellipse(sx, sy, (cx, cy));
            Some((xt, cx, cy, p.r))
        } else {
            None
        };
        Outline { sx, sy, tau, half_a: p.a / 2.0, fillet }
    }

    fn half_width(&self, x: f64) -> f64 {
        let ax = x.abs();
        if let Some((xt, cx, cy, r)) = self.fillet {
            if ax >= xt && ax <= cx {
                return cy - (r * r - (ax - cx).powi(2)).max(0.0).sqrt();
            }
        }
        let e = if ax < self.sx { self.sy * (1.0 - (ax / self.sx).powi(2)).sqrt() } else { 0.0 };
        e.max(self.tau)
    }

    /// Composite Simpson on a fine grid.
    fn area(&self) -> f64 {
        let n = 200_000;
        let h = 2.0 * self.half_a / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = -self.half_a + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * 2.0 * self.half_width(x);
        }
        s * h / 3.0
    }
}

fn volume_error(p: &UnitCellParams, res: Resolution) -> f64 {
    let mesh = build_unit_cell_mesh(p, res).unwrap();
    let exact = Outline::new(p).area() * p.d;
    (mesh.volume() / NM.powi(3) - exact).abs() / exact
}

#[test]
fn meshed_volume_matches_the_outline_area() {
    let err = volume_error(&UnitCellParams::MEASURED, Resolution::new(16, 16, 8));
    assert!(err < 0.02, "relative volume error {err}");
}

#[test]
fn volume_error_shrinks_with_refinement() {
    // Without the concave fillet the chordal error has one sign, so it
    // cannot cancel between regions.
    let p = UnitCellParams { r: 0.0, ..UnitCellParams::MEASURED };
    let errs: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| volume_error(&p, Resolution::new(n, n / 2, 4))).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn measured_cell_has_matched_periodic_faces() {
    let mesh = build_unit_cell_mesh(&UnitCellParams::MEASURED, Resolution::new(16, 16, 8)).unwrap();
    assert_eq!(mesh.master_face.len(), mesh.slave_face.len());
    for (&m, &s) in mesh.master_face.iter().zip(&mesh.slave_face) {
        let (pm, ps) = (mesh.nodes[m], mesh.nodes[s]);
        assert!((ps[0] - pm[0] - mesh.period).abs() < 1e-15);
        assert!((ps[1] - pm[1]).abs() < 1e-15 && (ps[2] - pm[2]).abs() < 1e-15);
    }
    assert!(mesh.min_jacobian() > 0.0);
}

#[test]
fn nanobeam_volume_is_exact() {
    let mesh = build_nanobeam_mesh(90.0, 70.0, 130.0, Resolution::new(4, 4, 4)).unwrap();
    assert_eq!(mesh.elements.len(), 64);
    let v = mesh.volume() / NM.powi(3);
    assert!((v / (90.0 * 70.0 * 130.0) - 1.0).abs() < 1e-10);
}

#[test]
fn coarse_resolution_is_rejected() {
    let r = build_unit_cell_mesh(&UnitCellParams::MEASURED, Resolution::new(3, 8, 4));
    assert!(matches!(r, Err(Error::InvalidParameter(_)) | Err(Error::Resolution(_))));
}

fn symmetric_params() -> impl Strategy<Value = UnitCellParams> {
    (80.0..110.0f64, 70.0..100.0f64, 10.0..30.0f64, 0.0..15.0f64, 50.0..80.0f64)
        .prop_map(|(w, h, t, r, d)| UnitCellParams { w, h, a: 129.6, t, r, d })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn meshes_are_mirror_symmetric(p in symmetric_params()) {
        if let Ok(mesh) = build_unit_cell_mesh(&p, Resolution::new(8, 4, 4)) {
            for axis in [1, 2] {
                let map = mesh.mirror_map(axis);
                prop_assert!(map.is_some(), "no mirror partner along axis {}", axis);
                let map = map.unwrap();
                for (i, &j) in map.iter().enumerate() {
                    let (a, b) = (mesh.nodes[i], mesh.nodes[j]);
                    prop_assert!((a[axis] + b[axis]).abs() < 1e-15);
                }
            }
            prop_assert!(mesh.min_jacobian() > 0.0);
        }
    }
}
