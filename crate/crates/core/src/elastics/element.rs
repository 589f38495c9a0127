//! Trilinear 8-node hexahedron with 2x2x2 Gauss quadrature.

use nalgebra::{Matrix3, Matrix6, SMatrix};

pub type ElementMatrix = SMatrix<f64, 24, 24>;

/// Reference coordinates of the eight nodes.
pub const NODE_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

const G: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

fn gauss_points() -> impl Iterator<Item = [f64; 3]> {
    (0..8).map(|i| [if i & 1 == 0 { -G } else { G }, if i & 2 == 0 { -G } else { G }, if i & 4 == 0 { -G } else { G }])
}

/// Shape function values at a reference point.
pub fn shape(xi: [f64; 3]) -> [f64; 8] {
    std::array::from_fn(|a| {
        let s = NODE_SIGNS[a];
        0.125 * (1.0 + s[0] * xi[0]) * (1.0 + s[1] * xi[1]) * (1.0 + s[2] * xi[2])
    })
}

/// Reference-space shape gradients, `out[a][i] = dN_a / dxi_i`.
pub fn shape_grad(xi: [f64; 3]) -> [[f64; 3]; 8] {
    std::array::from_fn(|a| {
        let s = NODE_SIGNS[a];
        let f = [1.0 + s[0] * xi[0], 1.0 + s[1] * xi[1], 1.0 + s[2] * xi[2]];
        [0.125 * s[0] * f[1] * f[2], 0.125 * s[1] * f[0] * f[2], 0.125 * s[2] * f[0] * f[1]]
    })
}

/// Jacobian `J[i][j] = dx_j / dxi_i`.
fn jacobian(coords: &[[f64; 3]; 8], dn: &[[f64; 3]; 8]) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for a in 0..8 {
        for i in 0..3 {
            for k in 0..3 {
                j[(i, k)] += dn[a][i] * coords[a][k];
            }
        }
    }
    j
}

pub fn hex8_volume(coords: &[[f64; 3]; 8]) -> f64 {
    gauss_points().map(|xi| jacobian(coords, &shape_grad(xi)).determinant()).sum()
}

/// Smallest Jacobian determinant over the Gauss points and the corners.
pub fn hex8_min_jacobian(coords: &[[f64; 3]; 8]) -> f64 {
    gauss_points()
        .chain(NODE_SIGNS.iter().copied())
        .map(|xi| jacobian(coords, &shape_grad(xi)).determinant())
        .fold(f64::INFINITY, f64::min)
}

/// Element stiffness and consistent mass. `None` when a Jacobian is not
/// positive at some Gauss point.
pub fn hex8_matrices(coords: &[[f64; 3]; 8], c: &Matrix6<f64>, density: f64) -> Option<(ElementMatrix, ElementMatrix)> {
    let mut ke = ElementMatrix::zeros();
    let mut me = ElementMatrix::zeros();
    for xi in gauss_points() {
        let dn = shape_grad(xi);
        let jac = jacobian(coords, &dn);
        let det = jac.determinant();
        if !(det > 0.0) {
            return None;
        }
        let jinv = jac.try_inverse()?;
        // Physical gradients: dN/dx = J^-1 dN/dxi.
        let mut grads = [[0.0; 3]; 8];
        for a in 0..8 {
            for i in 0..3 {
                grads[a][i] = (0..3).map(|k| jinv[(i, k)] * dn[a][k]).sum();
            }
        }
        let b = strain_displacement(&grads);
        let cb = c * b;
        ke += b.transpose() * cb * det;

        let n = shape(xi);
        for a in 0..8 {
            for bb in 0..8 {
                let m = density * n[a] * n[bb] * det;
                for d in 0..3 {
                    me[(3 * a + d, 3 * bb + d)] += m;
                }
            }
        }
    }
    Some((ke, me))
}

/// Strain-displacement matrix, strains ordered (xx, yy, zz, yz, xz, xy)
/// with engineering shears.
pub fn strain_displacement(grads: &[[f64; 3]; 8]) -> SMatrix<f64, 6, 24> {
    let mut b = SMatrix::<f64, 6, 24>::zeros();
    for (a, g) in grads.iter().enumerate() {
        let c = 3 * a;
        b[(0, c)] = g[0];
        b[(1, c + 1)] = g[1];
        b[(2, c + 2)] = g[2];
        b[(3, c + 1)] = g[2];
        b[(3, c + 2)] = g[1];
        b[(4, c)] = g[2];
        b[(4, c + 2)] = g[0];
        b[(5, c)] = g[1];
        b[(5, c + 1)] = g[0];
    }
    b
}
