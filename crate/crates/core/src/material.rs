//! Cubic elastic media in an arbitrary crystal orientation.

use nalgebra::{Matrix3, Matrix6};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const GPA: f64 = 1e9;

/// Cubic stiffness constants (GPa), density and crystal orientation.
///
/// `orientation` maps crystal axes to device axes: a vector with crystal
/// components `v` has device components `orientation * v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub c11_gpa: f64,
    pub c12_gpa: f64,
    pub c44_gpa: f64,
    pub density: f64,
    pub orientation: [[f64; 3]; 3],
}

impl Default for Material {
    fn default() -> Self {
        Material::diamond()
    }
}

impl Material {
    /// Single-crystal diamond, crystal axes along the device axes.
    pub fn diamond() -> Self {
        Material {
            c11_gpa: 1079.0,
            c12_gpa: 124.0,
            c44_gpa: 578.0,
            density: 3515.0,
            orientation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Isotropic medium expressed through the cubic constants.
    pub fn isotropic(youngs_gpa: f64, poisson: f64, density: f64) -> Self {
        let lambda = youngs_gpa * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        let mu = youngs_gpa / (2.0 * (1.0 + poisson));
        Material {
            c11_gpa: lambda + 2.0 * mu,
            c12_gpa: lambda,
            c44_gpa: mu,
            density,
            orientation: Material::diamond().orientation,
        }
    }

    /// Rotation of the crystal about the device z axis by `angle` radians.
    pub fn rotated_about_z(mut self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        self.orientation = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (c11, c12, c44) = (self.c11_gpa, self.c12_gpa, self.c44_gpa);
        if ![c11, c12, c44, self.density].iter().all(|v| v.is_finite()) {
            return Err(invalid("material constants must be finite"));
        }
        if !(c11 > c12.abs() && c44 > 0.0 && c11 + 2.0 * c12 > 0.0) {
            return Err(invalid(format!("stiffness not positive definite (C11={c11}, C12={c12}, C44={c44} GPa)")));
        }
        if !(self.density > 0.0) {
            return Err(invalid(format!("density must be positive, got {}", self.density)));
        }
        let r = Matrix3::from(self.orientation).transpose();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if err > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(invalid("orientation is not a proper rotation"));
        }
        Ok(())
    }

    fn rotation(&self) -> Matrix3<f64> {
        // `[[f64; 3]; 3]` is row-major; nalgebra's From is column-major.
        Matrix3::from(self.orientation).transpose()
    }

    /// Stiffness in the crystal frame, Voigt notation with engineering
    /// shear strains, Pa.
    pub fn crystal_voigt(&self) -> Matrix6<f64> {
        let (c11, c12, c44) = (self.c11_gpa * GPA, self.c12_gpa * GPA, self.c44_gpa * GPA);
        let mut c = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] = if i == j { c11 } else { c12 };
            }
            c[(i + 3, i + 3)] = c44;
        }
        c
    }

    /// Stiffness in the device frame (Voigt, Pa).
    pub fn stiffness_voigt(&self) -> Matrix6<f64> {
        let c = tensor_from_voigt(&self.crystal_voigt());
        let r = self.rotation();
        let mut out = [[[[0.0; 3]; 3]; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let mut s = 0.0;
                        for p in 0..3 {
                            for q in 0..3 {
                                let rip_rjq = r[(i, p)] * r[(j, q)];
                                if rip_rjq == 0.0 {
                                    continue;
                                }
                                for m in 0..3 {
                                    for n in 0..3 {
                                        s += rip_rjq * r[(k, m)] * r[(l, n)] * c[p][q][m][n];
                                    }
                                }
                            }
                        }
                        out[i][j][k][l] = s;
                    }
                }
            }
        }
        voigt_from_tensor(&out)
    }

    /// Whether the device-frame stiffness is invariant under negation of
    /// coordinate `axis`: entries coupling an odd number of `axis` indices
    /// must vanish.
    pub fn is_mirror_symmetric(&self, axis: usize) -> bool {
        let c = self.stiffness_voigt();
        let count = |v: usize| VOIGT_PAIRS[v].iter().filter(|&&i| i == axis).count();
        let scale = c.amax();
        (0..6).all(|i| (0..6).all(|j| (count(i) + count(j)) % 2 == 0 || c[(i, j)].abs() <= 1e-12 * scale))
    }

    /// Young's modulus (Pa) for uniaxial stress along the device axis `dir`
    /// (0 = x), from the compliance matrix.
    pub fn youngs_modulus_along(&self, dir: usize) -> Result<f64> {
        let s = self.stiffness_voigt().try_inverse().ok_or_else(|| invalid("singular stiffness"))?;
        Ok(1.0 / s[(dir, dir)])
    }
}

const VOIGT_PAIRS: [[usize; 2]; 6] = [[0, 0], [1, 1], [2, 2], [1, 2], [0, 2], [0, 1]];

const VOIGT: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];

fn tensor_from_voigt(c: &Matrix6<f64>) -> [[[[f64; 3]; 3]; 3]; 3] {
    let mut t = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    t[i][j][k][l] = c[(VOIGT[i][j], VOIGT[k][l])];
                }
            }
        }
    }
    t
}

fn voigt_from_tensor(t: &[[[[f64; 3]; 3]; 3]; 3]) -> Matrix6<f64> {
    let pairs = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];
    Matrix6::from_fn(|a, b| {
        let (i, j) = pairs[a];
        let (k, l) = pairs[b];
        t[i][j][k][l]
    })
}
