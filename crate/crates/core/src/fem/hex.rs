//! Trilinear hexahedron on an axis-aligned box.
//!
//! Strains use the engineering Voigt order `[e11, e22, e33, 2e23, 2e13, 2e12]`.

use nalgebra::{Matrix3, Matrix6};

use super::quadrature::gauss_cube;
use crate::geometry::HEX_CORNERS;

/// Shape function values and physical gradients at one point.
#[derive(Clone, Debug)]
pub struct HexPoint {
    /// Offset from the element's lower corner.
    pub offset: [f64; 3],
    /// Quadrature weight times the Jacobian determinant.
    pub weight: f64,
    pub n: [f64; 8],
    pub dn: [[f64; 3]; 8],
}

/// Shape functions of the box `[0,h0]×[0,h1]×[0,h2]` at local coordinates `s ∈ [0,1]³`.
pub fn shape(h: [f64; 3], s: [f64; 3]) -> ([f64; 8], [[f64; 3]; 8]) {
    let mut n = [0.0; 8];
    let mut dn = [[0.0; 3]; 8];
    for (a, c) in HEX_CORNERS.iter().enumerate() {
        let f = |ax: usize| if c[ax] == 1 { s[ax] } else { 1.0 - s[ax] };
        let df = |ax: usize| if c[ax] == 1 { 1.0 / h[ax] } else { -1.0 / h[ax] };
        let (f0, f1, f2) = (f(0), f(1), f(2));
        n[a] = f0 * f1 * f2;
        dn[a] = [df(0) * f1 * f2, f0 * df(1) * f2, f0 * f1 * df(2)];
    }
    (n, dn)
}

/// Quadrature points of the box element (2×2×2 Gauss by default).
#[derive(Clone, Debug)]
pub struct HexElement {
    pub h: [f64; 3],
    pub points: Vec<HexPoint>,
}

impl HexElement {
    pub fn new(h: [f64; 3]) -> Self {
        Self::with_order(h, 2)
    }

    pub fn with_order(h: [f64; 3], order: usize) -> Self {
        let vol = h[0] * h[1] * h[2];
        let points = gauss_cube(order)
            .into_iter()
            .map(|(s, w)| {
                let (n, dn) = shape(h, s);
                HexPoint { offset: [s[0] * h[0], s[1] * h[1], s[2] * h[2]], weight: w * vol, n, dn }
            })
            .collect();
        Self { h, points }
    }

    /// 24×24 stiffness `∫ Bᵀ C B`, row-major.
    pub fn stiffness(&self, c: &Matrix6<f64>) -> Vec<f64> {
        let mut k = vec![0.0; 24 * 24];
        for p in &self.points {
            let b = strain_matrix(&p.dn);
            let mut cb = [[0.0; 24]; 6];
            for i in 0..6 {
                for j in 0..24 {
                    let mut s = 0.0;
                    for l in 0..6 {
                        s += c[(i, l)] * b[l][j];
                    }
                    cb[i][j] = s;
                }
            }
            for a in 0..24 {
                for bcol in 0..24 {
                    let mut s = 0.0;
                    for i in 0..6 {
                        s += b[i][a] * cb[i][bcol];
                    }
                    k[a * 24 + bcol] += p.weight * s;
                }
            }
        }
        k
    }

    /// 24×24 block-diagonal gradient Gram `∫ ∇u:∇v`.
    pub fn gradient_gram(&self) -> Vec<f64> {
        let mut k = vec![0.0; 24 * 24];
        for p in &self.points {
            for a in 0..8 {
                for b in 0..8 {
                    let g = p.weight * (0..3).map(|d| p.dn[a][d] * p.dn[b][d]).sum::<f64>();
                    for c in 0..3 {
                        k[(3 * a + c) * 24 + 3 * b + c] += g;
                    }
                }
            }
        }
        k
    }

    /// 8×24 coupling `∫ N_i ∇·φ_j`.
    pub fn divergence(&self) -> Vec<f64> {
        let mut m = vec![0.0; 8 * 24];
        for p in &self.points {
            for i in 0..8 {
                for a in 0..8 {
                    for c in 0..3 {
                        m[i * 24 + 3 * a + c] += p.weight * p.n[i] * p.dn[a][c];
                    }
                }
            }
        }
        m
    }

    /// 8×8 mass `∫ N_i N_j`.
    pub fn mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; 64];
        for p in &self.points {
            for i in 0..8 {
                for j in 0..8 {
                    m[i * 8 + j] += p.weight * p.n[i] * p.n[j];
                }
            }
        }
        m
    }

    /// 8×8 diffusion `∫ ∇N_i · K ∇N_j`.
    pub fn diffusion(&self, k: &Matrix3<f64>) -> Vec<f64> {
        let mut m = vec![0.0; 64];
        for p in &self.points {
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            s += p.dn[i][a] * k[(a, b)] * p.dn[j][b];
                        }
                    }
                    m[i * 8 + j] += p.weight * s;
                }
            }
        }
        m
    }

    /// `∫ Bᵀ σ(x)` with `σ` given per quadrature point (24 entries).
    pub fn stress_load(&self, stress: impl Fn(&HexPoint) -> [f64; 6]) -> [f64; 24] {
        let mut r = [0.0; 24];
        for p in &self.points {
            let s = stress(p);
            let b = strain_matrix(&p.dn);
            for j in 0..24 {
                let mut v = 0.0;
                for i in 0..6 {
                    v += b[i][j] * s[i];
                }
                r[j] += p.weight * v;
            }
        }
        r
    }
}

/// 6×24 engineering strain-displacement matrix.
pub fn strain_matrix(dn: &[[f64; 3]; 8]) -> [[f64; 24]; 6] {
    let mut b = [[0.0; 24]; 6];
    for a in 0..8 {
        let [dx, dy, dz] = dn[a];
        let c = 3 * a;
        b[0][c] = dx;
        b[1][c + 1] = dy;
        b[2][c + 2] = dz;
        b[3][c + 1] = dz;
        b[3][c + 2] = dy;
        b[4][c] = dz;
        b[4][c + 2] = dx;
        b[5][c] = dy;
        b[5][c + 1] = dx;
    }
    b
}

/// Engineering strain of element displacement `u` (24 entries).
pub fn strain(dn: &[[f64; 3]; 8], u: &[f64]) -> [f64; 6] {
    let mut e = [0.0; 6];
    for a in 0..8 {
        let [dx, dy, dz] = dn[a];
        let (u0, u1, u2) = (u[3 * a], u[3 * a + 1], u[3 * a + 2]);
        e[0] += dx * u0;
        e[1] += dy * u1;
        e[2] += dz * u2;
        e[3] += dz * u1 + dy * u2;
        e[4] += dz * u0 + dx * u2;
        e[5] += dy * u0 + dx * u1;
    }
    e
}

/// Displacement gradient `∂u_i/∂x_j` of element displacement `u`.
pub fn gradient(dn: &[[f64; 3]; 8], u: &[f64]) -> [[f64; 3]; 3] {
    let mut g = [[0.0; 3]; 3];
    for a in 0..8 {
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += u[3 * a + i] * dn[a][j];
            }
        }
    }
    g
}

/// Squared Frobenius norm of a symmetric tensor given in engineering Voigt form.
pub fn frobenius_sq(e: &[f64; 6]) -> f64 {
    e[0] * e[0] + e[1] * e[1] + e[2] * e[2] + 0.5 * (e[3] * e[3] + e[4] * e[4] + e[5] * e[5])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let (n, dn) = shape([0.3, 0.5, 0.7], [0.2, 0.9, 0.4]);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for d in 0..3 {
            assert!(dn.iter().map(|g| g[d]).sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn mass_sums_to_volume() {
        let el = HexElement::new([0.5, 1.0, 2.0]);
        let total: f64 = el.mass().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn divergence_of_identity_field() {
        let h = [1.0, 2.0, 0.5];
        let el = HexElement::new(h);
        let mut u = [0.0; 24];
        for (a, c) in HEX_CORNERS.iter().enumerate() {
            for d in 0..3 {
                u[3 * a + d] = c[d] as f64 * h[d];
            }
        }
        let c = el.divergence();
        let total: f64 = (0..8).map(|i| (0..24).map(|j| c[i * 24 + j] * u[j]).sum::<f64>()).sum();
        assert!((total - 3.0 * 1.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_translations_in_kernel() {
        let lam = 0.5;
        let mu = 0.25;
        let mut c = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] = lam;
            }
            c[(i, i)] += 2.0 * mu;
            c[(i + 3, i + 3)] = mu;
        }
        let k = HexElement::new([1.0, 1.0, 1.0]).stiffness(&c);
        for d in 0..3 {
            let mut t = [0.0; 24];
            for a in 0..8 {
                t[3 * a + d] = 1.0;
            }
            for r in 0..24 {
                let v: f64 = (0..24).map(|j| k[r * 24 + j] * t[j]).sum();
                assert!(v.abs() < 1e-14);
            }
        }
    }
}
