//! Norm equivalence on `ℝ³ × ℝ³ × H¹_per,0(𝒴)³` for the limit strain form.
//!
//! The semi-norm is `‖Ẽ(η, ζ, w)‖²` with
//! `Ẽ = [[η₁ − y₃ζ₁, η₃ − y₃ζ₃, 0], [·, η₂ − y₃ζ₂, 0], [·, ·, 0]] + e_y(w)`,
//! compared with `|η|² + |ζ|² + ‖w‖²_{H¹}`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cell::periodic_constraints_on;
use crate::error::{Error, Result};
use crate::fem::hex::{strain_matrix, HexElement};
use crate::fem::{assemble_gradient_gram, assemble_strain_gram, assemble_vector_operator, CsrMatrix, DofMap};
use crate::geometry::{cell_grid, periodic_pairs, CellMesh, HexGrid};

/// Engineering Voigt pattern of each of the six constant parameters.
fn parameter_strain(j: usize, y3: f64) -> [f64; 6] {
    let mut e = [0.0; 6];
    let scale = if j < 3 { 1.0 } else { -y3 };
    match j % 3 {
        0 => e[0] = scale,
        1 => e[1] = scale,
        _ => e[5] = 2.0 * scale,
    }
    e
}

const FROBENIUS: [f64; 6] = [1.0, 1.0, 1.0, 0.5, 0.5, 0.5];

/// Dense forms `(A, B)` on `(η, ζ, w)`, `w` in mean-zero periodic coordinates.
pub struct SeminormForms {
    pub seminorm: DMatrix<f64>,
    pub norm: DMatrix<f64>,
}

fn dense_basis(map: &DofMap) -> DMatrix<f64> {
    let n = map.n_free();
    let mut basis = DMatrix::zeros(map.n_full(), n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = map.expand(&e);
        basis.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    basis
}

fn sandwich(basis: &DMatrix<f64>, m: &CsrMatrix) -> DMatrix<f64> {
    let mut mb = DMatrix::zeros(m.nrows, basis.ncols());
    for r in 0..m.nrows {
        let (cols, vals) = m.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            for j in 0..basis.ncols() {
                mb[(r, j)] += v * basis[(c, j)];
            }
        }
    }
    basis.transpose() * mb
}

pub fn seminorm_forms(grid: &HexGrid) -> Result<SeminormForms> {
    let pairs = periodic_pairs(grid);
    let map = DofMap::new(3 * grid.num_nodes(), &periodic_constraints_on(grid, &pairs))?;
    let basis = dense_basis(&map);
    let nw = basis.ncols();
    let el = HexElement::new(grid.h);

    let strain = assemble_strain_gram(grid);
    let gradient = assemble_gradient_gram(grid);
    let scalar = el.mass();
    let mut vector_mass = vec![0.0; 576];
    for a in 0..8 {
        for b in 0..8 {
            for c in 0..3 {
                vector_mass[(3 * a + c) * 24 + 3 * b + c] = scalar[8 * a + b];
            }
        }
    }
    let mass = assemble_vector_operator(grid, |_| Some(&vector_mass[..]));

    // ∫ Ẽ(e_j, 0) : e(φ) for every full displacement dof
    let mut cross = DMatrix::zeros(6, 3 * grid.num_nodes());
    let mut fixed = DMatrix::zeros(6, 6);
    for e in 0..grid.num_elements() {
        let nodes = grid.element_nodes(e);
        let z0 = grid.element_origin(e)[2];
        for p in &el.points {
            let y3 = z0 + p.offset[2];
            let b = strain_matrix(&p.dn);
            let pats: Vec<[f64; 6]> = (0..6).map(|j| parameter_strain(j, y3)).collect();
            for j in 0..6 {
                for k in 0..6 {
                    fixed[(j, k)] += p.weight * (0..6).map(|i| FROBENIUS[i] * pats[j][i] * pats[k][i]).sum::<f64>();
                }
                for a in 0..8 {
                    for c in 0..3 {
                        let v: f64 = (0..6).map(|i| FROBENIUS[i] * pats[j][i] * b[i][3 * a + c]).sum();
                        cross[(j, 3 * nodes[a] + c)] += p.weight * v;
                    }
                }
            }
        }
    }

    let n = 6 + nw;
    let mut seminorm = DMatrix::zeros(n, n);
    seminorm.view_mut((0, 0), (6, 6)).copy_from(&fixed);
    let cw = &cross * &basis;
    seminorm.view_mut((0, 6), (6, nw)).copy_from(&cw);
    seminorm.view_mut((6, 0), (nw, 6)).copy_from(&cw.transpose());
    seminorm.view_mut((6, 6), (nw, nw)).copy_from(&sandwich(&basis, &strain));

    let mut norm = DMatrix::zeros(n, n);
    norm.view_mut((0, 0), (6, 6)).fill_with_identity();
    let h1 = sandwich(&basis, &mass) + sandwich(&basis, &gradient);
    norm.view_mut((6, 6), (nw, nw)).copy_from(&h1);
    Ok(SeminormForms { seminorm: symmetrize(seminorm), norm: symmetrize(norm) })
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// All eigenvalues of `A x = λ B x` in ascending order, `B` SPD.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = b.clone().cholesky().ok_or_else(|| Error::Eigen("norm matrix is not positive definite".into()))?.l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
    let s = symmetrize(&linv * a * linv.transpose());
    let mut values: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumReport {
    pub n: usize,
    pub dofs: usize,
    pub c_min: f64,
    pub c_max: f64,
    /// Smallest eigenvalue on the `(η, ζ) = 0` subspace.
    pub korn: f64,
}

/// Equivalence constants on the bare periodic `n`-grid of the cell.
pub fn norm_equivalence_spectrum_on(n: usize) -> Result<SpectrumReport> {
    if n < 1 {
        return Err(Error::InvalidArgument("cell subdivisions must be positive".into()));
    }
    let forms = seminorm_forms(&cell_grid(n))?;
    let all = generalized_eigenvalues(&forms.seminorm, &forms.norm)?;
    let m = forms.norm.nrows() - 6;
    let sub = |a: &DMatrix<f64>| a.view((6, 6), (m, m)).into_owned();
    let korn = generalized_eigenvalues(&sub(&forms.seminorm), &sub(&forms.norm))?[0];
    Ok(SpectrumReport { n, dofs: forms.norm.nrows(), c_min: all[0], c_max: *all.last().unwrap(), korn })
}

/// [`norm_equivalence_spectrum_on`] at the resolution of a cell mesh.
pub fn norm_equivalence_spectrum(mesh: &CellMesh) -> Result<SpectrumReport> {
    norm_equivalence_spectrum_on(mesh.n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_block_is_hand_integral() {
        // ∫_{(0,1)²×(−1,1)} of 1, 1, 2·1 (shear counted twice) and y₃² versions
        let expect = [2.0, 2.0, 4.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0];
        let forms = seminorm_forms(&cell_grid(2)).unwrap();
        for j in 0..6 {
            for k in 0..6 {
                let want = if j == k { expect[j] } else { 0.0 };
                assert!((forms.seminorm[(j, k)] - want).abs() < 1e-13, "({j},{k})");
            }
        }
    }

    #[test]
    fn periodic_fields_do_not_couple_to_constants() {
        let forms = seminorm_forms(&cell_grid(3)).unwrap();
        let m = forms.seminorm.ncols() - 6;
        assert!(forms.seminorm.view((0, 6), (6, m)).abs().max() < 1e-12);
    }

    #[test]
    fn lower_constant_is_positive_and_stable() {
        let reports: Vec<SpectrumReport> = (2..=4).map(|n| norm_equivalence_spectrum_on(n).unwrap()).collect();
        for r in &reports {
            assert!(r.c_min > 0.0 && r.c_min <= r.c_max);
            assert!(r.korn >= r.c_min - 1e-12);
            assert!(r.c_max < 10.0);
        }
        let lo = reports.iter().map(|r| r.c_min).fold(f64::INFINITY, f64::min);
        let hi = reports.iter().map(|r| r.c_min).fold(0.0, f64::max);
        assert!(hi / lo < 2.0, "{reports:?}");
    }
}
