//! Periodicity-cell problems and homogenized plate coefficients.
//!
//! Six unit macroscopic strains drive the cell: three membrane strains `M^J`
//! and three bending strains `y3 M^J` with `J ∈ {11, 22, 12}`. In engineering
//! Voigt form `M^11 = e1`, `M^22 = e2`, `M^12 = e6`, so that a macroscopic
//! engineering strain `s` maps to `Σ s_J M^J`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix3, Matrix6};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::hex::{self, HexElement};
use crate::fem::{
    assemble_divergence_coupling, assemble_elastic_stiffness, assemble_scalar_diffusion, assemble_scalar_mass, nodal_weights, pcg,
    CholeskySolver, ConstraintSet, CsrMatrix, DofMap, MeanZero, SpdSolve,
};
use crate::geometry::{CellMesh, DofSubset, HexGrid, Phase};
use crate::material::{BiotParams, HookeTensor, Voigt};

/// Engineering Voigt index of the in-plane pairs `11, 22, 12`.
pub const MEMBRANE_VOIGT: [usize; 3] = [0, 1, 5];

/// Number of unit macroscopic strains (3 membrane + 3 bending).
pub const N_MACRO: usize = 6;

/// Unit macroscopic strain `J` at thickness coordinate `y3`.
pub fn macro_strain(j: usize, y3: f64) -> [f64; 6] {
    let mut e = [0.0; 6];
    e[MEMBRANE_VOIGT[j % 3]] = if j < 3 { 1.0 } else { y3 };
    e
}

/// Gather the 24 element values of a nodal vector field.
pub fn element_values(nodes: &[usize; 8], field: &[f64]) -> [f64; 24] {
    let mut u = [0.0; 24];
    for (a, &n) in nodes.iter().enumerate() {
        u[3 * a..3 * a + 3].copy_from_slice(&field[3 * n..3 * n + 3]);
    }
    u
}

fn mat_vec6(c: &Voigt, s: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = (0..6).map(|j| c[(i, j)] * s[j]).sum();
    }
    out
}

fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    (0..6).map(|i| a[i] * b[i]).sum()
}

/// Periodic mean-zero constraints for a 3-component field on the cell.
pub fn periodic_constraints(mesh: &CellMesh) -> ConstraintSet {
    periodic_constraints_on(&mesh.grid, &mesh.periodic)
}

pub fn periodic_constraints_on(grid: &HexGrid, pairs: &[(usize, usize)]) -> ConstraintSet {
    let weights = nodal_weights(grid, |_| true);
    let nn = grid.num_nodes();
    let mut cs = ConstraintSet::new();
    for &(s, m) in pairs {
        for c in 0..3 {
            cs.periodic.push((3 * s + c, 3 * m + c));
        }
    }
    for c in 0..3 {
        cs.mean_zero.push(MeanZero { dofs: (0..nn).map(|n| 3 * n + c).collect(), weights: weights.clone() });
    }
    cs
}

/// Periodic mean-zero elasticity operator of a cell and its constraint map.
pub struct CellElasticity {
    pub mesh: CellMesh,
    pub tensor: HookeTensor,
    pub map: DofMap,
    pub stiffness: CsrMatrix,
    pub reduced: CsrMatrix,
    element: HexElement,
}

impl CellElasticity {
    pub fn new(mesh: &CellMesh, tensor: &HookeTensor) -> Result<Self> {
        let stiffness = assemble_elastic_stiffness(mesh, tensor)?;
        let map = DofMap::new(stiffness.nrows, &periodic_constraints(mesh))?;
        let reduced = map.reduce_matrix(&stiffness);
        Ok(Self { mesh: mesh.clone(), tensor: tensor.clone(), map, stiffness, reduced, element: HexElement::new(mesh.grid.h) })
    }

    /// `∫ A E^J : e(v)` for every nodal test function (full vector).
    pub fn macro_load(&self, j: usize) -> Vec<f64> {
        let grid = &self.mesh.grid;
        let mut out = vec![0.0; 3 * grid.num_nodes()];
        for e in 0..grid.num_elements() {
            let c = self.tensor.phase(self.mesh.phases[e]);
            let z0 = grid.element_origin(e)[2];
            let r = self.element.stress_load(|p| mat_vec6(c, &macro_strain(j, z0 + p.offset[2])));
            let nodes = grid.element_nodes(e);
            for a in 0..8 {
                for d in 0..3 {
                    out[3 * nodes[a] + d] += r[3 * a + d];
                }
            }
        }
        out
    }

    /// `(1/|𝒴|) ∫ A (E^J + e(χ^J)) : (E^K + e(χ^K))` for all pairs.
    pub fn energy_matrix(&self, fields: &[&[f64]]) -> DMatrix<f64> {
        let grid = &self.mesh.grid;
        let nj = fields.len();
        let mut h = DMatrix::zeros(nj, nj);
        for e in 0..grid.num_elements() {
            let c = self.tensor.phase(self.mesh.phases[e]);
            let nodes = grid.element_nodes(e);
            let z0 = grid.element_origin(e)[2];
            let locals: Vec<[f64; 24]> = fields.iter().map(|f| element_values(&nodes, f)).collect();
            for p in &self.element.points {
                let y3 = z0 + p.offset[2];
                let strains: Vec<[f64; 6]> = (0..nj)
                    .map(|j| {
                        let mut s = hex::strain(&p.dn, &locals[j]);
                        let m = macro_strain(j, y3);
                        for i in 0..6 {
                            s[i] += m[i];
                        }
                        s
                    })
                    .collect();
                for j in 0..nj {
                    let sj = mat_vec6(c, &strains[j]);
                    for k in j..nj {
                        h[(j, k)] += p.weight * dot6(&sj, &strains[k]);
                    }
                }
            }
        }
        for j in 0..nj {
            for k in 0..j {
                h[(j, k)] = h[(k, j)];
            }
        }
        h / CellMesh::VOLUME
    }

    /// `∫ A e(u):e(u)` of a full nodal field.
    pub fn energy(&self, u: &[f64]) -> f64 {
        crate::fem::sparse::dot(&self.stiffness.mul_vec(u), u)
    }

    pub fn stiffness_operator(&self) -> &CsrMatrix {
        &self.reduced
    }
}

/// Corrector fields `χ_m^J` and `χ_b^J` on the cell nodes.
#[derive(Clone, Debug)]
pub struct CorrectorSet {
    pub membrane: [Vec<f64>; 3],
    pub bending: [Vec<f64>; 3],
    pub iterations: [usize; 6],
    /// Number of nodes of the mesh the correctors were solved on.
    pub num_nodes: usize,
}

impl CorrectorSet {
    /// Corrector of unit strain `J` (0..3 membrane, 3..6 bending).
    pub fn field(&self, j: usize) -> &[f64] {
        if j < 3 {
            &self.membrane[j]
        } else {
            &self.bending[j - 3]
        }
    }

    pub fn zeros(num_nodes: usize) -> Self {
        let z = || vec![0.0; 3 * num_nodes];
        Self { membrane: [z(), z(), z()], bending: [z(), z(), z()], iterations: [0; 6], num_nodes }
    }
}

/// Solve the six cell problems with Jacobi-PCG to relative residual `tol`.
pub fn solve_correctors_with(cell: &CellElasticity, tol: f64) -> Result<CorrectorSet> {
    let max_iter = (20 * cell.reduced.nrows).max(1000);
    let solved: Vec<Result<(Vec<f64>, usize)>> = (0..N_MACRO)
        .into_par_iter()
        .map(|j| {
            let load = cell.macro_load(j);
            let rhs: Vec<f64> = cell.map.restrict(&load).into_iter().map(|v| -v).collect();
            let (x, stats) = pcg(&cell.reduced, &rhs, tol, max_iter)?;
            Ok((cell.map.expand(&x), stats.iterations))
        })
        .collect();
    let mut fields = Vec::with_capacity(N_MACRO);
    let mut iterations = [0; 6];
    for (j, r) in solved.into_iter().enumerate() {
        let (f, it) = r?;
        iterations[j] = it;
        fields.push(f);
    }
    let mut it = fields.into_iter();
    let mut next = || it.next().expect("six fields");
    Ok(CorrectorSet {
        membrane: [next(), next(), next()],
        bending: [next(), next(), next()],
        iterations,
        num_nodes: cell.mesh.grid.num_nodes(),
    })
}

/// Corrector tolerance used by [`solve_correctors`].
pub const CORRECTOR_TOL: f64 = 1e-10;

pub fn solve_correctors(mesh: &CellMesh, tensor: &HookeTensor) -> Result<CorrectorSet> {
    let cell = CellElasticity::new(mesh, tensor)?;
    solve_correctors_with(&cell, CORRECTOR_TOL)
}

/// Homogenized membrane, coupling and bending coefficients.
///
/// Each block is stored in engineering form (rows and columns ordered
/// `11, 22, 12`); the fourth-order arrays are available through [`Self::a`],
/// [`Self::b`], [`Self::c`].
#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizedTensor {
    /// 6×6 matrix `[[a, b], [bᵀ, c]]` on (membrane strain, curvature).
    pub block: Matrix6<f64>,
}

fn pair_index(a: usize, b: usize) -> usize {
    if a == b {
        a
    } else {
        2
    }
}

impl HomogenizedTensor {
    pub fn membrane(&self) -> Matrix3<f64> {
        self.block.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn coupling(&self) -> Matrix3<f64> {
        self.block.fixed_view::<3, 3>(0, 3).into_owned()
    }

    pub fn bending(&self) -> Matrix3<f64> {
        self.block.fixed_view::<3, 3>(3, 3).into_owned()
    }

    fn entry(m: &Matrix3<f64>, i: usize, j: usize, k: usize, l: usize) -> f64 {
        m[(pair_index(i, j), pair_index(k, l))]
    }

    /// `a_{ijkl}` with indices in `0..2`.
    pub fn a(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        Self::entry(&self.membrane(), i, j, k, l)
    }

    pub fn b(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        Self::entry(&self.coupling(), i, j, k, l)
    }

    pub fn c(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        Self::entry(&self.bending(), i, j, k, l)
    }

    /// Full fourth-order arrays `(a, b, c)`.
    pub fn arrays(&self) -> [[[[[f64; 2]; 2]; 2]; 2]; 3] {
        let mut out = [[[[[0.0; 2]; 2]; 2]; 2]; 3];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out[0][i][j][k][l] = self.a(i, j, k, l);
                        out[1][i][j][k][l] = self.b(i, j, k, l);
                        out[2][i][j][k][l] = self.c(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.block.symmetric_eigenvalues().min()
    }

    /// `‖B − Bᵀ‖_max / ‖B‖_max` of the 6×6 block.
    pub fn asymmetry(&self) -> f64 {
        (self.block - self.block.transpose()).abs().max() / self.block.abs().max()
    }

    /// Perturb the coupling block symmetrically (used for fault injection).
    pub fn perturb_coupling(&mut self, delta: f64) {
        for i in 0..3 {
            for j in 0..3 {
                self.block[(i, 3 + j)] += delta;
                self.block[(3 + j, i)] += delta;
            }
        }
    }
}

/// Homogenized coefficients from solved correctors.
pub fn compute_homogenized(mesh: &CellMesh, tensor: &HookeTensor, correctors: &CorrectorSet) -> Result<HomogenizedTensor> {
    if correctors.num_nodes != mesh.grid.num_nodes() {
        return Err(Error::Mismatch(format!(
            "correctors have {} nodes, mesh has {}",
            correctors.num_nodes,
            mesh.grid.num_nodes()
        )));
    }
    let cell = CellElasticity::new(mesh, tensor)?;
    Ok(homogenized_from(&cell, correctors))
}

pub fn homogenized_from(cell: &CellElasticity, correctors: &CorrectorSet) -> HomogenizedTensor {
    let fields: Vec<&[f64]> = (0..N_MACRO).map(|j| correctors.field(j)).collect();
    let h = cell.energy_matrix(&fields);
    HomogenizedTensor { block: Matrix6::from_fn(|i, j| h[(i, j)]) }
}

/// Engineering membrane block of the plane-stress condensation of a 3D tensor.
pub fn condensed_membrane(c: &Voigt) -> Matrix3<f64> {
    let m = MEMBRANE_VOIGT;
    let t = [2usize, 3, 4];
    let amm = Matrix3::from_fn(|i, j| c[(m[i], m[j])]);
    let amt = Matrix3::from_fn(|i, j| c[(m[i], t[j])]);
    let att = Matrix3::from_fn(|i, j| c[(t[i], t[j])]);
    let inv = att.try_inverse().expect("transverse block of a coercive tensor is invertible");
    amm - amt * inv * amt.transpose()
}

/// Voigt (upper) and Reuss (lower) bounds on the membrane block.
pub fn membrane_bounds(mesh: &CellMesh, tensor: &HookeTensor) -> (Matrix3<f64>, Matrix3<f64>) {
    let vol = mesh.grid.element_volume();
    let mut avg = Voigt::zeros();
    let mut compliance = Matrix3::zeros();
    for &p in &mesh.phases {
        let c = tensor.phase(p);
        avg += c * (vol / CellMesh::VOLUME);
        let q = condensed_membrane(c);
        compliance += q.try_inverse().expect("plane-stress tensor is invertible") * (vol / CellMesh::VOLUME);
    }
    let upper = condensed_membrane(&avg);
    let lower = compliance.try_inverse().expect("averaged compliance is invertible");
    (upper, lower)
}

/// Pressure-to-displacement cell operator.
///
/// `u_p` solves `∫ A e(u_p):e(v) = (1/|𝒴|) ∫_gel α p0 ∇·v` in the periodic
/// mean-zero space.
pub struct PressureCellOperator {
    pub cell: CellElasticity,
    pub alpha: f64,
    pub gel: DofSubset,
    /// `∫ ψ_i ∇·φ_j` on full displacement dofs.
    pub coupling: CsrMatrix,
    /// Same, with columns restricted to the periodic space.
    pub coupling_reduced: CsrMatrix,
    /// `∫_gel ψ_i ψ_j`.
    pub gel_mass: CsrMatrix,
    /// `∫_gel K ∇ψ_i·∇ψ_j`.
    pub gel_diffusion: CsrMatrix,
    factor: CholeskySolver,
    schur: OnceLock<DMatrix<f64>>,
}

impl PressureCellOperator {
    pub fn new(mesh: &CellMesh, tensor: &HookeTensor, biot: &BiotParams) -> Result<Self> {
        let cell = CellElasticity::new(mesh, tensor)?;
        let gel = DofSubset::gel(mesh);
        let coupling = assemble_divergence_coupling(mesh, &gel)?;
        let coupling_reduced = cell.map.reduce_columns(&coupling);
        let gel_mass = assemble_scalar_mass(mesh, &gel)?;
        let gel_diffusion = assemble_scalar_diffusion(mesh, &gel, &biot.k)?;
        let factor = CholeskySolver::new(cell.reduced.clone())?;
        Ok(Self {
            cell,
            alpha: biot.alpha,
            gel,
            coupling,
            coupling_reduced,
            gel_mass,
            gel_diffusion,
            factor,
            schur: OnceLock::new(),
        })
    }

    pub fn num_gel_dofs(&self) -> usize {
        self.gel.len()
    }

    /// Factorized reduced cell stiffness.
    pub fn stiffness_solver(&self) -> &CholeskySolver {
        &self.factor
    }

    /// `Q = C K⁻¹ Cᵀ` on the gel dofs (cached).
    pub fn pressure_schur(&self) -> &DMatrix<f64> {
        self.schur.get_or_init(|| {
            let ct = self.coupling_reduced.transpose();
            let ng = self.gel.len();
            let columns: Vec<Vec<f64>> = (0..ng)
                .map(|i| {
                    let mut e = vec![0.0; ng];
                    e[i] = 1.0;
                    ct.mul_vec(&e)
                })
                .collect();
            let solved = self.factor.solve_many(&columns);
            let mut q = DMatrix::zeros(ng, ng);
            for (j, x) in solved.iter().enumerate() {
                let cx = self.coupling_reduced.mul_vec(x);
                for i in 0..ng {
                    q[(i, j)] = cx[i];
                }
            }
            (&q + q.transpose()) * 0.5
        })
    }
}

/// `u_p` for a gel pressure field given on the gel dofs.
pub fn solve_pressure_corrector(op: &PressureCellOperator, p0: &[f64]) -> Result<Vec<f64>> {
    if p0.len() != op.gel.len() {
        return Err(Error::Mismatch(format!("pressure has {} entries, cell gel has {}", p0.len(), op.gel.len())));
    }
    let s = op.alpha / CellMesh::VOLUME;
    let rhs: Vec<f64> = op.coupling_reduced.mul_transpose_vec(p0).into_iter().map(|v| s * v).collect();
    let x = op.factor.solve(&rhs)?;
    Ok(op.cell.map.expand(&x))
}

/// Gel divergence moments of the correctors and of the pressure corrector.
#[derive(Clone, Debug)]
pub struct DivergenceMoments {
    /// `∫_gel ∇·χ^J`.
    pub corrector: [f64; 6],
    /// `∫_gel ψ_i ∇·χ^J`.
    pub corrector_tested: Vec<Vec<f64>>,
    /// `∫_gel ψ_i tr E^J`.
    pub trace_tested: Vec<Vec<f64>>,
    /// Row vector `r` with `∫_gel ∇·u_p(p0) = r · p0`.
    pub pressure_row: Vec<f64>,
}

impl DivergenceMoments {
    /// `g^J = ∫_gel ψ_i (tr E^J + ∇·χ^J)`.
    pub fn coupling_vector(&self, j: usize) -> Vec<f64> {
        self.trace_tested[j].iter().zip(&self.corrector_tested[j]).map(|(a, b)| a + b).collect()
    }
}

/// `T[J][i] = ∫_gel ψ_i tr E^J`.
pub fn trace_tested(op: &PressureCellOperator) -> Vec<Vec<f64>> {
    let mesh = &op.cell.mesh;
    let ng = op.gel.len();
    let el = HexElement::new(mesh.grid.h);
    let mut trace_tested = vec![vec![0.0; ng]; N_MACRO];
    for &e in &op.gel.elements {
        let nodes = mesh.grid.element_nodes(e);
        let z0 = mesh.grid.element_origin(e)[2];
        for p in &el.points {
            let y3 = z0 + p.offset[2];
            for (j, tested) in trace_tested.iter_mut().enumerate() {
                let m = macro_strain(j, y3);
                let tr = m[0] + m[1] + m[2];
                if tr == 0.0 {
                    continue;
                }
                for a in 0..8 {
                    tested[op.gel.node_to_dof[nodes[a]]] += p.weight * p.n[a] * tr;
                }
            }
        }
    }
    trace_tested
}

pub fn divergence_moments(correctors: &CorrectorSet, op: &PressureCellOperator) -> DivergenceMoments {
    let ng = op.gel.len();
    let corrector_tested: Vec<Vec<f64>> = (0..N_MACRO).map(|j| op.coupling.mul_vec(correctors.field(j))).collect();
    let corrector = std::array::from_fn(|j| corrector_tested[j].iter().sum());

    let trace_tested = trace_tested(op);
    let q = op.pressure_schur();
    let s = op.alpha / CellMesh::VOLUME;
    let pressure_row = (0..ng).map(|j| s * (0..ng).map(|i| q[(i, j)]).sum::<f64>()).collect();
    DivergenceMoments { corrector, corrector_tested, trace_tested, pressure_row }
}

/// Everything the macroscopic models need from one cell.
pub struct CellData {
    pub mesh: CellMesh,
    pub correctors: CorrectorSet,
    pub tensor: HomogenizedTensor,
    pub op: PressureCellOperator,
    pub moments: DivergenceMoments,
    pub biot: BiotParams,
}

impl CellData {
    pub fn new(mesh: &CellMesh, tensor: &HookeTensor, biot: &BiotParams, tol: f64) -> Result<Self> {
        let op = PressureCellOperator::new(mesh, tensor, biot)?;
        let correctors = solve_correctors_with(&op.cell, tol)?;
        let hom = homogenized_from(&op.cell, &correctors);
        let moments = divergence_moments(&correctors, &op);
        Ok(Self { mesh: mesh.clone(), correctors, tensor: hom, op, moments, biot: biot.clone() })
    }

    pub fn gel_phase_volume(&self) -> f64 {
        self.mesh.phase_volume(Phase::Gel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_mesh, CellGeometry};
    use crate::material::{isotropic, lame, plane_stress};

    fn homogeneous(n: usize) -> (CellMesh, HookeTensor) {
        (build_cell_mesh(&CellGeometry::default(), n).unwrap(), HookeTensor::homogeneous(isotropic(1.0, 0.3).unwrap()))
    }

    #[test]
    fn homogeneous_membrane_corrector_is_poisson_contraction() {
        let (mesh, tensor) = homogeneous(3);
        let chi = solve_correctors(&mesh, &tensor).unwrap();
        let (lam, mu) = lame(1.0, 0.3);
        let slope = -lam / (lam + 2.0 * mu);
        for n in 0..mesh.grid.num_nodes() {
            let y = mesh.grid.node_coord(n);
            let u = &chi.membrane[0][3 * n..3 * n + 3];
            assert!(u[0].abs() < 1e-8 && u[1].abs() < 1e-8);
            assert!((u[2] - slope * y[2]).abs() < 1e-8, "{} vs {}", u[2], slope * y[2]);
        }
    }

    #[test]
    fn homogeneous_bending_corrector_is_odd() {
        let (mesh, tensor) = homogeneous(3);
        let chi = solve_correctors(&mesh, &tensor).unwrap();
        let g = &mesh.grid;
        for n in 0..g.num_nodes() {
            let [i, j, k] = g.node_ijk(n);
            let mirror = g.node_index(i, j, g.dims[2] - k);
            for j6 in 0..3 {
                let f = &chi.bending[j6];
                // in-plane components odd, transverse even (up to the mean shift)
                assert!((f[3 * n] + f[3 * mirror]).abs() < 1e-8);
                assert!((f[3 * n + 1] + f[3 * mirror + 1]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn homogeneous_coefficients_match_plane_stress() {
        let (mesh, tensor) = homogeneous(4);
        let chi = solve_correctors(&mesh, &tensor).unwrap();
        let hom = compute_homogenized(&mesh, &tensor, &chi).unwrap();
        let q = plane_stress(1.0, 0.3);
        assert!(hom.coupling().abs().max() < 1e-10);
        assert!((hom.membrane() - q).abs().max() < 1e-8 * q.abs().max());
        assert!((hom.bending() * 3.0 - hom.membrane()).abs().max() < 0.02 * q.abs().max());
        assert!(hom.asymmetry() < 1e-12);
    }

    #[test]
    fn corrected_energy_below_uncorrected() {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let tensor = HookeTensor::default();
        let cell = CellElasticity::new(&mesh, &tensor).unwrap();
        let chi = solve_correctors_with(&cell, 1e-10).unwrap();
        let zero = vec![0.0; 3 * mesh.grid.num_nodes()];
        let zeros: Vec<&[f64]> = (0..6).map(|_| &zero[..]).collect();
        let raw = cell.energy_matrix(&zeros);
        let hom = homogenized_from(&cell, &chi);
        for j in 0..6 {
            assert!(hom.block[(j, j)] < raw[(j, j)]);
        }
        // correctors average to zero
        let w = nodal_weights(&mesh.grid, |_| true);
        for j in 0..6 {
            for c in 0..3 {
                let mean: f64 = (0..mesh.grid.num_nodes()).map(|n| w[n] * chi.field(j)[3 * n + c]).sum();
                assert!(mean.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_and_product_forms_agree() {
        let mesh = build_cell_mesh(&CellGeometry::default(), 3).unwrap();
        let tensor = HookeTensor::default();
        let cell = CellElasticity::new(&mesh, &tensor).unwrap();
        let chi = solve_correctors_with(&cell, 1e-12).unwrap();
        let hom = homogenized_from(&cell, &chi);
        // (1/|Y|) ∫ A(E^J + eχ^J):E^K = (1/|Y|) (H0_JK + R_K·χ^J)
        let zero = vec![0.0; 3 * mesh.grid.num_nodes()];
        let zeros: Vec<&[f64]> = (0..6).map(|_| &zero[..]).collect();
        let raw = cell.energy_matrix(&zeros);
        for k in 0..6 {
            let load = cell.macro_load(k);
            for j in 0..6 {
                let v = raw[(j, k)] + crate::fem::sparse::dot(&load, chi.field(j)) / CellMesh::VOLUME;
                assert!((v - hom.block[(j, k)]).abs() < 1e-9, "{j}{k}: {v} vs {}", hom.block[(j, k)]);
            }
        }
    }

    #[test]
    fn bounds_bracket_two_phase_membrane() {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let tensor = HookeTensor::default();
        let chi = solve_correctors(&mesh, &tensor).unwrap();
        let hom = compute_homogenized(&mesh, &tensor, &chi).unwrap();
        let (upper, lower) = membrane_bounds(&mesh, &tensor);
        let a = hom.membrane();
        assert!((upper - a).symmetric_eigenvalues().min() > -1e-10);
        assert!((a - lower).symmetric_eigenvalues().min() > -1e-10);
        assert!(hom.min_eigenvalue() > 1e-10);
    }

    #[test]
    fn pressure_corrector_linearity_and_zero() {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let op = PressureCellOperator::new(&mesh, &HookeTensor::default(), &BiotParams::default()).unwrap();
        let zero = solve_pressure_corrector(&op, &vec![0.0; op.num_gel_dofs()]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let p: Vec<f64> = (0..op.num_gel_dofs()).map(|i| (i as f64 * 0.7).sin()).collect();
        let p2: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
        let u = solve_pressure_corrector(&op, &p).unwrap();
        let u2 = solve_pressure_corrector(&op, &p2).unwrap();
        for i in 0..u.len() {
            assert!((u2[i] - 2.0 * u[i]).abs() < 1e-12 * (1.0 + u[i].abs()));
        }
        assert!(solve_pressure_corrector(&op, &[1.0]).is_err());
    }

    #[test]
    fn pressure_corrector_matches_dense_oracle() {
        // 4×4×8 cell mesh, constant gel pressure
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let tensor = HookeTensor::homogeneous(isotropic(5.0, 0.2).unwrap());
        let biot = BiotParams { alpha: 0.8, ..Default::default() };
        let op = PressureCellOperator::new(&mesh, &tensor, &biot).unwrap();
        let p = vec![1.0; op.num_gel_dofs()];
        let u = solve_pressure_corrector(&op, &p).unwrap();
        let energy = op.cell.energy(&u);
        // dense oracle: minimize ½xᵀKx − bᵀx over the reduced space
        let k = op.cell.reduced.to_dense();
        let b = op.coupling_reduced.transpose().to_dense() * nalgebra::DVector::from_element(p.len(), biot.alpha / 2.0);
        let x = k.clone().cholesky().unwrap().solve(&b);
        let dense_energy = (x.transpose() * &k * &x)[(0, 0)];
        assert!((energy - dense_energy).abs() < 1e-10 * dense_energy.abs());
        // and through the cached Schur matrix: energy = (α/|Y|)² pᵀ Q p
        let q = op.pressure_schur();
        let pv = nalgebra::DVector::from_column_slice(&p);
        let via_q = (biot.alpha / 2.0).powi(2) * (pv.transpose() * q * &pv)[(0, 0)];
        assert!((energy - via_q).abs() < 1e-10 * energy.abs());
    }

    #[test]
    fn moments_match_facet_flux_and_vanish_for_bending() {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let tensor = HookeTensor::homogeneous(isotropic(1.0, 0.3).unwrap());
        let data = CellData::new(&mesh, &tensor, &BiotParams::default(), 1e-11).unwrap();
        let facets = crate::geometry::region_boundary(&mesh.grid, |e| mesh.phases[e] == Phase::Gel);
        for j in 0..3 {
            let chi = data.correctors.field(j);
            let mut flux = 0.0;
            for f in &facets {
                for &n in &f.nodes {
                    for d in 0..3 {
                        flux += 0.25 * f.area * f.normal[d] * chi[3 * n + d];
                    }
                }
            }
            assert!((flux - data.moments.corrector[j]).abs() < 1e-10);
            assert!(data.moments.corrector[j].is_finite());
        }
        for j in 3..6 {
            assert!(data.moments.corrector[j].abs() < 1e-9);
        }
        let zero = CorrectorSet::zeros(mesh.grid.num_nodes());
        let m0 = divergence_moments(&zero, &data.op);
        assert!(m0.corrector.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn corrector_is_energy_minimizer() {
        use rand::{Rng, SeedableRng};
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let tensor = HookeTensor::default();
        let cell = CellElasticity::new(&mesh, &tensor).unwrap();
        let chi = solve_correctors_with(&cell, 1e-12).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for j in 0..6 {
            let base = single_energy(&cell, j, chi.field(j));
            for _ in 0..3 {
                let dx: Vec<f64> = (0..cell.map.n_free()).map(|_| rng.random_range(-1e-2..1e-2)).collect();
                let d = cell.map.expand(&dx);
                let perturbed: Vec<f64> = chi.field(j).iter().zip(&d).map(|(a, b)| a + b).collect();
                // energy of E^J + e(χ + δ) with the same macro strain index
                let e = single_energy(&cell, j, &perturbed);
                assert!(e > base - 1e-14, "{e} < {base}");
            }
        }
    }

    fn single_energy(cell: &CellElasticity, j: usize, field: &[f64]) -> f64 {
        let zero = vec![0.0; field.len()];
        let fields: Vec<&[f64]> = (0..6).map(|k| if k == j { field } else { &zero[..] }).collect();
        cell.energy_matrix(&fields)[(j, j)]
    }
}
