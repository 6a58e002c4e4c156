//! Global assembly on structured hexahedral meshes.
//!
//! All elements of a grid are congruent boxes, so element matrices are computed
//! once per phase and scattered.

use nalgebra::Matrix3;

use super::hex::HexElement;
use super::sparse::{CsrMatrix, PatternBuilder};
use crate::error::{Error, Result};
use crate::geometry::{DofSubset, HexGrid, HexMesh, Phase, NO_DOF};
use crate::material::{HookeTensor, Voigt};

fn vector_dofs(nodes: &[usize; 8]) -> [usize; 24] {
    let mut d = [0; 24];
    for (a, &n) in nodes.iter().enumerate() {
        for c in 0..3 {
            d[3 * a + c] = 3 * n + c;
        }
    }
    d
}

/// Assemble a 3-component operator from per-element 24×24 matrices.
pub fn assemble_vector_operator<'a>(grid: &HexGrid, element_matrix: impl Fn(usize) -> Option<&'a [f64]>) -> CsrMatrix {
    let nn = grid.num_nodes();
    let mut pattern = PatternBuilder::new(nn, 3, nn, 3);
    for e in 0..grid.num_elements() {
        if element_matrix(e).is_some() {
            let nodes = grid.element_nodes(e);
            pattern.add(&nodes, &nodes);
        }
    }
    let mut k = pattern.build();
    for e in 0..grid.num_elements() {
        if let Some(ke) = element_matrix(e) {
            let dofs = vector_dofs(&grid.element_nodes(e));
            k.add_block(&dofs, &dofs, ke);
        }
    }
    k
}

/// Elastic stiffness `∫ A e(u):e(v)` over the whole mesh.
pub fn assemble_elastic_stiffness<M: HexMesh + ?Sized>(mesh: &M, tensor: &HookeTensor) -> Result<CsrMatrix> {
    tensor.check_coercive().map_err(|e| Error::Assembly(format!("refusing to assemble: {e}")))?;
    let el = HexElement::new(mesh.grid().h);
    let kf = el.stiffness(&tensor.fiber);
    let kg = el.stiffness(&tensor.gel);
    Ok(assemble_vector_operator(mesh.grid(), |e| match mesh.phase(e) {
        Phase::Fiber => Some(&kf[..]),
        Phase::Gel => Some(&kg[..]),
    }))
}

/// Stiffness of a single tensor restricted to elements with `keep(e)`.
pub fn assemble_stiffness_on(grid: &HexGrid, c: &Voigt, keep: impl Fn(usize) -> bool) -> CsrMatrix {
    let ke = HexElement::new(grid.h).stiffness(c);
    assemble_vector_operator(grid, |e| keep(e).then_some(&ke[..]))
}

/// Tensor whose energy is `|e(u)|²_F`.
pub fn frobenius_tensor() -> Voigt {
    Voigt::from_diagonal(&nalgebra::Vector6::new(1.0, 1.0, 1.0, 0.5, 0.5, 0.5))
}

/// Gram matrix of `∫ |e(u)|²_F` over the grid.
pub fn assemble_strain_gram(grid: &HexGrid) -> CsrMatrix {
    assemble_stiffness_on(grid, &frobenius_tensor(), |_| true)
}

/// Gram matrix of `∫ |∇u|²` over the grid.
pub fn assemble_gradient_gram(grid: &HexGrid) -> CsrMatrix {
    let ke = HexElement::new(grid.h).gradient_gram();
    assemble_vector_operator(grid, |_| Some(&ke[..]))
}

fn check_subset(grid: &HexGrid, dofs: &DofSubset) -> Result<()> {
    if dofs.node_to_dof.len() != grid.num_nodes() {
        return Err(Error::Assembly(format!(
            "dof map covers {} nodes but the mesh has {}",
            dofs.node_to_dof.len(),
            grid.num_nodes()
        )));
    }
    for &e in &dofs.elements {
        if e >= grid.num_elements() {
            return Err(Error::Assembly(format!("dof map element {e} outside mesh")));
        }
        if grid.element_nodes(e).iter().any(|&n| dofs.node_to_dof[n] == NO_DOF) {
            return Err(Error::Assembly(format!("element {e} has nodes without a dof")));
        }
    }
    Ok(())
}

fn scalar_dofs(grid: &HexGrid, dofs: &DofSubset, e: usize) -> [usize; 8] {
    grid.element_nodes(e).map(|n| dofs.node_to_dof[n])
}

/// Coupling `C_ij = ∫ ψ_i ∇·φ_j` over the subset elements (rows: scalar dofs).
pub fn assemble_divergence_coupling<M: HexMesh + ?Sized>(mesh: &M, dofs: &DofSubset) -> Result<CsrMatrix> {
    let grid = mesh.grid();
    check_subset(grid, dofs)?;
    let ce = HexElement::new(grid.h).divergence();
    let mut pattern = PatternBuilder::new(dofs.len(), 1, grid.num_nodes(), 3);
    for &e in &dofs.elements {
        pattern.add(&scalar_dofs(grid, dofs, e), &grid.element_nodes(e));
    }
    let mut c = pattern.build();
    for &e in &dofs.elements {
        c.add_block(&scalar_dofs(grid, dofs, e), &vector_dofs(&grid.element_nodes(e)), &ce);
    }
    Ok(c)
}

fn assemble_scalar(grid: &HexGrid, dofs: &DofSubset, ke: &[f64]) -> CsrMatrix {
    let mut pattern = PatternBuilder::new(dofs.len(), 1, dofs.len(), 1);
    for &e in &dofs.elements {
        let d = scalar_dofs(grid, dofs, e);
        pattern.add(&d, &d);
    }
    let mut m = pattern.build();
    for &e in &dofs.elements {
        let d = scalar_dofs(grid, dofs, e);
        m.add_block(&d, &d, ke);
    }
    m
}

/// Scalar mass `∫ ψ_i ψ_j` over the subset elements.
pub fn assemble_scalar_mass<M: HexMesh + ?Sized>(mesh: &M, dofs: &DofSubset) -> Result<CsrMatrix> {
    check_subset(mesh.grid(), dofs)?;
    Ok(assemble_scalar(mesh.grid(), dofs, &HexElement::new(mesh.grid().h).mass()))
}

/// Scalar diffusion `∫ ∇ψ_i · K ∇ψ_j` over the subset elements.
pub fn assemble_scalar_diffusion<M: HexMesh + ?Sized>(mesh: &M, dofs: &DofSubset, k: &Matrix3<f64>) -> Result<CsrMatrix> {
    check_subset(mesh.grid(), dofs)?;
    if (k - k.transpose()).abs().max() > 1e-12 * k.abs().max() || k.cholesky().is_none() {
        return Err(Error::Assembly("diffusion coefficient is not symmetric positive definite".into()));
    }
    Ok(assemble_scalar(mesh.grid(), dofs, &HexElement::new(mesh.grid().h).diffusion(k)))
}

/// `∫ f·φ_j` with `f` evaluated at quadrature points, over elements with `keep(e)`.
pub fn assemble_vector_load(grid: &HexGrid, keep: impl Fn(usize) -> bool, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
    let el = HexElement::new(grid.h);
    let mut out = vec![0.0; 3 * grid.num_nodes()];
    for e in 0..grid.num_elements() {
        if !keep(e) {
            continue;
        }
        let o = grid.element_origin(e);
        let nodes = grid.element_nodes(e);
        for p in &el.points {
            let v = f([o[0] + p.offset[0], o[1] + p.offset[1], o[2] + p.offset[2]]);
            for a in 0..8 {
                for c in 0..3 {
                    out[3 * nodes[a] + c] += p.weight * p.n[a] * v[c];
                }
            }
        }
    }
    out
}

/// `∫ h ψ_i` over the subset elements.
pub fn assemble_scalar_load(grid: &HexGrid, dofs: &DofSubset, h: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    let el = HexElement::new(grid.h);
    let mut out = vec![0.0; dofs.len()];
    for &e in &dofs.elements {
        let o = grid.element_origin(e);
        let d = scalar_dofs(grid, dofs, e);
        for p in &el.points {
            let v = h([o[0] + p.offset[0], o[1] + p.offset[1], o[2] + p.offset[2]]);
            for a in 0..8 {
                out[d[a]] += p.weight * p.n[a] * v;
            }
        }
    }
    out
}

/// `∫ φ_i` per node, i.e. the lumped weights of the nodal basis.
pub fn nodal_weights(grid: &HexGrid, keep: impl Fn(usize) -> bool) -> Vec<f64> {
    let w = grid.element_volume() / 8.0;
    let mut out = vec![0.0; grid.num_nodes()];
    for e in 0..grid.num_elements() {
        if keep(e) {
            for n in grid.element_nodes(e) {
                out[n] += w;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_mesh, region_boundary, CellGeometry};
    use crate::material::isotropic;

    struct Box {
        grid: HexGrid,
        phases: Vec<Phase>,
    }

    impl HexMesh for Box {
        fn grid(&self) -> &HexGrid {
            &self.grid
        }
        fn phase(&self, e: usize) -> Phase {
            self.phases[e]
        }
    }

    fn unit_box(n: usize, phase: Phase) -> Box {
        let h = 1.0 / n as f64;
        let grid = HexGrid { origin: [0.0; 3], h: [h; 3], dims: [n; 3] };
        let phases = vec![phase; grid.num_elements()];
        Box { grid, phases }
    }

    fn nodal(grid: &HexGrid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
        (0..grid.num_nodes()).flat_map(|n| f(grid.node_coord(n))).collect()
    }

    #[test]
    fn single_hex_translation_kernel() {
        let mesh = unit_box(1, Phase::Fiber);
        let k = assemble_elastic_stiffness(&mesh, &HookeTensor::homogeneous(isotropic(1.0, 0.0).unwrap())).unwrap();
        for d in 0..3 {
            let t = nodal(&mesh.grid, |_| {
                let mut v = [0.0; 3];
                v[d] = 1.0;
                v
            });
            assert!(k.mul_vec(&t).iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn rigid_rotation_in_kernel() {
        let mesh = unit_box(2, Phase::Fiber);
        let k = assemble_elastic_stiffness(&mesh, &HookeTensor::default()).unwrap();
        let r = nodal(&mesh.grid, |x| [-x[1], x[0], 0.0]);
        assert!(k.mul_vec(&r).iter().all(|v| v.abs() < 1e-10));
        assert!(k.is_symmetric(1e-12));
    }

    #[test]
    fn non_coercive_tensor_refused() {
        let mesh = unit_box(1, Phase::Fiber);
        assert!(assemble_elastic_stiffness(&mesh, &HookeTensor::homogeneous(Voigt::zeros())).is_err());
    }

    #[test]
    fn uniaxial_patch_test() {
        // u = (x/E, -ν x... ) exact solution under uniform traction: interior residual vanishes
        let (e, nu) = (2.0, 0.25);
        let mesh = unit_box(2, Phase::Fiber);
        let k = assemble_elastic_stiffness(&mesh, &HookeTensor::homogeneous(isotropic(e, nu).unwrap())).unwrap();
        let u = nodal(&mesh.grid, |x| [x[0] / e, -nu * x[1] / e, -nu * x[2] / e]);
        let r = k.mul_vec(&u);
        // the interior node carries no load
        let centre = mesh.grid.node_index(1, 1, 1);
        for c in 0..3 {
            assert!(r[3 * centre + c].abs() < 1e-13);
        }
        // boundary loads equal the consistent traction σ11 = 1 on x = 1
        let mut total = [0.0; 2];
        for n in 0..mesh.grid.num_nodes() {
            let [i, _, _] = mesh.grid.node_ijk(n);
            if i == 2 {
                total[1] += r[3 * n];
            }
            if i == 0 {
                total[0] += r[3 * n];
            }
        }
        assert!((total[1] - 1.0).abs() < 1e-13);
        assert!((total[0] + 1.0).abs() < 1e-13);
    }

    #[test]
    fn divergence_coupling_identities() {
        let mesh = unit_box(2, Phase::Gel);
        let dofs = DofSubset::gel(&mesh);
        let c = assemble_divergence_coupling(&mesh, &dofs).unwrap();
        let ones = vec![1.0; dofs.len()];
        let v = nodal(&mesh.grid, |x| x);
        let total: f64 = c.mul_vec(&v).iter().zip(&ones).map(|(a, b)| a * b).sum();
        assert!((total - 3.0).abs() < 1e-13);
        let t = nodal(&mesh.grid, |_| [1.0, -2.0, 0.5]);
        assert!(c.mul_vec(&t).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn divergence_matches_boundary_flux_on_cell() {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let dofs = DofSubset::gel(&mesh);
        let c = assemble_divergence_coupling(&mesh, &dofs).unwrap();
        // smooth non-polynomial field sampled at nodes
        let v = nodal(&mesh.grid, |x| [x[0].sin() * x[2], x[1] * x[1] + x[0], (x[2] + x[0]).cos()]);
        let lhs: f64 = c.mul_vec(&v).iter().sum();
        let facets = region_boundary(&mesh.grid, |e| mesh.phases[e] == Phase::Gel);
        let mut rhs = 0.0;
        for f in &facets {
            // trilinear field is bilinear on a facet: corner average is exact
            let mut avg = [0.0; 3];
            for &n in &f.nodes {
                for d in 0..3 {
                    avg[d] += 0.25 * v[3 * n + d];
                }
            }
            rhs += f.area * (0..3).map(|d| avg[d] * f.normal[d]).sum::<f64>();
        }
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn scalar_mass_and_diffusion() {
        let mesh = unit_box(2, Phase::Gel);
        let dofs = DofSubset::gel(&mesh);
        let m = assemble_scalar_mass(&mesh, &dofs).unwrap();
        assert!((m.values.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let p: Vec<f64> = dofs.dof_to_node.iter().map(|&n| mesh.grid.node_coord(n)[0]).collect();
        let d = assemble_scalar_diffusion(&mesh, &dofs, &Matrix3::identity()).unwrap();
        let energy: f64 = d.mul_vec(&p).iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((energy - 1.0).abs() < 1e-13);
        let ones = vec![1.0; dofs.len()];
        assert!(d.mul_vec(&ones).iter().all(|v| v.abs() < 1e-13));
        let k = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 2.0, 4.0));
        let d = assemble_scalar_diffusion(&mesh, &dofs, &k).unwrap();
        let p: Vec<f64> = dofs.dof_to_node.iter().map(|&n| mesh.grid.node_coord(n).iter().sum()).collect();
        let energy: f64 = d.mul_vec(&p).iter().zip(&p).map(|(a, b)| a * b).sum();
        assert!((energy - 7.0).abs() < 1e-12);
        let bad = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -1.0, 1.0));
        assert!(assemble_scalar_diffusion(&mesh, &dofs, &bad).is_err());
    }

    #[test]
    fn mismatched_subset_is_rejected() {
        let mesh = unit_box(2, Phase::Gel);
        let other = unit_box(1, Phase::Gel);
        let dofs = DofSubset::gel(&other);
        assert!(assemble_divergence_coupling(&mesh, &dofs).is_err());
    }

    #[test]
    fn strain_gram_measures_frobenius_norm() {
        let mesh = unit_box(2, Phase::Fiber);
        let g = assemble_strain_gram(&mesh.grid);
        // u = (x2, 0, 0): e12 = 1/2, |e|_F^2 = 1/2
        let u = nodal(&mesh.grid, |x| [x[1], 0.0, 0.0]);
        let q: f64 = g.mul_vec(&u).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((q - 0.5).abs() < 1e-13);
        let gg = assemble_gradient_gram(&mesh.grid);
        let q: f64 = gg.mul_vec(&u).iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((q - 1.0).abs() < 1e-13);
        let w = nodal_weights(&mesh.grid, |_| true);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}
