//! Discrete unfolding of micro fields onto `ω × 𝒴`.
//!
//! On matched grids the micro mesh restricted to cell `k` is an ε-scaled copy
//! of the cell grid, so `(Πψ)(k, y) = ε^{−s} ψ(εk + εy)` is a nodal copy.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::hex::{shape, HexElement};
use crate::fem::quadrature::gauss_cube;
use crate::geometry::{CellMesh, HexGrid, MicroMesh};

/// Micro field sampled on every cell of the tiling.
#[derive(Clone, Debug)]
pub struct UnfoldedField {
    pub eps: f64,
    /// Exponent `s` of the applied scaling `ε^{−s}`.
    pub exponent: f64,
    pub components: usize,
    pub num_cells: usize,
    pub cell_nodes: usize,
    /// Layout `[cell][cell node][component]`.
    pub values: Vec<f64>,
}

impl UnfoldedField {
    pub fn cell(&self, k: usize) -> &[f64] {
        let stride = self.cell_nodes * self.components;
        &self.values[k * stride..(k + 1) * stride]
    }

    pub fn at(&self, k: usize, node: usize) -> &[f64] {
        let base = (k * self.cell_nodes + node) * self.components;
        &self.values[base..base + self.components]
    }

    /// `‖Πψ‖²` over `ω × 𝒴`, each cell carrying in-plane measure `ε²`.
    pub fn l2_sq(&self, cell_grid: &HexGrid) -> f64 {
        let mass = HexElement::new(cell_grid.h).mass();
        let per_cell: Vec<f64> =
            (0..self.num_cells).into_par_iter().map(|k| grid_l2_sq(cell_grid, &mass, self.cell(k), self.components)).collect();
        let per_cell: f64 = per_cell.iter().sum();
        self.eps * self.eps * per_cell
    }
}

fn check_tiling(micro: &MicroMesh, cell_grid: &HexGrid) -> Result<()> {
    let n = micro.n;
    if cell_grid.dims != [n, n, 2 * n] {
        return Err(Error::Mismatch(format!(
            "cell grid {:?} does not match micro subdivision {n}",
            cell_grid.dims
        )));
    }
    Ok(())
}

/// Unfold a nodal field with `components` entries per micro node.
pub fn unfold(field: &[f64], components: usize, micro: &MicroMesh, cell: &CellMesh, exponent: f64) -> Result<UnfoldedField> {
    unfold_on(field, components, micro, &cell.grid, exponent)
}

/// [`unfold`] against a bare cell grid.
pub fn unfold_on(
    field: &[f64],
    components: usize,
    micro: &MicroMesh,
    cell_grid: &HexGrid,
    exponent: f64,
) -> Result<UnfoldedField> {
    check_tiling(micro, cell_grid)?;
    if field.len() != components * micro.grid.num_nodes() {
        return Err(Error::Mismatch(format!(
            "field has {} entries, expected {} × {}",
            field.len(),
            components,
            micro.grid.num_nodes()
        )));
    }
    let scale = micro.eps.powf(-exponent);
    let cell_nodes = cell_grid.num_nodes();
    let num_cells = micro.num_cells();
    let mut values = vec![0.0; num_cells * cell_nodes * components];
    values.par_chunks_mut(cell_nodes * components).enumerate().for_each(|(k, out)| {
        for node in 0..cell_nodes {
            let [i, j, kz] = cell_grid.node_ijk(node);
            let src = micro.cell_node(k, i, j, kz);
            for c in 0..components {
                out[node * components + c] = scale * field[src * components + c];
            }
        }
    });
    Ok(UnfoldedField { eps: micro.eps, exponent, components, num_cells, cell_nodes, values })
}

/// Unfold a per-element field; layout `[cell][cell element]`.
pub fn unfold_elements<T: Copy>(values: &[T], micro: &MicroMesh, cell_grid: &HexGrid) -> Result<Vec<T>> {
    check_tiling(micro, cell_grid)?;
    if values.len() != micro.grid.num_elements() {
        return Err(Error::Mismatch("element field length differs from the micro mesh".into()));
    }
    let ne = cell_grid.num_elements();
    Ok((0..micro.num_cells() * ne)
        .map(|idx| {
            let (k, e) = (idx / ne, idx % ne);
            let [i, j, kz] = cell_grid.element_ijk(e);
            values[micro.cell_element(k, i, j, kz)]
        })
        .collect())
}

fn grid_l2_sq(grid: &HexGrid, mass: &[f64], field: &[f64], components: usize) -> f64 {
    let mut total = 0.0;
    for e in 0..grid.num_elements() {
        let nodes = grid.element_nodes(e);
        for c in 0..components {
            for a in 0..8 {
                let va = field[nodes[a] * components + c];
                for b in 0..8 {
                    total += va * mass[8 * a + b] * field[nodes[b] * components + c];
                }
            }
        }
    }
    total
}

/// `‖ψ‖²` over the micro domain.
pub fn micro_l2_sq(field: &[f64], components: usize, micro: &MicroMesh) -> f64 {
    let mass = HexElement::new(micro.grid.h).mass();
    grid_l2_sq(&micro.grid, &mass, field, components)
}

/// Largest deviation from `∇_y Πψ = ε Π(∇ψ)` over all cells, cell elements
/// and Gauss points, relative to the largest unfolded gradient.
pub fn gradient_identity_error(field: &[f64], unfolded: &UnfoldedField, micro: &MicroMesh, cell_grid: &HexGrid) -> Result<f64> {
    check_tiling(micro, cell_grid)?;
    let comps = unfolded.components;
    let scale = micro.eps.powf(-unfolded.exponent);
    let points: Vec<[f64; 3]> = gauss_cube(2).into_iter().map(|(s, _)| s).collect();
    let (dev, size) = (0..unfolded.num_cells)
        .into_par_iter()
        .map(|k| {
            let local = unfolded.cell(k);
            let mut dev = 0.0f64;
            let mut size = 0.0f64;
            for e in 0..cell_grid.num_elements() {
                let [i, j, kz] = cell_grid.element_ijk(e);
                let cell_nodes = cell_grid.element_nodes(e);
                let micro_nodes = micro.grid.element_nodes(micro.cell_element(k, i, j, kz));
                for s in &points {
                    let (_, dy) = shape(cell_grid.h, *s);
                    let (_, dx) = shape(micro.grid.h, *s);
                    for c in 0..comps {
                        for d in 0..3 {
                            let gy: f64 = (0..8).map(|a| dy[a][d] * local[cell_nodes[a] * comps + c]).sum();
                            let gx: f64 = (0..8).map(|a| dx[a][d] * field[micro_nodes[a] * comps + c]).sum();
                            dev = dev.max((gy - micro.eps * scale * gx).abs());
                            size = size.max(gy.abs());
                        }
                    }
                }
            }
            (dev, size)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(dev / size.max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cell_mesh, build_micro_mesh, CellGeometry, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meshes(eps: f64, n: usize) -> (MicroMesh, CellMesh) {
        let geom = CellGeometry::default();
        (build_micro_mesh(&geom, eps, &Rect::unit(), n).unwrap(), build_cell_mesh(&geom, n).unwrap())
    }

    #[test]
    fn affine_field_unfolds_to_cell_offset() {
        let (micro, cell) = meshes(0.25, 4);
        let x1: Vec<f64> = (0..micro.grid.num_nodes()).map(|a| micro.grid.node_coord(a)[0]).collect();
        let u = unfold(&x1, 1, &micro, &cell, 0.0).unwrap();
        for k in 0..micro.num_cells() {
            let o = micro.cell_origin(k);
            for node in 0..cell.grid.num_nodes() {
                let y = cell.grid.node_coord(node);
                assert!((u.at(k, node)[0] - (o[0] + 0.25 * y[0])).abs() < 1e-14);
            }
        }
        let ones = vec![3.0; micro.grid.num_nodes()];
        assert!(unfold(&ones, 1, &micro, &cell, 0.0).unwrap().values.iter().all(|&v| v == 3.0));
    }

    #[test]
    fn phase_labels_unfold_to_cell_labels() {
        let (micro, cell) = meshes(0.25, 4);
        let labels = unfold_elements(&micro.phases, &micro, &cell.grid).unwrap();
        for chunk in labels.chunks(cell.grid.num_elements()) {
            assert_eq!(chunk, &cell.phases[..]);
        }
    }

    #[test]
    fn random_fields_satisfy_identities() {
        let (micro, cell) = meshes(0.25, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in [0.0, 1.0] {
            let psi: Vec<f64> = (0..3 * micro.grid.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u = unfold(&psi, 3, &micro, &cell, s).unwrap();
            assert!(gradient_identity_error(&psi, &u, &micro, &cell.grid).unwrap() < 1e-12);
            let lhs = u.l2_sq(&cell.grid);
            let rhs = micro.eps.powf(-2.0 * s) / micro.eps * micro_l2_sq(&psi, 3, &micro);
            assert!((lhs - rhs).abs() < 1e-12 * rhs, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let (micro, _) = meshes(0.25, 4);
        let other = build_cell_mesh(&CellGeometry::default(), 6).unwrap();
        let psi = vec![0.0; micro.grid.num_nodes()];
        assert!(matches!(unfold(&psi, 1, &micro, &other, 0.0), Err(Error::Mismatch(_))));
    }
}
