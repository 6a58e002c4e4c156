//! Mid-surface discretization: bilinear `W₁, W₂` and C1 `W₃`.
//!
//! Each plate node carries six dofs `[W₁, W₂, W₃, ∂₁W₃, ∂₂W₃, ∂₁₂W₃]`.

use crate::error::Result;
use crate::fem::plate::{bfs, bilinear};
use crate::fem::quadrature::gauss_square;
use crate::fem::{ConstraintSet, DofMap};
use crate::geometry::PlateMesh;

pub const PLATE_DOFS: usize = 6;

/// Local data of one element at one point.
#[derive(Clone, Debug)]
pub struct PlatePoint {
    pub element: usize,
    pub x: [f64; 2],
    /// Quadrature weight including the element area (zero for evaluation points).
    pub weight: f64,
    /// Global dofs of the 24 element dofs.
    pub dofs: [usize; 24],
    pub nodes: [usize; 4],
    /// Bilinear values at the element corners.
    pub nodal: [f64; 4],
    /// Rows `(e11, e22, 2e12, κ11, κ22, 2κ12)` with `κ = −∇²W₃`.
    pub strain: [[f64; 24]; 6],
    /// Rows `(W₁, W₂, W₃, ∂₁W₃, ∂₂W₃)`.
    pub value: [[f64; 24]; 5],
}

impl PlatePoint {
    pub fn strain_of(&self, w: &[f64]) -> [f64; 6] {
        std::array::from_fn(|j| (0..24).map(|d| self.strain[j][d] * w[self.dofs[d]]).sum())
    }

    pub fn value_of(&self, w: &[f64]) -> [f64; 5] {
        std::array::from_fn(|j| (0..24).map(|d| self.value[j][d] * w[self.dofs[d]]).sum())
    }

    /// Bilinear interpolation of a per-node block field (`block` entries per node).
    pub fn interpolate_block(&self, field: &[f64], block: usize) -> Vec<f64> {
        let mut out = vec![0.0; block];
        for (a, &node) in self.nodes.iter().enumerate() {
            let src = &field[block * node..block * (node + 1)];
            for i in 0..block {
                out[i] += self.nodal[a] * src[i];
            }
        }
        out
    }
}

pub fn plate_point(mesh: &PlateMesh, element: usize, s: [f64; 2], weight: f64) -> PlatePoint {
    let nodes = mesh.elements[element];
    let o = mesh.element_origin(element);
    let (nb, db) = bilinear(mesh.h, s);
    let c1 = bfs(mesh.h, s);
    let mut dofs = [0usize; 24];
    for a in 0..4 {
        for k in 0..PLATE_DOFS {
            dofs[PLATE_DOFS * a + k] = PLATE_DOFS * nodes[a] + k;
        }
    }
    let mut strain = [[0.0; 24]; 6];
    let mut value = [[0.0; 24]; 5];
    for a in 0..4 {
        let base = PLATE_DOFS * a;
        strain[0][base] = db[a][0];
        strain[1][base + 1] = db[a][1];
        strain[2][base] = db[a][1];
        strain[2][base + 1] = db[a][0];
        value[0][base] = nb[a];
        value[1][base + 1] = nb[a];
        for k in 0..4 {
            let i = 4 * a + k;
            let d = base + 2 + k;
            strain[3][d] = -c1.dxx[i];
            strain[4][d] = -c1.dyy[i];
            strain[5][d] = -2.0 * c1.dxy[i];
            value[2][d] = c1.n[i];
            value[3][d] = c1.dx[i];
            value[4][d] = c1.dy[i];
        }
    }
    PlatePoint {
        element,
        x: [o[0] + s[0] * mesh.h[0], o[1] + s[1] * mesh.h[1]],
        weight,
        dofs,
        nodes,
        nodal: nb,
        strain,
        value,
    }
}

/// 3×3 Gauss points of every element.
pub fn plate_quadrature(mesh: &PlateMesh) -> Vec<PlatePoint> {
    let rule = gauss_square(3);
    let area = mesh.h[0] * mesh.h[1];
    (0..mesh.elements.len())
        .flat_map(|e| rule.iter().map(move |&(s, w)| (e, s, w * area)))
        .map(|(e, s, w)| plate_point(mesh, e, s, w))
        .collect()
}

/// Evaluation point at physical `x` (weight zero).
pub fn plate_point_at(mesh: &PlateMesh, x: [f64; 2]) -> PlatePoint {
    let (e, s) = mesh.locate(x);
    plate_point(mesh, e, s, 0.0)
}

/// Clamped space: every dof of every boundary node is fixed to zero.
pub fn clamped_map(mesh: &PlateMesh) -> Result<DofMap> {
    let fixed = mesh.boundary_nodes.iter().flat_map(|&n| (0..PLATE_DOFS).map(move |k| PLATE_DOFS * n + k));
    DofMap::new(PLATE_DOFS * mesh.num_nodes(), &ConstraintSet::clamp(fixed))
}

/// Bilinear mass matrix on the plate nodes, as triplets.
pub fn nodal_mass_triplets(quad: &[PlatePoint]) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(16 * quad.len());
    for q in quad {
        for a in 0..4 {
            for b in 0..4 {
                t.push((q.nodes[a], q.nodes[b], q.weight * q.nodal[a] * q.nodal[b]));
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_plate_mesh, Rect};

    #[test]
    fn quadrature_integrates_area_and_strain_of_quadratic() {
        let mesh = build_plate_mesh(&Rect::unit(), 3).unwrap();
        let quad = plate_quadrature(&mesh);
        let area: f64 = quad.iter().map(|q| q.weight).sum();
        assert!((area - 1.0).abs() < 1e-14);
        // W₃ = x² y → dofs (w, wx, wy, wxy) = (x²y, 2xy, x², 2x)
        let mut w = vec![0.0; PLATE_DOFS * mesh.num_nodes()];
        for (n, x) in mesh.nodes.iter().enumerate() {
            w[PLATE_DOFS * n] = 0.5 * x[0] + x[1];
            w[PLATE_DOFS * n + 2] = x[0] * x[0] * x[1];
            w[PLATE_DOFS * n + 3] = 2.0 * x[0] * x[1];
            w[PLATE_DOFS * n + 4] = x[0] * x[0];
            w[PLATE_DOFS * n + 5] = 2.0 * x[0];
        }
        for q in &quad {
            let s = q.strain_of(&w);
            let [x, y] = q.x;
            assert!((s[0] - 0.5).abs() < 1e-12);
            assert!((s[2] - 1.0).abs() < 1e-12);
            assert!((s[3] + 2.0 * y).abs() < 1e-11);
            assert!(s[4].abs() < 1e-11);
            assert!((s[5] + 4.0 * x).abs() < 1e-11);
            let v = q.value_of(&w);
            assert!((v[2] - x * x * y).abs() < 1e-12);
        }
    }

    #[test]
    fn clamping_fixes_boundary_nodes() {
        let mesh = build_plate_mesh(&Rect::unit(), 4).unwrap();
        let map = clamped_map(&mesh).unwrap();
        assert_eq!(map.n_free(), PLATE_DOFS * 9);
    }
}
