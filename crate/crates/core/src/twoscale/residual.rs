//! Distance between an unfolded micro solution and its Kirchhoff–Love limit.

use rayon::prelude::*;

use crate::cell::{macro_strain, CellData};
use crate::error::{Error, Result};
use crate::fem::hex::{self, frobenius_sq, HexElement};
use crate::geometry::{MicroMesh, Phase, NO_DOF};

use super::macro_model::{MacroState, MacroSystem, WarpingMap};
use super::space::plate_point_at;
use super::unfold::unfold;

/// Discrete `L²(ω × 𝒴)` errors, with the norms of the limit fields alongside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KirchhoffLoveResidual {
    pub eps: f64,
    /// `‖(1/ε) ΠU_α − (W_α − y₃ ∂_αW₃)‖`
    pub in_plane: f64,
    /// `‖ΠU₃ − W₃‖`
    pub deflection: f64,
    /// `‖(1/ε) Π e(U) − (E(𝒲) + e_y(ū))‖`
    pub strain: f64,
    /// `‖(1/ε) Πp − p₀‖`
    pub pressure: f64,
    pub limit_norms: [f64; 4],
}

impl KirchhoffLoveResidual {
    pub fn errors(&self) -> [f64; 4] {
        [self.in_plane, self.deflection, self.strain, self.pressure]
    }
}

/// Cell strains `e_y` of nodal fields at every (cell element, Gauss point).
fn strain_table(cell: &CellData, fields: &[&[f64]], el: &HexElement) -> Vec<[f64; 6]> {
    let grid = &cell.mesh.grid;
    let nq = el.points.len();
    let mut out = vec![[0.0; 6]; grid.num_elements() * nq * fields.len()];
    for e in 0..grid.num_elements() {
        let nodes = grid.element_nodes(e);
        for (f, field) in fields.iter().enumerate() {
            let local = crate::cell::element_values(&nodes, field);
            for (g, p) in el.points.iter().enumerate() {
                out[(e * nq + g) * fields.len() + f] = hex::strain(&p.dn, &local);
            }
        }
    }
    out
}

/// Residuals of a micro state `(U, p)` against a macro state; `warping`
/// supplies `ū`, and `None` takes `ū = 0`.
pub fn kirchhoff_love_residual(
    micro: &MicroMesh,
    u: &[f64],
    p: &[f64],
    cell: &CellData,
    sys: &MacroSystem,
    state: &MacroState,
    warping: Option<&WarpingMap>,
) -> Result<KirchhoffLoveResidual> {
    let eps = micro.eps;
    let cgrid = &cell.mesh.grid;
    if cell.mesh.n != micro.n || cell.mesh.geometry != micro.geometry {
        return Err(Error::Mismatch("micro mesh is not tiled by this cell mesh".into()));
    }
    if sys.plate.omega != micro.omega {
        return Err(Error::Mismatch("plate and micro mesh cover different mid-surfaces".into()));
    }
    if p.len() != micro.gel_dofs.len() || state.p.len() != sys.num_pressure() {
        return Err(Error::Mismatch("pressure vector lengths differ from their meshes".into()));
    }
    let unfolded = unfold(u, 3, micro, &cell.mesh, 0.0)?;
    let mut p_nodal = vec![0.0; micro.grid.num_nodes()];
    for (node, &d) in micro.gel_dofs.node_to_dof.iter().enumerate() {
        if d != NO_DOF {
            p_nodal[node] = p[d];
        }
    }
    let p_unfolded = unfold(&p_nodal, 1, micro, &cell.mesh, 1.0)?;

    let el = HexElement::new(cgrid.h);
    let nqp = el.points.len();
    let (corrector_strain, response_strain) = match warping {
        Some(w) => {
            let chi: Vec<&[f64]> = (0..6).map(|j| w.correctors.field(j)).collect();
            let resp: Vec<&[f64]> = w.nodal_pressure_response.iter().map(|v| v.as_slice()).collect();
            (Some(strain_table(cell, &chi, &el)), Some(strain_table(cell, &resp, &el)))
        }
        None => (None, None),
    };
    let n_plate_nodes = sys.plate.num_nodes();
    let ng = sys.gel_count;
    let gel_of_node = &cell.op.gel.node_to_dof;

    let sums = (0..micro.num_cells())
        .into_par_iter()
        .map(|k| {
            let origin = micro.cell_origin(k);
            let uk = unfolded.cell(k);
            let pk = p_unfolded.cell(k);
            let mut acc = [0.0; 8];
            let [ni, nj, nk] = cgrid.dims;
            for j in 0..nj {
                for i in 0..ni {
                    // in-plane Gauss points share the plate evaluation
                    for g in 0..nqp {
                        let pt = &el.points[g];
                        if pt.offset[2] != el.points[0].offset[2] {
                            continue;
                        }
                        let y1 = i as f64 * cgrid.h[0] + pt.offset[0];
                        let y2 = j as f64 * cgrid.h[1] + pt.offset[1];
                        let x = [origin[0] + eps * y1, origin[1] + eps * y2];
                        let q = plate_point_at(&sys.plate, x);
                        let vals = q.value_of(&state.w);
                        let s = q.strain_of(&state.w);
                        let p0_nodal = q.interpolate_block(&state.p, ng);
                        for kz in 0..nk {
                            let e = cgrid.element_index(i, j, kz);
                            let nodes = cgrid.element_nodes(e);
                            let z0 = cgrid.element_origin(e)[2];
                            for (g2, pt2) in el.points.iter().enumerate() {
                                if pt2.offset[0] != pt.offset[0] || pt2.offset[1] != pt.offset[1] {
                                    continue;
                                }
                                let wt = eps * eps * pt2.weight;
                                let y3 = z0 + pt2.offset[2];
                                let mut local = [0.0; 24];
                                for a in 0..8 {
                                    local[3 * a..3 * a + 3].copy_from_slice(&uk[3 * nodes[a]..3 * nodes[a] + 3]);
                                }
                                let mut uval = [0.0; 3];
                                for a in 0..8 {
                                    for c in 0..3 {
                                        uval[c] += pt2.n[a] * local[3 * a + c];
                                    }
                                }
                                let kl = [vals[0] - y3 * vals[3], vals[1] - y3 * vals[4]];
                                for c in 0..2 {
                                    let d = uval[c] / eps - kl[c];
                                    acc[0] += wt * d * d;
                                    acc[4] += wt * kl[c] * kl[c];
                                }
                                let d = uval[2] - vals[2];
                                acc[1] += wt * d * d;
                                acc[5] += wt * vals[2] * vals[2];

                                let micro_strain = hex::strain(&pt2.dn, &local);
                                let mut limit = [0.0; 6];
                                for (jj, &sj) in s.iter().enumerate() {
                                    let m = macro_strain(jj, y3);
                                    for c in 0..6 {
                                        limit[c] += sj * m[c];
                                    }
                                }
                                if let (Some(cs), Some(rs)) = (&corrector_strain, &response_strain) {
                                    let row = (e * nqp + g2) * 6;
                                    for (jj, &sj) in s.iter().enumerate() {
                                        for c in 0..6 {
                                            limit[c] += sj * cs[row + jj][c];
                                        }
                                    }
                                    for (a, &node) in q.nodes.iter().enumerate() {
                                        let r = &rs[(e * nqp + g2) * n_plate_nodes + node];
                                        for c in 0..6 {
                                            limit[c] += q.nodal[a] * r[c];
                                        }
                                    }
                                }
                                let diff: [f64; 6] = std::array::from_fn(|c| micro_strain[c] / (eps * eps) - limit[c]);
                                acc[2] += wt * frobenius_sq(&diff);
                                acc[6] += wt * frobenius_sq(&limit);

                                if cell.mesh.phases[e] == Phase::Gel {
                                    let mut pm = 0.0;
                                    let mut p0 = 0.0;
                                    for a in 0..8 {
                                        pm += pt2.n[a] * pk[nodes[a]];
                                        p0 += pt2.n[a] * p0_nodal[gel_of_node[nodes[a]]];
                                    }
                                    acc[3] += wt * (pm - p0) * (pm - p0);
                                    acc[7] += wt * p0 * p0;
                                }
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect::<Vec<[f64; 8]>>()
        .into_iter()
        .fold([0.0; 8], |a, b| std::array::from_fn(|i| a[i] + b[i]));
    let r: [f64; 8] = sums.map(|v| v.max(0.0).sqrt());
    Ok(KirchhoffLoveResidual {
        eps,
        in_plane: r[0],
        deflection: r[1],
        strain: r[2],
        pressure: r[3],
        limit_norms: [r[4], r[5], r[6], r[7]],
    })
}
