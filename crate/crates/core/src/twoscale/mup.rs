//! Direct monolithic solve of the unfolded limit problem.
//!
//! Unknowns are the plate dofs `W`, a cell displacement `ū_q` at every plate
//! quadrature point and the nodal cell pressure `P`. No corrector is used, so
//! agreement with the homogenized path checks the corrector elimination.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cell::PressureCellOperator;
use crate::error::{Error, Result};
use crate::fem::sparse::{axpy, norm};
use crate::fem::{CsrMatrix, DofMap, LdltSolver};
use crate::geometry::{CellMesh, PlateMesh};
use crate::material::{BiotParams, HookeTensor, LoadSpec};

use super::macro_model::{kron_dense, plate_loads, MacroState, MACRO_RESIDUAL_TOL};
use super::space::{clamped_map, nodal_mass_triplets, plate_quadrature, PlatePoint, PLATE_DOFS};

/// Largest monolithic system accepted unless the caller raises it.
pub const DEFAULT_DOF_BUDGET: usize = 400_000;

#[derive(Clone, Debug)]
pub struct TwoScaleState {
    pub macro_state: MacroState,
    /// Full cell displacement `ū` at every plate quadrature point.
    pub warping: Vec<Vec<f64>>,
}

pub struct MupSystem {
    pub plate: PlateMesh,
    pub quad: Vec<PlatePoint>,
    pub plate_map: DofMap,
    pub cell_map: DofMap,
    pub num_plate: usize,
    pub num_cell: usize,
    pub gel_count: usize,
    /// Displacement block over `(W, ū_1, …, ū_Q)`.
    pub elastic: CsrMatrix,
    /// Pressure rows against the displacement columns.
    pub coupling: CsrMatrix,
    /// `(1/|𝒴|) Mx ⊗ c M_g`.
    pub pressure_mass: CsrMatrix,
    /// `(1/|𝒴|) Mx ⊗ D_g`.
    pub pressure_diffusion: CsrMatrix,
    pub gel_weights: Vec<f64>,
}

impl MupSystem {
    pub fn num_displacement(&self) -> usize {
        self.num_plate + self.quad.len() * self.num_cell
    }

    pub fn num_pressure(&self) -> usize {
        self.plate.num_nodes() * self.gel_count
    }

    pub fn num_dofs(&self) -> usize {
        self.num_displacement() + self.num_pressure()
    }

    fn zero_state(&self) -> TwoScaleState {
        let n_full = self.cell_map.n_full();
        TwoScaleState {
            macro_state: MacroState {
                t: 0.0,
                w: vec![0.0; self.plate_map.n_full()],
                p: vec![0.0; self.num_pressure()],
                history: Vec::new(),
            },
            warping: vec![vec![0.0; n_full]; self.quad.len()],
        }
    }
}

/// Monolithic dof count for the given meshes, before any assembly.
pub fn mup_dof_count(op: &PressureCellOperator, plate: &PlateMesh) -> Result<usize> {
    let nq = 9 * plate.elements.len();
    Ok(clamped_map(plate)?.n_free() + nq * op.cell.map.n_free() + plate.num_nodes() * op.num_gel_dofs())
}

pub fn assemble_mup(op: &PressureCellOperator, plate: &PlateMesh, biot: &BiotParams, budget: usize) -> Result<MupSystem> {
    let required = mup_dof_count(op, plate)?;
    if required > budget {
        return Err(Error::Budget { required, budget });
    }
    let vol = CellMesh::VOLUME;
    let quad = plate_quadrature(plate);
    let plate_map = clamped_map(plate)?;
    let cell_map = op.cell.map.clone();
    let nw = plate_map.n_free();
    let nc = cell_map.n_free();
    let ng = op.num_gel_dofs();
    let nd = nw + quad.len() * nc;
    let np = plate.num_nodes() * ng;

    let zero = vec![0.0; cell_map.n_full()];
    let plain: DMatrix<f64> = op.cell.energy_matrix(&[&zero[..]; 6]);
    let loads: Vec<Vec<f64>> = (0..6).map(|j| cell_map.restrict(&op.cell.macro_load(j))).collect();
    let trace = crate::cell::trace_tested(op);
    let stiff = &op.cell.reduced;
    let div = &op.coupling_reduced;
    let reduced_dof = |q: &PlatePoint, d: usize| plate_map.free_index(q.dofs[d]);

    let blocks: Vec<(Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>)> = quad
        .par_iter()
        .enumerate()
        .map(|(iq, q)| {
            let off = nw + iq * nc;
            let wq = q.weight;
            let mut el = Vec::new();
            let mut cp = Vec::new();
            for d in 0..24 {
                let Some(rd) = reduced_dof(q, d) else { continue };
                for e in 0..24 {
                    let Some(re) = reduced_dof(q, e) else { continue };
                    let mut v = 0.0;
                    for i in 0..6 {
                        for j in 0..6 {
                            v += q.strain[i][d] * plain[(i, j)] * q.strain[j][e];
                        }
                    }
                    if v != 0.0 {
                        el.push((rd, re, wq * v));
                    }
                }
                let mut row = vec![0.0; nc];
                for (j, load) in loads.iter().enumerate() {
                    if q.strain[j][d] != 0.0 {
                        axpy(q.strain[j][d], load, &mut row);
                    }
                }
                for (c, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        el.push((rd, off + c, wq * v / vol));
                        el.push((off + c, rd, wq * v / vol));
                    }
                }
            }
            for r in 0..nc {
                let (cols, vals) = stiff.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    el.push((off + r, off + c, wq * v / vol));
                }
            }
            for a in 0..4 {
                let s = -biot.alpha / vol * wq * q.nodal[a];
                if s == 0.0 {
                    continue;
                }
                let base = q.nodes[a] * ng;
                for i in 0..ng {
                    for d in 0..24 {
                        let Some(rd) = reduced_dof(q, d) else { continue };
                        let v: f64 = (0..6).map(|j| trace[j][i] * q.strain[j][d]).sum();
                        if v != 0.0 {
                            cp.push((base + i, rd, s * v));
                        }
                    }
                    let (cols, vals) = div.row(i);
                    for (&c, &v) in cols.iter().zip(vals) {
                        cp.push((base + i, off + c, s * v));
                    }
                }
            }
            (el, cp)
        })
        .collect();
    let (mut el_t, mut cp_t) = (Vec::new(), Vec::new());
    for (el, cp) in blocks {
        el_t.extend(el);
        cp_t.extend(cp);
    }
    let elastic = CsrMatrix::from_triplets(nd, nd, el_t);
    let coupling = CsrMatrix::from_triplets(np, nd, cp_t);

    let node_mass = CsrMatrix::from_triplets(plate.num_nodes(), plate.num_nodes(), nodal_mass_triplets(&quad));
    let pressure_mass = kron_dense(&node_mass, &op.gel_mass.scaled(biot.c).to_dense(), 1.0 / vol);
    let pressure_diffusion = kron_dense(&node_mass, &op.gel_diffusion.to_dense(), 1.0 / vol);
    let gel_weights = op.gel_mass.mul_vec(&vec![1.0; ng]);
    Ok(MupSystem {
        plate: plate.clone(),
        quad,
        plate_map,
        cell_map,
        num_plate: nw,
        num_cell: nc,
        gel_count: ng,
        elastic,
        coupling,
        pressure_mass,
        pressure_diffusion,
        gel_weights,
    })
}

/// Implicit Euler trajectory of the unfolded limit problem from zero data.
pub fn run_mup(sys: &MupSystem, loads: &LoadSpec, t_final: f64, nsteps: usize) -> Result<Vec<TwoScaleState>> {
    if nsteps == 0 || !(t_final > 0.0) {
        return Err(Error::InvalidArgument("need nsteps >= 1 and a positive final time".into()));
    }
    let dt = t_final / nsteps as f64;
    let nd = sys.num_displacement();
    let np = sys.num_pressure();
    let implicit = sys.pressure_mass.add_scaled(dt, &sys.pressure_diffusion)?;
    let ct = sys.coupling.transpose();
    let block = CsrMatrix::from_blocks(
        nd + np,
        nd + np,
        &[(0, 0, &sys.elastic, 1.0), (0, nd, &ct, 1.0), (nd, 0, &sys.coupling, 1.0), (nd, nd, &implicit, -1.0)],
    );
    let solver = LdltSolver::new(block)?;
    let n_plate_full = PLATE_DOFS * sys.plate.num_nodes();

    let mut state = sys.zero_state();
    let mut x_prev = vec![0.0; nd];
    let mut out = Vec::with_capacity(nsteps);
    for step in 1..=nsteps {
        let t = step as f64 * dt;
        let (f, h) = plate_loads(&sys.quad, n_plate_full, &sys.gel_weights, sys.plate.num_nodes(), loads, t);
        let mut rhs = vec![0.0; nd + np];
        rhs[..sys.num_plate].copy_from_slice(&sys.plate_map.restrict(&f));
        let mut rp = sys.coupling.mul_vec(&x_prev);
        axpy(-1.0, &sys.pressure_mass.mul_vec(&state.macro_state.p), &mut rp);
        axpy(-dt, &h, &mut rp);
        rhs[nd..].copy_from_slice(&rp);
        let x = solver.solve_refined(&rhs)?;
        let ax = solver.matrix().mul_vec(&x);
        let r: Vec<f64> = ax.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let scale = norm(&rhs);
        if scale > 0.0 {
            let residual = norm(&r) / scale;
            if !(residual <= MACRO_RESIDUAL_TOL) {
                return Err(Error::NotConverged { iterations: 1, residual, history: vec![residual] });
            }
        }
        let w = sys.plate_map.expand(&x[..sys.num_plate]);
        let warping = (0..sys.quad.len())
            .map(|iq| {
                let off = sys.num_plate + iq * sys.num_cell;
                sys.cell_map.expand(&x[off..off + sys.num_cell])
            })
            .collect();
        x_prev = x[..nd].to_vec();
        state = TwoScaleState {
            macro_state: MacroState { t, w, p: x[nd..].to_vec(), history: Vec::new() },
            warping,
        };
        out.push(state.clone());
    }
    Ok(out)
}

/// Assemble and run the oracle in one call.
#[allow(clippy::too_many_arguments)]
pub fn solve_mup_direct(
    cell: &CellMesh,
    plate: &PlateMesh,
    tensor: &HookeTensor,
    biot: &BiotParams,
    loads: &LoadSpec,
    t_final: f64,
    nsteps: usize,
    budget: usize,
) -> Result<Vec<TwoScaleState>> {
    let op = PressureCellOperator::new(cell, tensor, biot)?;
    let sys = assemble_mup(&op, plate, biot, budget)?;
    run_mup(&sys, loads, t_final, nsteps)
}

/// Largest relative deviation in `(W₁, W₂, W₃, p_m)` between the oracle and
/// a macro run; `W₃` covers all four of its nodal dofs.
pub fn trajectory_deviation(mup: &[TwoScaleState], mac: &[MacroState], gel_weights: &[f64]) -> Result<[f64; 4]> {
    if mup.len() != mac.len() {
        return Err(Error::Mismatch(format!("{} oracle steps against {} macro steps", mup.len(), mac.len())));
    }
    let ng = gel_weights.len();
    let mean = |p: &[f64]| -> Vec<f64> {
        p.chunks(ng).map(|b| b.iter().zip(gel_weights).map(|(x, w)| x * w).sum::<f64>() / CellMesh::VOLUME).collect()
    };
    let pick = |w: &[f64], keep: fn(usize) -> bool| -> Vec<f64> {
        w.iter().enumerate().filter(|(i, _)| keep(i % PLATE_DOFS)).map(|(_, v)| *v).collect()
    };
    let rel = |a: &[f64], b: &[f64]| {
        let d = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let s = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if s > 0.0 { d / s } else { d }
    };
    let selectors: [fn(usize) -> bool; 3] = [|k| k == 0, |k| k == 1, |k| k >= 2];
    let mut dev = [0.0f64; 4];
    for (u, m) in mup.iter().zip(mac) {
        if u.macro_state.w.len() != m.w.len() || u.macro_state.p.len() != m.p.len() {
            return Err(Error::Mismatch("oracle and macro states live on different meshes".into()));
        }
        for (c, keep) in selectors.iter().enumerate() {
            dev[c] = dev[c].max(rel(&pick(&u.macro_state.w, *keep), &pick(&m.w, *keep)));
        }
        dev[3] = dev[3].max(rel(&mean(&u.macro_state.p), &mean(&m.p)));
    }
    Ok(dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::CellData;
    use crate::geometry::{build_cell_mesh, build_plate_mesh, CellGeometry, Rect};
    use crate::twoscale::macro_model::{assemble_macro, run_macro, WarpingMap};

    fn fixture(alpha: f64) -> (CellData, PlateMesh, BiotParams) {
        let mesh = build_cell_mesh(&CellGeometry::default(), 4).unwrap();
        let biot = BiotParams { alpha, ..Default::default() };
        let data = CellData::new(&mesh, &HookeTensor::default(), &biot, 1e-12).unwrap();
        (data, build_plate_mesh(&Rect::unit(), 4).unwrap(), biot)
    }

    #[test]
    fn oracle_matches_corrector_elimination() {
        let (data, plate, biot) = fixture(1.0);
        let spec = LoadSpec::constant([0.5, 0.0, 1.0], 1.0);
        let mac_sys = assemble_macro(&data.tensor, &data.op, &data.moments, &plate, &biot).unwrap();
        let mac = run_macro(&mac_sys, 1.0, 3, &spec).unwrap();
        let sys = assemble_mup(&data.op, &plate, &biot, DEFAULT_DOF_BUDGET).unwrap();
        assert!(sys.elastic.asymmetry() < 1e-12);
        let mup = run_mup(&sys, &spec, 1.0, 3).unwrap();
        let dev = trajectory_deviation(&mup, &mac, &mac_sys.gel_weights).unwrap();
        assert!(dev.iter().all(|&d| d < 1e-6), "{dev:?}");

        // the oracle warping is the corrector reconstruction
        let last = mup.last().unwrap();
        let warp = WarpingMap::new(&data.op, &data.correctors, &mac_sys, &mac.last().unwrap().p).unwrap();
        let w = &mac.last().unwrap().w;
        for iq in (0..sys.quad.len()).step_by(17) {
            let q = &sys.quad[iq];
            let rebuilt = warp.at(q, &q.strain_of(w));
            let dev = rebuilt.iter().zip(&last.warping[iq]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let size = rebuilt.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(dev < 1e-6 * size, "{dev} vs {size}");
        }
    }

    #[test]
    fn zero_loads_give_zero() {
        let (data, plate, biot) = fixture(1.0);
        let sys = assemble_mup(&data.op, &plate, &biot, DEFAULT_DOF_BUDGET).unwrap();
        let states = run_mup(&sys, &LoadSpec::zero(), 1.0, 2).unwrap();
        let s = &states[1];
        assert!(s.macro_state.w.iter().chain(&s.macro_state.p).all(|v| *v == 0.0));
        assert!(s.warping.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn elastic_warping_is_strain_weighted_correctors() {
        let (data, plate, biot) = fixture(0.0);
        let sys = assemble_mup(&data.op, &plate, &biot, DEFAULT_DOF_BUDGET).unwrap();
        let states = run_mup(&sys, &LoadSpec::constant([0.3, 0.2, 1.0], 0.0), 1.0, 1).unwrap();
        let s = &states[0];
        for (q, u) in sys.quad.iter().zip(&s.warping).step_by(11) {
            let e = q.strain_of(&s.macro_state.w);
            let mut expect = vec![0.0; u.len()];
            for (j, &v) in e.iter().enumerate() {
                axpy(v, data.correctors.field(j), &mut expect);
            }
            let dev = expect.iter().zip(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let size = expect.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(dev <= 1e-6 * size, "{dev} vs {size}");
        }
    }

    #[test]
    fn budget_guard_refuses_large_systems() {
        let (data, plate, biot) = fixture(1.0);
        let need = mup_dof_count(&data.op, &plate).unwrap();
        match assemble_mup(&data.op, &plate, &biot, need - 1) {
            Err(Error::Budget { required, budget }) => assert_eq!((required, budget), (need, need - 1)),
            other => panic!("expected budget error, got {:?}", other.map(|s| s.num_dofs())),
        }
    }
}
