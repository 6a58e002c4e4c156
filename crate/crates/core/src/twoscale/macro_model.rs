//! The homogenized plate coupled with the per-point cell pressure.
//!
//! Unknowns are the plate dofs `W` and, at every plate node, the cell gel
//! pressure `P_a` (one value per cell gel dof). With the pressure equation
//! divided by `|𝒴|`, an implicit Euler step solves the symmetric
//! quasi-definite system
//!
//! ```text
//! [ K      −Gᵀ           ] [W¹]   [ F¹                       ]
//! [ −G  −(Mp + dt Dp)    ] [P¹] = [ −(dt H¹ + Mp P⁰ + G W⁰)  ]
//! ```
//!
//! where the cell pressure-to-displacement map enters through
//! `Mp = (1/|𝒴|) Mx ⊗ (c M_g + α² C K⁻¹ Cᵀ)`.

use nalgebra::DMatrix;

use crate::cell::{DivergenceMoments, HomogenizedTensor, PressureCellOperator};
use crate::error::{Error, Result};
use crate::fem::sparse::{axpy, dot, norm};
use crate::fem::{CsrMatrix, DofMap, LdltSolver};
use crate::geometry::{CellMesh, PlateMesh};
use crate::material::{BiotParams, LoadSpec};

use super::space::{clamped_map, nodal_mass_triplets, plate_quadrature, PlatePoint, PLATE_DOFS};

/// Relative block residual accepted from a macro step.
pub const MACRO_RESIDUAL_TOL: f64 = 1e-9;

/// `A ⊗ B` for a sparse node matrix and a dense cell matrix.
pub fn kron_dense(node: &CsrMatrix, cell: &DMatrix<f64>, scale: f64) -> CsrMatrix {
    let nb = cell.nrows();
    let mut t = Vec::with_capacity(node.nnz() * nb * nb);
    for a in 0..node.nrows {
        let (cols, vals) = node.row(a);
        for (&b, &v) in cols.iter().zip(vals) {
            for i in 0..nb {
                for j in 0..nb {
                    let c = cell[(i, j)];
                    if c != 0.0 {
                        t.push((a * nb + i, b * nb + j, scale * v * c));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(node.nrows * nb, node.ncols * nb, t)
}

/// Plate load `∫_ω f·V` and pressure load `(1/|𝒴|) ∫_{ω×𝒴^g} h N_a ψ_i`.
pub(crate) fn plate_loads(
    quad: &[PlatePoint],
    n_plate: usize,
    gel_weights: &[f64],
    n_nodes: usize,
    spec: &LoadSpec,
    t: f64,
) -> (Vec<f64>, Vec<f64>) {
    let ng = gel_weights.len();
    let mut f = vec![0.0; n_plate];
    let mut h = vec![0.0; n_nodes * ng];
    for q in quad {
        let (fv, hv) = spec.eval(q.x, t);
        for d in 0..24 {
            let v: f64 = (0..3).map(|c| fv[c] * q.value[c][d]).sum();
            f[q.dofs[d]] += q.weight * v;
        }
        if hv != 0.0 {
            for a in 0..4 {
                let s = q.weight * hv * q.nodal[a] / CellMesh::VOLUME;
                let row = &mut h[ng * q.nodes[a]..ng * (q.nodes[a] + 1)];
                for i in 0..ng {
                    row[i] += s * gel_weights[i];
                }
            }
        }
    }
    (f, h)
}

pub struct MacroSystem {
    pub plate: PlateMesh,
    pub quad: Vec<PlatePoint>,
    pub map: DofMap,
    pub tensor: HomogenizedTensor,
    pub biot: BiotParams,
    /// Reduced plate stiffness.
    pub stiffness: CsrMatrix,
    /// `G` (pressure rows × reduced plate columns).
    pub coupling: CsrMatrix,
    pub pressure_mass: CsrMatrix,
    pub pressure_diffusion: CsrMatrix,
    /// `∫_gel ψ_i` on the cell.
    pub gel_weights: Vec<f64>,
    /// Plate-node bilinear mass `Mx`.
    pub node_mass: CsrMatrix,
    /// `c M_g` on the cell gel dofs.
    pub cell_pressure_mass: CsrMatrix,
    /// Number of cell gel dofs per plate node.
    pub gel_count: usize,
}

pub fn assemble_macro(
    hom: &HomogenizedTensor,
    op: &PressureCellOperator,
    moments: &DivergenceMoments,
    plate: &PlateMesh,
    biot: &BiotParams,
) -> Result<MacroSystem> {
    let lmin = hom.min_eigenvalue();
    if !(lmin > 1e-10) {
        return Err(Error::Material(format!("homogenized tensor is not positive definite (λ_min = {lmin:.3e})")));
    }
    let quad = plate_quadrature(plate);
    let map = clamped_map(plate)?;
    let n_plate = PLATE_DOFS * plate.num_nodes();
    let ng = op.num_gel_dofs();
    let vol = CellMesh::VOLUME;

    let mut kt = Vec::with_capacity(quad.len() * 576);
    for q in &quad {
        let mut hl = [[0.0; 24]; 6];
        for i in 0..6 {
            for d in 0..24 {
                hl[i][d] = (0..6).map(|j| hom.block[(i, j)] * q.strain[j][d]).sum();
            }
        }
        for d in 0..24 {
            for e in 0..24 {
                let v: f64 = (0..6).map(|i| q.strain[i][d] * hl[i][e]).sum();
                if v != 0.0 {
                    kt.push((q.dofs[d], q.dofs[e], q.weight * v));
                }
            }
        }
    }
    let stiffness = map.reduce_matrix(&CsrMatrix::from_triplets(n_plate, n_plate, kt));

    let g: Vec<Vec<f64>> = (0..6).map(|j| moments.coupling_vector(j)).collect();
    let mut gt = Vec::with_capacity(quad.len() * 4 * ng * 12);
    for q in &quad {
        // (g L_q)[i][d]
        for i in 0..ng {
            let mut row = [0.0; 24];
            for d in 0..24 {
                row[d] = (0..6).map(|j| g[j][i] * q.strain[j][d]).sum();
            }
            for a in 0..4 {
                let s = biot.alpha / vol * q.weight * q.nodal[a];
                for d in 0..24 {
                    if row[d] != 0.0 {
                        gt.push((q.nodes[a] * ng + i, q.dofs[d], s * row[d]));
                    }
                }
            }
        }
    }
    let coupling = map.reduce_columns(&CsrMatrix::from_triplets(plate.num_nodes() * ng, n_plate, gt));

    let node_mass = CsrMatrix::from_triplets(plate.num_nodes(), plate.num_nodes(), nodal_mass_triplets(&quad));
    let cell_pressure_mass = op.gel_mass.scaled(biot.c);
    let q = op.pressure_schur();
    let cell_block = cell_pressure_mass.to_dense() + q * (biot.alpha * biot.alpha);
    let pressure_mass = kron_dense(&node_mass, &cell_block, 1.0 / vol);
    let pressure_diffusion = kron_dense(&node_mass, &op.gel_diffusion.to_dense(), 1.0 / vol);
    let gel_weights = op.gel_mass.mul_vec(&vec![1.0; ng]);

    Ok(MacroSystem {
        plate: plate.clone(),
        quad,
        map,
        tensor: hom.clone(),
        biot: biot.clone(),
        stiffness,
        coupling,
        pressure_mass,
        pressure_diffusion,
        gel_weights,
        node_mass,
        cell_pressure_mass,
        gel_count: ng,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacroNorms {
    pub t: f64,
    pub energy: f64,
    pub max_deflection: f64,
    pub max_mean_pressure: f64,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct MacroState {
    pub t: f64,
    /// Full plate dofs (6 per node).
    pub w: Vec<f64>,
    /// Cell gel pressure per plate node (`gel_count` per node).
    pub p: Vec<f64>,
    pub history: Vec<MacroNorms>,
}

impl MacroSystem {
    pub fn num_plate(&self) -> usize {
        self.map.n_free()
    }

    pub fn num_pressure(&self) -> usize {
        self.plate.num_nodes() * self.gel_count
    }

    /// `p_m = (1/|𝒴|) ∫_gel p₀` per plate node.
    pub fn mean_pressure(&self, p: &[f64]) -> Vec<f64> {
        let ng = self.gel_count;
        (0..self.plate.num_nodes())
            .map(|a| dot(&p[a * ng..(a + 1) * ng], &self.gel_weights) / CellMesh::VOLUME)
            .collect()
    }

    /// `WᵀKW + PᵀMpP`.
    pub fn energy(&self, state: &MacroState) -> f64 {
        let w = self.map.compress(&state.w);
        dot(&self.stiffness.mul_vec(&w), &w) + dot(&self.pressure_mass.mul_vec(&state.p), &state.p)
    }

    pub fn loads(&self, spec: &LoadSpec, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (f, h) = plate_loads(&self.quad, PLATE_DOFS * self.plate.num_nodes(), &self.gel_weights, self.plate.num_nodes(), spec, t);
        (self.map.restrict(&f), h)
    }

    pub fn zero_state(&self) -> MacroState {
        MacroState { t: 0.0, w: vec![0.0; self.map.n_full()], p: vec![0.0; self.num_pressure()], history: Vec::new() }
    }

    /// Static plate solve `K W = F` (pressure ignored).
    pub fn static_plate(&self, spec: &LoadSpec, t: f64) -> Result<Vec<f64>> {
        let (f, _) = self.loads(spec, t);
        let w = crate::fem::CholeskySolver::new(self.stiffness.clone())?;
        Ok(self.map.expand(&crate::fem::SpdSolve::solve(&w, &f)?))
    }
}

/// Implicit Euler stepper with the block factorization cached for one `dt`.
pub struct MacroSolver<'a> {
    pub sys: &'a MacroSystem,
    pub dt: f64,
    block: LdltSolver,
}

impl<'a> MacroSolver<'a> {
    pub fn new(sys: &'a MacroSystem, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let nw = sys.num_plate();
        let np = sys.num_pressure();
        let implicit = sys.pressure_mass.add_scaled(dt, &sys.pressure_diffusion)?;
        let gt = sys.coupling.transpose();
        let m = CsrMatrix::from_blocks(
            nw + np,
            nw + np,
            &[(0, 0, &sys.stiffness, 1.0), (0, nw, &gt, -1.0), (nw, 0, &sys.coupling, -1.0), (nw, nw, &implicit, -1.0)],
        );
        Ok(Self { sys, dt, block: LdltSolver::new(m)? })
    }

    pub fn step(&self, state: &MacroState, loads: &LoadSpec) -> Result<MacroState> {
        let sys = self.sys;
        let t1 = state.t + self.dt;
        let (f1, h1) = sys.loads(loads, t1);
        let w0 = sys.map.compress(&state.w);
        let mut rhs_p = sys.pressure_mass.mul_vec(&state.p);
        axpy(1.0, &sys.coupling.mul_vec(&w0), &mut rhs_p);
        axpy(self.dt, &h1, &mut rhs_p);
        let mut rhs = f1.clone();
        rhs.extend(rhs_p.iter().map(|v| -v));
        let x = self.block.solve_refined(&rhs)?;
        let ax = self.block.matrix().mul_vec(&x);
        let r: Vec<f64> = ax.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let residual = norm(&r) / norm(&rhs).max(f64::MIN_POSITIVE);
        if norm(&rhs) > 0.0 && !(residual <= MACRO_RESIDUAL_TOL) {
            return Err(Error::NotConverged { iterations: 1, residual, history: vec![residual] });
        }
        let nw = sys.num_plate();
        let w = sys.map.expand(&x[..nw]);
        let p = x[nw..].to_vec();
        let mut next = MacroState { t: t1, w, p, history: state.history.clone() };
        let energy = sys.energy(&next);
        let max_deflection = (0..sys.plate.num_nodes()).map(|a| next.w[PLATE_DOFS * a + 2].abs()).fold(0.0, f64::max);
        let max_mean_pressure = sys.mean_pressure(&next.p).iter().map(|v| v.abs()).fold(0.0, f64::max);
        next.history.push(MacroNorms { t: t1, energy, max_deflection, max_mean_pressure, residual: if norm(&rhs) > 0.0 { residual } else { 0.0 } });
        Ok(next)
    }
}

pub fn step_macro(sys: &MacroSystem, state: &MacroState, dt: f64, loads: &LoadSpec) -> Result<MacroState> {
    MacroSolver::new(sys, dt)?.step(state, loads)
}

/// Run `nsteps` implicit Euler steps from zero data; returns every state.
pub fn run_macro(sys: &MacroSystem, t_final: f64, nsteps: usize, loads: &LoadSpec) -> Result<Vec<MacroState>> {
    if nsteps == 0 {
        return Err(Error::InvalidArgument("nsteps must be at least 1".into()));
    }
    let solver = MacroSolver::new(sys, t_final / nsteps as f64)?;
    let mut states = Vec::with_capacity(nsteps);
    let mut state = sys.zero_state();
    for _ in 0..nsteps {
        state = solver.step(&state, loads)?;
        states.push(state.clone());
    }
    Ok(states)
}

/// Microscopic warping `ū(x', ·)` at a plate point: `Σ s_J χ^J + α K⁻¹ Cᵀ p₀(x')`.
pub struct WarpingMap<'a> {
    pub op: &'a PressureCellOperator,
    pub correctors: &'a crate::cell::CorrectorSet,
    /// `α K⁻¹ Cᵀ P_a` for every plate node (full cell fields).
    pub nodal_pressure_response: Vec<Vec<f64>>,
}

impl<'a> WarpingMap<'a> {
    pub fn new(op: &'a PressureCellOperator, correctors: &'a crate::cell::CorrectorSet, sys: &MacroSystem, p: &[f64]) -> Result<Self> {
        let ng = sys.gel_count;
        let rhs: Vec<Vec<f64>> = (0..sys.plate.num_nodes())
            .map(|a| op.coupling_reduced.mul_transpose_vec(&p[a * ng..(a + 1) * ng]).into_iter().map(|v| op.alpha * v).collect())
            .collect();
        let solved = op.stiffness_solver().solve_many(&rhs);
        Ok(Self { op, correctors, nodal_pressure_response: solved.iter().map(|x| op.cell.map.expand(x)).collect() })
    }

    pub fn at(&self, q: &PlatePoint, strain: &[f64; 6]) -> Vec<f64> {
        let mut u = vec![0.0; self.correctors.membrane[0].len()];
        for (j, &s) in strain.iter().enumerate() {
            axpy(s, self.correctors.field(j), &mut u);
        }
        for (a, &node) in q.nodes.iter().enumerate() {
            axpy(q.nodal[a], &self.nodal_pressure_response[node], &mut u);
        }
        u
    }
}
