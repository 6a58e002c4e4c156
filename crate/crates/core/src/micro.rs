//! The ε-scale coupled elasticity/pressure problem on the thin periodic plate.
//!
//! Unknowns are the nodal displacement `U` (clamped on the lateral boundary)
//! and the gel pressure `p` on the nodes of gel elements. With `a`, `b` the
//! coefficient vectors, the semi-discrete system reads
//!
//! ```text
//! B a − α Cᵀ b = F(t)
//! M ḃ + α C ȧ + D b = G(t)
//! ```
//!
//! and is advanced by implicit Euler, either as one symmetric quasi-definite
//! block solve or through the pressure-only Schur form.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::hex::{self, HexElement};
use crate::fem::sparse::{axpy, dot, norm};
use crate::fem::{
    assemble_divergence_coupling, assemble_elastic_stiffness, assemble_gradient_gram, assemble_scalar_diffusion,
    assemble_scalar_load, assemble_scalar_mass, assemble_stiffness_on, assemble_strain_gram, assemble_vector_load,
    solve_saddle, CholeskySolver, ConstraintSet, CsrMatrix, DofMap, LdltSolver, SaddleOptions, SpdSolve,
};
use crate::geometry::{HexGrid, MicroMesh, Phase};
use crate::material::{check_admissible, isotropic, scale_loads, BiotParams, HookeTensor, LoadSpec};

/// Relative block residual accepted from a time step.
pub const STEP_RESIDUAL_TOL: f64 = 1e-9;

/// Tolerance of the outer pressure iteration in the Schur stepper.
pub const SCHUR_TOL: f64 = 1e-13;

/// Assembled ε-scale operators.
pub struct GalerkinSystem {
    pub mesh: MicroMesh,
    pub eps: f64,
    pub biot: BiotParams,
    /// Clamping of the lateral boundary.
    pub map: DofMap,
    /// Reduced elastic stiffness `B`.
    pub stiffness: CsrMatrix,
    /// `C_ij = ∫_gel ψ_i ∇·φ_j` on reduced displacement dofs.
    pub coupling: CsrMatrix,
    /// `c ∫ ψ_i ψ_j`.
    pub mass: CsrMatrix,
    /// `ε² ∫ K∇ψ_i·∇ψ_j`.
    pub diffusion: CsrMatrix,
    /// Unscaled `∫ ψ_i ψ_j` and `∫ ∇ψ_i·∇ψ_j`, used for norms.
    pub unit_mass: CsrMatrix,
    pub unit_laplace: CsrMatrix,
    /// `∫ e(φ_i):e(φ_j)` on full displacement dofs.
    pub strain_gram: CsrMatrix,
}

pub fn assemble_micro(mesh: &MicroMesh, tensor: &HookeTensor, biot: &BiotParams, eps: f64) -> Result<GalerkinSystem> {
    check_admissible(tensor, biot)?;
    if (eps - mesh.eps).abs() > 1e-12 * eps.abs() {
        return Err(Error::Mismatch(format!("mesh built for ε = {}, system requested for ε = {eps}", mesh.eps)));
    }
    let full = assemble_elastic_stiffness(mesh, tensor)?;
    let clamp = ConstraintSet::clamp(mesh.lateral_nodes.iter().flat_map(|&n| [3 * n, 3 * n + 1, 3 * n + 2]));
    let map = DofMap::new(full.nrows, &clamp)?;
    let stiffness = map.reduce_matrix(&full);
    let coupling = map.reduce_columns(&assemble_divergence_coupling(mesh, &mesh.gel_dofs)?);
    let unit_mass = assemble_scalar_mass(mesh, &mesh.gel_dofs)?;
    let unit_laplace = assemble_scalar_diffusion(mesh, &mesh.gel_dofs, &nalgebra::Matrix3::identity())?;
    let diffusion = assemble_scalar_diffusion(mesh, &mesh.gel_dofs, &biot.k)?.scaled(eps * eps);
    let mass = unit_mass.scaled(biot.c);
    let strain_gram = assemble_strain_gram(&mesh.grid);
    Ok(GalerkinSystem {
        mesh: mesh.clone(),
        eps,
        biot: biot.clone(),
        map,
        stiffness,
        coupling,
        mass,
        diffusion,
        unit_mass,
        unit_laplace,
        strain_gram,
    })
}

impl GalerkinSystem {
    pub fn num_displacement(&self) -> usize {
        self.map.n_free()
    }

    pub fn num_pressure(&self) -> usize {
        self.mesh.gel_dofs.len()
    }

    pub fn alpha(&self) -> f64 {
        self.biot.alpha
    }

    /// Reduced `F(t) = ∫ f_ε·v` and `G(t) = ∫_gel h_ε ψ`.
    pub fn loads(&self, spec: &LoadSpec, t: f64) -> (Vec<f64>, Vec<f64>) {
        let s = scale_loads(spec, self.eps, t);
        let f = assemble_vector_load(&self.mesh.grid, |_| true, |x| s.f_eps(x));
        let g = assemble_scalar_load(&self.mesh.grid, &self.mesh.gel_dofs, |x| s.h_eps(x));
        (self.map.restrict(&f), g)
    }

    pub fn strain_norm(&self, u: &[f64]) -> f64 {
        dot(&self.strain_gram.mul_vec(u), u).max(0.0).sqrt()
    }

    pub fn pressure_norm(&self, p: &[f64]) -> f64 {
        dot(&self.unit_mass.mul_vec(p), p).max(0.0).sqrt()
    }

    /// `ε ‖∇p‖`.
    pub fn scaled_gradient_norm(&self, p: &[f64]) -> f64 {
        self.eps * dot(&self.unit_laplace.mul_vec(p), p).max(0.0).sqrt()
    }

    /// `c‖p‖² + ‖e(U)‖²_A`.
    pub fn energy(&self, state: &MicroState) -> f64 {
        let a = self.map.compress(&state.u);
        dot(&self.mass.mul_vec(&state.p), &state.p) + dot(&self.stiffness.mul_vec(&a), &a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepNorms {
    pub t: f64,
    pub strain: f64,
    pub pressure: f64,
    pub scaled_gradient: f64,
    pub energy: f64,
    /// Relative residual of the block system solved in this step.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct MicroState {
    pub t: f64,
    /// Nodal displacement, 3 per node.
    pub u: Vec<f64>,
    /// Gel pressure on the gel dofs.
    pub p: Vec<f64>,
    /// Reduced load vector of the previous step, for the Schur stepper.
    pub f_prev: Vec<f64>,
    pub history: Vec<StepNorms>,
}

impl MicroState {
    pub fn zero(sys: &GalerkinSystem) -> Self {
        Self {
            t: 0.0,
            u: vec![0.0; sys.map.n_full()],
            p: vec![0.0; sys.num_pressure()],
            f_prev: vec![0.0; sys.num_displacement()],
            history: Vec::new(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.p).fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepper {
    Monolithic,
    Schur,
}

/// Time stepper with factorizations cached for a fixed `dt`.
pub struct MicroSolver<'a> {
    pub sys: &'a GalerkinSystem,
    pub dt: f64,
    pub method: Stepper,
    block: Option<LdltSolver>,
    elastic: Option<CholeskySolver>,
    implicit: CsrMatrix,
    scaled_coupling: CsrMatrix,
}

impl<'a> MicroSolver<'a> {
    pub fn new(sys: &'a GalerkinSystem, dt: f64, method: Stepper) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let implicit = sys.mass.add_scaled(dt, &sys.diffusion)?;
        let scaled_coupling = sys.coupling.scaled(sys.alpha());
        let (block, elastic) = match method {
            Stepper::Monolithic => {
                let nu = sys.num_displacement();
                let np = sys.num_pressure();
                let ct = scaled_coupling.transpose();
                let m = CsrMatrix::from_blocks(
                    nu + np,
                    nu + np,
                    &[(0, 0, &sys.stiffness, 1.0), (0, nu, &ct, -1.0), (nu, 0, &scaled_coupling, -1.0), (nu, nu, &implicit, -1.0)],
                );
                (Some(LdltSolver::new(m)?), None)
            }
            Stepper::Schur => (None, Some(CholeskySolver::new(sys.stiffness.clone())?)),
        };
        Ok(Self { sys, dt, method, block, elastic, implicit, scaled_coupling })
    }

    /// Advance one step with loads evaluated at `t + dt`.
    pub fn step(&self, state: &MicroState, loads: &LoadSpec) -> Result<MicroState> {
        let sys = self.sys;
        let t1 = state.t + self.dt;
        let (f1, g1) = sys.loads(loads, t1);
        let a0 = sys.map.compress(&state.u);
        let b0 = &state.p;
        // pressure right-hand side dt G + M b⁰, shared by both paths
        let mut g = sys.mass.mul_vec(b0);
        axpy(self.dt, &g1, &mut g);

        let (a1, b1) = match self.method {
            Stepper::Monolithic => {
                let solver = self.block.as_ref().expect("monolithic factorization");
                let c_a0 = self.scaled_coupling.mul_vec(&a0);
                let mut rhs = f1.clone();
                rhs.extend(g.iter().zip(&c_a0).map(|(gi, ci)| -(gi + ci)));
                let x = solver.solve_refined(&rhs)?;
                let nu = sys.num_displacement();
                (x[..nu].to_vec(), x[nu..].to_vec())
            }
            Stepper::Schur => {
                let k = self.elastic.as_ref().expect("elastic factorization");
                // α C B⁻¹ (α Cᵀ b⁰ − (F¹ − F_prev))
                let mut w = self.scaled_coupling.mul_transpose_vec(b0);
                axpy(-1.0, &f1, &mut w);
                axpy(1.0, &state.f_prev, &mut w);
                let w = k.solve(&w)?;
                axpy(1.0, &self.scaled_coupling.mul_vec(&w), &mut g);
                let zero = vec![0.0; sys.num_displacement()];
                let sol = solve_saddle(
                    k,
                    &self.scaled_coupling,
                    &self.implicit,
                    &zero,
                    &g,
                    &SaddleOptions { tol: SCHUR_TOL, ..Default::default() },
                )?;
                let mut a1 = k.solve(&f1)?;
                axpy(1.0, &sol.displacement, &mut a1);
                (a1, sol.pressure)
            }
        };
        let residual = self.block_residual(&a0, b0, &a1, &b1, &f1, &g1);
        if !(residual <= STEP_RESIDUAL_TOL) {
            return Err(Error::NotConverged { iterations: 1, residual, history: vec![residual] });
        }
        let mut next = MicroState { t: t1, u: sys.map.expand(&a1), p: b1, f_prev: f1, history: state.history.clone() };
        let energy = sys.energy(&next);
        next.history.push(StepNorms {
            t: t1,
            strain: sys.strain_norm(&next.u),
            pressure: sys.pressure_norm(&next.p),
            scaled_gradient: sys.scaled_gradient_norm(&next.p),
            energy,
            residual,
        });
        Ok(next)
    }

    fn block_residual(&self, a0: &[f64], b0: &[f64], a1: &[f64], b1: &[f64], f1: &[f64], g1: &[f64]) -> f64 {
        let sys = self.sys;
        let mut r1 = sys.stiffness.mul_vec(a1);
        axpy(-1.0, &self.scaled_coupling.mul_transpose_vec(b1), &mut r1);
        axpy(-1.0, f1, &mut r1);
        let da: Vec<f64> = a1.iter().zip(a0).map(|(x, y)| x - y).collect();
        let mut r2 = self.scaled_coupling.mul_vec(&da);
        axpy(1.0, &self.implicit.mul_vec(b1), &mut r2);
        axpy(-1.0, &sys.mass.mul_vec(b0), &mut r2);
        axpy(-self.dt, g1, &mut r2);
        let scale = (norm(f1).powi(2) + norm(g1).powi(2) * self.dt * self.dt + norm(&sys.mass.mul_vec(b0)).powi(2)
            + norm(&self.scaled_coupling.mul_vec(a0)).powi(2))
        .sqrt()
        .max(norm(&sys.stiffness.mul_vec(a1)))
        .max(f64::MIN_POSITIVE);
        (norm(&r1).powi(2) + norm(&r2).powi(2)).sqrt() / scale
    }
}

pub fn step_monolithic(sys: &GalerkinSystem, state: &MicroState, dt: f64, loads: &LoadSpec) -> Result<MicroState> {
    MicroSolver::new(sys, dt, Stepper::Monolithic)?.step(state, loads)
}

pub fn step_schur(sys: &GalerkinSystem, state: &MicroState, dt: f64, loads: &LoadSpec) -> Result<MicroState> {
    MicroSolver::new(sys, dt, Stepper::Schur)?.step(state, loads)
}

/// Result of a transient run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<StepNorms>,
    pub final_state: MicroState,
    /// Snapshots every `keep_every` steps (always includes the last step).
    pub snapshots: Vec<MicroState>,
}

impl Trajectory {
    /// `max_n ‖e(U)(tₙ)‖`.
    pub fn max_strain(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.strain))
    }

    pub fn max_pressure(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.pressure))
    }

    pub fn max_scaled_gradient(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.scaled_gradient))
    }
}

pub fn run_transient(
    sys: &GalerkinSystem,
    t_final: f64,
    nsteps: usize,
    loads: &LoadSpec,
    method: Stepper,
    keep_every: Option<usize>,
) -> Result<Trajectory> {
    if nsteps == 0 {
        return Err(Error::InvalidArgument("nsteps must be at least 1".into()));
    }
    let dt = t_final / nsteps as f64;
    let solver = MicroSolver::new(sys, dt, method)?;
    let mut state = MicroState::zero(sys);
    let mut snapshots = Vec::new();
    for k in 1..=nsteps {
        state = solver.step(&state, loads)?;
        log::debug!("micro step {k}/{nsteps}: t = {:.4}, ‖e(U)‖ = {:.3e}", state.t, state.history[k - 1].strain);
        if keep_every.is_some_and(|m| k % m.max(1) == 0 || k == nsteps) {
            let mut snap = state.clone();
            snap.history.clear();
            snapshots.push(snap);
        }
    }
    Ok(Trajectory { steps: state.history.clone(), final_state: state, snapshots })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Griso decomposition of a micro displacement plus its complementary split.
#[derive(Clone, Debug)]
pub struct DecompositionReport {
    /// Thickness average `𝒲` per mid-surface node (index `i + (N+1) j`).
    pub mid: Vec<[f64; 3]>,
    /// First moment `ℛ_α` per mid-surface node.
    pub rotation: Vec<[f64; 2]>,
    /// `w̄ = U − W_E` on the micro nodes.
    pub warping: Vec<f64>,
    /// Thickness average of the gel part `𝐮_ε = U − 𝐰_ε`.
    pub gel_mean: Vec<[f64; 3]>,
    /// `𝐮_ε`, vanishing on fiber and interface nodes.
    pub gel_part: Vec<f64>,
    /// Largest `|∫ w̄ dx₃|` over mid-surface nodes.
    pub warping_mean_max: f64,
    /// Largest `|𝐮_ε|` on fiber nodes.
    pub gel_part_fiber_max: f64,
    pub norms: DecompositionNorms,
}

/// L² norms of the pieces, for comparing against the ε-scalings.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionNorms {
    pub strain: f64,
    pub warping: f64,
    pub warping_gradient: f64,
    pub mid_gradient: f64,
    pub rotation_gradient: f64,
    pub gel_part: f64,
}

/// Nodal values of a piecewise linear function integrated exactly against
/// `1` and `x₃` along one column.
fn column_moments(z: &[f64], v: impl Fn(usize) -> f64) -> (f64, f64) {
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for k in 0..z.len() - 1 {
        let (za, zb) = (z[k], z[k + 1]);
        let (va, vb) = (v(k), v(k + 1));
        let h = zb - za;
        m0 += 0.5 * h * (va + vb);
        // Simpson is exact for the quadratic x₃ v
        let zm = 0.5 * (za + zb);
        m1 += h / 6.0 * (za * va + 4.0 * zm * 0.5 * (va + vb) + zb * vb);
    }
    (m0, m1)
}

fn column_count(grid: &HexGrid) -> usize {
    (grid.dims[0] + 1) * (grid.dims[1] + 1)
}

pub fn griso_decompose(mesh: &MicroMesh, u: &[f64]) -> Result<DecompositionReport> {
    let grid = &mesh.grid;
    if u.len() != 3 * grid.num_nodes() {
        return Err(Error::Mismatch(format!("displacement has {} entries, mesh needs {}", u.len(), 3 * grid.num_nodes())));
    }
    if (grid.h[2] * grid.dims[2] as f64 - 2.0 * mesh.eps).abs() > 1e-9 * mesh.eps {
        return Err(Error::Geometry("mesh is not layered uniformly through the thickness".into()));
    }
    let eps = mesh.eps;
    let nz = grid.dims[2] + 1;
    let z: Vec<f64> = (0..nz).map(|k| grid.origin[2] + k as f64 * grid.h[2]).collect();
    let nc = column_count(grid);
    let node = |c: usize, k: usize| c + nc * k;

    let mut mid = vec![[0.0; 3]; nc];
    let mut rotation = vec![[0.0; 2]; nc];
    let mut warping = vec![0.0; u.len()];
    let mut warping_mean_max: f64 = 0.0;
    for c in 0..nc {
        for d in 0..3 {
            let (m0, m1) = column_moments(&z, |k| u[3 * node(c, k) + d]);
            mid[c][d] = m0 / (2.0 * eps);
            if d < 2 {
                rotation[c][d] = 1.5 * m1 / eps.powi(3);
            }
        }
        for k in 0..nz {
            for d in 0..3 {
                let elementary = if d < 2 { mid[c][d] + z[k] * rotation[c][d] } else { mid[c][d] };
                warping[3 * node(c, k) + d] = u[3 * node(c, k) + d] - elementary;
            }
        }
        for d in 0..3 {
            let (m0, _) = column_moments(&z, |k| warping[3 * node(c, k) + d]);
            warping_mean_max = warping_mean_max.max(m0.abs());
        }
    }

    let extension = extend_fiber(mesh, u)?;
    let gel_part: Vec<f64> = u.iter().zip(&extension).map(|(a, b)| a - b).collect();
    let mut gel_mean = vec![[0.0; 3]; nc];
    for c in 0..nc {
        for d in 0..3 {
            gel_mean[c][d] = column_moments(&z, |k| gel_part[3 * node(c, k) + d]).0 / (2.0 * eps);
        }
    }
    let fiber_nodes = phase_nodes(mesh, Phase::Fiber);
    let gel_part_fiber_max = (0..grid.num_nodes())
        .filter(|&n| fiber_nodes[n])
        .flat_map(|n| gel_part[3 * n..3 * n + 3].iter().map(|v| v.abs()))
        .fold(0.0, f64::max);

    let all = |_: usize| true;
    let norms = DecompositionNorms {
        strain: element_norm(grid, u, all, Field::Strain),
        warping: element_norm(grid, &warping, all, Field::Value),
        warping_gradient: element_norm(grid, &warping, all, Field::Gradient),
        mid_gradient: plate_gradient_norm(mesh, |c, d| mid[c][d], 3),
        rotation_gradient: plate_gradient_norm(mesh, |c, d| rotation[c][d], 2),
        gel_part: element_norm(grid, &gel_part, all, Field::Value),
    };
    Ok(DecompositionReport { mid, rotation, warping, gel_mean, gel_part, warping_mean_max, gel_part_fiber_max, norms })
}

fn phase_nodes(mesh: &MicroMesh, phase: Phase) -> Vec<bool> {
    let mut mark = vec![false; mesh.grid.num_nodes()];
    for e in 0..mesh.grid.num_elements() {
        if mesh.phases[e] == phase {
            for n in mesh.grid.element_nodes(e) {
                mark[n] = true;
            }
        }
    }
    mark
}

#[derive(Clone, Copy)]
pub enum Field {
    Value,
    Gradient,
    Strain,
}

/// L² norm of a nodal vector field, its gradient or its symmetric gradient
/// over the elements with `keep(e)`.
pub fn element_norm(grid: &HexGrid, u: &[f64], keep: impl Fn(usize) -> bool, what: Field) -> f64 {
    let el = HexElement::new(grid.h);
    let mut sum = 0.0;
    for e in 0..grid.num_elements() {
        if !keep(e) {
            continue;
        }
        let nodes = grid.element_nodes(e);
        let mut ue = [0.0; 24];
        for (a, &n) in nodes.iter().enumerate() {
            ue[3 * a..3 * a + 3].copy_from_slice(&u[3 * n..3 * n + 3]);
        }
        for p in &el.points {
            let v = match what {
                Field::Value => (0..3)
                    .map(|d| (0..8).map(|a| p.n[a] * ue[3 * a + d]).sum::<f64>().powi(2))
                    .sum::<f64>(),
                Field::Gradient => hex::gradient(&p.dn, &ue).iter().flatten().map(|g| g * g).sum(),
                Field::Strain => hex::frobenius_sq(&hex::strain(&p.dn, &ue)),
            };
            sum += p.weight * v;
        }
    }
    sum.sqrt()
}

/// L² norm over `ω` of the in-plane gradient of a mid-surface nodal field.
fn plate_gradient_norm(mesh: &MicroMesh, value: impl Fn(usize, usize) -> f64, comps: usize) -> f64 {
    let g = &mesh.grid;
    let (nx, ny) = (g.dims[0], g.dims[1]);
    let (hx, hy) = (g.h[0], g.h[1]);
    let pts = crate::fem::quadrature::gauss_square(2);
    let mut sum = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let c = [i + (nx + 1) * j, i + 1 + (nx + 1) * j, i + 1 + (nx + 1) * (j + 1), i + (nx + 1) * (j + 1)];
            for &(s, w) in &pts {
                let (_, dn) = crate::fem::plate::bilinear([hx, hy], s);
                for d in 0..comps {
                    let gx: f64 = (0..4).map(|a| dn[a][0] * value(c[a], d)).sum();
                    let gy: f64 = (0..4).map(|a| dn[a][1] * value(c[a], d)).sum();
                    sum += w * hx * hy * (gx * gx + gy * gy);
                }
            }
        }
    }
    sum.sqrt()
}

/// Per-cell extension operator from the fiber part into the gel boxes.
pub struct FiberExtension {
    /// Local node `(i, j, k)` of the gel box, offset from the box corner.
    local_dims: [usize; 3],
    lo: [usize; 3],
    fixed: Vec<bool>,
    free_index: Vec<usize>,
    stiffness: CsrMatrix,
    factor: CholeskySolver,
}

impl FiberExtension {
    pub fn new(mesh: &MicroMesh) -> Result<Self> {
        let n = mesh.n;
        let b = crate::geometry::snap_gel_box(&mesh.geometry, n)?.0;
        let local_dims = [b.hi[0] - b.lo[0], b.hi[1] - b.lo[1], b.hi[2] - b.lo[2]];
        let grid = HexGrid { origin: [0.0; 3], h: mesh.grid.h, dims: local_dims };
        let reference = isotropic(1.0, 0.3)?;
        let stiffness = assemble_stiffness_on(&grid, &reference, |_| true);
        let nn = grid.num_nodes();
        let mut fixed = vec![false; nn];
        for (node, f) in fixed.iter_mut().enumerate() {
            let [i, j, k] = grid.node_ijk(node);
            let side = i == 0 || j == 0 || i == local_dims[0] || j == local_dims[1];
            let cap = (k == 0 && b.lo[2] > 0) || (k == local_dims[2] && b.hi[2] < 2 * n);
            *f = side || cap;
        }
        let mut free_index = vec![usize::MAX; 3 * nn];
        let mut count = 0;
        for node in 0..nn {
            if !fixed[node] {
                for d in 0..3 {
                    free_index[3 * node + d] = count;
                    count += 1;
                }
            }
        }
        let mut trip = Vec::new();
        for r in 0..3 * nn {
            if free_index[r] == usize::MAX {
                continue;
            }
            let (cols, vals) = stiffness.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if free_index[c] != usize::MAX {
                    trip.push((free_index[r], free_index[c], v));
                }
            }
        }
        let factor = CholeskySolver::new(CsrMatrix::from_triplets(count, count, trip))?;
        Ok(Self { local_dims, lo: b.lo, fixed, free_index, stiffness, factor })
    }

    fn local_grid_node(&self, i: usize, j: usize, k: usize) -> usize {
        i + (self.local_dims[0] + 1) * (j + (self.local_dims[1] + 1) * k)
    }

    /// Replace the values on the free gel-box nodes of every cell by the
    /// extension of the fiber data.
    pub fn apply(&self, mesh: &MicroMesh, u: &[f64]) -> Result<Vec<f64>> {
        let n = mesh.n;
        let fiber = phase_nodes(mesh, Phase::Fiber);
        let [dx, dy, dz] = self.local_dims;
        let per_cell: Vec<Result<Vec<(usize, [f64; 3])>>> = (0..mesh.num_cells())
            .into_par_iter()
            .map(|cell| {
                // affine least-squares fit to the fiber nodes of the cell
                let origin = mesh.cell_origin(cell);
                let center = [origin[0] + 0.5 * mesh.eps, origin[1] + 0.5 * mesh.eps, 0.0];
                let mut ata = nalgebra::Matrix4::<f64>::zeros();
                let mut atb = [nalgebra::Vector4::<f64>::zeros(); 3];
                for k in 0..=2 * n {
                    for j in 0..=n {
                        for i in 0..=n {
                            let node = mesh.cell_node(cell, i, j, k);
                            if !fiber[node] {
                                continue;
                            }
                            let x = mesh.grid.node_coord(node);
                            let row = nalgebra::Vector4::new(1.0, x[0] - center[0], x[1] - center[1], x[2] - center[2]);
                            ata += row * row.transpose();
                            for d in 0..3 {
                                atb[d] += row * u[3 * node + d];
                            }
                        }
                    }
                }
                let chol = ata
                    .cholesky()
                    .ok_or_else(|| Error::Geometry(format!("cell {cell}: fiber trace does not determine an affine fit")))?;
                let coef: [nalgebra::Vector4<f64>; 3] = std::array::from_fn(|d| chol.solve(&atb[d]));
                let affine = |x: [f64; 3]| -> [f64; 3] {
                    std::array::from_fn(|d| {
                        coef[d][0] + coef[d][1] * (x[0] - center[0]) + coef[d][2] * (x[1] - center[1]) + coef[d][3] * (x[2] - center[2])
                    })
                };
                let micro = |i: usize, j: usize, k: usize| mesh.cell_node(cell, self.lo[0] + i, self.lo[1] + j, self.lo[2] + k);
                let nl = (dx + 1) * (dy + 1) * (dz + 1);
                let mut boundary = vec![0.0; 3 * nl];
                for k in 0..=dz {
                    for j in 0..=dy {
                        for i in 0..=dx {
                            let l = self.local_grid_node(i, j, k);
                            if self.fixed[l] {
                                let node = micro(i, j, k);
                                let a = affine(mesh.grid.node_coord(node));
                                for d in 0..3 {
                                    boundary[3 * l + d] = u[3 * node + d] - a[d];
                                }
                            }
                        }
                    }
                }
                let kb = self.stiffness.mul_vec(&boundary);
                let mut rhs = vec![0.0; self.factor.dim()];
                for r in 0..3 * nl {
                    if self.free_index[r] != usize::MAX {
                        rhs[self.free_index[r]] = -kb[r];
                    }
                }
                let x = self.factor.solve(&rhs)?;
                let mut out = Vec::new();
                for k in 0..=dz {
                    for j in 0..=dy {
                        for i in 0..=dx {
                            let l = self.local_grid_node(i, j, k);
                            if self.fixed[l] {
                                continue;
                            }
                            let node = micro(i, j, k);
                            let a = affine(mesh.grid.node_coord(node));
                            out.push((node, std::array::from_fn(|d| a[d] + x[self.free_index[3 * l + d]])));
                        }
                    }
                }
                Ok(out)
            })
            .collect();
        let mut w = u.to_vec();
        for cell in per_cell {
            for (node, v) in cell? {
                w[3 * node..3 * node + 3].copy_from_slice(&v);
            }
        }
        Ok(w)
    }
}

/// Extension `𝐰_ε` of the fiber part of `u` into the gel.
pub fn extend_fiber(mesh: &MicroMesh, u: &[f64]) -> Result<Vec<f64>> {
    FiberExtension::new(mesh)?.apply(mesh, u)
}

/// Largest ratio `‖e(𝐰)‖_cell / ‖e(U)‖_fiber of cell` over random fiber data.
pub fn extension_constant(mesh: &MicroMesh, samples: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let ext = FiberExtension::new(mesh)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u: Vec<f64> = (0..3 * mesh.grid.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = ext.apply(mesh, &u)?;
        for cell in 0..mesh.num_cells() {
            let in_cell = |e: usize| mesh.cell_of_element[e] == cell;
            let top = element_norm(&mesh.grid, &w, in_cell, Field::Strain);
            let bottom = element_norm(&mesh.grid, &u, |e| in_cell(e) && mesh.phases[e] == Phase::Fiber, Field::Strain);
            worst = worst.max(top / bottom);
        }
    }
    Ok(worst)
}

/// Discrete Korn constant `C` in `‖∇U‖ ≤ (C/ε) ‖e(U)‖` over clamped fields.
pub fn korn_constant(mesh: &MicroMesh) -> Result<f64> {
    let clamp = ConstraintSet::clamp(mesh.lateral_nodes.iter().flat_map(|&n| [3 * n, 3 * n + 1, 3 * n + 2]));
    let map = DofMap::new(3 * mesh.grid.num_nodes(), &clamp)?;
    let grad = map.reduce_matrix(&assemble_gradient_gram(&mesh.grid)).to_dense();
    let strain = map.reduce_matrix(&assemble_strain_gram(&mesh.grid)).to_dense();
    let lambda = max_generalized_eigenvalue(&grad, &strain)?;
    Ok(mesh.eps * lambda.sqrt())
}

/// Largest `λ` with `A x = λ B x`, `B` SPD.
pub fn max_generalized_eigenvalue(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let l = b.clone().cholesky().ok_or_else(|| Error::Eigen("right-hand matrix is not positive definite".into()))?.l();
    let linv = l.solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows())).ok_or_else(|| Error::Eigen("singular factor".into()))?;
    let s = &linv * a * linv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    Ok(SymmetricEigen::new(s).eigenvalues.max())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_micro_mesh, CellGeometry, Rect};

    fn small(eps: f64, n: usize) -> MicroMesh {
        build_micro_mesh(&CellGeometry::default(), eps, &Rect::unit(), n).unwrap()
    }

    fn system(eps: f64, n: usize, biot: BiotParams) -> GalerkinSystem {
        assemble_micro(&small(eps, n), &HookeTensor::default(), &biot, eps).unwrap()
    }

    fn loads() -> LoadSpec {
        LoadSpec::constant([0.5, 0.0, 1.0], 1.0)
    }

    #[test]
    fn operator_properties() {
        let sys = system(0.5, 4, BiotParams::default());
        assert!(sys.stiffness.is_symmetric(1e-12));
        assert!(sys.diffusion.is_symmetric(1e-12));
        // constant pressure on one gel component is in ker(D)
        let cell0: Vec<f64> = (0..sys.num_pressure())
            .map(|i| {
                let node = sys.mesh.gel_dofs.dof_to_node[i];
                let x = sys.mesh.grid.node_coord(node);
                if x[0] < 0.5 && x[1] < 0.5 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        assert!(norm(&sys.diffusion.mul_vec(&cell0)) < 1e-12);
        // ε² scaling of D
        let raw = assemble_scalar_diffusion(&sys.mesh, &sys.mesh.gel_dofs, &sys.biot.k).unwrap();
        assert!((sys.diffusion.max_abs() - 0.25 * raw.max_abs()).abs() < 1e-14);
    }

    #[test]
    fn zero_data_stays_zero() {
        let sys = system(0.5, 4, BiotParams::default());
        for method in [Stepper::Monolithic, Stepper::Schur] {
            let tr = run_transient(&sys, 1.0, 3, &LoadSpec::zero(), method, None).unwrap();
            assert_eq!(tr.final_state.max_abs(), 0.0);
        }
    }

    #[test]
    fn two_paths_agree() {
        let sys = system(0.5, 4, BiotParams::default());
        let mono = run_transient(&sys, 1.0, 4, &loads(), Stepper::Monolithic, None).unwrap();
        let schur = run_transient(&sys, 1.0, 4, &loads(), Stepper::Schur, None).unwrap();
        for (a, b) in mono.steps.iter().zip(&schur.steps) {
            assert!((a.strain - b.strain).abs() <= 1e-9 * a.strain);
            assert!((a.pressure - b.pressure).abs() <= 1e-9 * a.pressure);
        }
        let du: Vec<f64> = mono.final_state.u.iter().zip(&schur.final_state.u).map(|(a, b)| a - b).collect();
        assert!(norm(&du) <= 1e-8 * norm(&mono.final_state.u));
    }

    #[test]
    fn decoupled_when_alpha_zero() {
        let biot = BiotParams { alpha: 0.0, ..Default::default() };
        let sys = system(0.5, 4, biot.clone());
        let spec = LoadSpec::constant([0.0, 0.0, 1.0], 1.0);
        let dt = 0.25;
        let s1 = step_monolithic(&sys, &MicroState::zero(&sys), dt, &spec).unwrap();
        // displacement is the static elastic solve
        let (f, g) = sys.loads(&spec, dt);
        let a = CholeskySolver::new(sys.stiffness.clone()).unwrap().solve(&f).unwrap();
        let du: Vec<f64> = sys.map.compress(&s1.u).iter().zip(&a).map(|(x, y)| x - y).collect();
        assert!(norm(&du) < 1e-10 * norm(&a));
        // pressure solves (M + dt D) b = dt G
        let m = sys.mass.add_scaled(dt, &sys.diffusion).unwrap();
        let b = CholeskySolver::new(m).unwrap().solve(&g.iter().map(|v| dt * v).collect::<Vec<_>>()).unwrap();
        let dp: Vec<f64> = s1.p.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm(&dp) < 1e-10 * norm(&b));
    }

    #[test]
    fn first_order_consistency() {
        let sys = system(0.5, 4, BiotParams::default());
        let spec = LoadSpec { h: "1:0:0:1".parse().unwrap(), ..LoadSpec::zero() };
        let run = |n| run_transient(&sys, 0.4, n, &spec, Stepper::Monolithic, None).unwrap().final_state;
        let (s1, s2, s4) = (run(4), run(8), run(16));
        let diff = |a: &MicroState, b: &MicroState| {
            let dp: Vec<f64> = a.p.iter().zip(&b.p).map(|(x, y)| x - y).collect();
            sys.pressure_norm(&dp)
        };
        let ratio = diff(&s1, &s2) / diff(&s2, &s4);
        assert!((1.6..2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn linear_in_loads() {
        let sys = system(0.5, 4, BiotParams::default());
        let a = run_transient(&sys, 1.0, 2, &loads(), Stepper::Monolithic, None).unwrap();
        let b = run_transient(&sys, 1.0, 2, &loads().scaled(2.0), Stepper::Monolithic, None).unwrap();
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert!((2.0 * x.strain - y.strain).abs() < 1e-10 * y.strain);
            assert!((2.0 * x.pressure - y.pressure).abs() < 1e-10 * y.pressure);
        }
    }

    #[test]
    fn energy_decays_after_switch_off() {
        let sys = system(0.5, 4, BiotParams::default());
        let spec = LoadSpec { switch_off: Some(0.5), ..loads() };
        let tr = run_transient(&sys, 1.0, 8, &spec, Stepper::Monolithic, None).unwrap();
        let after: Vec<f64> = tr.steps.iter().filter(|s| s.t > 0.5 + 1e-12).map(|s| s.energy).collect();
        assert!(after.len() >= 3);
        for w in after.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rejects_bad_step() {
        let sys = system(0.5, 4, BiotParams::default());
        assert!(MicroSolver::new(&sys, 0.0, Stepper::Monolithic).is_err());
        assert!(run_transient(&sys, 1.0, 0, &loads(), Stepper::Schur, None).is_err());
    }

    fn field(mesh: &MicroMesh, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
        (0..mesh.grid.num_nodes()).flat_map(|n| f(mesh.grid.node_coord(n))).collect()
    }

    #[test]
    fn griso_elementary_fields() {
        let mesh = small(0.5, 4);
        let r = griso_decompose(&mesh, &field(&mesh, |_| [0.3, -0.2, 0.0])).unwrap();
        assert!(r.mid.iter().all(|m| (m[0] - 0.3).abs() < 1e-14 && (m[1] + 0.2).abs() < 1e-14));
        assert!(r.rotation.iter().all(|q| q[0].abs() < 1e-14 && q[1].abs() < 1e-14));
        assert!(r.warping.iter().all(|w| w.abs() < 1e-14));

        let g = |x: f64, y: f64| x * x - 0.5 * y;
        let r = griso_decompose(&mesh, &field(&mesh, |x| [x[2] * g(x[0], x[1]), 0.0, 0.0])).unwrap();
        for (c, q) in r.rotation.iter().enumerate() {
            let node = mesh.grid.node_coord(c);
            assert!((q[0] - g(node[0], node[1])).abs() < 1e-13);
            assert!(r.mid[c][0].abs() < 1e-14);
        }
    }

    #[test]
    fn griso_kirchhoff_love_field() {
        let mesh = small(0.5, 4);
        let phi = |x: f64, y: f64| (x * (1.0 - x) * y).powi(2);
        let dphi = |x: f64, y: f64| {
            let s = x * (1.0 - x) * y;
            [2.0 * s * (1.0 - 2.0 * x) * y, 2.0 * s * x * (1.0 - x)]
        };
        let u = field(&mesh, |x| {
            let d = dphi(x[0], x[1]);
            [-x[2] * d[0], -x[2] * d[1], phi(x[0], x[1])]
        });
        let r = griso_decompose(&mesh, &u).unwrap();
        assert!(r.warping.iter().all(|w| w.abs() < 1e-13));
        assert!(r.warping_mean_max < 1e-13);
        for c in 0..r.rotation.len() {
            let x = mesh.grid.node_coord(c);
            let d = dphi(x[0], x[1]);
            assert!((r.rotation[c][0] + d[0]).abs() < 1e-13 && (r.rotation[c][1] + d[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn extension_reproduces_affine_and_bounds_random() {
        let mesh = small(0.5, 4);
        let s = [[0.2, 0.05, -0.1], [0.05, -0.3, 0.07], [-0.1, 0.07, 0.15]];
        let u = field(&mesh, |x| std::array::from_fn(|i| (0..3).map(|j| s[i][j] * x[j]).sum::<f64>() + 0.1));
        let w = extend_fiber(&mesh, &u).unwrap();
        assert!(u.iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-12));
        let r = griso_decompose(&mesh, &u).unwrap();
        assert!(r.gel_part.iter().all(|v| v.abs() < 1e-12));

        let rigid = field(&mesh, |x| [0.1 - 0.3 * x[1], 0.2 + 0.3 * x[0] + 0.4 * x[2], -0.4 * x[1]]);
        let w = extend_fiber(&mesh, &rigid).unwrap();
        assert!(element_norm(&mesh.grid, &w, |_| true, Field::Strain) < 1e-12);

        let c = extension_constant(&mesh, 3, 7).unwrap();
        assert!(c.is_finite() && c > 0.0 && c < 100.0, "extension constant {c}");
    }

    #[test]
    fn gel_part_vanishes_on_fiber() {
        let mesh = small(0.5, 4);
        let u = field(&mesh, |x| [(3.0 * x[0]).sin(), x[1] * x[2], (x[0] * x[1]).cos()]);
        let r = griso_decompose(&mesh, &u).unwrap();
        assert!(r.gel_part_fiber_max < 1e-14);
    }

    #[test]
    fn korn_constant_is_finite() {
        let c = korn_constant(&small(0.5, 4)).unwrap();
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn slope_fit() {
        let x = [0.25, 0.125, 0.0625];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }
}
