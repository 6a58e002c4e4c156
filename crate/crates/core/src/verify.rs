//! Acceptance checks, one per criterion, shared by the test suite and the CLI.

use std::fmt;
use std::time::Instant;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cell::{compute_homogenized, membrane_bounds, solve_correctors, CellData, HomogenizedTensor};
use crate::error::{Error, Result};
use crate::geometry::{build_cell_mesh, build_micro_mesh, build_plate_mesh, CellGeometry, MicroMesh, Rect};
use crate::material::{isotropic, BiotParams, HookeTensor, LoadSpec};
use crate::micro::{assemble_micro, griso_decompose, log_slope, run_transient, Stepper};
use crate::twoscale::{
    assemble_macro, assemble_mup, gradient_identity_error, kirchhoff_love_residual, micro_l2_sq, norm_equivalence_spectrum_on,
    run_macro, run_mup, trajectory_deviation, unfold, KirchhoffLoveResidual, MacroState, MacroSystem, WarpingMap,
    DEFAULT_DOF_BUDGET, PLATE_DOFS,
};

pub const HOMOGENEOUS_COUPLING_TOL: f64 = 1e-10;
pub const PLANE_STRESS_TOL: f64 = 0.01;
/// Errors below this are round-off and count as converged.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-12;
pub const DEFINITENESS_TOL: f64 = 1e-10;
pub const BOUNDS_SLACK: f64 = 1e-10;
pub const STEPPER_AGREEMENT_TOL: f64 = 1e-7;
pub const SLOPE_WINDOW: (f64, f64) = (1.3, 1.7);
pub const ORACLE_TOL: f64 = 1e-6;
pub const UNFOLD_TOL: f64 = 1e-12;
pub const UNFOLD_SAMPLES: usize = 10;
pub const ZERO_TOL: f64 = 1e-12;
/// Relative slack for round-off in "non-increasing".
pub const DECAY_SLACK: f64 = 1e-12;
pub const SPECTRUM_SPREAD: f64 = 2.0;
pub const DECOMPOSITION_TOL: f64 = 1e-12;
pub const WARPING_MEAN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub id: usize,
    pub name: &'static str,
    pub verdict: Verdict,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{:<2} {:<7} {:<34} {} ({:.1} s)", self.id, self.verdict, self.name, self.detail, self.seconds)
    }
}

pub const CHECK_NAMES: [&str; 10] = [
    "corrector correctness",
    "homogenized tensor admissibility",
    "two-path micro equivalence",
    "a-priori scaling",
    "corrector-elimination oracle",
    "kirchhoff-love convergence",
    "unfolding identities",
    "zero data and energy decay",
    "norm-equivalence spectrum",
    "decomposition diagnostics",
];

/// Inputs shared by the checks.
#[derive(Clone, Debug)]
pub struct VerifySettings {
    pub geometry: CellGeometry,
    pub tensor: HookeTensor,
    pub biot: BiotParams,
    pub omega: Rect,
    pub loads: LoadSpec,
    pub t_final: f64,
    pub seed: u64,
    pub budget: usize,
    /// Added to every coupling entry of the homogenized tensor used on the
    /// macro side of the oracle check (fault injection).
    pub coupling_tamper: f64,
    pub study: StudySettings,
}

#[derive(Clone, Debug)]
pub struct StudySettings {
    pub eps: Vec<f64>,
    pub cell_n: usize,
    pub plate_m: usize,
    pub nsteps: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            geometry: CellGeometry::default(),
            tensor: HookeTensor::default(),
            biot: BiotParams::default(),
            omega: Rect::unit(),
            loads: LoadSpec::constant([0.5, 0.0, 1.0], 1.0),
            t_final: 1.0,
            seed: 7,
            budget: DEFAULT_DOF_BUDGET,
            coupling_tamper: 0.0,
            study: StudySettings { eps: vec![0.25, 0.125, 0.0625], cell_n: 4, plate_m: 16, nsteps: 8 },
        }
    }
}

fn timed(id: usize, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let start = Instant::now();
    let (verdict, detail) = match f() {
        Ok((ok, detail)) => (if ok { Verdict::Pass } else { Verdict::Fail }, detail),
        Err(e) => (Verdict::Fail, format!("error: {e}")),
    };
    CheckOutcome { id, name: CHECK_NAMES[id - 1], verdict, detail, seconds: start.elapsed().as_secs_f64() }
}

fn plane_stress(e: f64, nu: f64) -> Matrix3<f64> {
    let s = e / (1.0 - nu * nu);
    Matrix3::new(s, s * nu, 0.0, s * nu, s, 0.0, 0.0, 0.0, s * (1.0 - nu) / 2.0)
}

fn rel_max(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a - b).abs().max() / b.abs().max()
}

/// Homogenized tensor of a homogeneous isotropic cell at resolution `n`.
pub fn homogeneous_tensor(geometry: &CellGeometry, n: usize) -> Result<HomogenizedTensor> {
    let mesh = build_cell_mesh(geometry, n)?;
    let tensor = HookeTensor::homogeneous(isotropic(1.0, 0.3)?);
    let chi = solve_correctors(&mesh, &tensor)?;
    compute_homogenized(&mesh, &tensor, &chi)
}

pub fn check_correctors(s: &VerifySettings) -> CheckOutcome {
    timed(1, || {
        let reference = plane_stress(1.0, 0.3);
        let coarse = homogeneous_tensor(&s.geometry, 4)?;
        let fine = homogeneous_tensor(&s.geometry, 8)?;
        let errs = |h: &HomogenizedTensor| {
            (h.coupling().abs().max(), rel_max(&h.membrane(), &reference), rel_max(&(h.bending() * 3.0), &h.membrane()))
        };
        let (b4, a4, c4) = errs(&coarse);
        let (b8, a8, c8) = errs(&fine);
        let ok = b4 <= HOMOGENEOUS_COUPLING_TOL
            && b8 <= HOMOGENEOUS_COUPLING_TOL
            && a8 <= PLANE_STRESS_TOL
            && c8 <= PLANE_STRESS_TOL
            && (a8 < a4 || a8 <= ROUNDOFF_FLOOR)
            && (c8 < c4 || c8 <= ROUNDOFF_FLOOR);
        Ok((ok, format!("|b|={b8:.1e} a err {a4:.2e}->{a8:.2e} c err {c4:.2e}->{c8:.2e}")))
    })
}

/// Smallest eigenvalue of the symmetric part.
pub fn loewner_min(a: &Matrix3<f64>) -> f64 {
    SymmetricEigen::new((a + a.transpose()) * 0.5).eigenvalues.min()
}

pub fn check_admissibility(s: &VerifySettings, n: usize) -> CheckOutcome {
    timed(2, || {
        let mesh = build_cell_mesh(&s.geometry, n)?;
        let chi = solve_correctors(&mesh, &s.tensor)?;
        let hom = compute_homogenized(&mesh, &s.tensor, &chi)?;
        let (upper, lower) = membrane_bounds(&mesh, &s.tensor);
        let a = hom.membrane();
        let scale = a.abs().max();
        let below = loewner_min(&(upper - a)) / scale;
        let above = loewner_min(&(a - lower)) / scale;
        let lmin = hom.min_eigenvalue();
        let asym = hom.asymmetry();
        let ok = asym <= SYMMETRY_TOL && lmin > DEFINITENESS_TOL && below >= -BOUNDS_SLACK && above >= -BOUNDS_SLACK;
        Ok((ok, format!("asym {asym:.1e} lambda_min {lmin:.4e} voigt gap {below:.2e} reuss gap {above:.2e}")))
    })
}

fn micro_mesh(s: &VerifySettings, eps: f64, n: usize) -> Result<MicroMesh> {
    build_micro_mesh(&s.geometry, eps, &s.omega, n)
}

pub fn check_steppers(s: &VerifySettings) -> CheckOutcome {
    timed(3, || {
        let mesh = micro_mesh(s, 0.25, 4)?;
        let sys = assemble_micro(&mesh, &s.tensor, &s.biot, 0.25)?;
        let mono = run_transient(&sys, s.t_final, 16, &s.loads, Stepper::Monolithic, None)?;
        let schur = run_transient(&sys, s.t_final, 16, &s.loads, Stepper::Schur, None)?;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
        let worst = mono
            .steps
            .iter()
            .zip(&schur.steps)
            .map(|(m, c)| rel(m.strain, c.strain).max(rel(m.pressure, c.pressure)))
            .fold(0.0, f64::max);
        Ok((worst <= STEPPER_AGREEMENT_TOL, format!("max relative gap {worst:.2e} over 16 steps")))
    })
}

/// Micro runs along the ε sequence, with the matching macro solution.
#[derive(Clone, Debug)]
pub struct ConvergenceStudy {
    pub eps: Vec<f64>,
    pub max_strain: Vec<f64>,
    pub max_pressure: Vec<f64>,
    pub residuals: Vec<KirchhoffLoveResidual>,
}

impl ConvergenceStudy {
    pub fn strain_slope(&self) -> f64 {
        log_slope(&self.eps, &self.max_strain)
    }

    pub fn pressure_slope(&self) -> f64 {
        log_slope(&self.eps, &self.max_pressure)
    }

    /// Every residual column strictly decreases along the sequence.
    pub fn monotone(&self) -> [bool; 4] {
        std::array::from_fn(|i| self.residuals.windows(2).all(|w| w[1].errors()[i] < w[0].errors()[i]))
    }
}

pub fn convergence_study(s: &VerifySettings) -> Result<ConvergenceStudy> {
    let st = &s.study;
    let cell_mesh = build_cell_mesh(&s.geometry, st.cell_n)?;
    let cell = CellData::new(&cell_mesh, &s.tensor, &s.biot, 1e-12)?;
    let plate = build_plate_mesh(&s.omega, st.plate_m)?;
    let mac_sys = assemble_macro(&cell.tensor, &cell.op, &cell.moments, &plate, &s.biot)?;
    let mac = run_macro(&mac_sys, s.t_final, st.nsteps, &s.loads)?;
    let last = mac.last().ok_or_else(|| Error::InvalidArgument("empty macro run".into()))?;
    let warp = WarpingMap::new(&cell.op, &cell.correctors, &mac_sys, &last.p)?;
    let mut out = ConvergenceStudy { eps: Vec::new(), max_strain: Vec::new(), max_pressure: Vec::new(), residuals: Vec::new() };
    for &eps in &st.eps {
        let mesh = micro_mesh(s, eps, st.cell_n)?;
        let sys = assemble_micro(&mesh, &s.tensor, &s.biot, eps)?;
        let traj = run_transient(&sys, s.t_final, st.nsteps, &s.loads, Stepper::Monolithic, None)?;
        let fin = &traj.final_state;
        let r = kirchhoff_love_residual(&mesh, &fin.u, &fin.p, &cell, &mac_sys, last, Some(&warp))?;
        log::info!("eps {eps}: strain {:.3e} pressure {:.3e} residuals {:?}", traj.max_strain(), traj.max_pressure(), r.errors());
        out.eps.push(eps);
        out.max_strain.push(traj.max_strain());
        out.max_pressure.push(traj.max_pressure());
        out.residuals.push(r);
    }
    Ok(out)
}

fn in_window(v: f64) -> bool {
    v >= SLOPE_WINDOW.0 && v <= SLOPE_WINDOW.1
}

pub fn check_scaling(study: &Result<ConvergenceStudy>) -> CheckOutcome {
    timed(4, || {
        let st = study.as_ref().map_err(|e| Error::InvalidArgument(format!("study failed: {e}")))?;
        let (a, b) = (st.strain_slope(), st.pressure_slope());
        Ok((in_window(a) && in_window(b), format!("slopes strain {a:.3} pressure {b:.3}")))
    })
}

pub fn check_convergence(study: &Result<ConvergenceStudy>) -> CheckOutcome {
    timed(6, || {
        let st = study.as_ref().map_err(|e| Error::InvalidArgument(format!("study failed: {e}")))?;
        let mono = st.monotone();
        let cols: Vec<String> = (0..4)
            .map(|i| st.residuals.iter().map(|r| format!("{:.2e}", r.errors()[i])).collect::<Vec<_>>().join(">"))
            .collect();
        Ok((mono.iter().all(|&m| m), format!("in-plane {} | deflection {} | strain {} | pressure {}", cols[0], cols[1], cols[2], cols[3])))
    })
}

pub fn check_oracle(s: &VerifySettings) -> CheckOutcome {
    timed(5, || {
        let mesh = build_cell_mesh(&s.geometry, 4)?;
        let cell = CellData::new(&mesh, &s.tensor, &s.biot, 1e-12)?;
        let plate = build_plate_mesh(&s.omega, 4)?;
        let mut hom = cell.tensor.clone();
        if s.coupling_tamper != 0.0 {
            hom.perturb_coupling(s.coupling_tamper);
        }
        let mac_sys = assemble_macro(&hom, &cell.op, &cell.moments, &plate, &s.biot)?;
        let mac = run_macro(&mac_sys, s.t_final, 8, &s.loads)?;
        let sys = assemble_mup(&cell.op, &plate, &s.biot, s.budget)?;
        let mup = run_mup(&sys, &s.loads, s.t_final, 8)?;
        let dev = trajectory_deviation(&mup, &mac, &mac_sys.gel_weights)?;
        Ok((
            dev.iter().all(|&d| d <= ORACLE_TOL),
            format!("W1 {:.1e} W2 {:.1e} W3 {:.1e} p_m {:.1e} ({} dofs)", dev[0], dev[1], dev[2], dev[3], sys.num_dofs()),
        ))
    })
}

pub fn check_unfolding(s: &VerifySettings) -> CheckOutcome {
    timed(7, || {
        let mesh = micro_mesh(s, 0.25, 4)?;
        let cell = build_cell_mesh(&s.geometry, 4)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let (mut grad, mut iso) = (0.0f64, 0.0f64);
        for k in 0..UNFOLD_SAMPLES {
            let comps = if k % 2 == 0 { 1 } else { 3 };
            let exponent = (k % 3) as f64;
            let psi: Vec<f64> = (0..comps * mesh.grid.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u = unfold(&psi, comps, &mesh, &cell, exponent)?;
            grad = grad.max(gradient_identity_error(&psi, &u, &mesh, &cell.grid)?);
            let expect = mesh.eps.powf(-2.0 * exponent) / mesh.eps * micro_l2_sq(&psi, comps, &mesh);
            iso = iso.max((u.l2_sq(&cell.grid) - expect).abs() / expect);
        }
        Ok((grad <= UNFOLD_TOL && iso <= UNFOLD_TOL, format!("gradient {grad:.1e} isometry {iso:.1e}")))
    })
}

fn non_increasing(e: &[f64]) -> bool {
    e.windows(2).all(|w| w[1] <= w[0] * (1.0 + DECAY_SLACK))
}

pub fn check_zero_and_decay(s: &VerifySettings) -> CheckOutcome {
    timed(8, || {
        let mesh = micro_mesh(s, 0.25, 4)?;
        let sys = assemble_micro(&mesh, &s.tensor, &s.biot, 0.25)?;
        let zero = run_transient(&sys, s.t_final, 4, &LoadSpec::zero(), Stepper::Monolithic, None)?;
        let micro_zero = zero.final_state.max_abs();

        let cmesh = build_cell_mesh(&s.geometry, 4)?;
        let cell = CellData::new(&cmesh, &s.tensor, &s.biot, 1e-12)?;
        let plate = build_plate_mesh(&s.omega, 4)?;
        let mac_sys = assemble_macro(&cell.tensor, &cell.op, &cell.moments, &plate, &s.biot)?;
        let mac_zero = run_macro(&mac_sys, s.t_final, 4, &LoadSpec::zero())?;
        let macro_zero = mac_zero.iter().flat_map(|st| st.w.iter().chain(&st.p)).fold(0.0f64, |m, v| m.max(v.abs()));

        let off = 0.5 * s.t_final;
        let loads = LoadSpec { switch_off: Some(off), ..s.loads.clone() };
        let traj = run_transient(&sys, s.t_final, 8, &loads, Stepper::Monolithic, None)?;
        let micro_e: Vec<f64> = traj.steps.iter().filter(|n| n.t > off + 1e-12).map(|n| n.energy).collect();
        let mac = run_macro(&mac_sys, s.t_final, 8, &loads)?;
        let macro_e: Vec<f64> = mac.iter().filter(|st| st.t > off + 1e-12).map(|st| mac_sys.energy(st)).collect();
        let ok = micro_zero <= ZERO_TOL
            && macro_zero <= ZERO_TOL
            && non_increasing(&micro_e)
            && non_increasing(&macro_e)
            && micro_e.first().is_some_and(|&e| e > 0.0);
        Ok((
            ok,
            format!(
                "zero max {:.1e}/{:.1e} energy micro {:.3e}->{:.3e} macro {:.3e}->{:.3e}",
                micro_zero,
                macro_zero,
                micro_e.first().copied().unwrap_or(f64::NAN),
                micro_e.last().copied().unwrap_or(f64::NAN),
                macro_e.first().copied().unwrap_or(f64::NAN),
                macro_e.last().copied().unwrap_or(f64::NAN)
            ),
        ))
    })
}

pub fn check_spectrum() -> CheckOutcome {
    timed(9, || {
        let mins: Vec<f64> = (2..=4).map(|n| norm_equivalence_spectrum_on(n).map(|r| r.c_min)).collect::<Result<_>>()?;
        let lo = mins.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = mins.iter().copied().fold(0.0, f64::max);
        Ok((lo > 0.0 && hi <= SPECTRUM_SPREAD * lo, format!("c_min n=2,3,4: {:.4e} {:.4e} {:.4e}", mins[0], mins[1], mins[2])))
    })
}

/// Mid-surface coordinates of the decomposition columns.
fn column_coords(mesh: &MicroMesh) -> Vec<[f64; 2]> {
    let g = &mesh.grid;
    let mut out = Vec::with_capacity((g.dims[0] + 1) * (g.dims[1] + 1));
    for j in 0..=g.dims[1] {
        for i in 0..=g.dims[0] {
            out.push([g.origin[0] + i as f64 * g.h[0], g.origin[1] + j as f64 * g.h[1]]);
        }
    }
    out
}

type Mid = fn([f64; 2]) -> [f64; 3];
type Rot = fn([f64; 2]) -> [f64; 2];

fn decomposition_error(mesh: &MicroMesh, mid: Mid, rot: Rot) -> Result<(f64, f64)> {
    let mut u = vec![0.0; 3 * mesh.grid.num_nodes()];
    for node in 0..mesh.grid.num_nodes() {
        let x = mesh.grid.node_coord(node);
        let (m, r) = (mid([x[0], x[1]]), rot([x[0], x[1]]));
        u[3 * node] = m[0] + x[2] * r[0];
        u[3 * node + 1] = m[1] + x[2] * r[1];
        u[3 * node + 2] = m[2];
    }
    let rep = griso_decompose(mesh, &u)?;
    let mut err = 0.0f64;
    for (c, x) in column_coords(mesh).iter().enumerate() {
        let (m, r) = (mid(*x), rot(*x));
        for d in 0..3 {
            err = err.max((rep.mid[c][d] - m[d]).abs());
        }
        for d in 0..2 {
            err = err.max((rep.rotation[c][d] - r[d]).abs());
        }
    }
    let warp = rep.warping.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((err.max(warp), rep.warping_mean_max))
}

pub fn check_decomposition(s: &VerifySettings) -> CheckOutcome {
    timed(10, || {
        let mesh = micro_mesh(s, 0.25, 4)?;
        // elementary displacement with independent mid-surface and rotation
        let (e1, m1) = decomposition_error(
            &mesh,
            |x| [x[0] + 0.5 * x[1] * x[1], x[0] * x[1], x[0] * x[0] - x[1]],
            |x| [0.3 * x[0], 0.1 - 0.2 * x[1]],
        )?;
        // Kirchhoff–Love: rotation is minus the slope of W₃ = x²y − x
        let (e2, m2) = decomposition_error(
            &mesh,
            |x| [0.2 * x[1], -0.1 * x[0], x[0] * x[0] * x[1] - x[0]],
            |x| [-(2.0 * x[0] * x[1] - 1.0), -(x[0] * x[0])],
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        let u: Vec<f64> = (0..3 * mesh.grid.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m3 = griso_decompose(&mesh, &u)?.warping_mean_max;
        let exact = e1.max(e2);
        let mean = m1.max(m2).max(m3);
        Ok((exact <= DECOMPOSITION_TOL && mean <= WARPING_MEAN_TOL, format!("reproduction {exact:.1e} warping mean {mean:.1e}")))
    })
}

/// Run the selected checks (all when `only` is empty) in criterion order.
pub fn run_all(s: &VerifySettings, only: &[usize]) -> Vec<CheckOutcome> {
    let want = |id: usize| only.is_empty() || only.contains(&id);
    let study = if want(4) || want(6) { Some(convergence_study(s)) } else { None };
    let mut out = Vec::new();
    for id in 1..=10 {
        if !want(id) {
            continue;
        }
        out.push(match id {
            1 => check_correctors(s),
            2 => check_admissibility(s, 8),
            3 => check_steppers(s),
            4 => check_scaling(study.as_ref().expect("study")),
            5 => check_oracle(s),
            6 => check_convergence(study.as_ref().expect("study")),
            7 => check_unfolding(s),
            8 => check_zero_and_decay(s),
            9 => check_spectrum(),
            _ => check_decomposition(s),
        });
    }
    out
}

/// Skipped outcome for a criterion that was not run.
pub fn skipped(id: usize, why: &str) -> CheckOutcome {
    CheckOutcome { id, name: CHECK_NAMES[id - 1], verdict: Verdict::Skipped, detail: why.to_string(), seconds: 0.0 }
}

/// Largest `|W₃|` over plate nodes, for reports.
pub fn max_deflection(state: &MacroState, sys: &MacroSystem) -> f64 {
    (0..sys.plate.num_nodes()).map(|a| state.w[PLATE_DOFS * a + 2].abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_line_format() {
        let o = skipped(3, "not requested");
        let line = o.to_string();
        assert!(line.starts_with("C3  skipped"));
        assert!(line.contains("two-path micro equivalence"));
        let pass = CheckOutcome { verdict: Verdict::Pass, ..skipped(1, "") };
        assert!(pass.to_string().starts_with("C1  pass    corrector correctness"));
    }

    #[test]
    fn fast_checks_pass() {
        let s = VerifySettings::default();
        for o in [check_unfolding(&s), check_spectrum(), check_decomposition(&s)] {
            assert_eq!(o.verdict, Verdict::Pass, "{o}");
        }
    }
}
