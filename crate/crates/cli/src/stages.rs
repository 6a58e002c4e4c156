//! Pipeline stages behind each subcommand.

use std::path::{Path, PathBuf};
use std::time::Instant;

use biotplate::cell::{membrane_bounds, CellData};
use biotplate::geometry::{build_cell_mesh, build_micro_mesh, build_plate_mesh};
use biotplate::io::{create, write_csv, write_vtk_hex_mesh, write_vtk_plate, VtkField};
use biotplate::micro::{assemble_micro, run_transient, Stepper};
use biotplate::twoscale::{assemble_macro, assemble_mup, mup_dof_count, run_macro, run_mup, trajectory_deviation, PLATE_DOFS};
use biotplate::verify::{convergence_study, loewner_min, max_deflection, run_all, skipped, Verdict, ORACLE_TOL};
use biotplate::{Error, Result};
use clap::ValueEnum;

use crate::config::Resolved;
use crate::report::{RunReport, StageReport, StageStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Corrector problems on the reference cell.
    Cell,
    /// Homogenized plate tensor, bounds and pressure moments.
    Homogenize,
    /// Transient ε-problems for every ε in the config.
    Micro,
    /// Homogenized plate model.
    Macro,
    /// Monolithic two-scale oracle against the macro model.
    Mup,
    /// Kirchhoff-Love residual study along the ε list.
    Converge,
    /// Full acceptance suite.
    VerifyAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Homogenize => "homogenize",
            Command::Micro => "micro",
            Command::Macro => "macro",
            Command::Mup => "mup",
            Command::Converge => "converge",
            Command::VerifyAll => "verify-all",
        }
    }
}

const VOIGT_LABELS: [&str; 6] = ["e11", "e22", "e12", "k11", "k22", "k12"];

struct Ctx<'a> {
    cfg: &'a Resolved,
    out: &'a Path,
    cell: Option<CellData>,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn csv(&self, st: &mut StageReport, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let path = self.path(name);
        let mut w = create(&path)?;
        write_csv(&mut w, header, rows)?;
        std::io::Write::flush(&mut w)?;
        st.artifacts.push(path);
        Ok(())
    }

    fn cell_data(&mut self) -> Result<&CellData> {
        if self.cell.is_none() {
            let mesh = build_cell_mesh(&self.cfg.geometry, self.cfg.corrector_n)?;
            self.cell = Some(CellData::new(&mesh, &self.cfg.tensor, &self.cfg.biot, self.cfg.corrector_tol)?);
        }
        Ok(self.cell.as_ref().expect("cell data"))
    }
}

/// Run `cmd` and everything it depends on; stops at the first failing stage.
pub fn run(cmd: Command, cfg: &Resolved, out: &Path) -> RunReport {
    let mut report = RunReport::new(cmd.name());
    let mut ctx = Ctx { cfg, out, cell: None };
    let chain: &[(&'static str, fn(&mut Ctx, &mut StageReport, &mut RunReport) -> Result<()>)] = match cmd {
        Command::Cell => &[("cell", cell_stage)],
        Command::Homogenize => &[("cell", cell_stage), ("homogenize", homogenize_stage)],
        Command::Micro => &[("micro", micro_stage)],
        Command::Macro => &[("macro", macro_stage)],
        Command::Mup => &[("mup", mup_stage)],
        Command::Converge => &[("converge", converge_stage)],
        Command::VerifyAll => &[("verify", verify_stage)],
    };
    for (name, f) in chain {
        let mut st = StageReport::new(name);
        let start = Instant::now();
        let result = f(&mut ctx, &mut st, &mut report);
        st.seconds = start.elapsed().as_secs_f64();
        let failed = result.is_err();
        if let Err(e) = result {
            log::error!("stage {name} failed: {e}");
            st.status = StageStatus::Failed(e.to_string());
        }
        report.push(st);
        if failed {
            break;
        }
    }
    report
}

fn cell_stage(ctx: &mut Ctx, st: &mut StageReport, _: &mut RunReport) -> Result<()> {
    let vtk = ctx.cfg.vtk;
    let path = ctx.path("cell_correctors.vtk");
    let cell = ctx.cell_data()?;
    st.entry("resolution", cell.mesh.n);
    st.entry("corrector_iterations", format!("{:?}", cell.correctors.iterations));
    st.entry("lambda_min", format!("{:.6e}", cell.tensor.min_eigenvalue()));
    let rows: Vec<Vec<f64>> = (0..6).map(|i| std::iter::once(i as f64).chain(cell.tensor.block.row(i).iter().copied()).collect()).collect();
    if vtk {
        let names = ["membrane_11", "membrane_22", "membrane_12", "bending_11", "bending_22", "bending_12"];
        let fields: Vec<VtkField> =
            names.iter().enumerate().map(|(j, name)| VtkField { name, components: 3, values: cell.correctors.field(j) }).collect();
        let mut w = create(&path)?;
        write_vtk_hex_mesh(&mut w, "cell correctors", &cell.mesh.grid, &cell.mesh.phases, &fields, &[])?;
        std::io::Write::flush(&mut w)?;
        st.artifacts.push(path);
    }
    let header: Vec<&str> = std::iter::once("row").chain(VOIGT_LABELS).collect();
    ctx.csv(st, "coefficients.csv", &header, &rows)
}

fn homogenize_stage(ctx: &mut Ctx, st: &mut StageReport, _: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let cell = ctx.cell_data()?;
    let (upper, lower) = membrane_bounds(&cell.mesh, &cfg.tensor);
    let a = cell.tensor.membrane();
    st.entry("asymmetry", format!("{:.3e}", cell.tensor.asymmetry()));
    st.entry("lambda_min", format!("{:.6e}", cell.tensor.min_eigenvalue()));
    st.entry("voigt_gap", format!("{:.3e}", loewner_min(&(upper - a))));
    st.entry("reuss_gap", format!("{:.3e}", loewner_min(&(a - lower))));
    st.entry("gel_volume", cell.gel_phase_volume());
    st.entry("gel_dofs", cell.op.num_gel_dofs());
    let bounds: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            let mut row = vec![i as f64];
            row.extend(lower.row(i).iter());
            row.extend(a.row(i).iter());
            row.extend(upper.row(i).iter());
            row
        })
        .collect();
    let moments: Vec<Vec<f64>> = (0..6).map(|j| vec![j as f64, cell.moments.corrector[j]]).collect();
    let header = ["row", "reuss_0", "reuss_1", "reuss_2", "a_0", "a_1", "a_2", "voigt_0", "voigt_1", "voigt_2"];
    let rows: Vec<Vec<f64>> = (0..6).map(|i| std::iter::once(i as f64).chain(cell.tensor.block.row(i).iter().copied()).collect()).collect();
    let block_header: Vec<&str> = std::iter::once("row").chain(VOIGT_LABELS).collect();
    ctx.csv(st, "homogenized.csv", &block_header, &rows)?;
    ctx.csv(st, "membrane_bounds.csv", &header, &bounds)?;
    ctx.csv(st, "divergence_moments.csv", &["corrector", "gel_divergence"], &moments)
}

fn micro_stage(ctx: &mut Ctx, st: &mut StageReport, _: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    for &eps in &cfg.eps {
        let mesh = build_micro_mesh(&cfg.geometry, eps, &cfg.omega, cfg.cell_n)?;
        let required = 3 * mesh.grid.num_nodes() + mesh.gel_dofs.len();
        if required > cfg.budget {
            return Err(Error::Budget { required, budget: cfg.budget });
        }
        let sys = assemble_micro(&mesh, &cfg.tensor, &cfg.biot, eps)?;
        let traj = run_transient(&sys, cfg.t_final, cfg.nsteps, &cfg.loads, Stepper::Monolithic, None)?;
        st.entry(&format!("eps_{eps}.max_strain"), format!("{:.6e}", traj.max_strain()));
        st.entry(&format!("eps_{eps}.max_pressure"), format!("{:.6e}", traj.max_pressure()));
        let rows: Vec<Vec<f64>> =
            traj.steps.iter().map(|s| vec![s.t, s.strain, s.pressure, s.scaled_gradient, s.energy, s.residual]).collect();
        ctx.csv(st, &format!("micro_eps_{eps}.csv"), &["t", "strain", "pressure", "scaled_gradient", "energy", "residual"], &rows)?;
        if cfg.vtk {
            let fin = &traj.final_state;
            let mut p = vec![0.0; mesh.grid.num_nodes()];
            for (v, &node) in fin.p.iter().zip(&mesh.gel_dofs.dof_to_node) {
                p[node] = *v;
            }
            let path = ctx.path(&format!("micro_eps_{eps}.vtk"));
            let mut w = create(&path)?;
            let fields = [VtkField { name: "displacement", components: 3, values: &fin.u }, VtkField { name: "pressure", components: 1, values: &p }];
            write_vtk_hex_mesh(&mut w, "micro final state", &mesh.grid, &mesh.phases, &fields, &[])?;
            std::io::Write::flush(&mut w)?;
            st.artifacts.push(path);
        }
    }
    Ok(())
}

fn macro_stage(ctx: &mut Ctx, st: &mut StageReport, _: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let mesh = build_cell_mesh(&cfg.geometry, cfg.cell_n)?;
    let cell = CellData::new(&mesh, &cfg.tensor, &cfg.biot, cfg.corrector_tol)?;
    let plate = build_plate_mesh(&cfg.omega, cfg.plate_m)?;
    let sys = assemble_macro(&cell.tensor, &cell.op, &cell.moments, &plate, &cfg.biot)?;
    let states = run_macro(&sys, cfg.t_final, cfg.nsteps, &cfg.loads)?;
    let last = states.last().ok_or_else(|| Error::InvalidArgument("empty macro run".into()))?;
    st.entry("plate_dofs", sys.num_plate());
    st.entry("pressure_dofs", sys.num_pressure());
    st.entry("final_max_deflection", format!("{:.6e}", max_deflection(last, &sys)));
    let rows: Vec<Vec<f64>> =
        last.history.iter().map(|h| vec![h.t, h.energy, h.max_deflection, h.max_mean_pressure, h.residual]).collect();
    ctx.csv(st, "macro_history.csv", &["t", "energy", "max_deflection", "max_mean_pressure", "residual"], &rows)?;
    if cfg.vtk {
        let w: Vec<f64> = last.w.chunks(PLATE_DOFS).flat_map(|c| [c[0], c[1], c[2]]).collect();
        let pm = sys.mean_pressure(&last.p);
        let path = ctx.path("macro_final.vtk");
        let mut out = create(&path)?;
        let fields = [VtkField { name: "displacement", components: 3, values: &w }, VtkField { name: "mean_pressure", components: 1, values: &pm }];
        write_vtk_plate(&mut out, "macro final state", &plate, &fields)?;
        std::io::Write::flush(&mut out)?;
        st.artifacts.push(path);
    }
    Ok(())
}

fn mup_stage(ctx: &mut Ctx, st: &mut StageReport, _: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let mesh = build_cell_mesh(&cfg.geometry, cfg.cell_n)?;
    let cell = CellData::new(&mesh, &cfg.tensor, &cfg.biot, cfg.corrector_tol)?;
    let plate = build_plate_mesh(&cfg.omega, cfg.oracle_m)?;
    st.entry("oracle_dofs", mup_dof_count(&cell.op, &plate)?);
    let sys = assemble_mup(&cell.op, &plate, &cfg.biot, cfg.budget)?;
    let oracle = run_mup(&sys, &cfg.loads, cfg.t_final, cfg.nsteps)?;
    let mac_sys = assemble_macro(&cell.tensor, &cell.op, &cell.moments, &plate, &cfg.biot)?;
    let mac = run_macro(&mac_sys, cfg.t_final, cfg.nsteps, &cfg.loads)?;
    let dev = trajectory_deviation(&oracle, &mac, &mac_sys.gel_weights)?;
    let worst = dev.iter().copied().fold(0.0, f64::max);
    st.entry("max_deviation", format!("{worst:.3e}"));
    st.verdict = Some(if worst <= ORACLE_TOL { Verdict::Pass } else { Verdict::Fail });
    ctx.csv(st, "mup_deviation.csv", &["w1", "w2", "w3", "mean_pressure"], &[dev.to_vec()])
}

fn converge_stage(ctx: &mut Ctx, st: &mut StageReport, _: &mut RunReport) -> Result<()> {
    let study = convergence_study(&ctx.cfg.verify_settings())?;
    let rows: Vec<Vec<f64>> = study.eps.iter().zip(&study.residuals).map(|(e, r)| std::iter::once(*e).chain(r.errors()).collect()).collect();
    ctx.csv(st, "converge.csv", &["eps", "in_plane", "deflection", "strain", "pressure"], &rows)?;
    let scaling: Vec<Vec<f64>> = (0..study.eps.len()).map(|i| vec![study.eps[i], study.max_strain[i], study.max_pressure[i]]).collect();
    ctx.csv(st, "scaling.csv", &["eps", "max_strain", "max_pressure"], &scaling)?;
    if study.eps.len() >= 2 {
        st.entry("strain_slope", format!("{:.4}", study.strain_slope()));
        st.entry("pressure_slope", format!("{:.4}", study.pressure_slope()));
        st.verdict = Some(if study.monotone().iter().all(|&m| m) { Verdict::Pass } else { Verdict::Fail });
    } else {
        st.verdict = Some(Verdict::Skipped);
    }
    Ok(())
}

fn verify_stage(ctx: &mut Ctx, st: &mut StageReport, report: &mut RunReport) -> Result<()> {
    let cfg = ctx.cfg;
    let settings = cfg.verify_settings();
    let ran = run_all(&settings, &cfg.only);
    for id in 1..=10 {
        let outcome = ran.iter().find(|c| c.id == id).cloned().unwrap_or_else(|| skipped(id, "not selected"));
        log::info!("{outcome}");
        report.checks.push(outcome);
    }
    let count = |v: Verdict| report.checks.iter().filter(|c| c.verdict == v).count();
    st.entry("passed", count(Verdict::Pass));
    st.entry("failed", count(Verdict::Fail));
    st.entry("skipped", count(Verdict::Skipped));
    Ok(())
}
