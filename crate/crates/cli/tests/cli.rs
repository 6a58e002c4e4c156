use std::path::Path;
use std::process::{Command, Output};

fn biotplate(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biotplate")).args(args).current_dir(dir).output().expect("spawn biotplate")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn cell_on_defaults_writes_correctors_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = biotplate(&["cell", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let vtk = std::fs::read_to_string(out.join("cell_correctors.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0"));
    assert_eq!(vtk.matches("VECTORS").count(), 6);
    let table = std::fs::read_to_string(out.join("coefficients.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(std::fs::read_to_string(out.join("report.txt")).unwrap().contains("[cell]\nstatus = done"));
}

#[test]
fn converge_table_shape_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[geometry]\neps = [0.25, 0.125]\nplate_m = 8\n\n[time]\nnsteps = 4\n");
    let o = biotplate(&["converge", "--config", &cfg, "--out", "a", "--threads", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let a = std::fs::read_to_string(dir.path().join("a/converge.csv")).unwrap();
    let rows: Vec<&str> = a.lines().collect();
    assert_eq!(rows[0], "eps,in_plane,deflection,strain,pressure");
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 5));

    let o = biotplate(&["converge", "--config", &cfg, "--out", "b"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(a, std::fs::read_to_string(dir.path().join("b/converge.csv")).unwrap());
}

#[test]
fn tampered_coupling_fails_the_oracle_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[verify]\ntamper_bhom = 0.05\nonly = [5]\n");
    let o = biotplate(&["verify-all", "--config", &cfg, "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    let c5 = text.lines().find(|l| l.starts_with("C5")).unwrap();
    assert!(c5.contains("fail"), "{c5}");
    assert_eq!(text.lines().filter(|l| l.starts_with('C') && l.contains(" skipped ")).count(), 9);
}

#[test]
fn schema_violation_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[time]\nt_final = 1.0\nsteps = 3\n");
    let o = biotplate(&["cell", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("steps"), "{err}");

    let cfg = write_config(dir.path(), "[geometry]\neps = [0.3]\n");
    let o = biotplate(&["cell", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometry.eps"));
}

#[test]
fn budget_overflow_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = biotplate(&["mup", "--budget-dofs", "1000", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("dof budget exceeded"));
}
