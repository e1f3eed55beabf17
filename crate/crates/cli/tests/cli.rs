use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn curvedfem(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curvedfem"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn mesh_writes_vtk_with_expected_cells() {
    let dir = tempfile::tempdir().unwrap();
    let o = curvedfem(&["mesh", "--case", "tp1", "--refine", "4"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let vtk = fs::read_to_string(dir.path().join("tp1-sphere_4_mesh.vtk")).unwrap();
    assert!(vtk.contains("CELLS 64 320"));
    assert!(dir.path().join("tp1-sphere_4_mesh.txt").exists());

    let o = curvedfem(&["mesh", "--case", "tp3", "--refine", "2"], dir.path());
    assert!(o.status.success());
    let vtk = fs::read_to_string(dir.path().join("tp3-torus_2_mesh.vtk")).unwrap();
    assert!(vtk.contains("CELLS 48 240"));

    let o = curvedfem(&["mesh", "--case", "tp3", "--refine", "3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("even"));
}

#[test]
fn solve_reports_errors_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = curvedfem(&["solve", "--case", "quadratic", "--refine", "4", "--vtk", "--dump-matrix"], dir.path());
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    let h1: f64 = text
        .lines()
        .find(|l| l.contains("broken H1"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert!(h1 <= 1e-10);
    let stem = dir.path().join("quadratic-ellipsoid_new_k2_4");
    assert!(stem.with_extension("vtk").exists());
    assert!(fs::read_to_string(stem.with_extension("mtx")).unwrap().starts_with("%%MatrixMarket"));

    let o = curvedfem(&["solve", "--case", "tp1", "--refine", "4"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("tp1-sphere_new_k2_4.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(!csv.contains("NaN") && !csv.contains("inf"));

    let o = curvedfem(&["solve", "--case", "tp1", "--method", "nonconforming", "--k", "3", "--refine", "4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn convergence_table_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["convergence", "--case", "tp1", "--refine", "4,8,16", "--sequential"];
    let o = curvedfem(&args, dir.path());
    assert!(o.status.success(), "{o:?}");
    let path = dir.path().join("tp1-sphere_new_k2.csv");
    let first = fs::read(&path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(dir.path().join("tp1-sphere_new_k2.txt").exists());

    let o = curvedfem(&args, dir.path());
    assert!(o.status.success());
    assert_eq!(fs::read(&path).unwrap(), first);

    let o = curvedfem(&["convergence", "--case", "tp1", "--refine", "4"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "case = tp2\nmethod = polyhedral\nrefine = 2, 4\nsequential = true\n").unwrap();
    let o = curvedfem(&["convergence", "--config", cfg.to_str().unwrap(), "--method", "new"], dir.path());
    assert!(o.status.success(), "{o:?}");
    assert!(dir.path().join("tp2-ellipsoid_new_k2.csv").exists());

    fs::write(&cfg, "case = tp2\nrefine = 2\ncolour = blue\n").unwrap();
    let o = curvedfem(&["solve", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
}

#[test]
fn check_passes() {
    let o = Command::new(env!("CARGO_BIN_EXE_curvedfem")).arg("check").output().unwrap();
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    assert!(text.lines().count() >= 10);
}
