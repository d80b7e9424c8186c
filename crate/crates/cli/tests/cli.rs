use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn ifsem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifsem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ifsem-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn eigen_prints_exponent() {
    let o = ifsem(&["eigen", "--p", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lambda: f64 = stdout(&o).trim().parse().unwrap();
    assert!((lambda - 0.535440945602556).abs() < 1e-12);

    let o = ifsem(&["eigen", "--example", "2", "--p", "500"]);
    let lambda: f64 = stdout(&o).trim().parse().unwrap();
    assert!((lambda - 0.668132968863075).abs() < 1e-10);
}

#[test]
fn solve_writes_report() {
    let out = scratch("solve.txt");
    let o = ifsem(&["solve", "--p", "5", "--W", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text, stdout(&o));
    let err: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("error_percent = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(err > 1.0 && err < 20.0, "{err}");
    assert!(text.contains("converged = true"));
}

#[test]
fn bad_ratio_fails_at_config() {
    let o = ifsem(&["solve", "--p", "5", "--mu", "2.0"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[config]"), "{}", stderr(&o));
}

#[test]
fn sweep_writes_table_and_plot_data() {
    let out = scratch("sweep.csv");
    let o = ifsem(&["sweep", "--p", "5", "--W-min", "2", "--W-max", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("r_squared"));
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 4, "{csv}");
    assert!(out.with_extension("dat").exists());
}

#[test]
fn config_file_and_overrides() {
    let cfg = scratch("run.toml");
    fs::write(&cfg, "example = 2\np = 500\nmu = \"e-pi\"\nW = 3\npreconditioner = \"separable\"\n").unwrap();
    let path = cfg.to_str().unwrap();
    let o = ifsem(&["solve", "--config", path]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("W = 3"));

    let o = ifsem(&["solve", "--config", path, "--W", "2"]);
    assert!(stdout(&o).contains("W = 2"));

    let bad = scratch("bad.toml");
    fs::write(&bad, "example = 1\np = 5\nstiffness = 3\n").unwrap();
    let o = ifsem(&["solve", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[config]"), "{}", stderr(&o));
}

#[test]
fn mesh_dump() {
    let o = ifsem(&["mesh", "--p", "5", "--N", "3", "--W", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("mesh "));
    assert!(text.lines().filter(|l| l.starts_with("element ")).count() >= 6);
}
