use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data")
        .join(name)
}

fn owfsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owfsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_fixture() {
    let o = owfsim(&["validate", data("ninebus_owf.case").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok:"));
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("island.case");
    std::fs::write(
        &path,
        "[BUS]\n1 230 slack 1 1.0\n2 230 PQ 1\n[BRANCH]\n1 2 0.01 0.1 0 open\n",
    )
    .unwrap();
    let o = owfsim(&["validate", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("violation:"));
    assert!(stderr(&o).starts_with("error: kind=invalid_case msg=\""));
}

#[test]
fn syntax_error_is_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.case");
    std::fs::write(&path, "[BUS]\n1 230 nonsense 1 1.0\n").unwrap();
    let o = owfsim(&["powerflow", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let line = stderr(&o);
    assert!(
        line.starts_with("error: kind=syntax msg=\"line 2"),
        "{line}"
    );
    assert_eq!(line.lines().count(), 1);
}

#[test]
fn powerflow_prints_every_bus() {
    let o = owfsim(&["powerflow", data("ninebus.case").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.starts_with("converged in"));
    assert_eq!(out.lines().count(), 11);
    assert!(out.contains("1.040000"));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = owfsim(&[
        "run",
        data("flat.scn").to_str().unwrap(),
        "--t-end",
        "0.8",
        "--dt",
        "1e-4",
        "--channels",
        "bus5.v,sg1.speed",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("recording.csv")).unwrap();
    assert!(csv.starts_with("time,bus5.v,sg1.speed\n"));
    // 0.8 s at 100 us, one sample every 20 steps.
    assert_eq!(csv.lines().count(), 401);
    let meta = std::fs::read_to_string(out.join("recording.meta.txt")).unwrap();
    assert!(meta.contains("dt 0.0001"));
    let log = std::fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("[INIT_SNAPSHOT]"));
    assert!(log.contains("swap_zip_loads"));
}

#[test]
fn run_rejects_unknown_channel() {
    let dir = tempfile::tempdir().unwrap();
    let o = owfsim(&[
        "run",
        data("flat.scn").to_str().unwrap(),
        "--channels",
        "owf1.p",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: kind=scenario"));
    assert!(!dir.path().join("recording.csv").exists());
}

#[test]
fn missing_file_is_io_error() {
    let o = owfsim(&["run", "/definitely/not/here.scn"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: kind=io"));
}
