use std::path::Path;
use std::process::Command;

fn resist() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resist"))
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn simulate_writes_csvs() {
    let out = tempfile::tempdir().unwrap();
    let status = resist()
        .args(["simulate", "--config"])
        .arg(configs().join("ring_sweep.toml"))
        .arg("--out")
        .arg(out.path())
        .args(["--seeds", "7", "--parallel", "2"])
        .status()
        .unwrap();
    assert!(status.success());
    for f in [
        "ring_h_seed7.csv",
        "ring_h_half_seed7.csv",
        "ring_h_seed7_phi.csv",
        "summary.csv",
    ] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[run.x]\nb = 1\n").unwrap();
    let code = |args: &[&std::ffi::OsStr]| resist().args(args).output().unwrap().status.code();
    let out = dir.path().as_os_str();
    assert_eq!(
        code(&[
            "simulate".as_ref(),
            "--config".as_ref(),
            bad.as_os_str(),
            "--out".as_ref(),
            out
        ]),
        Some(2)
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(
        code(&[
            "simulate".as_ref(),
            "--config".as_ref(),
            missing.as_os_str(),
            "--out".as_ref(),
            out
        ]),
        Some(3)
    );
}

#[test]
fn check_graph_reports() {
    let out = resist()
        .args(["check-graph", "--config"])
        .arg(configs().join("ring_sweep.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("ring: seed 1, 6 nodes, 24 edges, tau = 46656, Sampled"),
        "{text}"
    );
    assert!(text.contains("pass"));
}

#[test]
fn verify_single_criterion() {
    let out = resist()
        .args(["verify", "--suite", "acceptance", "--only", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .starts_with("[PASS]  2 "));
}
