use std::path::Path;
use std::process::{Command, Output};

fn clfkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clfkit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CLF_OUT_DIR")
        .output()
        .expect("spawn clfkit")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn reproduce_known_and_unknown_ids() {
    let dir = tempfile::tempdir().unwrap();
    let out = clfkit(&["reproduce", "3.3", "--quiet"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = clfkit(&["reproduce", "9.9"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn design_writes_artifact_and_check_reverifies_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = clfkit(&["design", "--example", "2.4", "--out", "run", "--quiet"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["artifact.json", "report.txt", "eigen.csv", "shapes.csv", "kernels.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let out = clfkit(&["check", "--artifact", "run/artifact.json"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("tail_modes_stable"));
}

#[test]
fn simulate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = clfkit(&["simulate", "--example", "2.4", "--out", "run"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("fitted decay rate"));
    let out = clfkit(
        &["export", "--input", "run/trajectory.csv", "--stride", "10", "--out", "plot.csv"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let full = std::fs::read_to_string(dir.path().join("run/trajectory.csv")).unwrap();
    let plot = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    assert_eq!(full.lines().next(), plot.lines().next());
    assert!(plot.lines().count() < full.lines().count());
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "seed = 1\n[problem]\n").unwrap();
    let out = clfkit(&["design", "--config", "bad.toml"], dir.path());
    assert_eq!(code(&out), 2);
    let out = clfkit(&["design"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn failed_certification_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example_2_4.toml"),
    )
    .unwrap()
    .replace("constant = -19.739208802178716", "constant = -296.08813203268073");
    std::fs::write(dir.path().join("unstable.toml"), cfg).unwrap();
    let out = clfkit(&["design", "--config", "unstable.toml", "--out", "run"], dir.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tail_modes_stable"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_clfkit"))
        .args(["design", "--example", "2.4", "--quiet"])
        .current_dir(dir.path())
        .env("CLF_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("from-env/artifact.json").exists());
}
