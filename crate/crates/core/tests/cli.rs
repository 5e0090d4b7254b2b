//! The `plle` binary: exit codes, outputs and seeding.

use std::path::{Path, PathBuf};
use std::process::Command;

fn plle() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plle"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str], out: &Path) -> i32 {
    plle().args(args).arg("--out").arg(out).output().unwrap().status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn canned_counterexamples_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["counterexample_binary.toml", "counterexample_continuous.toml", "counterexample_binary_flipped.toml"] {
        let out = tmp.path().join(name);
        let cfg = scenario(name);
        assert_eq!(run(&["counterexample", "--config", cfg.to_str().unwrap()], &out), 0, "{name}");
        let verdict: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("verdict.json")).unwrap()).unwrap();
        assert_eq!(verdict["passed"], true);
        let ray = std::fs::read_to_string(out.join("ray.csv")).unwrap();
        assert_eq!(ray.lines().count(), 5);
        assert!(out.join("manifest.json").is_file());
    }
}

#[test]
fn which_flag_needs_no_config() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["counterexample", "--which", "binary"], tmp.path()), 0);
    let verdict = std::fs::read_to_string(tmp.path().join("verdict.json")).unwrap();
    assert!(verdict.contains("\"Unbounded\""));
}

#[test]
fn validation_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[link]\nname = \"foo\"\n[bounds]\nu = -1.0\nl = 0.0\nd = 2\n");
    let out = plle()
        .args(["correct-link", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bounds.u") && err.contains("comp_exponential"), "{err}");
}

#[test]
fn unmet_expectation_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[counterexample]\nwhich = \"binary\"\n[mle]\nmax_iter = 1\n");
    let out = plle()
        .args(["counterexample", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrected_converged"));
}

#[test]
fn stalled_fit_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "rows.csv", "x_1,y\n1,0.3\n0.5,0.6\n");
    let cfg = write(
        tmp.path(),
        "m.toml",
        "[link]\nname = \"comp_exponential\"\n[bounds]\nu = 2.0\nl = 0.0\nd = 1\n[data]\npath = \"rows.csv\"\n[mle]\nmax_iter = 1\n",
    );
    assert_eq!(run(&["mle", "--config", cfg.to_str().unwrap()], &tmp.path().join("o")), 3);
    assert!(tmp.path().join("o/mle_result.json").is_file());
}

#[test]
fn mle_scenario_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario("mle_mixed.toml");
    assert_eq!(run(&["mle", "--config", cfg.to_str().unwrap()], tmp.path()), 0);
    let res: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("mle_result.json")).unwrap()).unwrap();
    assert_eq!(res["status"], "Converged");
}

#[test]
fn seed_flag_controls_bandit_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "b.toml",
        "[link]\nname = \"comp_exponential\"\n[bandit]\narms = [[1.0, 0.0], [0.0, 1.0]]\ntheta_star = [0.8, 0.2]\ntau = 10\nhorizon = 200\nreplicates = 2\n",
    );
    let c = cfg.to_str().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    assert_eq!(run(&["bandit", "--config", c, "--seed", "1"], &dirs[0]), 0);
    assert_eq!(run(&["bandit", "--config", c, "--seed", "1"], &dirs[1]), 0);
    assert_eq!(run(&["bandit", "--config", c, "--seed", "2"], &dirs[2]), 0);
    let read = |d: &Path| std::fs::read(d.join("trace.csv")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
    assert_ne!(read(&dirs[0]), read(&dirs[2]));
    let trace = String::from_utf8(read(&dirs[0])).unwrap();
    // Header plus 2 replicates × 2 fits × 200 rounds.
    assert_eq!(trace.lines().count(), 1 + 800);
    let manifest = std::fs::read_to_string(dirs[0].join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 1") && manifest.contains("config_hash"));
}
