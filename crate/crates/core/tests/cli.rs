use std::path::Path;
use std::process::{Command, Output};

use jbsde::experiment::{CHECKS_COLUMNS, NORMS_COLUMNS, PICARD_COLUMNS};

fn jbsde(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jbsde"));
    cmd.args(args).env_remove("JBSDE_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("JBSDE_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
[problem]
builtin = "brownian_terminal"
[grid]
n_steps = 8
[ensemble]
n_paths = 500
seed = 3
[[checks]]
kind = "residual"
[[checks]]
kind = "oracle"
"#;

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn run_writes_frozen_csv_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("out");
    let o = jbsde(&["run", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("norms.csv")), NORMS_COLUMNS.join(","));
    assert_eq!(header(&out.join("checks.csv")), CHECKS_COLUMNS.join(","));
    assert_eq!(header(&out.join("picard.csv")), PICARD_COLUMNS.join(","));
    assert_eq!(
        header(&out.join("checks.csv")),
        "name,passed,lhs,lhs_se,rhs,rhs_se,constant,measured_ratio,slack_sigmas,violations,samples,p,beta,n_paths,n_steps,problems,witness"
    );
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["passed"], true);
    assert!(out.join("manifest.json").exists() && out.join("timing.json").exists());
}

#[test]
fn env_dir_applies_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let env_dir = dir.path().join("env");
    let o = jbsde(&["run", &cfg, "--format", "json"], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(env_dir.join("report.json").exists());
    assert!(!env_dir.join("checks.csv").exists());
    let flag_dir = dir.path().join("flag");
    let o = jbsde(&["run", &cfg, "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("checks.csv").exists());
}

#[test]
fn overrides_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("out");
    let o = jbsde(
        &["run", &cfg, "--paths", "300", "--steps", "4", "--seed", "8", "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["meta"]["n_paths"], 300);
    assert_eq!(report["meta"]["n_steps"], 4);
    assert_eq!(report["meta"]["seed"], 8);
}

#[test]
fn failing_check_exits_one_with_summary() {
    // sampled jump sums never match the compensator exactly
    let text = r#"
[problem]
builtin = "jump_terminal"
[grid]
n_steps = 8
[ensemble]
n_paths = 400
seed = 1
[[checks]]
kind = "remark21"
slack_sigmas = 0.0
"#;
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", text);
    let out = dir.path().join("out");
    let o = jbsde(&["run", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["passed"], false);
    assert_eq!(summary["failures"][0]["name"], "remark21");
}

#[test]
fn config_errors_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[problem]\nbuiltin = \"zero\"\n[grid]\nn_steps = \"many\"\n");
    let o = jbsde(&["run", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:4:"), "{err}");

    let cfg = write_config(dir.path(), "noseed.toml", "[problem]\nbuiltin = \"zero\"\n");
    let o = jbsde(&["run", &cfg], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    let o = jbsde(&["run", dir.path().join("missing.toml").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cache_make_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ens.bin");
    let p = path.to_str().unwrap();
    let o = jbsde(&["cache", "make", p, "--paths", "50", "--steps", "4", "--seed", "2"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = jbsde(&["cache", "verify", p], None);
    assert_eq!(o.status.code(), Some(0));
    let info: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(info["paths"], 50);
    assert_eq!(info["steps"], 4);
    assert_eq!(info["seed"], 2);
    assert_eq!(info["marks"], 1);

    std::fs::write(&path, b"not an ensemble").unwrap();
    assert_eq!(jbsde(&["cache", "verify", p], None).status.code(), Some(2));
}

#[test]
fn small_suite_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = jbsde(
            &["suite", "oracle", "--paths", "300", "--steps", "64", "--out", out.to_str().unwrap()],
            None,
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
    for f in ["report.json", "checks.csv", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(jbsde(&["suite", "everything"], None).status.code(), Some(2));
}

#[test]
fn shipped_configs_pass() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for name in ["brownian_terminal", "jump_pair", "inline_cubic"] {
        let cfg = root.join(format!("{name}.toml"));
        let out = dir.path().join(name);
        let o = jbsde(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stdout));
    }
}
