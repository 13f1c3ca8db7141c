use std::path::Path;
use std::process::{Command, Output};

use divels::runner::{read_csv, Metadata};

fn divels(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divels"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn uniform_smoke_writes_one_row_per_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = divels(&["--policy", "uniform", "--T", "8", "--repeats", "1", "--out", "r.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,mean_regret,stderr");
    assert_eq!(lines.len(), 9);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    assert!(dir.path().join("r.meta.json").exists());
}

#[test]
fn eta_defaults_to_200_rho_squared() {
    let dir = tempfile::tempdir().unwrap();
    let out = divels(&["--rho", "0.95", "--T", "8", "--repeats", "1"], dir.path());
    assert!(out.status.success());
    let meta = Metadata::load(&dir.path().join("regret.meta.json")).unwrap();
    assert!((meta.config.policy.eta - 180.5).abs() < 1e-12);
    assert_eq!(meta.config.policy.d_tilde, 35);
    assert_eq!(meta.runs.len(), 1);
    assert_eq!(meta.runs[0].env.action_set.len(), 4);
    assert_eq!(meta.runs[0].env.alpha.len(), 4);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("f.toml"), "T = 512\nrepeats = 2\npolicy = \"uniform\"\nrho = 0.3\n").unwrap();
    let out = divels(&["--config", "f.toml", "--T", "2048"], dir.path());
    assert!(out.status.success());
    let meta = Metadata::load(&dir.path().join("regret.meta.json")).unwrap();
    assert_eq!(meta.config.horizon, 2048);
    assert_eq!(meta.config.repeats, 2);
    assert_eq!(meta.config.env.rho, 0.3);
    assert_eq!(read_csv(&dir.path().join("regret.csv")).unwrap().len(), 2048);
}

#[test]
fn rerun_from_metadata_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let first = divels(&["--T", "64", "--repeats", "3", "--seed", "5", "--rho", "0.5", "--out", "a.csv"], dir.path());
    assert!(first.status.success());
    let again = divels(&["--config", "a.meta.json", "--out", "b.csv"], dir.path());
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["--nu", "3"],
        vec!["--kernel", "rbf"],
        vec!["--policy", "bogus"],
        vec!["--T", "1"],
        vec!["--no-such-flag"],
        vec!["--rho", "2"],
        vec!["--config", "missing.toml"],
    ] {
        let out = divels(&args, dir.path());
        let code = out.status.code();
        if args[0] == "--config" {
            // an unreadable file is an I/O failure
            assert_eq!(code, Some(1), "{args:?}");
        } else {
            assert_eq!(code, Some(2), "{args:?}");
        }
    }
}

#[test]
fn unwritable_output_exits_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = divels(
        &["--policy", "uniform", "--T", "4", "--repeats", "1", "--out", "/nonexistent/x.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn infinite_variant_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = divels(
        &["--policy", "div-els-infinite", "--nu", "3", "--bandwidth", "1.5", "--T", "64", "--repeats", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = Metadata::load(&dir.path().join("regret.meta.json")).unwrap();
    assert!(meta.runs.iter().all(|r| r.epochs.len() == 5));
}
