use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_loggrowth"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("loggrowth-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn constants_writes_one_row_per_density() {
    let dir = scratch("constants");
    let out = run(&["constants", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("constants.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("density,"));
    assert_eq!(rows.len(), 5);
    assert!(text.contains("# schema_version: 1"));
}

#[test]
fn exp4_is_byte_identical_across_runs() {
    let a = scratch("exp4a");
    let b = scratch("exp4b");
    for d in [&a, &b] {
        let out = run(&["exp4", "--out", d.to_str().unwrap()]);
        assert!(out.status.success());
    }
    for f in ["exp4a.csv", "exp4b.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn density_filter_restricts_rows() {
    let dir = scratch("filter");
    let out = run(&["constants", "--density", "D2,D3", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.join("constants.csv")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 3);
}

#[test]
fn bad_scale_names_the_invariant() {
    let out = run(&["exp1", "--scale", "1.5", "--out", scratch("scale").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scale must lie in (0, 1]"));
}

#[test]
fn unknown_density_and_estimator_are_rejected() {
    let dir = scratch("reject");
    let d = dir.to_str().unwrap();
    let out = run(&["exp1", "--density", "D7", "--out", d]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("D7"));
    let out = run(&["exp2", "--estimator", "oracle", "--out", d]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown estimator"));
}

#[test]
fn bad_kde_order_is_rejected() {
    let out = run(&["exp3", "--kde-order", "3", "--out", scratch("order").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kde order"));
}

#[test]
fn negative_grid_is_rejected() {
    let out = run(&["exp1", "--eps-grid", "0.1,-0.01", "--out", scratch("grid").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps grid"));
}
