use std::fs;
use std::path::PathBuf;

use loggrowth_core::estimators::EstimatorKind;
use loggrowth_core::experiments::{
    run, run_exp1, run_exp2, ExperimentConfig, ExperimentId, SCHEMA_VERSION,
};
use loggrowth_core::DensityId;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("loggrowth-exp-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

/// The header row (first non-comment line) split into column names.
fn header(path: &PathBuf) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| !l.starts_with('#')).unwrap();
    line.split(',').map(str::to_owned).collect()
}

fn small(id: ExperimentId, dir: PathBuf) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(id, dir);
    c.densities = vec![DensityId::D2];
    c.seeds = Some(3);
    c
}

#[test]
fn schemas_lead_with_the_documented_columns() {
    let dir = scratch("schema");
    let mut c = small(ExperimentId::Exp1, dir.clone());
    c.samples = Some(2_000);
    run(&c).unwrap();
    c.experiment = ExperimentId::Exp2;
    run(&c).unwrap();
    c.experiment = ExperimentId::Exp4;
    run(&c).unwrap();
    for (file, cols) in [
        ("exp1.csv", &["density", "estimator", "eps", "M", "seeds", "mean_var", "se"][..]),
        ("exp2.csv", &["density", "n", "gap_median", "gap_q25", "gap_q75"][..]),
        ("exp4a.csv", &["scheme", "K", "b_sing", "abs_err"][..]),
        ("exp4b.csv", &["scheme", "iter", "residual"][..]),
    ] {
        let h = header(&dir.join(file));
        assert_eq!(&h[..cols.len()], cols, "{file}");
        assert_eq!(h[cols.len()], "schema_version", "{file}");
        let text = fs::read_to_string(dir.join(file)).unwrap();
        assert!(text.contains(&format!("# schema_version: {SCHEMA_VERSION}")));
    }
}

#[test]
fn identical_configs_write_identical_bytes() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for dir in [&a, &b] {
        let mut c = small(ExperimentId::Exp2, dir.clone());
        c.samples = Some(3_000);
        run(&c).unwrap();
    }
    for f in ["exp2.csv", "exp2_slopes.csv", "exp2_neta.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_base_changes_the_output() {
    let (a, b) = (scratch("base-a"), scratch("base-b"));
    let mut c = small(ExperimentId::Exp2, a.clone());
    c.samples = Some(2_000);
    run(&c).unwrap();
    c.out_dir = b.clone();
    c.seed_base += 1;
    run(&c).unwrap();
    assert_ne!(fs::read(a.join("exp2.csv")).unwrap(), fs::read(b.join("exp2.csv")).unwrap());
}

#[test]
fn paired_variance_is_flat_in_eps() {
    let mut c = small(ExperimentId::Exp1, scratch("flat"));
    c.samples = Some(50_000);
    let r = run_exp1(&c).unwrap();
    let lo = r.var(DensityId::D2, EstimatorKind::PairedOracle, 1e-5).unwrap();
    let mid = r.var(DensityId::D2, EstimatorKind::PairedOracle, 1e-3).unwrap();
    assert!((lo - mid).abs() < 0.2 * mid, "{lo} vs {mid}");
}

#[test]
fn d3_naive_variance_at_full_scale() {
    let mut c = ExperimentConfig::new(ExperimentId::Exp1, scratch("d3"));
    c.densities = vec![DensityId::D3];
    c.scale = 1.0;
    c.estimator = Some(EstimatorKind::Naive);
    let r = run_exp1(&c).unwrap();
    let s = r.summary(DensityId::D3, EstimatorKind::Naive).unwrap();
    assert!((s.var_eps_at_min - s.prediction).abs() < 0.02 * s.prediction, "{s:?}");
}

#[test]
fn proxy_gap_matches_quadrature() {
    let mut c = small(ExperimentId::Exp2, scratch("proxy"));
    c.samples = Some(20_000);
    let r = run_exp2(&c).unwrap();
    let (direct, proxy) = r.curves[0].proxy_check;
    assert!((direct - proxy).abs() < 5e-3 * direct, "{direct} vs {proxy}");
}
