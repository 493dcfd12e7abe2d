use std::path::{Path, PathBuf};

use hessian_lab::field::{TorusField, TorusGrid};
use hessian_lab::harness::{main_with_args, EXIT_ASSERTION, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
use hessian_lab::ledger::{read_ledger, LEDGER_FILE};
use hessian_lab::regularize::{inf_convolution, sup_convolution};

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "hessian-lab".to_string(),
        cmd.into(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

/// Periodic distance between two points of the unit torus.
fn torus_dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(1.0);
            let d = d.min(1.0 - d);
            d * d
        })
        .sum()
}

#[test]
fn moreau_envelope_matches_dense_scan() {
    use std::f64::consts::PI;
    let grid = TorusGrid::new(1, 16).unwrap();
    let phi = TorusField::from_fn(grid, |x| 0.2 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin() + 0.1 * (2.0 * PI * x[1]).cos());
    let pos: Vec<Vec<f64>> = (0..grid.len()).map(|i| grid.position(i)).collect();
    for eps in [0.2, 0.1, 0.05, 0.01] {
        let sup = sup_convolution(&phi, eps).unwrap();
        let inf = inf_convolution(&phi, eps).unwrap();
        for i in 0..grid.len() {
            let mut hi = f64::NEG_INFINITY;
            let mut lo = f64::INFINITY;
            for j in 0..grid.len() {
                let q = torus_dist2(&pos[i], &pos[j]) / eps;
                hi = hi.max((phi.values[j] + eps) - q);
                lo = lo.min((phi.values[j] - eps) + q);
            }
            assert!((sup.field.values[i] - hi).abs() <= 1e-14, "eps {eps} point {i}");
            assert!((inf.field.values[i] - lo).abs() <= 1e-14, "eps {eps} point {i}");
        }
    }
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\", \"operator\": ").unwrap();
    assert_eq!(run("solve", &bad, dir.path(), &[]), EXIT_CONFIG);
    assert_eq!(run("solve", &dir.path().join("missing.json"), dir.path(), &[]), EXIT_CONFIG);
    assert_eq!(main_with_args(["hessian-lab", "solve"]), EXIT_CONFIG);
    assert_eq!(run("solve", &preset("trivial_b0"), dir.path(), &["--threads", "0"]), EXIT_CONFIG);
}

#[test]
fn trivial_rhs_gives_the_zero_solution() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("solve", &preset("trivial_b0"), dir.path(), &[]), EXIT_OK);
    let phi = TorusField::load(&dir.path().join("phi.bin")).unwrap();
    assert!(phi.sup_norm() < 1e-12);
    let rows = read_ledger(&dir.path().join(LEDGER_FILE)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].metrics["c"].as_f64().unwrap(), 0.0);
    assert!(dir.path().join("residuals.csv").exists());
    assert_eq!(main_with_args(["hessian-lab", "report", "--out", dir.path().to_str().unwrap()]), EXIT_OK);
}

#[test]
fn certification_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("certify", &preset("certify_sigma2_n3"), &dir.path().join("a"), &[]), EXIT_OK);
    assert_eq!(run("certify", &preset("certify_inverse_sigma"), &dir.path().join("b"), &[]), EXIT_ASSERTION);
    // the negative control cannot be solved either
    assert_eq!(run("solve", &preset("certify_inverse_sigma"), &dir.path().join("b"), &[]), EXIT_CONFIG);
}

#[test]
fn stress_config_reports_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("solve", &preset("stress_huge_gradient"), dir.path(), &[]), EXIT_NUMERICAL);
}

#[test]
fn prerequisites_and_empty_toggles() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv");
    assert_eq!(run("regularize", &preset("convolution_n1"), &out, &["--reuse"]), EXIT_CONFIG);
    assert_eq!(run("solve", &preset("convolution_n1"), &out, &[]), EXIT_OK);
    assert_eq!(run("regularize", &preset("convolution_n1"), &out, &["--reuse"]), EXIT_OK);
    // a different seed changes the config hash, so the solve no longer matches
    assert_eq!(run("regularize", &preset("convolution_n1"), &out, &["--reuse", "--seed", "99"]), EXIT_CONFIG);
    let empty = dir.path().join("empty");
    assert_eq!(run("estimate", &preset("trivial_b0"), &empty, &[]), EXIT_OK);
    assert!(!empty.join(LEDGER_FILE).exists());
    assert_eq!(main_with_args(["hessian-lab", "report", "--out", empty.to_str().unwrap()]), EXIT_CONFIG);
}

#[test]
fn estimate_presets_pass() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["de_giorgi_synthetic", "monotonicity_n1", "uniqueness_monotone"] {
        assert_eq!(run("estimate", &preset(name), &dir.path().join(name), &[]), EXIT_OK, "{name}");
    }
}
