//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances are pinned as constants below.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hessian_lab::background::{BackgroundData, MatField};
use hessian_lab::cone::{certify_operator, sample_cone, CertReport, OperatorSpec};
use hessian_lab::ddc::Backend;
use hessian_lab::estimate::{de_giorgi_trials, StabilityProbe};
use hessian_lab::expr::Expr;
use hessian_lab::field::{TorusField, TorusGrid};
use hessian_lab::harness::main_with_args;
use hessian_lab::herm::{generalized_eigenvalues, HermMatrix, C64};
use hessian_lab::ledger::{read_ledger, RunLedgerEntry, LEDGER_FILE};
use hessian_lab::regularize::{
    inf_convolution, maximizer_radius_audit, sandwich_check, scaled_subsolution_audit, semiconvexity_check,
    sup_convolution, Curvature,
};
use hessian_lab::solver::{linearize_apply, log_f, solve_fixed_rhs, Normalization, SolveConfig};
use hessian_lab::study::manufactured_study;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CERT_SAMPLES: usize = 10_000;
const HOMOGENEITY_TOL: f64 = 1e-10;
const EULER_TOL: f64 = 1e-9;
const C0_REL_TOL: f64 = 0.02;
const CERT_SECONDS: f64 = 30.0;
const STRUCTURAL_FACTOR: f64 = 0.95;
const PENCILS: usize = 1000;
const DET_TOL: f64 = 1e-8;
const QUADRATIC_TOL: f64 = 1e-10;
const MIN_ORDER: f64 = 1.8;
const SPECTRAL_TOL: f64 = 1e-9;
const SOLVE_SECONDS: f64 = 60.0;
const JACOBIAN_STATES: usize = 100;
const JACOBIAN_TOL: f64 = 1e-5;
const CONV_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.01];
const SEMICONVEXITY_FACTOR: f64 = 1.1;
const AUDIT_EPS: [f64; 4] = [0.08, 0.04, 0.02, 0.01];
const AUDIT_A1: f64 = 0.1;
const DE_GIORGI_TRIALS: usize = 100;
const STABILITY_SECONDS: f64 = 300.0;
const UNIQUENESS_GAP: f64 = 1e-8;

type Outcome = Result<(bool, String), String>;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))
}

fn cli(cmd: &str, config: &str, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "hessian-lab".to_string(),
        cmd.into(),
        "--config".into(),
        preset(config).display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    main_with_args(args)
}

fn ledger(dir: &Path) -> Result<Vec<RunLedgerEntry>, String> {
    read_ledger(&dir.join(LEDGER_FILE)).map_err(|e| e.to_string())
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn flat_op_bg(op: &OperatorSpec, m: usize) -> Result<BackgroundData, String> {
    BackgroundData::flat(TorusGrid::new(op.n, m).map_err(err)?, &op.cone()).map_err(err)
}

/// Operators covered by certification.
fn certified_ops() -> Vec<OperatorSpec> {
    vec![
        OperatorSpec::sigma_k(2, 1).unwrap(),
        OperatorSpec::sigma_k(2, 2).unwrap(),
        OperatorSpec::sigma_k(3, 2).unwrap(),
        OperatorSpec::sigma_k(3, 3).unwrap(),
        OperatorSpec::nminus1_sigma_k(2, 1).unwrap(),
        OperatorSpec::nminus1_sigma_k(3, 1).unwrap(),
        OperatorSpec::pfold_sum(3, 2).unwrap(),
    ]
}

/// Direct evaluation of each operator, independent of the library.
fn oracle_eval(label: usize, l: &[f64]) -> f64 {
    let esym = |x: &[f64], k: usize| -> f64 {
        let n = x.len();
        (0u32..1 << n)
            .filter(|s| s.count_ones() as usize == k)
            .map(|s| (0..n).filter(|i| s >> i & 1 == 1).map(|i| x[i]).product::<f64>())
            .sum()
    };
    let tilde = |x: &[f64]| -> Vec<f64> {
        let t: f64 = x.iter().sum();
        x.iter().map(|v| t - v).collect()
    };
    match label {
        0 => esym(l, 1),
        1 => esym(l, 2).sqrt(),
        2 => esym(l, 2).sqrt(),
        3 => esym(l, 3).cbrt(),
        4 | 5 => esym(&tilde(l), 1) / (l.len() - 1) as f64,
        6 => ((l[0] + l[1]) * (l[0] + l[2]) * (l[1] + l[2])).cbrt(),
        _ => unreachable!(),
    }
}

/// Minimum of `f / (prod lambda)^{1/n}` over a dense scan of the simplex.
fn c0_oracle(label: usize, n: usize) -> f64 {
    let steps = 400;
    let ratio = |l: &[f64]| oracle_eval(label, l) / l.iter().product::<f64>().powf(1.0 / n as f64);
    let mut best = f64::INFINITY;
    match n {
        2 => {
            for i in 1..steps {
                let a = 2.0 * i as f64 / steps as f64;
                best = best.min(ratio(&[a, 2.0 - a]));
            }
        }
        3 => {
            for i in 1..steps {
                for j in 1..steps - i {
                    let (a, b) = (3.0 * i as f64 / steps as f64, 3.0 * j as f64 / steps as f64);
                    best = best.min(ratio(&[a, b, 3.0 - a - b]));
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut reports = Vec::new();
    let mut ok = true;
    let mut worst_c0 = 0.0f64;
    let mut notes = Vec::new();
    for (label, op) in certified_ops().iter().enumerate() {
        let rep = certify_operator(op, CERT_SAMPLES, 100 + label as u64).map_err(err)?;
        let oracle = c0_oracle(label, op.n);
        let rel = (rep.c0_estimate - oracle).abs() / oracle;
        worst_c0 = worst_c0.max(rel);
        let good = rep.homogeneity_max_err <= HOMOGENEITY_TOL
            && rep.concavity_violations == 0
            && rep.euler_max_rel_err <= EULER_TOL
            && rel <= C0_REL_TOL;
        if !good {
            notes.push(format!("{} c0 {:.6} oracle {:.6}", rep.operator, rep.c0_estimate, oracle));
        }
        ok &= good;
        reports.push(rep);
    }
    // sigma_2^{1/2} with n = 3 has c0 = sqrt(3)
    let s3 = (reports[2].c0_estimate - 3f64.sqrt()).abs() / 3f64.sqrt();
    ok &= s3 <= C0_REL_TOL;
    let secs = t0.elapsed().as_secs_f64();
    ok &= secs < CERT_SECONDS;
    Ok((ok, format!("{} operators, worst c0 rel err {worst_c0:.2e}, sqrt3 rel err {s3:.2e}, {secs:.1}s{}", reports.len(), notes.iter().map(|n| format!("; {n}")).collect::<String>())))
}

fn criterion_2(reports: &[CertReport]) -> Outcome {
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut total = 0;
    for (k, (op, rep)) in certified_ops().iter().zip(reports).enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + k as u64);
        let pts = sample_cone(op, CERT_SAMPLES, &mut rng);
        if pts.len() < CERT_SAMPLES {
            return Ok((false, format!("{} produced only {} samples", rep.operator, pts.len())));
        }
        let floor = STRUCTURAL_FACTOR * (rep.c0_estimate / op.n as f64).powi(op.n as i32);
        for l in &pts {
            let p: f64 = op.grad(l).map_err(err)?.iter().product();
            worst = worst.min(p / floor);
            violations += usize::from(p < floor);
        }
        total += pts.len();
    }
    Ok((violations == 0, format!("{total} samples, {violations} violations, min ratio to floor {worst:.4}")))
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(mut a: Vec<C64>, n: usize) -> C64 {
    let mut d = C64::new(1.0, 0.0);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i * n + c].norm().total_cmp(&a[j * n + c].norm())).unwrap();
        if a[p * n + c].norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if p != c {
            for k in 0..n {
                a.swap(p * n + k, c * n + k);
            }
            d = -d;
        }
        let piv = a[c * n + c];
        d *= piv;
        for r in c + 1..n {
            let f = a[r * n + c] / piv;
            for k in c..n {
                let v = a[c * n + k];
                a[r * n + k] -= f * v;
            }
        }
    }
    d
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut e = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        e[i * n + i] = C64::new(rng.gen_range(-2.0..2.0), 0.0);
        for j in i + 1..n {
            let z = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            e[i * n + j] = z;
            e[j * n + i] = z.conj();
        }
    }
    e
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_det = 0.0f64;
    let mut worst_quad = 0.0f64;
    for t in 0..PENCILS {
        let n = 1 + t % 4;
        let a = random_hermitian(n, &mut rng);
        let b = random_hermitian(n, &mut rng);
        // g = B B^* + I / 2
        let mut g = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k].conj()).sum::<C64>();
            }
            g[i * n + i] += 0.5;
        }
        let am = HermMatrix::new(n, a.clone()).map_err(err)?;
        let gm = HermMatrix::new(n, g.clone()).map_err(err)?;
        let roots = generalized_eigenvalues(&am, &gm).map_err(err)?.values;
        let norm_a = am.eigh().0.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for &l in &roots {
            let pencil: Vec<C64> = g.iter().zip(&a).map(|(g, a)| g * l - a).collect();
            worst_det = worst_det.max(det(pencil, n).norm() / norm_a.powi(n as i32));
        }
        if n == 2 {
            let qa = g[0].re * g[3].re - g[1].norm_sqr();
            let qb = -(g[0].re * a[3].re + g[3].re * a[0].re - 2.0 * (g[1] * a[1].conj()).re);
            let qc = a[0].re * a[3].re - a[1].norm_sqr();
            let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
            let mut q = [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)];
            q.sort_by(f64::total_cmp);
            for (r, o) in roots.iter().zip(&q) {
                worst_quad = worst_quad.max((r - o).abs() / o.abs().max(1.0));
            }
        }
    }
    Ok((
        worst_det <= DET_TOL && worst_quad <= QUADRATIC_TOL,
        format!("{PENCILS} pencils, max |det|/|A|^n {worst_det:.2e}, n=2 quadratic err {worst_quad:.2e}"),
    ))
}

fn criterion_4() -> Outcome {
    let id = |n| HermMatrix::identity(n);
    let phi2 = Expr::parse("0.02*(cos(2*pi*x0)*sin(2*pi*x3) + sin(2*pi*(x1 + x2)))").map_err(err)?;
    let phi1 = Expr::parse("0.05*(cos(2*pi*x0) + 0.5*sin(2*pi*(x0 + x1)))").map_err(err)?;
    let cases = [
        (OperatorSpec::sigma_k(2, 1).unwrap(), &phi2),
        (OperatorSpec::sigma_k(2, 2).unwrap(), &phi2),
        (OperatorSpec::sigma_k(1, 1).unwrap(), &phi1),
    ];
    let fd = SolveConfig { newton_tol: 1e-8, ..SolveConfig::default() };
    let mut ok = true;
    let mut notes = Vec::new();
    for (op, phi) in &cases {
        let rows = manufactured_study(op, &id(op.n), &id(op.n), phi, op.n, &[16, 32, 64], &fd).map_err(err)?;
        let min_order = rows.iter().filter_map(|r| r.order).fold(f64::INFINITY, f64::min);
        let slowest = rows.iter().map(|r| r.seconds).fold(0.0, f64::max);
        let good = min_order >= MIN_ORDER && rows.iter().all(|r| r.c_bound_ok) && slowest < SOLVE_SECONDS;
        ok &= good;
        notes.push(format!("{} fd order {min_order:.2} slowest {slowest:.1}s", op.label()));
        let spectral = SolveConfig { backend: Backend::Spectral, newton_tol: 1e-11, ..SolveConfig::default() };
        let rows = manufactured_study(op, &id(op.n), &id(op.n), phi, op.n, &[32], &spectral).map_err(err)?;
        let r = &rows[0];
        ok &= r.sup_error <= SPECTRAL_TOL && r.c_bound_ok && r.seconds < SOLVE_SECONDS;
        notes.push(format!("spectral err {:.1e}", r.sup_error));
    }
    Ok((ok, notes.join(", ")))
}

/// Random trigonometric polynomial with a few low modes.
fn random_smooth(grid: TorusGrid, rng: &mut ChaCha8Rng, amp: f64) -> TorusField {
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..4)
        .map(|_| {
            let k = (0..grid.dims()).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
            (k, rng.gen_range(-amp..amp), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    TorusField::from_fn(grid, |x| {
        modes.iter().map(|(k, a, p)| a * (2.0 * PI * k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + p).cos()).sum()
    })
}

fn criterion_5() -> Outcome {
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut states = 0;
    for op in certified_ops() {
        let m = 8;
        let bg = flat_op_bg(&op, m)?;
        for s in 0..JACOBIAN_STATES {
            let backend = if s % 2 == 0 { Backend::Fd } else { Backend::Spectral };
            // small fields keep chi + dd^c phi well inside the cone
            let phi = random_smooth(bg.grid, &mut rng, 0.004);
            let psi = random_smooth(bg.grid, &mut rng, 1.0);
            let lin = linearize_apply(&op, &bg, &phi, &psi, backend).map_err(err)?;
            let plus = log_f(&op, &bg, &phi.add(&psi.scale(h)).map_err(err)?, backend).map_err(err)?;
            let minus = log_f(&op, &bg, &phi.add(&psi.scale(-h)).map_err(err)?, backend).map_err(err)?;
            let fd = plus.sub(&minus).map_err(err)?.scale(0.5 / h);
            let scale = lin.sup_norm();
            if scale == 0.0 {
                continue;
            }
            worst = worst.max(fd.sub(&lin).map_err(err)?.sup_norm() / scale);
            states += 1;
        }
    }
    Ok((worst <= JACOBIAN_TOL, format!("{states} states over 7 operators, worst relative gap {worst:.2e}")))
}

fn solved_n1_field() -> Result<(OperatorSpec, BackgroundData, TorusField, TorusField, f64), String> {
    let op = OperatorSpec::sigma_k(1, 1).unwrap();
    let bg = flat_op_bg(&op, 64)?;
    let g = Expr::parse("0.4*cos(2*pi*x0) + 0.3*sin(2*pi*(x0 + x1))").map_err(err)?.field(bg.grid, None).map_err(err)?;
    let cfg = SolveConfig { normalization: Normalization::MeanZero, ..SolveConfig::default() };
    let rep = solve_fixed_rhs(&op, &bg, &g, &cfg).map_err(err)?;
    Ok((op, bg, rep.phi().clone(), g, rep.c))
}

fn criterion_6() -> Outcome {
    let (_, bg, solved, _, _) = solved_n1_field()?;
    let kink = TorusField::from_fn(bg.grid, |x| 0.2 * (PI * x[0]).sin().abs() - 0.1 * (2.0 * PI * x[1]).cos());
    let mut ok = true;
    let mut worst_sandwich = f64::INFINITY;
    let mut worst_radius = 0.0f64;
    let mut worst_curv = f64::INFINITY;
    let mut duality = 0.0f64;
    for phi in [&solved, &kink] {
        for eps in CONV_EPS {
            let sup = sup_convolution(phi, eps).map_err(err)?;
            let inf = inf_convolution(phi, eps).map_err(err)?;
            for conv in [&sup, &inf] {
                let s = sandwich_check(phi, conv).map_err(err)?;
                let r = maximizer_radius_audit(phi, conv).map_err(err)?;
                worst_sandwich = worst_sandwich.min(s.worst_slack);
                worst_radius = worst_radius.max(r.max_offset_norm / r.bound);
                ok &= s.ok && r.ok;
            }
            let c_eps = SEMICONVEXITY_FACTOR / eps;
            let vex = semiconvexity_check(&sup.field, c_eps, Curvature::Convex);
            let cave = semiconvexity_check(&inf.field, c_eps, Curvature::Concave);
            worst_curv = worst_curv.min(vex.worst_second_difference).min(cave.worst_second_difference);
            ok &= vex.ok && cave.ok;
            let dual = inf_convolution(&phi.scale(-1.0), eps).map_err(err)?;
            let gap = dual.field.add(&sup.field).map_err(err)?.sup_norm();
            duality = duality.max(gap);
            ok &= gap == 0.0;
        }
    }
    Ok((
        ok,
        format!(
            "worst sandwich slack {worst_sandwich:.2e}, max offset/bound {worst_radius:.3}, \
             worst curvature {worst_curv:.2e}, duality gap {duality:e}"
        ),
    ))
}

fn criterion_7() -> Outcome {
    let (op, bg, phi, g, c) = solved_n1_field()?;
    let flat = scaled_subsolution_audit(&op, &bg, &phi, &g, c, &AUDIT_EPS, AUDIT_A1, Backend::Fd).map_err(err)?;
    // a varying form with a steep rhs leaves little room in the cone, so the
    // calibrated margin is positive
    let grid = TorusGrid::new(1, 32).map_err(err)?;
    let chi = MatField::PerPoint(
        (0..grid.len())
            .map(|i| HermMatrix::identity(1).scale(1.0 + 0.9 * (2.0 * PI * grid.position(i)[0]).cos()))
            .collect(),
    );
    let varying = BackgroundData::new(grid, MatField::Constant(HermMatrix::identity(1)), chi, &op.cone()).map_err(err)?;
    let g = Expr::parse("2.5*cos(2*pi*x0 + 0.7)").map_err(err)?.field(grid, None).map_err(err)?;
    let cfg = SolveConfig { normalization: Normalization::MeanZero, ..SolveConfig::default() };
    let rep = solve_fixed_rhs(&op, &varying, &g, &cfg).map_err(err)?;
    let audit = scaled_subsolution_audit(&op, &varying, rep.phi(), &g, rep.c, &AUDIT_EPS, AUDIT_A1, Backend::Fd)
        .map_err(err)?;
    let rho: Vec<String> = audit.rows.iter().map(|r| format!("{:.3e}", r.rho_eps)).collect();
    Ok((
        flat.passed && audit.passed && audit.c_prime > 0.0,
        format!(
            "constant form C' {:.3e}; varying form C' {:.3e}, rho(eps) [{}], monotone {}",
            flat.c_prime,
            audit.c_prime,
            rho.join(", "),
            audit.monotone
        ),
    ))
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, mu) in [0.25, 0.5, 1.0].into_iter().enumerate() {
        let t = de_giorgi_trials(DE_GIORGI_TRIALS, 16, mu, 80 + k as u64).map_err(err)?;
        ok &= t.passed && t.vanished_within_bound == DE_GIORGI_TRIALS && t.halving_ok == DE_GIORGI_TRIALS;
        notes.push(format!("mu {mu}: {}/{} within bound, worst ratio {:.3}", t.vanished_within_bound, t.trials, t.worst_bound_ratio));
    }
    Ok((ok, notes.join("; ")))
}

/// Latest entry of a preset's output directory, running it first when absent.
fn entry_of(root: &Path, dir: &str, cmd: &str, config: &str) -> Result<RunLedgerEntry, String> {
    if !root.join(dir).join(LEDGER_FILE).exists() {
        cli(cmd, config, &root.join(dir), &[]);
    }
    single_entry(&root.join(dir))
}

fn single_entry(dir: &Path) -> Result<RunLedgerEntry, String> {
    let mut rows = ledger(dir)?;
    rows.pop().ok_or_else(|| "no ledger entry".to_string())
}

fn criterion_9(root: &Path) -> Outcome {
    let target = 3.0 / 11.0 - 0.05;
    let probe = StabilityProbe::with_margin(4.0, 2, 0.05).map_err(err)?;
    if (probe.a_target - target).abs() > 1e-15 {
        return Ok((false, format!("target exponent {} differs from {target}", probe.a_target)));
    }
    let t0 = Instant::now();
    let code = cli("estimate", "stability_sigma2_n2", &root.join("stability"), &[]);
    let secs = t0.elapsed().as_secs_f64();
    let e = single_entry(&root.join("stability"))?;
    let fit = &e.metrics["stability"];
    Ok((
        code == 0 && e.passed && secs < STABILITY_SECONDS,
        format!(
            "a target {target:.4}, fitted slope {:.3}, worst ratio {:.3}, decades {:.2}, {secs:.1}s",
            fit["fitted_a"].as_f64().unwrap_or(f64::NAN),
            fit["worst_ratio"].as_f64().unwrap_or(f64::NAN),
            fit["decades"].as_f64().unwrap_or(f64::NAN),
        ),
    ))
}

fn criterion_10(root: &Path) -> Outcome {
    let code = cli("estimate", "monotonicity_n1", &root.join("monotonicity"), &[]);
    let e = single_entry(&root.join("monotonicity"))?;
    let m = &e.metrics["c_monotonicity"];
    let trials = m["trials"].as_array().cloned().unwrap_or_default();
    let min_gap = trials
        .iter()
        .map(|t| t["c2"].as_f64().unwrap_or(f64::NAN) - t["c1"].as_f64().unwrap_or(f64::NAN))
        .fold(f64::INFINITY, f64::min);
    Ok((
        code == 0 && e.assertions.get("c_monotonicity") == Some(&true) && trials.len() == 20,
        format!("{} pairs, min c gap {min_gap:.3e}, shift error {:.1e}", trials.len(), m["shift_error"].as_f64().unwrap_or(f64::NAN)),
    ))
}

fn criterion_11(root: &Path) -> Outcome {
    let mono = entry_of(root, "monotonicity", "estimate", "monotonicity_n1")?;
    let code = cli("estimate", "uniqueness_monotone", &root.join("uniqueness"), &[]);
    let e = single_entry(&root.join("uniqueness"))?;
    let mut ok = code == 0;
    let mut notes = Vec::new();
    for (label, entry) in [("fixed", &mono), ("monotone", &e)] {
        let u = &entry.metrics["uniqueness"];
        let gap = u["max_pairwise_sup_gap"].as_f64().unwrap_or(f64::INFINITY);
        let inits = u["inits"].as_u64().unwrap_or(0);
        ok &= inits >= 5 && gap <= UNIQUENESS_GAP;
        notes.push(format!("{label}: {inits} inits, gap {gap:.1e}"));
    }
    Ok((ok, notes.join(", ")))
}

/// Every preset that completes, run once per thread count.
const DETERMINISM_RUNS: [(&str, &str); 8] = [
    ("certify", "certify_sigma2_n3"),
    ("solve", "manufactured_sigma2_n2"),
    ("solve", "trivial_b0"),
    ("solve", "convolution_n1"),
    ("regularize", "convolution_n1"),
    ("estimate", "de_giorgi_synthetic"),
    ("estimate", "monotonicity_n1"),
    ("estimate", "uniqueness_monotone"),
];

fn criterion_12(root: &Path) -> Outcome {
    let mut runs: Vec<Vec<RunLedgerEntry>> = Vec::new();
    for threads in ["1", "2"] {
        let dir = root.join(format!("determinism-{threads}"));
        for (cmd, cfg) in DETERMINISM_RUNS {
            cli(cmd, cfg, &dir.join(cfg), &["--threads", threads]);
        }
        let mut all = Vec::new();
        for (_, cfg) in DETERMINISM_RUNS {
            all.extend(ledger(&dir.join(cfg))?);
        }
        all.dedup_by(|a, b| a.id == b.id);
        runs.push(all);
    }
    // the stability run of criterion 9 is repeated as well
    let again = root.join("stability-again");
    cli("estimate", "stability_sigma2_n2", &again, &["--threads", "2"]);
    let first = entry_of(root, "stability", "estimate", "stability_sigma2_n2")?;
    let second = single_entry(&again)?;
    let key = |e: &RunLedgerEntry| (e.command.clone(), e.config_hash.clone(), e.metrics.clone(), e.assertions.clone());
    let mut mismatches: Vec<String> = Vec::new();
    if runs[0].len() != runs[1].len() || runs[0].is_empty() {
        mismatches.push(format!("entry counts {} vs {}", runs[0].len(), runs[1].len()));
    }
    for (a, b) in runs[0].iter().zip(&runs[1]) {
        if key(a) != key(b) {
            mismatches.push(a.experiment.clone());
        }
    }
    if key(&first) != key(&second) {
        mismatches.push(first.experiment.clone());
    }
    let compared: BTreeMap<&str, usize> = runs[0].iter().fold(BTreeMap::new(), |mut m, e| {
        *m.entry(e.command.as_str()).or_default() += 1;
        m
    });
    Ok((mismatches.is_empty(), format!("{} entries compared {compared:?}, mismatches {mismatches:?}", runs[0].len() + 1)))
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let root = root.path();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("operator certification", Box::new(criterion_1)),
        ("structural condition", Box::new(|| criterion_2(&certified_reports()))),
        ("eigenvalue engine", Box::new(criterion_3)),
        ("manufactured solutions", Box::new(criterion_4)),
        ("jacobian", Box::new(criterion_5)),
        ("convolution suite", Box::new(criterion_6)),
        ("scaled subsolution audit", Box::new(criterion_7)),
        ("de giorgi lemma", Box::new(criterion_8)),
        ("stability exponent", Box::new(|| criterion_9(root))),
        ("monotonicity of c", Box::new(|| criterion_10(root))),
        ("uniqueness probes", Box::new(|| criterion_11(root))),
        ("determinism", Box::new(|| criterion_12(root))),
    ];
    // ACCEPTANCE_ONLY=4,7 runs a subset
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (k, (name, f)) in criteria.into_iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(k + 1))) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "[criterion {:>2}] {} {name}: {detail} ({:.1}s)",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Certification reports reproduced with the seeds of criterion 1.
fn certified_reports() -> Vec<CertReport> {
    certified_ops()
        .iter()
        .enumerate()
        .map(|(k, op)| certify_operator(op, CERT_SAMPLES, 100 + k as u64).expect("certification"))
        .collect()
}
