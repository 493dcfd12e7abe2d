use hessian_lab::cone::{cone_contains, sample_cone, sigma_k, ConeSpec, OperatorSpec};
use hessian_lab::config::ExperimentConfig;
use hessian_lab::estimate::{de_giorgi_vanishing, random_step_function, DeGiorgiParams};
use hessian_lab::expr::{Env, Expr, Var};
use hessian_lab::field::{TorusField, TorusGrid};
use hessian_lab::herm::{generalized_eigenvalues, HermMatrix, C64};
use hessian_lab::regularize::{inf_convolution, sup_convolution};
use hessian_lab::solver::{solve_fixed_rhs, SolveConfig};
use hessian_lab::background::BackgroundData;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn operators() -> Vec<OperatorSpec> {
    vec![
        OperatorSpec::sigma_k(2, 1).unwrap(),
        OperatorSpec::sigma_k(2, 2).unwrap(),
        OperatorSpec::sigma_k(3, 2).unwrap(),
        OperatorSpec::sigma_k(3, 3).unwrap(),
        OperatorSpec::sigma_k(4, 3).unwrap(),
        OperatorSpec::nminus1_sigma_k(3, 2).unwrap(),
        OperatorSpec::nminus1_sigma_k(2, 2).unwrap(),
        OperatorSpec::pfold_sum(3, 2).unwrap(),
    ]
}

fn hermitian(n: usize) -> impl Strategy<Value = HermMatrix> {
    prop::collection::vec(-2.0f64..2.0, 2 * n * n).prop_map(move |v| {
        let mut e = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                let re = v[2 * (a * n + b)];
                let im = if i == j { 0.0 } else { v[2 * (a * n + b) + 1] };
                e[i * n + j] = C64::new(re, if i <= j { im } else { -im });
            }
        }
        HermMatrix::new(n, e).unwrap()
    })
}

/// `B B^* + I / 2`, positive definite.
fn metric(n: usize) -> impl Strategy<Value = HermMatrix> {
    hermitian(n).prop_map(move |b| {
        let c = b.to_cmatrix();
        let p = c.mul(&c.adjoint());
        HermMatrix::new(n, p.data).unwrap().add_scaled(&HermMatrix::identity(n), 0.5).unwrap()
    })
}

fn pencil() -> impl Strategy<Value = (HermMatrix, HermMatrix)> {
    (1usize..=4).prop_flat_map(|n| (hermitian(n), metric(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generalized_roots_annihilate_the_pencil((a, g) in pencil()) {
        let n = a.dim();
        let s = generalized_eigenvalues(&a, &g).unwrap();
        prop_assert_eq!(s.values.len(), n);
        prop_assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
        let scale = a.max_abs().max(g.max_abs()).max(1.0).powi(n as i32);
        for &l in &s.values {
            let d = g.scale(l).add_scaled(&a, -1.0).unwrap().det();
            prop_assert!(d.abs() <= 1e-8 * scale * (1.0 + l.abs()).powi(n as i32), "det {} at {}", d, l);
        }
    }

    #[test]
    fn generalized_roots_are_congruence_invariant((a, g) in pencil(), q in (1usize..=4).prop_flat_map(metric)) {
        prop_assume!(q.dim() == a.dim());
        let qc = q.to_cmatrix();
        let s0 = generalized_eigenvalues(&a, &g).unwrap();
        let s1 = generalized_eigenvalues(&a.congruence(&qc).unwrap(), &g.congruence(&qc).unwrap()).unwrap();
        for (x, y) in s0.values.iter().zip(&s1.values) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn operator_is_symmetric_homogeneous_and_concave(seed in any::<u64>(), t in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for op in operators() {
            let pts = sample_cone(&op, 4, &mut rng);
            for w in pts.windows(2) {
                let (l, m) = (&w[0], &w[1]);
                let f = op.eval(l).unwrap();
                let scaled: Vec<f64> = l.iter().map(|x| x * t).collect();
                prop_assert!((op.eval(&scaled).unwrap() - t * f).abs() <= 1e-10 * t * f.abs().max(1.0));
                let mut rev = l.clone();
                rev.reverse();
                prop_assert!((op.eval(&rev).unwrap() - f).abs() <= 1e-12 * f.abs().max(1.0));
                let mid: Vec<f64> = l.iter().zip(m).map(|(a, b)| 0.5 * (a + b)).collect();
                let chord = 0.5 * (f + op.eval(m).unwrap());
                prop_assert!(op.eval(&mid).unwrap() >= chord - 1e-12 * chord.abs().max(1.0), "{}", op.label());
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for op in operators() {
            for l in sample_cone(&op, 3, &mut rng) {
                let g = op.grad(&l).unwrap();
                let h = 1e-6;
                for i in 0..l.len() {
                    let (mut p, mut m) = (l.clone(), l.clone());
                    p[i] += h;
                    m[i] -= h;
                    let fd = (op.eval(&p).unwrap() - op.eval(&m).unwrap()) / (2.0 * h);
                    prop_assert!(g[i] > 0.0, "{} not increasing", op.label());
                    prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-3), "{} {} vs {}", op.label(), fd, g[i]);
                }
            }
        }
    }

    #[test]
    fn cones_are_nested(l in prop::collection::vec(-3.0f64..3.0, 4)) {
        let n = 4;
        let mut prev_slack = f64::NEG_INFINITY;
        // Gamma_n inside Gamma_{n-1} inside ... inside Gamma_1
        for k in (1..=n).rev() {
            let cone = ConeSpec::GammaK { n, k };
            let s = cone.slack(&l);
            prop_assert!(s >= prev_slack - 1e-12);
            prev_slack = s;
            if k < n && cone_contains(&ConeSpec::GammaK { n, k: k + 1 }, &l, 0.0) {
                prop_assert!(cone_contains(&cone, &l, 1e-12));
            }
        }
        if cone_contains(&ConeSpec::GammaN { n }, &l, 0.0) {
            for k in 1..=n {
                prop_assert!(sigma_k(&l, k).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn convolutions_bracket_the_field(a in -0.2f64..0.2, b in -0.2f64..0.2, eps in 0.01f64..0.1) {
        let grid = TorusGrid::new(1, 16).unwrap();
        let phi = TorusField::from_fn(grid, |x| {
            use std::f64::consts::PI;
            a * (2.0 * PI * x[0]).cos() + b * (2.0 * PI * (x[0] + x[1])).sin()
        });
        let sup = sup_convolution(&phi, eps).unwrap();
        let inf = inf_convolution(&phi, eps).unwrap();
        let neg = inf_convolution(&phi.scale(-1.0), eps).unwrap();
        for i in 0..grid.len() {
            prop_assert!(sup.field.values[i] >= phi.values[i] + eps);
            prop_assert!(inf.field.values[i] <= phi.values[i] - eps);
            prop_assert_eq!(neg.field.values[i], -sup.field.values[i]);
        }
    }

    #[test]
    fn fitted_b0_satisfies_the_hypothesis_and_bound(seed in any::<u64>(), len in 2usize..30, mu in 0.05f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_step_function(len, &mut rng);
        let b0 = phi.fit_b0(mu, 0.0).unwrap();
        let p = DeGiorgiParams::new(b0, mu, 0.0).unwrap();
        prop_assert!(phi.hypothesis_violation(&p).is_none());
        let rep = de_giorgi_vanishing(&phi, &p).unwrap();
        prop_assert!(rep.ok && rep.halving_ok);
        for w in rep.recursion.windows(2) {
            prop_assert!(w[1].1 <= w[0].1);
        }
    }

    #[test]
    fn jet_matches_finite_differences(x0 in -1.0f64..1.0, x1 in -1.0f64..1.0) {
        let e = Expr::parse("sin(2*pi*x0)*exp(cos(x1)) + 0.3*(x0 - x1)^4 + sqrt(2 + x0*x1)").unwrap();
        let x = [x0, x1];
        let j = e.jet(&x);
        let ev = |y: &[f64]| e.eval(&Env { x: y, u: 0.0, b0: 0.0 });
        let shifted = |a: usize, h: f64| {
            let mut y = x;
            y[a] += h;
            ev(&y)
        };
        for a in 0..2 {
            let h = 1e-5;
            prop_assert!(((shifted(a, h) - shifted(a, -h)) / (2.0 * h) - j.g[a]).abs() < 1e-6);
            let h = 1e-3;
            let second = (shifted(a, h) - 2.0 * ev(&x) + shifted(a, -h)) / (h * h);
            prop_assert!((second - j.hessian(a, a)).abs() < 1e-3 * (1.0 + second.abs()));
            let sym = e.diff(Var::X(a)).eval(&Env { x: &x, u: 0.0, b0: 0.0 });
            prop_assert!((sym - j.g[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn resampling_preserves_band_limited_samples(c in prop::collection::vec(-1.0f64..1.0, 6)) {
        use std::f64::consts::PI;
        let f = |x: &[f64]| {
            c[0] + c[1] * (2.0 * PI * x[0]).cos() + c[2] * (2.0 * PI * x[1]).sin()
                + c[3] * (4.0 * PI * (x[0] - x[1])).cos() + c[4] * (6.0 * PI * x[0]).sin() + c[5] * (2.0 * PI * (x[0] + 2.0 * x[1])).cos()
        };
        let coarse = TorusField::from_fn(TorusGrid::new(1, 8).unwrap(), f);
        let fine = coarse.resample(20).unwrap();
        let exact = TorusField::from_fn(TorusGrid::new(1, 20).unwrap(), f);
        prop_assert!(fine.sub(&exact).unwrap().sup_norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn c_shifts_against_constant_rhs(k in -1.0f64..1.0, a in 0.0f64..0.4) {
        let grid = TorusGrid::new(1, 8).unwrap();
        let op = OperatorSpec::sigma_k(1, 1).unwrap();
        let bg = BackgroundData::flat(grid, &op.cone()).unwrap();
        let g = TorusField::from_fn(grid, |x| a * (2.0 * std::f64::consts::PI * x[0]).cos());
        let cfg = SolveConfig::default();
        let c0 = solve_fixed_rhs(&op, &bg, &g, &cfg).unwrap().c;
        let c1 = solve_fixed_rhs(&op, &bg, &g.shift(k), &cfg).unwrap().c;
        prop_assert!((c1 - (c0 - k)).abs() <= 2.0 * cfg.newton_tol);
    }

    #[test]
    fn config_hash_ignores_formatting(m in 8usize..40, seed in any::<u64>()) {
        let text = format!(
            r#"{{"name": "p", "operator": {{"kind": "sigma_k", "k": 1}}, "background": {{"n": 1, "m": {m}}},
               "rhs": {{"mode": "fixed", "g": "cos(2*pi*x0)"}}, "seed": {seed}}}"#
        );
        let a = ExperimentConfig::from_json(&text).unwrap();
        let b = ExperimentConfig::from_json(&serde_json::to_string_pretty(&a).unwrap()).unwrap();
        prop_assert_eq!(a.hash(), b.hash());
    }
}
