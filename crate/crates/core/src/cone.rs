//! Symmetric concave operators `f(lambda)` together with their cones, the
//! sampled certification of the structural assumptions, and the Gurvits
//! test for polynomial-induced operators.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::herm::{self, CMatrix, HermMatrix, C64};

/// Default additive slack for cone membership.
pub const CONE_TOL: f64 = 1e-9;

/// Gradients are only evaluated when the diagonal slack exceeds this.
pub const GRADIENT_SLACK: f64 = 1e-6;

/// Elementary symmetric polynomials `e_0 ..= e_k` by the product expansion
/// `prod (1 + lambda_i t)`.
pub fn elementary_all(lambda: &[f64], k: usize, out: &mut [f64]) {
    out[..=k].iter_mut().for_each(|x| *x = 0.0);
    out[0] = 1.0;
    for (i, &l) in lambda.iter().enumerate() {
        let top = k.min(i + 1);
        for j in (1..=top).rev() {
            out[j] += l * out[j - 1];
        }
    }
}

/// `sigma_k(lambda)`.
pub fn sigma_k(lambda: &[f64], k: usize) -> Result<f64> {
    let n = lambda.len();
    if k == 0 || k > n {
        return Err(LabError::BadIndex { k, n });
    }
    let mut e = [0.0; 17];
    if k < e.len() {
        elementary_all(lambda, k, &mut e);
        Ok(e[k])
    } else {
        let mut e = vec![0.0; k + 1];
        elementary_all(lambda, k, &mut e);
        Ok(e[k])
    }
}

/// `sigma_k` of `lambda` with entry `skip` removed.
fn sigma_without(lambda: &[f64], skip: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut e = [0.0; 17];
    e[0] = 1.0;
    let mut seen = 0;
    for (i, &l) in lambda.iter().enumerate() {
        if i == skip {
            continue;
        }
        seen += 1;
        for j in (1..=k.min(seen)).rev() {
            e[j] += l * e[j - 1];
        }
    }
    e[k]
}

/// Closed convex symmetric cones `Gamma_n <= Gamma <= Gamma_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeSpec {
    /// First octant.
    GammaN { n: usize },
    /// Positive trace half-space.
    Gamma1 { n: usize },
    /// `sigma_i >= 0` for `i <= k`.
    GammaK { n: usize, k: usize },
    /// `tilde(lambda) in Gamma_k` with `tilde(lambda)_i = (sum_{j != i} lambda_j)/(n-1)`.
    NMinus1 { n: usize, k: usize },
    /// Every `p`-fold partial sum nonnegative.
    PFold { n: usize, p: usize },
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        match *self {
            ConeSpec::GammaN { n }
            | ConeSpec::Gamma1 { n }
            | ConeSpec::GammaK { n, .. }
            | ConeSpec::NMinus1 { n, .. }
            | ConeSpec::PFold { n, .. } => n,
        }
    }

    /// Largest `t` with `lambda - t (1,...,1)` in the closed cone. Positive
    /// exactly on the interior; homogeneous of degree one.
    pub fn slack(&self, lambda: &[f64]) -> f64 {
        match *self {
            ConeSpec::GammaN { .. } => lambda.iter().copied().fold(f64::INFINITY, f64::min),
            ConeSpec::Gamma1 { n } => lambda.iter().sum::<f64>() / n as f64,
            ConeSpec::GammaK { n, k } => garding_slack(lambda, n, k),
            ConeSpec::NMinus1 { n, k } => {
                let mut t = [0.0; 16];
                tilde(lambda, &mut t[..n]);
                garding_slack(&t[..n], n, k)
            }
            ConeSpec::PFold { p, .. } => {
                let mut s = [0.0; 16];
                let n = lambda.len();
                s[..n].copy_from_slice(lambda);
                s[..n].sort_by(f64::total_cmp);
                s[..p].iter().sum::<f64>() / p as f64
            }
        }
    }
}

fn tilde(lambda: &[f64], out: &mut [f64]) {
    let n = lambda.len();
    let total: f64 = lambda.iter().sum();
    for i in 0..n {
        out[i] = (total - lambda[i]) / (n as f64 - 1.0);
    }
}

fn garding_contains(lambda: &[f64], k: usize, tol: f64) -> bool {
    let mut e = [0.0; 17];
    elementary_all(lambda, k, &mut e);
    e[1..=k].iter().all(|&s| s >= -tol)
}

fn garding_slack(lambda: &[f64], n: usize, k: usize) -> f64 {
    let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = lambda.iter().sum::<f64>() / n as f64;
    if k == n {
        return min;
    }
    if k == 1 {
        return mean;
    }
    // lambda - t e is in Gamma_k for t <= slack; the slack lies in [min, mean].
    let mut lo = min;
    let mut hi = mean;
    let mut shifted = [0.0; 16];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        for i in 0..n {
            shifted[i] = lambda[i] - mid;
        }
        if garding_contains(&shifted[..n], k, 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Membership with additive slack `tol` on every defining inequality.
pub fn cone_contains(cone: &ConeSpec, lambda: &[f64], tol: f64) -> bool {
    match *cone {
        ConeSpec::GammaN { .. } => lambda.iter().all(|&l| l >= -tol),
        ConeSpec::Gamma1 { .. } => lambda.iter().sum::<f64>() >= -tol,
        ConeSpec::GammaK { k, .. } => garding_contains(lambda, k, tol),
        ConeSpec::NMinus1 { n, k } => {
            let mut t = [0.0; 16];
            tilde(lambda, &mut t[..n]);
            garding_contains(&t[..n], k, tol)
        }
        ConeSpec::PFold { p, .. } => cone.slack(lambda) * p as f64 >= -tol,
    }
}

/// A homogeneous polynomial given by its monomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub n: usize,
    /// `(exponents, coefficient)` pairs.
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn new(n: usize, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        for (e, _) in &terms {
            if e.len() != n {
                return Err(LabError::DimensionMismatch { expected: n, found: e.len() });
            }
        }
        Ok(Self { n, terms })
    }

    fn from_map(n: usize, map: BTreeMap<Vec<u32>, f64>) -> Self {
        Self { n, terms: map.into_iter().filter(|(_, c)| *c != 0.0).collect() }
    }

    pub fn linear(coeffs: &[f64]) -> Self {
        let n = coeffs.len();
        let mut map = BTreeMap::new();
        for (i, &c) in coeffs.iter().enumerate() {
            let mut e = vec![0; n];
            e[i] = 1;
            map.insert(e, c);
        }
        Self::from_map(n, map)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                *map.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        Self::from_map(self.n, map)
    }

    /// `sigma_k` on `R^n`.
    pub fn elementary(n: usize, k: usize) -> Self {
        let mut map = BTreeMap::new();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == k {
                let e = (0..n).map(|i| (mask >> i) & 1).collect();
                map.insert(e, 1.0);
            }
        }
        Self::from_map(n, map)
    }

    /// `prod_{|J| = p} lambda_J`.
    pub fn pfold_product(n: usize, p: usize) -> Self {
        let mut acc = Polynomial { n, terms: vec![(vec![0; n], 1.0)] };
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == p {
                let coeffs: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
                acc = acc.mul(&Polynomial::linear(&coeffs));
            }
        }
        acc
    }

    /// Common degree of all terms.
    pub fn degree(&self) -> Result<u32> {
        let mut deg = None;
        for (i, (e, _)) in self.terms.iter().enumerate() {
            let d: u32 = e.iter().sum();
            match deg {
                None => deg = Some(d),
                Some(expected) if expected != d => {
                    return Err(LabError::NotHomogeneous { term: i, expected, found: d })
                }
                _ => {}
            }
        }
        Ok(deg.unwrap_or(0))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&p, &xi)| xi.powi(p as i32)).product::<f64>())
            .sum()
    }

    pub fn partial(&self, i: usize, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .filter(|(e, _)| e[i] > 0)
            .map(|(e, c)| {
                let mut v = c * e[i] as f64;
                for (j, (&p, &xj)) in e.iter().zip(x).enumerate() {
                    let p = if j == i { p - 1 } else { p };
                    v *= xj.powi(p as i32);
                }
                v
            })
            .sum()
    }
}

/// Operator families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorKind {
    /// `sigma_k^{1/k}` on `Gamma_k`.
    SigmaK { k: usize },
    /// `sigma_k^{1/k}(tilde lambda)`, the (n-1)-plurisubharmonic variant.
    NminusOneSigmaK { k: usize },
    /// `(prod_{|J|=p} lambda_J)^{1/C(n,p)}`.
    PfoldSum { p: usize },
    /// `p^{1/N}` for a polynomial passing the Gurvits test, on `Gamma_n`.
    GurvitsPoly { poly: Polynomial },
    /// `sigma_k(1/lambda)^{-1/k}` on `Gamma_n`. Fails determinant
    /// domination; kept as a negative control.
    InverseSigmaK { k: usize },
}

/// A symmetric, concave, degree-one homogeneous operator with its cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub n: usize,
    #[serde(flatten)]
    pub kind: OperatorKind,
    #[serde(skip)]
    degree: u32,
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl OperatorSpec {
    pub fn new(n: usize, kind: OperatorKind) -> Result<Self> {
        if n == 0 || n > 16 {
            return Err(LabError::InvalidOperator(format!("dimension {n} out of range 1..=16")));
        }
        let mut degree = 1;
        match &kind {
            OperatorKind::SigmaK { k } | OperatorKind::InverseSigmaK { k } => {
                if *k == 0 || *k > n {
                    return Err(LabError::BadIndex { k: *k, n });
                }
            }
            OperatorKind::NminusOneSigmaK { k } => {
                if n < 2 {
                    return Err(LabError::InvalidOperator("(n-1) variant needs n >= 2".into()));
                }
                if *k == 0 || *k > n {
                    return Err(LabError::BadIndex { k: *k, n });
                }
            }
            OperatorKind::PfoldSum { p } => {
                if *p == 0 || *p > n {
                    return Err(LabError::BadIndex { k: *p, n });
                }
            }
            OperatorKind::GurvitsPoly { poly } => {
                if poly.n != n {
                    return Err(LabError::DimensionMismatch { expected: n, found: poly.n });
                }
                degree = poly.degree()?;
                if degree == 0 {
                    return Err(LabError::InvalidOperator("constant polynomial".into()));
                }
                if poly.terms.iter().any(|(_, c)| *c < 0.0) {
                    return Err(LabError::InvalidOperator("negative polynomial coefficient".into()));
                }
            }
        }
        Ok(Self { n, kind, degree })
    }

    pub fn sigma_k(n: usize, k: usize) -> Result<Self> {
        Self::new(n, OperatorKind::SigmaK { k })
    }

    pub fn nminus1_sigma_k(n: usize, k: usize) -> Result<Self> {
        Self::new(n, OperatorKind::NminusOneSigmaK { k })
    }

    pub fn pfold_sum(n: usize, p: usize) -> Result<Self> {
        Self::new(n, OperatorKind::PfoldSum { p })
    }

    pub fn inverse_sigma_k(n: usize, k: usize) -> Result<Self> {
        Self::new(n, OperatorKind::InverseSigmaK { k })
    }

    /// Re-derives cached data after deserialization.
    pub fn validated(self) -> Result<Self> {
        Self::new(self.n, self.kind)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cone(&self) -> ConeSpec {
        let n = self.n;
        match self.kind {
            OperatorKind::SigmaK { k } => match k {
                1 => ConeSpec::Gamma1 { n },
                k if k == n => ConeSpec::GammaN { n },
                k => ConeSpec::GammaK { n, k },
            },
            OperatorKind::NminusOneSigmaK { k } => ConeSpec::NMinus1 { n, k },
            OperatorKind::PfoldSum { p } => {
                if p == n {
                    ConeSpec::Gamma1 { n }
                } else {
                    ConeSpec::PFold { n, p }
                }
            }
            OperatorKind::GurvitsPoly { .. } | OperatorKind::InverseSigmaK { .. } => ConeSpec::GammaN { n },
        }
    }

    /// Human-readable label.
    pub fn label(&self) -> String {
        match &self.kind {
            OperatorKind::SigmaK { k } => format!("sigma_{k}^(1/{k}) n={}", self.n),
            OperatorKind::NminusOneSigmaK { k } => format!("(n-1) sigma_{k}^(1/{k}) n={}", self.n),
            OperatorKind::PfoldSum { p } => format!("{p}-fold sum n={}", self.n),
            OperatorKind::GurvitsPoly { .. } => format!("gurvits p^(1/{}) n={}", self.degree, self.n),
            OperatorKind::InverseSigmaK { k } => format!("inverse sigma_{k} n={}", self.n),
        }
    }

    fn check_len(&self, lambda: &[f64]) -> Result<()> {
        if lambda.len() != self.n {
            return Err(LabError::DimensionMismatch { expected: self.n, found: lambda.len() });
        }
        Ok(())
    }

    fn has_constant_gradient(&self) -> bool {
        matches!(
            self.kind,
            OperatorKind::SigmaK { k: 1 } | OperatorKind::NminusOneSigmaK { k: 1 }
        ) || matches!(self.kind, OperatorKind::PfoldSum { p } if p == self.n)
    }

    /// `f(lambda)`; fails when `lambda` is outside the cone by more than
    /// [`CONE_TOL`].
    pub fn eval(&self, lambda: &[f64]) -> Result<f64> {
        self.check_len(lambda)?;
        let cone = self.cone();
        if !cone_contains(&cone, lambda, CONE_TOL) {
            return Err(LabError::OutsideCone { slack: cone.slack(lambda), location: None });
        }
        Ok(self.eval_unchecked(lambda))
    }

    pub(crate) fn eval_unchecked(&self, lambda: &[f64]) -> f64 {
        let n = self.n;
        match &self.kind {
            OperatorKind::SigmaK { k } => root_sigma(lambda, *k),
            OperatorKind::NminusOneSigmaK { k } => {
                let mut t = [0.0; 16];
                tilde(lambda, &mut t[..n]);
                root_sigma(&t[..n], *k)
            }
            OperatorKind::PfoldSum { p } => {
                let nn = binomial(n, *p) as f64;
                let mut log_sum = 0.0;
                let mut zero = false;
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize == *p {
                        let s: f64 = (0..n).filter(|i| (mask >> i) & 1 == 1).map(|i| lambda[i]).sum();
                        if s <= 0.0 {
                            zero = true;
                        } else {
                            log_sum += s.ln();
                        }
                    }
                }
                if zero {
                    0.0
                } else {
                    (log_sum / nn).exp()
                }
            }
            OperatorKind::GurvitsPoly { poly } => poly.eval(lambda).max(0.0).powf(1.0 / self.degree as f64),
            OperatorKind::InverseSigmaK { k } => {
                if lambda.iter().any(|&l| l <= 0.0) {
                    return 0.0;
                }
                let mut inv = [0.0; 16];
                for i in 0..n {
                    inv[i] = 1.0 / lambda[i];
                }
                let s = root_sigma(&inv[..n], *k);
                1.0 / s
            }
        }
    }

    /// `df/dlambda_i`.
    pub fn grad(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.check_len(lambda)?;
        let cone = self.cone();
        if !cone_contains(&cone, lambda, CONE_TOL) {
            return Err(LabError::OutsideCone { slack: cone.slack(lambda), location: None });
        }
        if !self.has_constant_gradient() {
            let s = cone.slack(lambda);
            if !(s > GRADIENT_SLACK) {
                return Err(LabError::BoundaryDegenerate { slack: s });
            }
        }
        let mut out = vec![0.0; self.n];
        self.grad_unchecked(lambda, &mut out);
        Ok(out)
    }

    /// Value and gradient without cone checks; the caller guarantees an
    /// interior point.
    pub(crate) fn grad_unchecked(&self, lambda: &[f64], out: &mut [f64]) -> f64 {
        let n = self.n;
        match &self.kind {
            OperatorKind::SigmaK { k } => grad_root_sigma(lambda, *k, out),
            OperatorKind::NminusOneSigmaK { k } => {
                let mut t = [0.0; 16];
                let mut gt = [0.0; 16];
                tilde(lambda, &mut t[..n]);
                let f = grad_root_sigma(&t[..n], *k, &mut gt[..n]);
                let total: f64 = gt[..n].iter().sum();
                for j in 0..n {
                    out[j] = (total - gt[j]) / (n as f64 - 1.0);
                }
                f
            }
            OperatorKind::PfoldSum { p } => {
                let f = self.eval_unchecked(lambda);
                let nn = binomial(n, *p) as f64;
                out[..n].iter_mut().for_each(|x| *x = 0.0);
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize == *p {
                        let s: f64 = (0..n).filter(|i| (mask >> i) & 1 == 1).map(|i| lambda[i]).sum();
                        for i in 0..n {
                            if (mask >> i) & 1 == 1 {
                                out[i] += 1.0 / s;
                            }
                        }
                    }
                }
                for x in out[..n].iter_mut() {
                    *x *= f / nn;
                }
                f
            }
            OperatorKind::GurvitsPoly { poly } => {
                let d = self.degree as f64;
                let p = poly.eval(lambda);
                let f = p.powf(1.0 / d);
                let scale = f / (d * p);
                for i in 0..n {
                    out[i] = scale * poly.partial(i, lambda);
                }
                f
            }
            OperatorKind::InverseSigmaK { k } => {
                let mut inv = [0.0; 16];
                for i in 0..n {
                    inv[i] = 1.0 / lambda[i];
                }
                let s = sigma_k(&inv[..n], *k).unwrap_or(0.0);
                let kf = *k as f64;
                let f = s.powf(-1.0 / kf);
                for i in 0..n {
                    let d = sigma_without(&inv[..n], i, k - 1);
                    out[i] = f / (kf * s) * d / (lambda[i] * lambda[i]);
                }
                f
            }
        }
    }

    /// Value of `F(A) = f(lambda[A])` with respect to the metric whose
    /// Cholesky factor is `p`, and the gradient matrix `D` with
    /// `dF[B] = tr(D B)`.
    pub fn matrix_gradient(&self, a: &HermMatrix, p: &CMatrix) -> Result<(f64, HermMatrix)> {
        let eig = herm::generalized_eigen_with_factor(a, p);
        let grad = self.grad(&eig.spectrum.values)?;
        let f = self.eval_unchecked(&eig.spectrum.values);
        let n = self.n;
        // W = U^* P^{-1}
        let pinv = herm::lower_inverse(p);
        let w = eig.vectors.adjoint().mul(&pinv);
        let mut d = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..n {
                    acc += w.get(r, i).conj() * grad[r] * w.get(r, j);
                }
                d[i * n + j] = acc;
            }
        }
        Ok((f, HermMatrix::from_raw(n, d)))
    }
}

fn root_sigma(lambda: &[f64], k: usize) -> f64 {
    let mut e = [0.0; 17];
    elementary_all(lambda, k, &mut e);
    if k == 1 {
        e[1].max(0.0)
    } else if k == 2 {
        e[2].max(0.0).sqrt()
    } else {
        e[k].max(0.0).powf(1.0 / k as f64)
    }
}

fn grad_root_sigma(lambda: &[f64], k: usize, out: &mut [f64]) -> f64 {
    let n = lambda.len();
    if k == 1 {
        out[..n].iter_mut().for_each(|x| *x = 1.0);
        return lambda.iter().sum();
    }
    if k == 2 && n == 2 {
        let f = (lambda[0] * lambda[1]).max(0.0).sqrt();
        out[0] = 0.5 * f / lambda[0];
        out[1] = 0.5 * f / lambda[1];
        return f;
    }
    let s = sigma_k(lambda, k).unwrap_or(0.0);
    let kf = k as f64;
    let f = s.powf(1.0 / kf);
    let scale = f / (kf * s);
    for i in 0..n {
        out[i] = scale * sigma_without(lambda, i, k - 1);
    }
    f
}

/// Sampled certification data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub operator: String,
    pub samples: usize,
    /// Sampled infimum of `f / (prod lambda)^{1/n}` on `Gamma_n`.
    pub c0_estimate: f64,
    /// Sampled infimum of `prod df/dlambda_i` on the cone.
    pub gamma_estimate: f64,
    pub concavity_violations: usize,
    pub homogeneity_max_err: f64,
    pub euler_max_rel_err: f64,
    pub min_gradient: f64,
    /// Ratio `f / (prod lambda)^{1/n}` does not decay along boundary probes.
    pub domination_holds: bool,
    /// `gamma_estimate >= 0.95 (c0_estimate / n)^n`.
    pub structural_holds: bool,
    pub passed: bool,
}

/// Uniform point on `{sum lambda = n} ∩ Gamma_n`.
fn simplex_point(rng: &mut ChaCha8Rng, n: usize, out: &mut [f64]) {
    let mut total = 0.0;
    for x in out[..n].iter_mut() {
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        *x = -u.ln();
        total += *x;
    }
    for x in out[..n].iter_mut() {
        *x *= n as f64 / total;
    }
}

/// Interior cone samples on the slice `sum lambda = n`: half uniform on the
/// positive simplex, half stretched away from the diagonal and kept only if
/// they stay inside the cone with gradient slack.
pub fn sample_cone(op: &OperatorSpec, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = op.n;
    let cone = op.cone();
    let mut out = Vec::with_capacity(count);
    let mut w = vec![0.0; n];
    let mut attempts = 0usize;
    while out.len() < count && attempts < 200 * count.max(1) {
        attempts += 1;
        simplex_point(rng, n, &mut w);
        let stretch = if out.len() % 2 == 0 { 1.0 } else { rng.gen_range(1.0..4.0) };
        let lambda: Vec<f64> = w.iter().map(|&x| 1.0 + stretch * (x - 1.0)).collect();
        if cone.slack(&lambda) > 10.0 * GRADIENT_SLACK {
            out.push(lambda);
        }
    }
    out
}

fn dominance_ratio(op: &OperatorSpec, lambda: &[f64]) -> f64 {
    let n = op.n as f64;
    let geo = (lambda.iter().map(|x| x.ln()).sum::<f64>() / n).exp();
    op.eval_unchecked(lambda) / geo
}

/// Pattern search for the minimum of the dominance ratio on `prod = 1`,
/// using multiplicative moves that preserve the product.
fn refine_dominance(op: &OperatorSpec, start: &[f64]) -> f64 {
    let n = op.n;
    let mut x: Vec<f64> = start.to_vec();
    let mut best = dominance_ratio(op, &x);
    let mut step: f64 = 0.25;
    while step > 1e-10 {
        let mut improved = false;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut y = x.clone();
                y[i] *= step.exp();
                y[j] *= (-step).exp();
                let v = dominance_ratio(op, &y);
                if v < best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

/// Probes towards the boundary of `Gamma_n` along `prod lambda = 1`.
fn boundary_probe(op: &OperatorSpec) -> (f64, f64) {
    let n = op.n;
    if n == 1 {
        let r = dominance_ratio(op, &[1.0]);
        return (r, r);
    }
    let nf = n as f64;
    let mut first = f64::INFINITY;
    let mut last = f64::INFINITY;
    for j in 1..=8 {
        let t = 10f64.powi(-j);
        let mut a = vec![t; n];
        a[0] = t.powf(-(nf - 1.0));
        let mut b = vec![1.0 / t; n];
        b[0] = t.powf(nf - 1.0);
        let r = dominance_ratio(op, &a).min(dominance_ratio(op, &b));
        if j == 1 {
            first = r;
        }
        last = r;
    }
    (first, last)
}

/// Sampled check of the structural assumptions: concavity, homogeneity,
/// Euler identity, positive gradient, determinant domination and the
/// derived bound on `prod df/dlambda_i`.
pub fn certify_operator(op: &OperatorSpec, sample_budget: usize, seed: u64) -> Result<CertReport> {
    if sample_budget < 1000 {
        return Err(LabError::ConfigInvalid(format!("sample budget {sample_budget} < 1000")));
    }
    let n = op.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // determinant domination
    let mut w = vec![0.0; n];
    let mut c0 = f64::INFINITY;
    let mut argmin = vec![1.0; n];
    for _ in 0..sample_budget {
        simplex_point(&mut rng, n, &mut w);
        if w.iter().any(|&x| x <= 1e-300) {
            continue;
        }
        let r = dominance_ratio(op, &w);
        if r < c0 {
            c0 = r;
            argmin.copy_from_slice(&w);
        }
    }
    let geo = (argmin.iter().map(|x| x.ln()).sum::<f64>() / n as f64).exp();
    let start: Vec<f64> = argmin.iter().map(|x| x / geo).collect();
    c0 = c0.min(refine_dominance(op, &start));
    let (probe_first, probe_last) = boundary_probe(op);
    c0 = c0.min(probe_last);
    let domination_holds = probe_last >= 1e-3 * probe_first && c0 > 0.0;

    let samples = sample_cone(op, sample_budget, &mut rng);
    if samples.is_empty() {
        return Err(LabError::OutsideCone { slack: 0.0, location: None });
    }
    let mut grad = vec![0.0; n];
    let mut gamma = f64::INFINITY;
    let mut min_gradient = f64::INFINITY;
    let mut euler: f64 = 0.0;
    let mut homog: f64 = 0.0;
    for lambda in &samples {
        let f = op.grad_unchecked(lambda, &mut grad);
        gamma = gamma.min(grad.iter().product());
        min_gradient = grad.iter().copied().fold(min_gradient, f64::min);
        let e: f64 = lambda.iter().zip(&grad).map(|(l, g)| l * g).sum();
        euler = euler.max((e - f).abs() / f.abs().max(1e-300));
        let t: f64 = rng.gen_range(0.1..10.0);
        let scaled: Vec<f64> = lambda.iter().map(|x| t * x).collect();
        homog = homog.max((op.eval_unchecked(&scaled) - t * f).abs());
    }

    let mut violations = 0;
    for i in 0..samples.len() {
        let j = rng.gen_range(0..samples.len());
        let sx: f64 = rng.gen_range(0.1..10.0);
        let sy: f64 = rng.gen_range(0.1..10.0);
        let x: Vec<f64> = samples[i].iter().map(|v| v * sx).collect();
        let y: Vec<f64> = samples[j].iter().map(|v| v * sy).collect();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let lhs = op.eval_unchecked(&mid);
        let rhs = 0.5 * (op.eval_unchecked(&x) + op.eval_unchecked(&y));
        if lhs < rhs - 1e-10 {
            violations += 1;
        }
    }

    let structural_holds = gamma >= 0.95 * (c0 / n as f64).powi(n as i32);
    let passed = violations == 0
        && homog <= 1e-10
        && euler <= 1e-9
        && min_gradient > 0.0
        && domination_holds
        && structural_holds
        && gamma > 0.0;
    Ok(CertReport {
        operator: op.label(),
        samples: samples.len(),
        c0_estimate: c0,
        gamma_estimate: gamma,
        concavity_violations: violations,
        homogeneity_max_err: homog,
        euler_max_rel_err: euler,
        min_gradient,
        domination_holds,
        structural_holds,
        passed,
    })
}

/// Outcome of the Gurvits test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GurvitsOutcome {
    pub passes: bool,
    /// Common value of `dp/dx_i(e)`.
    pub k: f64,
    pub value_at_e: f64,
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
}

/// Nonnegative coefficients, `p(e) > 0` and equal positive partials at
/// `e = (1,...,1)`. A passing polynomial yields the operator `p^{1/N}` on
/// `Gamma_n`.
pub fn gurvits_check(poly: &Polynomial, degree: u32) -> Result<GurvitsOutcome> {
    let d = poly.degree()?;
    if !poly.terms.is_empty() && d != degree {
        return Err(LabError::NotHomogeneous { term: 0, expected: degree, found: d });
    }
    let n = poly.n;
    let e = vec![1.0; n];
    let value_at_e = poly.eval(&e);
    let partials: Vec<f64> = (0..n).map(|i| poly.partial(i, &e)).collect();
    let k = partials.first().copied().unwrap_or(0.0);
    let scale = partials.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let reason = if poly.terms.iter().any(|(_, c)| *c < 0.0) {
        Some("negative coefficient".to_string())
    } else if !(value_at_e > 0.0) {
        Some("p(e) is not positive".to_string())
    } else if partials.iter().any(|p| (p - k).abs() > 1e-12 * scale) {
        Some(format!("unequal partials at e: {partials:?}"))
    } else if !(k > 0.0) {
        Some("partials at e are not positive".to_string())
    } else {
        None
    };
    let passes = reason.is_none();
    let operator = if passes {
        Some(OperatorSpec::new(n, OperatorKind::GurvitsPoly { poly: poly.clone() })?)
    } else {
        None
    };
    Ok(GurvitsOutcome { passes, k, value_at_e, reason, operator })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_sigma(l: &[f64], k: usize) -> f64 {
        let n = l.len();
        (0u32..(1 << n))
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|i| (m >> i) & 1 == 1).map(|i| l[i]).product::<f64>())
            .sum()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_k(&[1.0, 1.0, 1.0], 2).unwrap(), 3.0);
        let l = [0.3, -1.2, 2.5, 0.7];
        assert!((sigma_k(&l, 1).unwrap() - l.iter().sum::<f64>()).abs() < 1e-15);
        assert!(matches!(sigma_k(&l, 5), Err(LabError::BadIndex { .. })));
        assert!(matches!(sigma_k(&l, 0), Err(LabError::BadIndex { .. })));
    }

    #[test]
    fn sigma_matches_subset_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = rng.gen_range(1..=6);
            let l: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            for k in 1..=n {
                let a = sigma_k(&l, k).unwrap();
                let b = brute_sigma(&l, k);
                assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn eval_examples() {
        let op = OperatorSpec::sigma_k(3, 2).unwrap();
        assert!((op.eval(&[1.0; 3]).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        let op = OperatorSpec::pfold_sum(3, 2).unwrap();
        assert!((op.eval(&[1.0; 3]).unwrap() - 2.0).abs() < 1e-14);
        let op = OperatorSpec::nminus1_sigma_k(2, 1).unwrap();
        assert!((op.eval(&[0.3, 1.9]).unwrap() - 2.2).abs() < 1e-15);
    }

    #[test]
    fn outside_cone_is_reported() {
        let op = OperatorSpec::sigma_k(2, 2).unwrap();
        assert!(matches!(op.eval(&[-1.0, 3.0]), Err(LabError::OutsideCone { .. })));
        let op = OperatorSpec::sigma_k(2, 1).unwrap();
        assert!(op.eval(&[-1.0, 3.0]).is_ok());
    }

    #[test]
    fn gradient_examples() {
        let op = OperatorSpec::sigma_k(4, 1).unwrap();
        assert_eq!(op.grad(&[0.1, 2.0, -0.5, 1.0]).unwrap(), vec![1.0; 4]);
        let op = OperatorSpec::sigma_k(3, 3).unwrap();
        for g in op.grad(&[1.0; 3]).unwrap() {
            assert!((g - 1.0 / 3.0).abs() < 1e-15);
        }
        let op = OperatorSpec::sigma_k(2, 2).unwrap();
        assert!(matches!(op.grad(&[1e-9, 1.0]), Err(LabError::BoundaryDegenerate { .. })));
    }

    #[test]
    fn cone_membership_examples() {
        assert!(cone_contains(&ConeSpec::GammaK { n: 2, k: 2 }, &[1.0, 1.0], CONE_TOL));
        let l = [-1.0, 3.0];
        assert!(cone_contains(&ConeSpec::GammaK { n: 2, k: 1 }, &l, CONE_TOL));
        assert!(!cone_contains(&ConeSpec::GammaK { n: 2, k: 2 }, &l, CONE_TOL));
        assert!(!cone_contains(&ConeSpec::GammaN { n: 3 }, &[1.0, -0.1, 2.0], CONE_TOL));
    }

    #[test]
    fn slack_is_the_diagonal_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cones = [
            ConeSpec::GammaK { n: 4, k: 2 },
            ConeSpec::GammaK { n: 4, k: 3 },
            ConeSpec::NMinus1 { n: 3, k: 2 },
            ConeSpec::PFold { n: 4, p: 2 },
        ];
        for cone in cones {
            for _ in 0..100 {
                let l: Vec<f64> = (0..cone.dim()).map(|_| rng.gen_range(-1.0..3.0)).collect();
                let s = cone.slack(&l);
                let inside: Vec<f64> = l.iter().map(|x| x - s + 1e-7).collect();
                let outside: Vec<f64> = l.iter().map(|x| x - s - 1e-7).collect();
                assert!(cone_contains(&cone, &inside, 0.0), "{cone:?} {l:?}");
                assert!(!cone_contains(&cone, &outside, 0.0), "{cone:?} {l:?}");
            }
        }
    }

    #[test]
    fn gurvits_examples() {
        let out = gurvits_check(&Polynomial::elementary(3, 2), 2).unwrap();
        assert!(out.passes);
        assert_eq!(out.k, 2.0);
        assert_eq!(out.value_at_e, 3.0);

        let sq = Polynomial::new(2, vec![(vec![2, 0], 1.0)]).unwrap();
        assert!(!gurvits_check(&sq, 2).unwrap().passes);

        let bad = Polynomial::new(2, vec![(vec![2, 0], 1.0), (vec![1, 0], 1.0)]).unwrap();
        assert!(matches!(gurvits_check(&bad, 2), Err(LabError::NotHomogeneous { .. })));
    }

    #[test]
    fn gurvits_pfold_product_matches_pfold_operator() {
        let poly = Polynomial::pfold_product(3, 2);
        let out = gurvits_check(&poly, 3).unwrap();
        assert!(out.passes);
        let induced = out.operator.unwrap();
        let pfold = OperatorSpec::pfold_sum(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let l: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..5.0)).collect();
            let a = induced.eval(&l).unwrap();
            let b = pfold.eval(&l).unwrap();
            assert!((a - b).abs() < 1e-12 * b);
        }
    }

    #[test]
    fn matrix_gradient_is_diagonal_for_diagonal_input() {
        let op = OperatorSpec::sigma_k(2, 2).unwrap();
        let a = HermMatrix::diagonal(&[1.0, 4.0]);
        let p = herm::cholesky_factor(&HermMatrix::identity(2)).unwrap();
        let (f, d) = op.matrix_gradient(&a, &p).unwrap();
        assert!((f - 2.0).abs() < 1e-14);
        assert!((d.get(0, 0).re - 1.0).abs() < 1e-14);
        assert!((d.get(1, 1).re - 0.25).abs() < 1e-14);
        assert!(d.get(0, 1).norm() < 1e-15);
    }

    #[test]
    fn negative_control_fails_domination() {
        let op = OperatorSpec::inverse_sigma_k(2, 1).unwrap();
        let rep = certify_operator(&op, 2000, 1).unwrap();
        assert!(!rep.domination_holds);
        assert!(!rep.passed);
        assert!(rep.c0_estimate < 1e-6);
    }

    #[test]
    fn certify_requires_budget() {
        let op = OperatorSpec::sigma_k(2, 2).unwrap();
        assert!(certify_operator(&op, 10, 1).is_err());
    }
}
