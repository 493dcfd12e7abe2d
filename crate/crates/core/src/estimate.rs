//! Empirical side of the estimates: level-set quantities, the De Giorgi
//! vanishing lemma, the stability exponent, monotonicity of `c(G)` and
//! multi-start uniqueness probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::background::{gamma_subharmonic_test, BackgroundData};
use crate::cone::OperatorSpec;
use crate::error::{LabError, Result};
use crate::field::{TorusField, TorusGrid};
use crate::solver::{
    solve_fixed_rhs, solve_fixed_rhs_from, solve_monotone_rhs_from, MonotoneRhs, Normalization, SolveConfig,
};

fn same_grid(a: &TorusField, b: &TorusField) -> Result<()> {
    if a.grid != b.grid {
        return Err(LabError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(())
}

/// `A = (int ((1 - delta) v - phi - s)_+^kappa e^{kappa n G0})^{1/kappa}`
/// with cell weight `h^{2n}`.
pub fn a_quantity(v: &TorusField, phi: &TorusField, g0: &TorusField, delta: f64, s: f64, kappa: f64) -> Result<f64> {
    same_grid(v, phi)?;
    same_grid(v, g0)?;
    let n = v.grid.n as f64;
    let w = v.grid.cell_volume();
    let mut sum = 0.0;
    for i in 0..v.len() {
        let d = (1.0 - delta) * v.values[i] - phi.values[i] - s;
        if d > 0.0 {
            sum += d.powf(kappa) * (kappa * n * g0.values[i]).exp();
        }
    }
    Ok((sum * w).powf(1.0 / kappa))
}

/// `u(s) = int_{(1 - delta) v - phi > s} e^{n G0}` on an increasing grid of `s`.
pub fn level_set_function(v: &TorusField, phi: &TorusField, g0: &TorusField, delta: f64, s_grid: &[f64]) -> Result<Vec<f64>> {
    same_grid(v, phi)?;
    same_grid(v, g0)?;
    if s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::ConfigInvalid("s grid must be strictly increasing".into()));
    }
    let n = v.grid.n as f64;
    let w = v.grid.cell_volume();
    let mut pts: Vec<(f64, f64)> =
        (0..v.len()).map(|i| ((1.0 - delta) * v.values[i] - phi.values[i], (n * g0.values[i]).exp() * w)).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    // sweep the levels from the top so each u(s) is a prefix sum
    let mut out = vec![0.0; s_grid.len()];
    let mut acc = 0.0;
    let mut k = 0;
    for (j, &s) in s_grid.iter().enumerate().rev() {
        while k < pts.len() && pts[k].0 > s {
            acc += pts[k].1;
            k += 1;
        }
        out[j] = acc;
    }
    Ok(out)
}

/// Smallest `s0` with `s0 >= 2 delta |v|_inf` and `A(s0) <= delta^{n+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct S0Audit {
    pub s0: f64,
    pub a_at_s0: f64,
    pub threshold: f64,
    pub ok: bool,
}

pub fn s0_audit(v: &TorusField, phi: &TorusField, g0: &TorusField, delta: f64, kappa: f64) -> Result<S0Audit> {
    let n = v.grid.n as i32;
    let threshold = delta.powi(n + 1);
    let lo = 2.0 * delta * v.sup_norm();
    let a = |s: f64| a_quantity(v, phi, g0, delta, s, kappa);
    let s0 = if a(lo)? <= threshold {
        lo
    } else {
        // A is continuous and nonincreasing in s and vanishes at the top
        let top = (0..v.len()).map(|i| (1.0 - delta) * v.values[i] - phi.values[i]).fold(f64::NEG_INFINITY, f64::max);
        let (mut l, mut h) = (lo, top.max(lo));
        for _ in 0..200 {
            let mid = 0.5 * (l + h);
            if mid <= l || mid >= h {
                break;
            }
            if a(mid)? <= threshold {
                h = mid;
            } else {
                l = mid;
            }
        }
        h
    };
    let a_at_s0 = a(s0)?;
    Ok(S0Audit { s0, a_at_s0, threshold, ok: s0 >= lo && a_at_s0 <= threshold })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiParams {
    pub b0: f64,
    pub mu: f64,
    pub s0: f64,
}

impl DeGiorgiParams {
    pub fn new(b0: f64, mu: f64, s0: f64) -> Result<Self> {
        if !(b0 > 0.0 && mu > 0.0 && s0 >= 0.0) {
            return Err(LabError::ConfigInvalid(format!("De Giorgi parameters b0 = {b0}, mu = {mu}, s0 = {s0}")));
        }
        Ok(Self { b0, mu, s0 })
    }
}

/// A nonincreasing step function: `values[j]` on `[s[j], s[j+1])`, the last
/// value extending to infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn new(s: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if s.len() != values.len() || s.is_empty() {
            return Err(LabError::DimensionMismatch { expected: s.len(), found: values.len() });
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::ConfigInvalid("step abscissae must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0]) || values.iter().any(|&v| !(v >= 0.0)) {
            return Err(LabError::ConfigInvalid("step values must be nonnegative and nonincreasing".into()));
        }
        Ok(Self { s, values })
    }

    /// Value at `x`; left of the first abscissa the first value.
    pub fn eval(&self, x: f64) -> f64 {
        let j = self.s.partition_point(|&t| t <= x);
        self.values[j.saturating_sub(1)]
    }

    /// First abscissa from which the function vanishes.
    pub fn first_zero(&self) -> Option<f64> {
        self.values.iter().position(|&v| v == 0.0).map(|j| self.s[j])
    }

    /// Witness `(s, r, lhs, rhs)` of the worst violation of
    /// `r phi(s + r) <= B0 phi(s)^{1+mu}` over `s >= s0`, or `None`. The
    /// supremum over a step is attained at its left end with `s + r` just
    /// below the next abscissa.
    pub fn hypothesis_violation(&self, p: &DeGiorgiParams) -> Option<(f64, f64, f64, f64)> {
        let len = self.s.len();
        let mut worst: Option<(f64, f64, f64, f64)> = None;
        // the step containing s0 starts the scan at s0 itself
        let start = self.s.partition_point(|&t| t <= p.s0).saturating_sub(1);
        for i in start..len {
            let si = self.s[i].max(p.s0);
            let rhs = p.b0 * self.values[i].powf(1.0 + p.mu);
            for j in i..len {
                if self.values[j] == 0.0 {
                    break;
                }
                let lhs = if j + 1 < len { (self.s[j + 1] - si) * self.values[j] } else { f64::INFINITY };
                if lhs > rhs * (1.0 + 1e-12) && worst.is_none_or(|w| lhs - rhs > w.2 - w.3) {
                    worst = Some((si, if j + 1 < len { self.s[j + 1] - si } else { f64::INFINITY }, lhs, rhs));
                }
            }
        }
        worst
    }

    /// Smallest `B0` at fixed `mu` for which the hypothesis holds.
    pub fn fit_b0(&self, mu: f64, s0: f64) -> Result<f64> {
        let len = self.s.len();
        if *self.values.last().unwrap() > 0.0 {
            return Err(LabError::ConfigInvalid("step function never vanishes; no finite B0".into()));
        }
        let start = self.s.partition_point(|&t| t <= s0).saturating_sub(1);
        let mut b = 0.0f64;
        for i in start..len {
            let si = self.s[i].max(s0);
            if self.values[i] == 0.0 {
                break;
            }
            for j in i..len - 1 {
                if self.values[j] == 0.0 {
                    break;
                }
                b = b.max((self.s[j + 1] - si) * self.values[j] / self.values[i].powf(1.0 + mu));
            }
        }
        Ok(if b > 0.0 { b } else { f64::MIN_POSITIVE })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiReport {
    /// First point from which the samples vanish.
    pub s_infinity_observed: f64,
    /// `s0 + 2 B0 phi(s0)^mu / (1 - 2^{-mu})`.
    pub bound: f64,
    /// `(s_k, phi(s_k))` along `s_{k+1} = s_k + 2 B0 phi(s_k)^mu`.
    pub recursion: Vec<(f64, f64)>,
    pub halving_ok: bool,
    pub ok: bool,
}

/// Checks the hypothesis, runs the recursion and compares the vanishing
/// point with the bound.
pub fn de_giorgi_vanishing(phi: &StepFunction, params: &DeGiorgiParams) -> Result<DeGiorgiReport> {
    if let Some((s, r, lhs, rhs)) = phi.hypothesis_violation(params) {
        return Err(LabError::HypothesisViolated { s, r, lhs, rhs });
    }
    let p0 = phi.eval(params.s0);
    let bound = params.s0 + 2.0 * params.b0 * p0.powf(params.mu) / (1.0 - 2f64.powf(-params.mu));
    let s_infinity_observed = if p0 == 0.0 {
        params.s0
    } else {
        phi.first_zero().map_or(f64::INFINITY, |z| z.max(params.s0))
    };
    let mut recursion = vec![(params.s0, p0)];
    let mut halving_ok = true;
    let mut s = params.s0;
    for k in 1..=200 {
        let v = phi.eval(s);
        if v == 0.0 {
            break;
        }
        s += 2.0 * params.b0 * v.powf(params.mu);
        let next = phi.eval(s);
        recursion.push((s, next));
        halving_ok &= next <= p0 * 2f64.powi(-k) * (1.0 + 1e-12);
    }
    Ok(DeGiorgiReport {
        s_infinity_observed,
        bound,
        recursion,
        halving_ok,
        ok: halving_ok && s_infinity_observed <= bound * (1.0 + 1e-12),
    })
}

/// Random nonincreasing step function with `len` steps that vanishes at
/// the last abscissa.
pub fn random_step_function(len: usize, rng: &mut impl Rng) -> StepFunction {
    let len = len.max(2);
    let mut s = Vec::with_capacity(len);
    let mut x = 0.0;
    for _ in 0..len {
        s.push(x);
        x += rng.gen_range(0.01..0.5);
    }
    let mut values = Vec::with_capacity(len);
    let mut v: f64 = rng.gen_range(0.1..2.0);
    for _ in 0..len - 1 {
        values.push(v);
        v *= rng.gen_range(0.2..1.0);
    }
    values.push(0.0);
    StepFunction { s, values }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiTrials {
    pub trials: usize,
    pub vanished_within_bound: usize,
    pub halving_ok: usize,
    /// Largest `s_infinity_observed / bound`.
    pub worst_bound_ratio: f64,
    pub passed: bool,
}

/// Randomized step functions with `B0` fitted at fixed `mu` and `s0 = 0`.
pub fn de_giorgi_trials(count: usize, len: usize, mu: f64, seed: u64) -> Result<DeGiorgiTrials> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut within, mut halving) = (0, 0);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let phi = random_step_function(len, &mut rng);
        let b0 = phi.fit_b0(mu, 0.0)?;
        let rep = de_giorgi_vanishing(&phi, &DeGiorgiParams::new(b0, mu, 0.0)?)?;
        within += usize::from(rep.s_infinity_observed <= rep.bound * (1.0 + 1e-12));
        halving += usize::from(rep.halving_ok);
        worst = worst.max(rep.s_infinity_observed / rep.bound);
    }
    Ok(DeGiorgiTrials {
        trials: count,
        vanished_within_bound: within,
        halving_ok: halving,
        worst_bound_ratio: worst,
        passed: within == count && halving == count,
    })
}

/// Step function built from `u(s)` samples.
pub fn level_set_step(s_grid: &[f64], u: &[f64]) -> Result<StepFunction> {
    // clamp roundoff so the samples are exactly nonincreasing
    let mut vals = u.to_vec();
    for j in 1..vals.len() {
        vals[j] = vals[j].min(vals[j - 1]);
    }
    StepFunction::new(s_grid.to_vec(), vals)
}

/// Parameters of the stability probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityProbe {
    pub p0: f64,
    pub kappa: f64,
    pub delta: f64,
    pub s_grid: Vec<f64>,
    pub a_target: f64,
    /// Decades of L1 distance the pairs must span.
    pub min_decades: f64,
}

impl StabilityProbe {
    /// `(p0 - 1) / (n p0 + p0 - 1)`.
    pub fn exponent_limit(p0: f64, n: usize) -> f64 {
        (p0 - 1.0) / (n as f64 * p0 + p0 - 1.0)
    }

    /// Probe with `a_target` a margin below the limit.
    pub fn with_margin(p0: f64, n: usize, margin: f64) -> Result<Self> {
        let p = Self {
            p0,
            kappa: 1.05,
            delta: 0.1,
            s_grid: Vec::new(),
            a_target: Self::exponent_limit(p0, n) - margin,
            min_decades: 2.0,
        };
        p.validate(n)?;
        Ok(p)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.p0 > 1.0 && self.kappa > 1.0 && self.delta > 0.0 && self.delta < 1.0) {
            return Err(LabError::ConfigInvalid("stability probe needs p0 > 1, kappa > 1, 0 < delta < 1".into()));
        }
        let lim = Self::exponent_limit(self.p0, n);
        if !(self.a_target < lim && self.a_target > 0.0) {
            return Err(LabError::ConfigInvalid(format!("a_target {} must lie in (0, {lim})", self.a_target)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub l1: f64,
    pub sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityFit {
    /// Least-squares slope of `log sup` against `log L1`.
    pub fitted_a: f64,
    pub a_target: f64,
    /// Constant anchored at the pair with the largest L1 distance.
    pub c_fit: f64,
    pub decades: f64,
    pub points: Vec<StabilityPoint>,
    /// Worst ratio `sup / (C L1^a)` over all pairs.
    pub worst_ratio: f64,
    pub passes: bool,
}

/// Fits `sup (v - phi)_+ <= C |(v - phi)_+|_{L1}^a` over solve pairs.
pub fn stability_exponent_fit(pairs: &[(TorusField, TorusField)], probe: &StabilityProbe) -> Result<StabilityFit> {
    let mut points = Vec::new();
    for (v, phi) in pairs {
        same_grid(v, phi)?;
        probe.validate(v.grid.n)?;
        let d = v.sub(phi)?.positive_part();
        let sup = d.max();
        let l1 = d.values.iter().sum::<f64>() * d.grid.cell_volume();
        if sup > 0.0 && l1 > 0.0 {
            points.push(StabilityPoint { l1, sup });
        }
    }
    if points.len() < 4 {
        return Err(LabError::ConfigInvalid(format!("need at least 4 nondegenerate pairs, have {}", points.len())));
    }
    let lmax = points.iter().map(|p| p.l1).fold(0.0, f64::max);
    let lmin = points.iter().map(|p| p.l1).fold(f64::INFINITY, f64::min);
    let decades = (lmax / lmin).log10();
    if decades < probe.min_decades {
        return Err(LabError::InsufficientSpread { decades, required: probe.min_decades });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.l1.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.sup.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let fitted_a = sxy / sxx;
    let anchor = points.iter().max_by(|a, b| a.l1.total_cmp(&b.l1)).unwrap();
    let c_fit = anchor.sup / anchor.l1.powf(probe.a_target);
    let worst_ratio = points.iter().map(|p| p.sup / (c_fit * p.l1.powf(probe.a_target))).fold(0.0, f64::max);
    Ok(StabilityFit {
        fitted_a,
        a_target: probe.a_target,
        c_fit,
        decades,
        points,
        worst_ratio,
        passes: worst_ratio <= 1.0 + 1e-9,
    })
}

/// Solves with `G` and with `G + sigma zeta` for every `sigma`, returning
/// `(v_sigma, phi)` pairs, both sup-normalized.
pub fn stability_pairs(
    op: &OperatorSpec,
    bg: &BackgroundData,
    g: &TorusField,
    zeta: &TorusField,
    sigmas: &[f64],
    config: &SolveConfig,
) -> Result<Vec<(TorusField, TorusField)>> {
    same_grid(g, zeta)?;
    let cfg = SolveConfig { normalization: Normalization::SupZero, ..config.clone() };
    let base = solve_fixed_rhs(op, bg, g, &cfg)?;
    let phi = base.phi().clone();
    let mut out = Vec::with_capacity(sigmas.len());
    for &s in sigmas {
        let gs = g.zip_map(zeta, |a, b| a + s * b)?;
        let rep = solve_fixed_rhs_from(op, bg, &gs, &cfg, Some(&phi))?;
        out.push((rep.phi().clone(), phi.clone()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMonotonicity {
    pub c1: f64,
    pub c2: f64,
    /// `max (G1 - G2)`.
    pub rhs_gap: f64,
    pub ok: bool,
    /// `c2 - c1 > 2 newton_tol`; only asserted when `G1 != G2`.
    pub strict: Option<bool>,
}

/// Solves for `c(G1)` and `c(G2)` with `G1 >= G2`.
pub fn c_monotonicity_experiment(
    op: &OperatorSpec,
    bg: &BackgroundData,
    g1: &TorusField,
    g2: &TorusField,
    config: &SolveConfig,
) -> Result<CMonotonicity> {
    same_grid(g1, g2)?;
    for (i, (a, b)) in g1.values.iter().zip(&g2.values).enumerate() {
        if a < b {
            return Err(LabError::OrderingViolated { index: i, gap: b - a });
        }
    }
    let r2 = solve_fixed_rhs(op, bg, g2, config)?;
    let r1 = solve_fixed_rhs_from(op, bg, g1, config, Some(r2.phi()))?;
    let tol = 2.0 * config.newton_tol;
    let rhs_gap = g1.sub(g2)?.max();
    let (c1, c2) = (r1.c, r2.c);
    Ok(CMonotonicity { c1, c2, rhs_gap, ok: c1 <= c2 + tol, strict: (rhs_gap > 0.0).then_some(c2 - c1 > tol) })
}

/// Nonnegative Gaussian bump of height `amp` and width `width` centred at
/// `center`, periodized to the nearest image.
pub fn bump(grid: TorusGrid, center: &[f64], amp: f64, width: f64) -> TorusField {
    TorusField::from_fn(grid, |x| {
        let d2: f64 = x
            .iter()
            .zip(center)
            .map(|(a, c)| {
                let d = (a - c).rem_euclid(1.0);
                d.min(1.0 - d).powi(2)
            })
            .sum();
        amp * (-d2 / (2.0 * width * width)).exp()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityTrials {
    pub trials: Vec<CMonotonicity>,
    /// `|c(G + k) - (c(G) - k)|` for the constant shift probe.
    pub shift_error: f64,
    pub shift: f64,
    pub passed: bool,
}

/// `count` randomized `(G + bump, G)` pairs plus a constant-shift probe.
pub fn c_monotonicity_trials(
    op: &OperatorSpec,
    bg: &BackgroundData,
    g: &TorusField,
    count: usize,
    seed: u64,
    config: &SolveConfig,
) -> Result<MonotonicityTrials> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = g.grid;
    let base = solve_fixed_rhs(op, bg, g, config)?;
    let tol = 2.0 * config.newton_tol;
    let mut trials = Vec::with_capacity(count);
    for _ in 0..count {
        let center: Vec<f64> = (0..grid.dims()).map(|_| rng.gen::<f64>()).collect();
        let amp = rng.gen_range(0.05..0.5);
        let width = rng.gen_range(0.08..0.25);
        let g1 = g.add(&bump(grid, &center, amp, width))?;
        let r1 = solve_fixed_rhs_from(op, bg, &g1, config, Some(base.phi()))?;
        let rhs_gap = g1.sub(g)?.max();
        trials.push(CMonotonicity {
            c1: r1.c,
            c2: base.c,
            rhs_gap,
            ok: r1.c <= base.c + tol,
            strict: (rhs_gap > 0.0).then_some(base.c - r1.c > tol),
        });
    }
    let shift = rng.gen_range(0.1..1.0);
    let rs = solve_fixed_rhs_from(op, bg, &g.shift(shift), config, Some(base.phi()))?;
    let shift_error = (rs.c - (base.c - shift)).abs();
    let passed = trials.iter().all(|t| t.ok && t.strict != Some(false)) && shift_error <= tol;
    Ok(MonotonicityTrials { trials, shift_error, shift, passed })
}

/// Right-hand side handled by [`uniqueness_gap_probe`].
pub enum RhsMode<'a> {
    Fixed(&'a TorusField),
    Monotone(&'a dyn MonotoneRhs),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub inits: usize,
    pub max_pairwise_sup_gap: f64,
    /// `c` per start; zeros on the monotone path.
    pub c_values: Vec<f64>,
    pub max_c_gap: f64,
    /// Sup norm of every initial field.
    pub init_sup_norms: Vec<f64>,
}

/// Random admissible smooth field: a few low modes scaled down until
/// `lambda[chi + dd^c init]` stays in the cone.
pub fn random_admissible_field(op: &OperatorSpec, bg: &BackgroundData, rng: &mut impl Rng) -> Result<TorusField> {
    use std::f64::consts::PI;
    let grid = bg.grid;
    let dims = grid.dims();
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..3)
        .map(|_| {
            let k: Vec<f64> = (0..dims).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let raw = TorusField::from_fn(grid, |x| {
        modes.iter().map(|(k, a, ph)| a * (2.0 * PI * k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + ph).cos()).sum()
    });
    let cone = op.cone();
    let mut amp = 0.5;
    for _ in 0..40 {
        let f = raw.scale(amp);
        if gamma_subharmonic_test(bg, &f, &cone, -0.1 * bg.c_star, crate::ddc::Backend::Fd)?.ok {
            return Ok(f);
        }
        amp *= 0.5;
    }
    Ok(TorusField::zeros(grid))
}

/// Solves from `n_inits` starts (the zero field plus random admissible
/// ones) and reports the largest pairwise sup distance.
pub fn uniqueness_gap_probe(
    op: &OperatorSpec,
    bg: &BackgroundData,
    rhs: RhsMode<'_>,
    config: &SolveConfig,
    n_inits: usize,
    seed: u64,
) -> Result<UniquenessReport> {
    if n_inits == 0 {
        return Err(LabError::ConfigInvalid("need at least one initial field".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SolveConfig { t_steps: 1, ..config.clone() };
    let mut sols: Vec<TorusField> = Vec::with_capacity(n_inits);
    let mut c_values = Vec::with_capacity(n_inits);
    let mut init_sup_norms = Vec::with_capacity(n_inits);
    for k in 0..n_inits {
        let init = if k == 0 { TorusField::zeros(bg.grid) } else { random_admissible_field(op, bg, &mut rng)? };
        init_sup_norms.push(init.sup_norm());
        let rep = match &rhs {
            RhsMode::Fixed(g) => solve_fixed_rhs_from(op, bg, g, &cfg, Some(&init))?,
            RhsMode::Monotone(r) => solve_monotone_rhs_from(op, bg, *r, &cfg, Some(&init))?,
        };
        c_values.push(rep.c);
        sols.push(rep.phi().clone());
    }
    let mut gap = 0.0f64;
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            gap = gap.max(sols[i].sub(&sols[j])?.sup_norm());
        }
    }
    let cmax = c_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let cmin = c_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(UniquenessReport { inits: n_inits, max_pairwise_sup_gap: gap, c_values, max_c_gap: cmax - cmin, init_sup_norms })
}
