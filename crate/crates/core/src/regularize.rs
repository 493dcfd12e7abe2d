//! Sup and inf convolutions on the flat torus, with the audits that go
//! with them: maximizer radius, uniform sandwich, semiconvexity and the
//! scaled subsolution check on solved fields.
//!
//! Offsets live in the real tangent space with axis `2j` the real part
//! and axis `2j + 1` the imaginary part of `z_j`. The length of an offset
//! is `|xi|_g^2 = sum_jk g_jk xi_j conj(xi_k)` for a constant metric `g`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{assemble_spectrum, gamma_subharmonic_test, log_f_field, BackgroundData};
use crate::cone::{OperatorSpec, CONE_TOL};
use crate::ddc::Backend;
use crate::error::{LabError, Result};
use crate::field::{TorusField, TorusGrid};
use crate::herm::{HermMatrix, C64};

/// Tolerance on second differences in the semiconvexity scan.
pub const SEMICONVEXITY_TOL: f64 = 1e-8;

/// Regularization parameters `eps`, `a1`, `a2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionParams {
    pub eps: f64,
    pub a1: f64,
    pub a2: f64,
}

impl ConvolutionParams {
    pub fn new(eps: f64, a1: f64, a2: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(LabError::ConfigInvalid(format!("eps = {eps} outside (0, 1)")));
        }
        for (name, a) in [("a1", a1), ("a2", a2)] {
            if !(0.0..1.0).contains(&a) {
                return Err(LabError::ConfigInvalid(format!("{name} = {a} outside [0, 1)")));
            }
        }
        Ok(Self { eps, a1, a2 })
    }
}

/// Sampled modulus of continuity; `values[j]` is exact for `radii[j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusTable {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl ModulusTable {
    /// Value at the smallest tabulated radius `>= r`, an upper bound for
    /// `rho(r)`; `None` past the table.
    pub fn at(&self, r: f64) -> Option<f64> {
        if r <= 0.0 {
            return Some(0.0);
        }
        self.radii.iter().zip(&self.values).filter(|(&ri, _)| ri >= r).map(|(_, &v)| v).reduce(f64::min)
    }
}

/// Integer offsets within a metric ball, sorted by length.
#[derive(Clone, Debug)]
struct OffsetBall {
    dims: usize,
    steps: Vec<i64>,
    norms: Vec<f64>,
}

impl OffsetBall {
    fn new(grid: TorusGrid, metric: &HermMatrix, radius: f64) -> Result<Self> {
        let n = grid.n;
        if metric.dim() != n {
            return Err(LabError::DimensionMismatch { expected: n, found: metric.dim() });
        }
        let lmin = metric.min_eigenvalue();
        if !(lmin > 0.0) {
            return Err(LabError::NonPositiveMetric { min_eigenvalue: lmin });
        }
        let dims = grid.dims();
        let h = grid.h();
        let bound = (radius / (h * lmin.sqrt())).floor() as i64;
        let mut cand: Vec<(f64, Vec<i64>)> = Vec::new();
        let mut d = vec![-bound; dims];
        loop {
            let xi: Vec<f64> = d.iter().map(|&k| k as f64 * h).collect();
            let r = metric_norm(metric, &xi);
            if r <= radius * (1.0 + 1e-12) {
                cand.push((r, d.clone()));
            }
            let mut a = dims;
            loop {
                if a == 0 {
                    cand.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
                    let norms = cand.iter().map(|c| c.0).collect();
                    let steps = cand.into_iter().flat_map(|c| c.1).collect();
                    return Ok(Self { dims, steps, norms });
                }
                a -= 1;
                if d[a] < bound {
                    d[a] += 1;
                    break;
                }
                d[a] = -bound;
            }
        }
    }

    fn len(&self) -> usize {
        self.norms.len()
    }

    fn step(&self, k: usize) -> &[i64] {
        &self.steps[k * self.dims..(k + 1) * self.dims]
    }
}

/// `|xi|_g` for a real tangent vector.
pub fn metric_norm(metric: &HermMatrix, xi: &[f64]) -> f64 {
    let n = metric.dim();
    let v: Vec<C64> = (0..n).map(|j| C64::new(xi[2 * j], xi[2 * j + 1])).collect();
    let mut s = 0.0;
    for j in 0..n {
        for k in 0..n {
            s += (metric.get(j, k) * v[j] * v[k].conj()).re;
        }
    }
    s.max(0.0).sqrt()
}

fn shifted_index(grid: &TorusGrid, coords: &[usize], step: &[i64]) -> usize {
    let m = grid.m as i64;
    coords.iter().zip(step).fold(0, |acc, (&c, &d)| acc * grid.m + (c as i64 + d).rem_euclid(m) as usize)
}

fn torus_diameter(grid: TorusGrid, metric: &HermMatrix) -> f64 {
    let (spec, _) = metric.eigh();
    let lmax = spec.values.last().copied().unwrap_or(1.0);
    0.5 * (lmax * grid.dims() as f64).sqrt()
}

/// Euclidean modulus of continuity at the given radii.
pub fn modulus_of_continuity(phi: &TorusField, radii: &[f64]) -> Result<ModulusTable> {
    modulus_of_continuity_with_metric(phi, radii, &HermMatrix::identity(phi.grid.n))
}

/// `rho(r) = max |phi(x) - phi(y)|` over grid pairs with `d_g(x, y) <= r`.
pub fn modulus_of_continuity_with_metric(phi: &TorusField, radii: &[f64], metric: &HermMatrix) -> Result<ModulusTable> {
    let grid = phi.grid;
    let diam = torus_diameter(grid, metric);
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    if rmax > diam {
        return Err(LabError::RadiusExceedsTorus { radius: rmax });
    }
    let ball = OffsetBall::new(grid, metric, rmax)?;
    // worst difference per offset; d and -d give the same value
    let per_offset: Vec<f64> = (0..ball.len())
        .into_par_iter()
        .map(|k| {
            let step = ball.step(k);
            if step.iter().find(|&&s| s != 0).is_some_and(|&s| s < 0) {
                return 0.0;
            }
            let mut coords = vec![0usize; grid.dims()];
            let mut worst = 0.0f64;
            for i in 0..grid.len() {
                let j = shifted_index(&grid, &coords, step);
                worst = worst.max((phi.values[i] - phi.values[j]).abs());
                grid.advance(&mut coords);
            }
            worst
        })
        .collect();
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut v = 0.0f64;
        for (k, &w) in per_offset.iter().enumerate() {
            if ball.norms[k] > r * (1.0 + 1e-12) {
                break;
            }
            v = v.max(w);
        }
        values.push(v);
    }
    Ok(ModulusTable { radii: radii.to_vec(), values })
}

/// Which envelope a [`Convolution`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Sup,
    Inf,
}

/// A regularized field with the optimizing offset at every point.
#[derive(Clone, Debug)]
pub struct Convolution {
    pub field: TorusField,
    pub envelope: Envelope,
    pub eps: f64,
    /// Search radius actually scanned.
    pub radius: f64,
    pub metric: HermMatrix,
    argmax: Vec<u32>,
    ball: OffsetBall,
}

impl Convolution {
    /// Optimizing offset at a point, in grid steps.
    pub fn argmax_offset(&self, idx: usize) -> &[i64] {
        self.ball.step(self.argmax[idx] as usize)
    }

    /// `|xi_0|_g` at a point.
    pub fn argmax_norm(&self, idx: usize) -> f64 {
        self.ball.norms[self.argmax[idx] as usize]
    }

    fn argmax_id(&self, idx: usize) -> u32 {
        self.argmax[idx]
    }
}

/// `C = (2 |phi|_inf)^{1/2}`, the constant in the maximizer bound.
pub fn radius_constant(phi: &TorusField) -> f64 {
    (2.0 * phi.sup_norm()).sqrt()
}

/// Search radius `eps^{1/2} (2 |phi|_inf)^{1/2} + 2h`.
pub fn search_radius(phi: &TorusField, eps: f64) -> f64 {
    eps.sqrt() * radius_constant(phi) + 2.0 * phi.grid.h()
}

/// `phi^eps(z) = max_xi phi(z + xi) + eps - |xi|^2 / eps`, Euclidean metric.
pub fn sup_convolution(phi: &TorusField, eps: f64) -> Result<Convolution> {
    sup_convolution_with_metric(phi, eps, &HermMatrix::identity(phi.grid.n))
}

/// `phi_eps(z) = min_xi phi(z + xi) - eps + |xi|^2 / eps`, Euclidean metric.
pub fn inf_convolution(phi: &TorusField, eps: f64) -> Result<Convolution> {
    inf_convolution_with_metric(phi, eps, &HermMatrix::identity(phi.grid.n))
}

pub fn sup_convolution_with_metric(phi: &TorusField, eps: f64, metric: &HermMatrix) -> Result<Convolution> {
    convolve(phi, eps, metric, Envelope::Sup)
}

pub fn inf_convolution_with_metric(phi: &TorusField, eps: f64, metric: &HermMatrix) -> Result<Convolution> {
    convolve(phi, eps, metric, Envelope::Inf)
}

fn convolve(phi: &TorusField, eps: f64, metric: &HermMatrix, envelope: Envelope) -> Result<Convolution> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::ConfigInvalid(format!("eps = {eps} outside (0, 1)")));
    }
    let grid = phi.grid;
    let radius = search_radius(phi, eps);
    if radius > 0.5 {
        return Err(LabError::RadiusExceedsTorus { radius });
    }
    let ball = OffsetBall::new(grid, metric, radius)?;
    let penalty: Vec<f64> = ball.norms.iter().map(|r| r * r / eps).collect();
    let dims = grid.dims();
    let v = &phi.values;
    // offsets are sorted by length, so strict comparison keeps the
    // shortest optimizer; the sup evaluates (phi + eps) - q and the inf
    // (phi - eps) + q so that the two are exact negatives of each other
    let out: Vec<(f64, u32)> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0usize; dims],
            |coords, i| {
                grid.coords(i, coords);
                let mut best = (0.0, 0u32);
                for k in 0..ball.len() {
                    let j = shifted_index(&grid, coords, ball.step(k));
                    let val = match envelope {
                        Envelope::Sup => (v[j] + eps) - penalty[k],
                        Envelope::Inf => (v[j] - eps) + penalty[k],
                    };
                    let better = k == 0
                        || match envelope {
                            Envelope::Sup => val > best.0,
                            Envelope::Inf => val < best.0,
                        };
                    if better {
                        best = (val, k as u32);
                    }
                }
                best
            },
        )
        .collect();
    let (values, argmax) = out.into_iter().unzip();
    Ok(Convolution { field: TorusField { grid, values }, envelope, eps, radius, metric: metric.clone(), argmax, ball })
}

/// Outcome of the maximizer-radius audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusAudit {
    pub max_offset_norm: f64,
    /// `eps^{1/2} rho(C eps^{1/2})^{1/2} + 2h`.
    pub bound: f64,
    pub ok: bool,
}

/// Checks every optimizing offset against the maximizer bound.
pub fn maximizer_radius_audit(phi: &TorusField, conv: &Convolution) -> Result<RadiusAudit> {
    let r = radius_constant(phi) * conv.eps.sqrt();
    let rho = modulus_of_continuity_with_metric(phi, &[r], &conv.metric)?.values[0];
    let bound = conv.eps.sqrt() * rho.sqrt() + 2.0 * phi.grid.h();
    let max_offset_norm = (0..phi.len()).map(|i| conv.argmax_norm(i)).fold(0.0, f64::max);
    Ok(RadiusAudit { max_offset_norm, bound, ok: max_offset_norm <= bound })
}

/// Outcome of the uniform-approximation sandwich check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `rho(C eps^{1/2})`.
    pub modulus: f64,
    /// Smallest slack over both inequalities; negative on failure.
    pub worst_slack: f64,
    pub worst_point: usize,
    pub ok: bool,
}

/// `phi + eps <= phi^eps <= phi + eps + rho(C eps^{1/2})`, mirrored for the
/// inf envelope.
pub fn sandwich_check(phi: &TorusField, conv: &Convolution) -> Result<SandwichReport> {
    if phi.grid != conv.field.grid {
        return Err(LabError::DimensionMismatch { expected: phi.len(), found: conv.field.len() });
    }
    let r = radius_constant(phi) * conv.eps.sqrt();
    let modulus = modulus_of_continuity_with_metric(phi, &[r], &conv.metric)?.values[0];
    let eps = conv.eps;
    let mut rep = SandwichReport { modulus, worst_slack: f64::INFINITY, worst_point: 0, ok: true };
    for (i, (&p, &q)) in phi.values.iter().zip(&conv.field.values).enumerate() {
        let (lo, hi) = match conv.envelope {
            Envelope::Sup => (q - (p + eps), (p + eps + modulus) - q),
            Envelope::Inf => ((p - eps) - q, q - (p - eps - modulus)),
        };
        let s = lo.min(hi);
        if s < rep.worst_slack {
            rep.worst_slack = s;
            rep.worst_point = i;
        }
    }
    rep.ok = rep.worst_slack >= 0.0;
    Ok(rep)
}

/// Curvature sign expected by [`semiconvexity_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Curvature {
    /// `phi + C |z|^2` convex along grid lines.
    Convex,
    /// `phi - C |z|^2` concave along grid lines.
    Concave,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiconvexityReport {
    pub ok: bool,
    /// Smallest second difference of `phi + C |z|_g^2` (sign flipped for
    /// the concave case).
    pub worst_second_difference: f64,
    pub worst_point: usize,
}

/// Second differences along every axis line, Euclidean metric.
pub fn semiconvexity_check(field: &TorusField, c_eps: f64, curvature: Curvature) -> SemiconvexityReport {
    semiconvexity_check_with_metric(field, c_eps, curvature, &HermMatrix::identity(field.grid.n))
}

pub fn semiconvexity_check_with_metric(
    field: &TorusField,
    c_eps: f64,
    curvature: Curvature,
    metric: &HermMatrix,
) -> SemiconvexityReport {
    let grid = field.grid;
    let h2 = grid.h() * grid.h();
    let dims = grid.dims();
    let sign = match curvature {
        Curvature::Convex => 1.0,
        Curvature::Concave => -1.0,
    };
    // the quadratic |z|_g^2 has second difference 2 h^2 g_jj along axes 2j, 2j+1
    let quad: Vec<f64> = (0..dims).map(|a| 2.0 * h2 * metric.get(a / 2, a / 2).re).collect();
    let mut plus = vec![0isize; dims];
    let mut minus = vec![0isize; dims];
    let mut coords = vec![0usize; dims];
    let mut rep = SemiconvexityReport { ok: true, worst_second_difference: f64::INFINITY, worst_point: 0 };
    let v = &field.values;
    for i in 0..grid.len() {
        grid.neighbor_offsets(&coords, &mut plus, &mut minus);
        for a in 0..dims {
            let d2 = v[(i as isize + plus[a]) as usize] - 2.0 * v[i] + v[(i as isize + minus[a]) as usize];
            let s = sign * d2 + c_eps * quad[a];
            if s < rep.worst_second_difference {
                rep.worst_second_difference = s;
                rep.worst_point = i;
            }
        }
        grid.advance(&mut coords);
    }
    rep.ok = rep.worst_second_difference >= -SEMICONVEXITY_TOL;
    rep
}

/// `rho^{1/2} + rho`, the shape of the inflation margin.
pub fn margin_shape(modulus: f64) -> f64 {
    modulus.sqrt() + modulus
}

/// Scaled sup-convolution and the margin to add to `chi`.
#[derive(Clone, Debug)]
pub struct ScaledSubsolution {
    /// `phi^eps / (1 + a1)`.
    pub scaled_field: TorusField,
    /// `rho(eps) = C' shape(rho_phi(C'' eps^{1/2}))`.
    pub rho_eps: f64,
    /// `rho_phi(C'' eps^{1/2})`.
    pub modulus: f64,
}

/// Builds the scaled subsolution data with `C'' = (2 |phi|_inf)^{1/2}`.
pub fn scaled_subsolution_data(
    phi: &TorusField,
    conv: &Convolution,
    params: &ConvolutionParams,
    c_prime: f64,
) -> Result<ScaledSubsolution> {
    let r = radius_constant(phi) * params.eps.sqrt();
    let modulus = modulus_of_continuity_with_metric(phi, &[r], &conv.metric)?.values[0];
    Ok(ScaledSubsolution {
        scaled_field: conv.field.scale(1.0 / (1.0 + params.a1)),
        rho_eps: c_prime * margin_shape(modulus),
        modulus,
    })
}

/// One row of the scaled-subsolution audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledAuditRow {
    pub eps: f64,
    pub modulus: f64,
    /// Smallest `t >= 0` with `lambda[chi + t g + dd^c phi^eps]` in the cone.
    pub needed_margin: f64,
    pub rho_eps: f64,
    pub subharmonic: bool,
    pub worst_slack: f64,
    /// `max (G + c - log F(...))_+` over points where the optimizing
    /// offset is locally constant.
    pub rho1: f64,
    pub nice_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledAudit {
    pub a1: f64,
    pub c_prime: f64,
    pub c_second: f64,
    pub rows: Vec<ScaledAuditRow>,
    /// `rho(eps)` nonincreasing as `eps` decreases.
    pub monotone: bool,
    pub passed: bool,
}

/// Points whose whole `3^d` neighbourhood shares the optimizing offset.
fn nice_points(conv: &Convolution) -> Vec<bool> {
    let grid = conv.field.grid;
    let dims = grid.dims();
    let mut coords = vec![0usize; dims];
    let mut out = vec![false; grid.len()];
    let mut step = vec![0i64; dims];
    for (i, o) in out.iter_mut().enumerate() {
        grid.coords(i, &mut coords);
        let id = conv.argmax_id(i);
        let mut ok = true;
        for code in 0..3usize.pow(dims as u32) {
            let mut c = code;
            for s in step.iter_mut() {
                *s = (c % 3) as i64 - 1;
                c /= 3;
            }
            if conv.argmax_id(shifted_index(&grid, &coords, &step)) != id {
                ok = false;
                break;
            }
        }
        *o = ok;
    }
    out
}

/// Calibrates `C'` over an `eps` sweep on a solved field and checks that
/// the scaled sup-convolutions are subharmonic for the inflated form
/// `(chi + rho(eps) g) / (1 + a1)`. The metric `g` plays the role of the
/// reference form and must be constant.
#[allow(clippy::too_many_arguments)]
pub fn scaled_subsolution_audit(
    op: &OperatorSpec,
    bg: &BackgroundData,
    phi: &TorusField,
    rhs: &TorusField,
    c: f64,
    eps_list: &[f64],
    a1: f64,
    backend: Backend,
) -> Result<ScaledAudit> {
    if !bg.g.is_constant() {
        return Err(LabError::ConfigInvalid("scaled subsolution audit needs a constant metric".into()));
    }
    let metric = bg.g.at(0).clone();
    let cone = op.cone();
    let mut convs = Vec::with_capacity(eps_list.len());
    let mut shapes = Vec::with_capacity(eps_list.len());
    let mut needed = Vec::with_capacity(eps_list.len());
    let mut moduli = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let params = ConvolutionParams::new(eps, a1, 0.0)?;
        let conv = sup_convolution_with_metric(phi, params.eps, &metric)?;
        let data = scaled_subsolution_data(phi, &conv, &params, 1.0)?;
        let spec = assemble_spectrum(bg, &conv.field, backend)?;
        let worst = (0..phi.len()).map(|i| cone.slack(spec.at(i))).fold(f64::INFINITY, f64::min);
        needed.push((-worst).max(0.0));
        shapes.push(data.rho_eps);
        moduli.push(data.modulus);
        convs.push((params, conv));
    }
    let mut c_prime = 0.0f64;
    for (&nd, &sh) in needed.iter().zip(&shapes) {
        if nd > 0.0 {
            c_prime = c_prime.max(if sh > 0.0 { nd / sh } else { f64::INFINITY });
        }
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    let mut passed = c_prime.is_finite();
    for (k, (params, conv)) in convs.iter().enumerate() {
        let rho_eps = if c_prime.is_finite() { c_prime * shapes[k] } else { f64::INFINITY };
        let scale = 1.0 / (1.0 + params.a1);
        let mut row = ScaledAuditRow {
            eps: params.eps,
            modulus: moduli[k],
            needed_margin: needed[k],
            rho_eps,
            subharmonic: false,
            worst_slack: f64::NEG_INFINITY,
            rho1: f64::INFINITY,
            nice_points: 0,
        };
        if rho_eps.is_finite() {
            let inflated = bg.inflated(rho_eps, scale, &cone)?;
            let scaled = conv.field.scale(scale);
            let rep = gamma_subharmonic_test(&inflated, &scaled, &cone, CONE_TOL, backend)?;
            row.subharmonic = rep.ok;
            row.worst_slack = rep.worst_slack;
            if rep.ok {
                let spec = assemble_spectrum(&inflated, &scaled, backend)?;
                let nice = nice_points(conv);
                let lf = log_f_field(op, &spec)?;
                row.nice_points = nice.iter().filter(|&&b| b).count();
                row.rho1 = (0..phi.len())
                    .filter(|&i| nice[i])
                    .map(|i| (rhs.values[i] + c - lf.values[i]).max(0.0))
                    .fold(0.0, f64::max);
            }
        }
        passed &= row.subharmonic;
        rows.push(row);
    }
    // rho(eps) must shrink along the sweep sorted by decreasing eps
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[b].eps.total_cmp(&rows[a].eps));
    let monotone = order.windows(2).all(|w| rows[w[1]].rho_eps <= rows[w[0]].rho_eps);
    passed &= monotone;
    Ok(ScaledAudit { a1, c_prime, c_second: radius_constant(phi), rows, monotone, passed })
}
