//! Newton continuation for `F(chi + dd^c phi) = e^{G + c}` and for
//! `F(chi + dd^c phi) = e^{G(x, phi)}` with `G` increasing in `phi`.

mod kernel;
mod linear;

use serde::{Deserialize, Serialize};

use crate::background::BackgroundData;
use crate::cone::OperatorSpec;
use crate::ddc::Backend;
use crate::error::{LabError, Result};
use crate::field::TorusField;
use crate::herm::C64;

pub use kernel::Discretization;
use linear::{bicgstab, FourierPrecond};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// `e^{(1-t) B0 + t G + c_t}`, unknowns `(phi, c)`.
    #[default]
    FixedRhs,
    /// `e^{(1-t)(phi + B0) + t G(x, phi)}`.
    MonotoneRhs,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Mean zero during Newton, then shifted so that `sup phi = 0`.
    #[default]
    SupZero,
    MeanZero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub path: PathKind,
    pub t_steps: usize,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    /// Initial line-search step; halved down to 1/64.
    pub damping: f64,
    pub normalization: Normalization,
    pub backend: Backend,
    pub max_linear_iters: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            path: PathKind::FixedRhs,
            t_steps: 1,
            newton_tol: 1e-10,
            max_newton_iters: 40,
            damping: 1.0,
            normalization: Normalization::SupZero,
            backend: Backend::Fd,
            max_linear_iters: 400,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_steps < 1 {
            return Err(LabError::ConfigInvalid("t_steps must be at least 1".into()));
        }
        if !(self.newton_tol >= 1e-12) {
            return Err(LabError::ConfigInvalid(format!("newton_tol {} below 1e-12", self.newton_tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(LabError::ConfigInvalid(format!("damping {} outside (0, 1]", self.damping)));
        }
        if self.max_newton_iters == 0 || self.max_linear_iters == 0 {
            return Err(LabError::ConfigInvalid("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

const DAMPING_FLOOR: f64 = 1.0 / 64.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub phi: Option<TorusField>,
    pub c: f64,
    /// Sup-norm log-residual after every Newton evaluation, all `t` steps.
    pub residual_history: Vec<f64>,
    /// Smallest cone slack over all accepted iterates.
    pub cone_margin: f64,
    pub converged: bool,
    pub path: PathKind,
    /// `None` on the monotone path, which has no free constant.
    pub normalization: Option<Normalization>,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub final_residual: f64,
}

impl SolveReport {
    pub fn phi(&self) -> &TorusField {
        self.phi.as_ref().expect("solution field present")
    }
}

/// `B0 = log f(lambda[chi])`.
pub fn b0_field(op: &OperatorSpec, bg: &BackgroundData) -> Result<TorusField> {
    let zero = vec![C64::new(0.0, 0.0); bg.n() * bg.n()];
    let at = |i: usize| -> Result<f64> {
        let f = op.eval(&bg.point_spectrum(i, &zero)).map_err(|e| match e {
            LabError::OutsideCone { slack, .. } => LabError::OutsideCone { slack, location: Some(i) },
            other => other,
        })?;
        Ok(f.ln())
    };
    if bg.is_constant() {
        return Ok(TorusField::constant(bg.grid, at(0)?));
    }
    let values = (0..bg.grid.len()).map(at).collect::<Result<Vec<_>>>()?;
    Ok(TorusField { grid: bg.grid, values })
}

/// Right-hand side family `G(x, u)` strictly increasing in `u`.
pub trait MonotoneRhs: Sync {
    /// `(G(x_idx, u), dG/du (x_idx, u))`.
    fn eval(&self, idx: usize, u: f64) -> (f64, f64);
}

/// `G(x, u) = G0(x) + beta u + gamma u^3` with `beta > 0`, `gamma >= 0`.
#[derive(Clone, Debug)]
pub struct PolynomialRhs {
    pub g0: TorusField,
    pub beta: f64,
    pub gamma: f64,
}

impl MonotoneRhs for PolynomialRhs {
    fn eval(&self, idx: usize, u: f64) -> (f64, f64) {
        let g = self.g0.values[idx] + self.beta * u + self.gamma * u * u * u;
        (g, self.beta + 3.0 * self.gamma * u * u)
    }
}

enum Problem<'a> {
    Fixed { target: Vec<f64> },
    Monotone { t: f64, b0: &'a [f64], rhs: &'a dyn MonotoneRhs },
}

struct Newton<'a> {
    disc: Discretization<'a>,
    cfg: &'a SolveConfig,
    history: Vec<f64>,
    margin: f64,
    newton_iterations: usize,
    linear_iterations: usize,
    logf: Vec<f64>,
    coef: Vec<f64>,
    trial_logf: Vec<f64>,
    trial_coef: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl<'a> Newton<'a> {
    fn new(op: &'a OperatorSpec, bg: &'a BackgroundData, cfg: &'a SolveConfig) -> Result<Self> {
        cfg.validate()?;
        let disc = Discretization::new(op, bg, cfg.backend)?;
        let len = bg.grid.len();
        let cl = disc.coef_len();
        Ok(Self {
            disc,
            cfg,
            history: Vec::new(),
            margin: f64::INFINITY,
            newton_iterations: 0,
            linear_iterations: 0,
            logf: vec![0.0; len],
            coef: vec![0.0; len * cl],
            trial_logf: vec![0.0; len],
            trial_coef: vec![0.0; len * cl],
        })
    }

    /// Residual and zeroth-order weight for the current `logf`.
    fn residual(&self, problem: &Problem, phi: &[f64], c: f64, r: &mut [f64], w: Option<&mut [f64]>) -> Result<f64> {
        let logf = &self.logf;
        match problem {
            Problem::Fixed { target } => {
                for i in 0..r.len() {
                    r[i] = logf[i] - target[i] - c;
                }
            }
            Problem::Monotone { t, b0, rhs } => {
                let mut w = w;
                for i in 0..r.len() {
                    let (g, gu) = rhs.eval(i, phi[i]);
                    if !(gu > 0.0) {
                        return Err(LabError::MonotonicityViolation { u: phi[i], du: gu });
                    }
                    r[i] = logf[i] - (1.0 - t) * (phi[i] + b0[i]) - t * g;
                    if let Some(w) = w.as_deref_mut() {
                        w[i] = (1.0 - t) + t * gu;
                    }
                }
            }
        }
        Ok(r.iter().fold(0.0, |a, v| a.max(v.abs())))
    }

    fn run(&mut self, problem: &Problem, t: f64, phi: &mut [f64], c: &mut f64) -> Result<()> {
        let len = phi.len();
        let fixed = matches!(problem, Problem::Fixed { .. });
        let mut r = vec![0.0; len];
        let mut w = vec![0.0; if fixed { 0 } else { len }];
        match self.disc.evaluate(phi, &mut self.logf, Some(&mut self.coef)) {
            Ok(s) => self.margin = self.margin.min(s),
            Err(f) => return Err(LabError::OutsideCone { slack: f.slack, location: Some(f.index) }),
        }
        let mut res = self.residual(problem, phi, *c, &mut r, if fixed { None } else { Some(&mut w) })?;
        self.history.push(res);
        let mut iters = 0;
        while res > self.cfg.newton_tol {
            if iters >= self.cfg.max_newton_iters {
                return Err(LabError::NoConvergence { t, iterations: iters, residual: res });
            }
            iters += 1;
            self.newton_iterations += 1;
            let (dphi, dc) = self.linear_step(&r, if fixed { None } else { Some(&w) }, fixed, res);

            let mut alpha = self.cfg.damping;
            let mut trial = vec![0.0; len];
            let mut trial_r = vec![0.0; len];
            let mut trial_w = vec![0.0; w.len()];
            loop {
                for i in 0..len {
                    trial[i] = phi[i] + alpha * dphi[i];
                }
                if fixed {
                    let m = mean(&trial);
                    trial.iter_mut().for_each(|v| *v -= m);
                }
                let tc = *c + alpha * dc;
                let ev = self.disc.evaluate(&trial, &mut self.trial_logf, Some(&mut self.trial_coef));
                let at_floor = alpha * 0.5 < DAMPING_FLOOR;
                match ev {
                    Ok(s) => {
                        std::mem::swap(&mut self.logf, &mut self.trial_logf);
                        let tr = self.residual(problem, &trial, tc, &mut trial_r, if fixed { None } else { Some(&mut trial_w) });
                        let tr = match tr {
                            Ok(v) => v,
                            Err(e) => {
                                std::mem::swap(&mut self.logf, &mut self.trial_logf);
                                return Err(e);
                            }
                        };
                        if tr < res || at_floor {
                            std::mem::swap(&mut self.coef, &mut self.trial_coef);
                            phi.copy_from_slice(&trial);
                            *c = tc;
                            std::mem::swap(&mut r, &mut trial_r);
                            std::mem::swap(&mut w, &mut trial_w);
                            res = tr;
                            self.margin = self.margin.min(s);
                            break;
                        }
                        std::mem::swap(&mut self.logf, &mut self.trial_logf);
                    }
                    Err(_) if at_floor => return Err(LabError::ConeEscape { t, iteration: iters }),
                    Err(_) => {}
                }
                alpha *= 0.5;
            }
            self.history.push(res);
            log::debug!("t={t:.3} iter={iters} residual={res:e} step={alpha}");
        }
        Ok(())
    }

    /// Solves the linearized system for `(dphi, dc)`.
    fn linear_step(&mut self, r: &[f64], w: Option<&[f64]>, fixed: bool, res: f64) -> (Vec<f64>, f64) {
        let len = r.len();
        let cl = self.disc.coef_len();
        let mut avg = vec![0.0; cl];
        for chunk in self.coef.chunks_exact(cl) {
            for (a, v) in avg.iter_mut().zip(chunk) {
                *a += v;
            }
        }
        avg.iter_mut().for_each(|a| *a /= len as f64);
        let shift = w.map_or(0.0, mean);
        let mut pre = FourierPrecond::new(self.disc.grid, self.cfg.backend, &avg, shift);
        let rel_tol = res.clamp(1e-6, 1e-2);
        let disc = &self.disc;
        let coef = &self.coef;
        let total = if fixed { len + 1 } else { len };
        let mut b = vec![0.0; total];
        for i in 0..len {
            b[i] = -r[i];
        }
        let mut x = vec![0.0; total];
        let stats = if fixed {
            let mut apply = |v: &[f64], y: &mut [f64]| {
                disc.apply(coef, None, &v[..len], &mut y[..len]);
                let dc = v[len];
                y[..len].iter_mut().for_each(|e| *e -= dc);
                y[len] = mean(&v[..len]);
            };
            let mut precond = |v: &[f64], y: &mut [f64]| {
                // the zero mode of the symbol is already cut, so the
                // mean of v only feeds the c component
                let m = mean(&v[..len]);
                pre.solve(&v[..len], &mut y[..len]);
                let ym = mean(&y[..len]);
                let s = v[len];
                y[..len].iter_mut().for_each(|e| *e += s - ym);
                y[len] = -m;
            };
            bicgstab(&mut apply, &mut precond, &b, &mut x, rel_tol, self.cfg.max_linear_iters)
        } else {
            let mut apply = |v: &[f64], y: &mut [f64]| disc.apply(coef, w, v, y);
            let mut precond = |v: &[f64], y: &mut [f64]| pre.solve(v, y);
            bicgstab(&mut apply, &mut precond, &b, &mut x, rel_tol, self.cfg.max_linear_iters)
        };
        self.linear_iterations += stats.iterations;
        log::trace!("linear solve: {} iterations, relative residual {:e}", stats.iterations, stats.relative_residual);
        let dc = if fixed { x[len] } else { 0.0 };
        x.truncate(len);
        (x, dc)
    }
}

/// Solves `F(chi + dd^c phi) = e^{G + c}` for `(phi, c)` along the fixed
/// right-hand-side path starting from `phi = 0, c = 0`.
pub fn solve_fixed_rhs(op: &OperatorSpec, bg: &BackgroundData, g: &TorusField, config: &SolveConfig) -> Result<SolveReport> {
    solve_fixed_rhs_from(op, bg, g, config, None)
}

/// As [`solve_fixed_rhs`], starting from an admissible initial field.
pub fn solve_fixed_rhs_from(
    op: &OperatorSpec,
    bg: &BackgroundData,
    g: &TorusField,
    config: &SolveConfig,
    init: Option<&TorusField>,
) -> Result<SolveReport> {
    if g.grid != bg.grid {
        return Err(LabError::DimensionMismatch { expected: bg.grid.len(), found: g.grid.len() });
    }
    let mut newton = Newton::new(op, bg, config)?;
    let b0 = b0_field(op, bg)?;
    let len = bg.grid.len();
    let mut phi = match init {
        Some(f) => {
            let m = f.mean();
            f.values.iter().map(|v| v - m).collect()
        }
        None => vec![0.0; len],
    };
    let mut c = 0.0;
    if init.is_some() {
        // start c at the mean log-residual of the initial field
        let mut logf = vec![0.0; len];
        newton
            .disc
            .evaluate(&phi, &mut logf, None)
            .map_err(|f| LabError::OutsideCone { slack: f.slack, location: Some(f.index) })?;
        c = mean(&logf) - mean(&g.values);
    }
    for step in 1..=config.t_steps {
        let t = step as f64 / config.t_steps as f64;
        let target: Vec<f64> = b0.values.iter().zip(&g.values).map(|(b, gv)| (1.0 - t) * b + t * gv).collect();
        newton.run(&Problem::Fixed { target }, t, &mut phi, &mut c)?;
    }
    let final_residual = *newton.history.last().unwrap_or(&0.0);
    if config.normalization == Normalization::SupZero {
        let m = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        phi.iter_mut().for_each(|v| *v -= m);
    }
    Ok(SolveReport {
        phi: Some(TorusField { grid: bg.grid, values: phi }),
        c,
        residual_history: newton.history,
        cone_margin: newton.margin,
        converged: true,
        path: PathKind::FixedRhs,
        normalization: Some(config.normalization),
        newton_iterations: newton.newton_iterations,
        linear_iterations: newton.linear_iterations,
        final_residual,
    })
}

/// Solves `F(chi + dd^c phi) = e^{G(x, phi)}` along the monotone path.
pub fn solve_monotone_rhs(
    op: &OperatorSpec,
    bg: &BackgroundData,
    rhs: &dyn MonotoneRhs,
    config: &SolveConfig,
) -> Result<SolveReport> {
    solve_monotone_rhs_from(op, bg, rhs, config, None)
}

pub fn solve_monotone_rhs_from(
    op: &OperatorSpec,
    bg: &BackgroundData,
    rhs: &dyn MonotoneRhs,
    config: &SolveConfig,
    init: Option<&TorusField>,
) -> Result<SolveReport> {
    let mut newton = Newton::new(op, bg, config)?;
    let b0 = b0_field(op, bg)?;
    let len = bg.grid.len();
    let mut phi = init.map_or_else(|| vec![0.0; len], |f| f.values.clone());
    let mut c = 0.0;
    for step in 1..=config.t_steps {
        let t = step as f64 / config.t_steps as f64;
        newton.run(&Problem::Monotone { t, b0: &b0.values, rhs }, t, &mut phi, &mut c)?;
    }
    let final_residual = *newton.history.last().unwrap_or(&0.0);
    Ok(SolveReport {
        phi: Some(TorusField { grid: bg.grid, values: phi }),
        c: 0.0,
        residual_history: newton.history,
        cone_margin: newton.margin,
        converged: true,
        path: PathKind::MonotoneRhs,
        normalization: None,
        newton_iterations: newton.newton_iterations,
        linear_iterations: newton.linear_iterations,
        final_residual,
    })
}

/// `|c| <= max|G| + max|log F(chi)|`.
pub fn c_bound_holds(c: f64, g: &TorusField, b0: &TorusField) -> bool {
    c.abs() <= g.sup_norm() + b0.sup_norm() + 1e-12
}

/// Action of the linearization of `phi -> log F(chi + dd^c phi)` at `phi`.
pub fn linearize_apply(
    op: &OperatorSpec,
    bg: &BackgroundData,
    phi: &TorusField,
    psi: &TorusField,
    backend: Backend,
) -> Result<TorusField> {
    let disc = Discretization::new(op, bg, backend)?;
    let len = bg.grid.len();
    let mut logf = vec![0.0; len];
    let mut coef = vec![0.0; len * disc.coef_len()];
    disc.evaluate(&phi.values, &mut logf, Some(&mut coef))
        .map_err(|f| LabError::OutsideCone { slack: f.slack, location: Some(f.index) })?;
    let mut out = vec![0.0; len];
    disc.apply(&coef, None, &psi.values, &mut out);
    Ok(TorusField { grid: bg.grid, values: out })
}

/// `log F(chi + dd^c phi)` per point.
pub fn log_f(op: &OperatorSpec, bg: &BackgroundData, phi: &TorusField, backend: Backend) -> Result<TorusField> {
    let disc = Discretization::new(op, bg, backend)?;
    let mut logf = vec![0.0; bg.grid.len()];
    disc.evaluate(&phi.values, &mut logf, None)
        .map_err(|f| LabError::OutsideCone { slack: f.slack, location: Some(f.index) })?;
    Ok(TorusField { grid: bg.grid, values: logf })
}
