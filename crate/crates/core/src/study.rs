//! Manufactured-solution convergence studies.
//!
//! For an exact field `phi*` given as an expression the right-hand side is
//! `G* = log F(lambda[chi + dd^c phi*]) - sup phi*` with `dd^c phi*`
//! differentiated exactly, so the discrete solver sees no
//! discretization error in the data. The exact pair is `(phi* - sup phi*,
//! sup phi*)`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::BackgroundData;
use crate::cone::OperatorSpec;
use crate::ddc::Backend;
use crate::error::{LabError, Result};
use crate::expr::Expr;
use crate::field::{TorusField, TorusGrid};
use crate::herm::{self, HermMatrix, C64};
use crate::solver::{b0_field, c_bound_holds, solve_fixed_rhs_from, Normalization, SolveConfig, SolveReport};

/// Exact `dd^c` of an expression, from its second-order jet.
pub struct SymbolicDdc<'a> {
    n: usize,
    phi: &'a Expr,
}

impl<'a> SymbolicDdc<'a> {
    pub fn new(phi: &'a Expr, n: usize) -> Self {
        Self { n, phi }
    }

    /// `dd^c phi` at a point.
    pub fn at(&self, x: &[f64]) -> HermMatrix {
        let jet = self.phi.jet(x);
        let n = self.n;
        let mut entries = vec![C64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for k in 0..n {
                let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
                let re = jet.hessian(xj, xk) + jet.hessian(yj, yk);
                let im = jet.hessian(xj, yk) - jet.hessian(yj, xk);
                entries[j * n + k] = C64::new(0.25 * re, 0.25 * im);
            }
        }
        HermMatrix::from_raw(n, entries)
    }
}

/// Exact data of a manufactured problem on one grid.
pub struct ManufacturedProblem {
    pub bg: BackgroundData,
    pub rhs: TorusField,
    /// `phi* - sup phi*`.
    pub exact: TorusField,
    pub c_exact: f64,
}

/// Samples `G*` and the exact pair on `grid`.
pub fn manufactured_problem(
    op: &OperatorSpec,
    g: &HermMatrix,
    chi: &HermMatrix,
    phi: &Expr,
    grid: TorusGrid,
) -> Result<ManufacturedProblem> {
    let bg = BackgroundData::constant(grid, g.clone(), chi.clone(), &op.cone())?;
    let exact = phi.field(grid, None)?;
    let sym = SymbolicDdc::new(phi, grid.n);
    let p = herm::cholesky_factor(g)?;
    let logf: Vec<Result<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let a = chi.add(&sym.at(&grid.position(i)))?;
            let lam = herm::generalized_eigen_with_factor(&a, &p).spectrum.values;
            let f = op.eval(&lam).map_err(|e| match e {
                LabError::OutsideCone { slack, .. } => LabError::OutsideCone { slack, location: Some(i) },
                other => other,
            })?;
            Ok(f.ln())
        })
        .collect();
    // the continuum sup is approximated by the finest sample available
    let shift = exact.max();
    let values = logf.into_iter().map(|r| r.map(|v| v - shift)).collect::<Result<Vec<_>>>()?;
    Ok(ManufacturedProblem { bg, rhs: TorusField::new(grid, values)?, exact: exact.shift(-shift), c_exact: shift })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedRow {
    pub m: usize,
    pub sup_error: f64,
    pub c: f64,
    pub c_error: f64,
    /// Observed order against the previous grid.
    pub order: Option<f64>,
    pub c_bound_ok: bool,
    pub seconds: f64,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
}

/// Solves on every grid in increasing order, warm-starting each solve
/// from the previous grid's solution by trigonometric interpolation.
/// Errors are measured after mean-centering both fields.
pub fn manufactured_study(
    op: &OperatorSpec,
    g: &HermMatrix,
    chi: &HermMatrix,
    phi: &Expr,
    n: usize,
    grids: &[usize],
    config: &SolveConfig,
) -> Result<Vec<ManufacturedRow>> {
    Ok(manufactured_study_runs(op, g, chi, phi, n, grids, config)?.into_iter().map(|(r, _)| r).collect())
}

/// As [`manufactured_study`], also returning the solve report per grid.
pub fn manufactured_study_runs(
    op: &OperatorSpec,
    g: &HermMatrix,
    chi: &HermMatrix,
    phi: &Expr,
    n: usize,
    grids: &[usize],
    config: &SolveConfig,
) -> Result<Vec<(ManufacturedRow, SolveReport)>> {
    let mut sorted = grids.to_vec();
    sorted.sort_unstable();
    let cfg = SolveConfig { normalization: Normalization::MeanZero, ..config.clone() };
    let mut rows: Vec<(ManufacturedRow, SolveReport)> = Vec::with_capacity(sorted.len());
    let mut prev: Option<TorusField> = None;
    for &m in &sorted {
        let grid = TorusGrid::new(n, m)?;
        let prob = manufactured_problem(op, g, chi, phi, grid)?;
        let init = match &prev {
            Some(p) => Some(p.resample(m)?),
            None => None,
        };
        let t0 = Instant::now();
        let rep = solve_fixed_rhs_from(op, &prob.bg, &prob.rhs, &cfg, init.as_ref())?;
        let seconds = t0.elapsed().as_secs_f64();
        let exact = prob.exact.shift(-prob.exact.mean());
        let sol = rep.phi().shift(-rep.phi().mean());
        let sup_error = sol.sub(&exact)?.sup_norm();
        let b0 = b0_field(op, &prob.bg)?;
        let order = rows.last().map(|(r, _)| (r.sup_error / sup_error).ln() / (m as f64 / r.m as f64).ln());
        prev = Some(sol);
        rows.push((ManufacturedRow {
            m,
            sup_error,
            c: rep.c,
            c_error: (rep.c - prob.c_exact).abs(),
            order,
            c_bound_ok: c_bound_holds(rep.c, &prob.rhs, &b0),
            seconds,
            newton_iterations: rep.newton_iterations,
            linear_iterations: rep.linear_iterations,
        }, rep));
    }
    Ok(rows)
}

/// Backend of a study, for reports.
pub fn backend_label(b: Backend) -> &'static str {
    match b {
        Backend::Fd => "fd",
        Backend::Spectral => "spectral",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddc::ddc;

    #[test]
    fn symbolic_ddc_matches_spectral() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let e = Expr::parse("0.1*cos(2*pi*x0)*sin(2*pi*x3) + 0.05*sin(2*pi*(x1 + x2))").unwrap();
        let f = e.field(grid, None).unwrap();
        let d = ddc(&f, Backend::Spectral).unwrap();
        let sym = SymbolicDdc::new(&e, 2);
        for i in 0..grid.len() {
            let a = sym.at(&grid.position(i));
            let b = d.at(i);
            for (x, y) in a.entries().iter().zip(b.entries()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn one_dimensional_study_is_second_order() {
        let op = OperatorSpec::sigma_k(1, 1).unwrap();
        let id = HermMatrix::identity(1);
        let e = Expr::parse("0.05*cos(2*pi*x)*sin(2*pi*y) + 0.02*exp(sin(2*pi*x))").unwrap();
        let rows = manufactured_study(&op, &id, &id, &e, 1, &[16, 32, 64], &SolveConfig::default()).unwrap();
        for r in &rows[1..] {
            assert!(r.order.unwrap() > 1.8, "{rows:?}");
        }
        assert!(rows.iter().all(|r| r.c_bound_ok));
    }
}
