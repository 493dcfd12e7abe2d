//! Background data `(g, chi)` on the torus and pointwise assembly of
//! `lambda[chi + dd^c phi]`.

use serde::{Deserialize, Serialize};

use crate::cone::{cone_contains, ConeSpec, OperatorSpec};
use crate::ddc::{ddc, Backend, DdcField};
use crate::error::{LabError, Result};
use crate::field::{TorusField, TorusGrid};
use crate::herm::{self, CMatrix, HermMatrix, C64};

/// Matrix-valued field, constant or sampled per point.
#[derive(Clone, Debug, PartialEq)]
pub enum MatField {
    Constant(HermMatrix),
    PerPoint(Vec<HermMatrix>),
}

impl MatField {
    pub fn at(&self, idx: usize) -> &HermMatrix {
        match self {
            MatField::Constant(a) => a,
            MatField::PerPoint(v) => &v[idx],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatField::Constant(_))
    }

    fn dim(&self) -> usize {
        match self {
            MatField::Constant(a) => a.dim(),
            MatField::PerPoint(v) => v.first().map_or(0, |a| a.dim()),
        }
    }
}

#[derive(Clone, Debug)]
enum Factors {
    Constant(CMatrix, CMatrix),
    PerPoint(Vec<(CMatrix, CMatrix)>),
}

fn factor_pair(g: &HermMatrix) -> Result<(CMatrix, CMatrix)> {
    let p = herm::cholesky_factor(g)?;
    let pinv = herm::lower_inverse(&p);
    Ok((p, pinv))
}

/// Metric `g`, form `chi` and the margin `c_star` with
/// `lambda[chi - c_star g]` in the cone everywhere.
#[derive(Clone, Debug)]
pub struct BackgroundData {
    pub grid: TorusGrid,
    pub g: MatField,
    pub chi: MatField,
    pub c_star: f64,
    factors: Factors,
}

/// Outcome of a cone-membership scan over the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicReport {
    pub ok: bool,
    pub worst_point: usize,
    /// Diagonal-shift slack at the worst point; negative outside the cone.
    pub worst_slack: f64,
}

/// Generalized eigenvalues per point, `n` values per point.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumField {
    pub grid: TorusGrid,
    pub values: Vec<f64>,
}

impl SpectrumField {
    pub fn at(&self, idx: usize) -> &[f64] {
        let n = self.grid.n;
        &self.values[idx * n..(idx + 1) * n]
    }
}

impl BackgroundData {
    /// Validates `g > 0` everywhere and `lambda[chi]` in the interior of
    /// `cone`; `c_star` is the largest admissible margin.
    pub fn new(grid: TorusGrid, g: MatField, chi: MatField, cone: &ConeSpec) -> Result<Self> {
        let n = grid.n;
        for f in [&g, &chi] {
            if f.dim() != n {
                return Err(LabError::DimensionMismatch { expected: n, found: f.dim() });
            }
            if let MatField::PerPoint(v) = f {
                if v.len() != grid.len() {
                    return Err(LabError::DimensionMismatch { expected: grid.len(), found: v.len() });
                }
            }
        }
        if cone.dim() != n {
            return Err(LabError::DimensionMismatch { expected: n, found: cone.dim() });
        }
        let factors = match &g {
            MatField::Constant(a) => {
                let (p, pinv) = factor_pair(a)?;
                Factors::Constant(p, pinv)
            }
            MatField::PerPoint(v) => Factors::PerPoint(v.iter().map(factor_pair).collect::<Result<_>>()?),
        };
        let mut bg = Self { grid, g, chi, c_star: 0.0, factors };
        let points = if bg.g.is_constant() && bg.chi.is_constant() { 1 } else { grid.len() };
        let mut worst = f64::INFINITY;
        let mut worst_at = 0;
        for i in 0..points {
            let s = cone.slack(&herm::generalized_eigen_with_factor(bg.chi.at(i), bg.factor_at(i)).spectrum.values);
            if s < worst {
                worst = s;
                worst_at = i;
            }
        }
        if !(worst > 0.0) {
            return Err(LabError::OutsideCone { slack: worst, location: Some(worst_at) });
        }
        bg.c_star = worst;
        Ok(bg)
    }

    /// Constant metric and form.
    pub fn constant(grid: TorusGrid, g: HermMatrix, chi: HermMatrix, cone: &ConeSpec) -> Result<Self> {
        Self::new(grid, MatField::Constant(g), MatField::Constant(chi), cone)
    }

    /// `g = chi = I`.
    pub fn flat(grid: TorusGrid, cone: &ConeSpec) -> Result<Self> {
        let id = HermMatrix::identity(grid.n);
        Self::constant(grid, id.clone(), id, cone)
    }

    /// Metric `g0 + dd^c psi`, a `dd^c`-exact perturbation of a constant one.
    pub fn with_exact_perturbation(
        grid: TorusGrid,
        g0: &HermMatrix,
        psi: &TorusField,
        chi: MatField,
        backend: Backend,
        cone: &ConeSpec,
    ) -> Result<Self> {
        let d = ddc(psi, backend)?;
        let g = (0..grid.len()).map(|i| g0.add(&d.at(i))).collect::<Result<_>>()?;
        Self::new(grid, MatField::PerPoint(g), chi, cone)
    }

    /// Background with form `scale (chi + rho g)`.
    pub fn inflated(&self, rho: f64, scale: f64, cone: &ConeSpec) -> Result<Self> {
        let chi = match (&self.chi, &self.g) {
            (MatField::Constant(c), MatField::Constant(g)) => MatField::Constant(c.add_scaled(g, rho)?.scale(scale)),
            _ => MatField::PerPoint(
                (0..self.grid.len())
                    .map(|i| Ok(self.chi.at(i).add_scaled(self.g.at(i), rho)?.scale(scale)))
                    .collect::<Result<_>>()?,
            ),
        };
        Self::new(self.grid, self.g.clone(), chi, cone)
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Cholesky factor `P` with `g = P P^*` at a point.
    pub fn factor_at(&self, idx: usize) -> &CMatrix {
        match &self.factors {
            Factors::Constant(p, _) => p,
            Factors::PerPoint(v) => &v[idx].0,
        }
    }

    /// `P^{-1}` at a point.
    pub fn factor_inverse_at(&self, idx: usize) -> &CMatrix {
        match &self.factors {
            Factors::Constant(_, q) => q,
            Factors::PerPoint(v) => &v[idx].1,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.g.is_constant() && self.chi.is_constant()
    }

    /// `lambda[chi + B]` at one point.
    pub fn point_spectrum(&self, idx: usize, b: &[C64]) -> Vec<f64> {
        let chi = self.chi.at(idx).entries();
        let a = HermMatrix::from_raw(self.n(), chi.iter().zip(b).map(|(x, y)| x + y).collect());
        herm::generalized_eigen_with_factor(&a, self.factor_at(idx)).spectrum.values
    }
}

/// `lambda[chi + dd^c phi]` at every point.
pub fn assemble_spectrum(bg: &BackgroundData, phi: &TorusField, backend: Backend) -> Result<SpectrumField> {
    check_grid(bg, phi)?;
    let d = ddc(phi, backend)?;
    Ok(spectrum_from_ddc(bg, &d))
}

pub fn spectrum_from_ddc(bg: &BackgroundData, d: &DdcField) -> SpectrumField {
    let n = bg.n();
    let mut values = Vec::with_capacity(bg.grid.len() * n);
    for i in 0..bg.grid.len() {
        values.extend(bg.point_spectrum(i, d.slice(i)));
    }
    SpectrumField { grid: bg.grid, values }
}

fn check_grid(bg: &BackgroundData, phi: &TorusField) -> Result<()> {
    if bg.grid != phi.grid {
        return Err(LabError::DimensionMismatch { expected: bg.grid.len(), found: phi.grid.len() });
    }
    Ok(())
}

/// Cone membership of `lambda[chi + dd^c phi]` at every point.
pub fn gamma_subharmonic_test(
    bg: &BackgroundData,
    phi: &TorusField,
    cone: &ConeSpec,
    tol: f64,
    backend: Backend,
) -> Result<SubharmonicReport> {
    let spec = assemble_spectrum(bg, phi, backend)?;
    Ok(subharmonic_scan(&spec, cone, tol))
}

pub fn subharmonic_scan(spec: &SpectrumField, cone: &ConeSpec, tol: f64) -> SubharmonicReport {
    let mut rep = SubharmonicReport { ok: true, worst_point: 0, worst_slack: f64::INFINITY };
    for i in 0..spec.grid.len() {
        let l = spec.at(i);
        let s = cone.slack(l);
        if s < rep.worst_slack {
            rep.worst_slack = s;
            rep.worst_point = i;
        }
        if !cone_contains(cone, l, tol) {
            rep.ok = false;
        }
    }
    rep
}

/// `log f(lambda[chi + dd^c phi]) - G - c` per point.
pub fn operator_residual(
    op: &OperatorSpec,
    bg: &BackgroundData,
    phi: &TorusField,
    rhs: &TorusField,
    c: f64,
    backend: Backend,
) -> Result<TorusField> {
    check_grid(bg, rhs)?;
    let spec = assemble_spectrum(bg, phi, backend)?;
    log_f_field(op, &spec)?.zip_map(rhs, |lf, g| lf - g - c)
}

/// `log f(lambda)` per point; fails with the location of the first point
/// outside the cone.
pub fn log_f_field(op: &OperatorSpec, spec: &SpectrumField) -> Result<TorusField> {
    let mut values = Vec::with_capacity(spec.grid.len());
    for i in 0..spec.grid.len() {
        let f = op.eval(spec.at(i)).map_err(|e| match e {
            LabError::OutsideCone { slack, .. } => LabError::OutsideCone { slack, location: Some(i) },
            other => other,
        })?;
        if !(f > 0.0) {
            return Err(LabError::OutsideCone { slack: op.cone().slack(spec.at(i)), location: Some(i) });
        }
        values.push(f.ln());
    }
    Ok(TorusField { grid: spec.grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cone1() -> ConeSpec {
        ConeSpec::GammaN { n: 1 }
    }

    #[test]
    fn zero_field_gives_chi() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let chi = HermMatrix::diagonal(&[2.0, 3.0]);
        let bg = BackgroundData::constant(grid, HermMatrix::identity(2), chi, &ConeSpec::GammaN { n: 2 }).unwrap();
        assert_eq!(bg.c_star, 2.0);
        let s = assemble_spectrum(&bg, &TorusField::zeros(grid), Backend::Fd).unwrap();
        for i in 0..grid.len() {
            assert!((s.at(i)[0] - 2.0).abs() < 1e-14 && (s.at(i)[1] - 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_perturbation() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let bg = BackgroundData::flat(grid, &cone1()).unwrap();
        let eps = 0.05;
        let phi = TorusField::from_fn(grid, |x| eps * (2.0 * PI * x[0]).cos());
        let s = assemble_spectrum(&bg, &phi, Backend::Spectral).unwrap();
        for i in 0..grid.len() {
            let x = grid.position(i)[0];
            assert!((s.at(i)[0] - (1.0 - eps * PI * PI * (2.0 * PI * x).cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn bump_violates_cone() {
        let grid = TorusGrid::new(1, 32).unwrap();
        let bg = BackgroundData::flat(grid, &cone1()).unwrap();
        let phi = TorusField::from_fn(grid, |x| 5.0 * (-((x[0] - 0.5).powi(2) + (x[1] - 0.25).powi(2)) / 0.005).exp());
        let r = gamma_subharmonic_test(&bg, &phi, &cone1(), 1e-9, Backend::Fd).unwrap();
        assert!(!r.ok);
        assert_eq!(r.worst_point, grid.index(&[16, 8]));
        assert!(gamma_subharmonic_test(&bg, &TorusField::zeros(grid), &cone1(), 1e-9, Backend::Fd).unwrap().ok);
    }

    #[test]
    fn residual_of_b0_vanishes_and_shifts() {
        let grid = TorusGrid::new(2, 8).unwrap();
        let op = OperatorSpec::sigma_k(2, 2).unwrap();
        let chi = HermMatrix::diagonal(&[1.5, 0.7]);
        let bg = BackgroundData::constant(grid, HermMatrix::identity(2), chi, &op.cone()).unwrap();
        let b0 = (1.5f64 * 0.7).sqrt().ln();
        let g = TorusField::constant(grid, b0);
        let phi = TorusField::zeros(grid);
        let r = operator_residual(&op, &bg, &phi, &g, 0.0, Backend::Fd).unwrap();
        assert!(r.sup_norm() < 1e-12);
        let r = operator_residual(&op, &bg, &phi, &g, 0.3, Backend::Fd).unwrap();
        assert!(r.values.iter().all(|v| (v + 0.3).abs() < 1e-12));
    }

    #[test]
    fn rejects_inadmissible_chi() {
        let grid = TorusGrid::new(1, 8).unwrap();
        let r = BackgroundData::constant(grid, HermMatrix::identity(1), HermMatrix::diagonal(&[-1.0]), &cone1());
        assert!(matches!(r, Err(LabError::OutsideCone { .. })));
        let r = BackgroundData::constant(grid, HermMatrix::diagonal(&[-1.0]), HermMatrix::identity(1), &cone1());
        assert!(matches!(r, Err(LabError::NonPositiveMetric { .. })));
    }
}
