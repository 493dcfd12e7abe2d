//! Experiment configuration: a JSON document validated before any
//! computation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::background::BackgroundData;
use crate::cone::{OperatorKind, OperatorSpec};
use crate::error::{LabError, Result};
use crate::expr::Expr;
use crate::field::TorusGrid;
use crate::herm::{HermMatrix, C64};
use crate::solver::SolveConfig;

/// Matrix entry: a real number or `{"re": .., "im": ..}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex { re: f64, im: f64 },
}

/// A Hermitian matrix: `s` for `s I`, a diagonal, or full rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Rows(Vec<Vec<Entry>>),
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec::Scalar(1.0)
    }
}

impl MatrixSpec {
    pub fn build(&self, n: usize) -> Result<HermMatrix> {
        match self {
            MatrixSpec::Scalar(s) => Ok(HermMatrix::identity(n).scale(*s)),
            MatrixSpec::Diagonal(d) => {
                if d.len() != n {
                    return Err(LabError::DimensionMismatch { expected: n, found: d.len() });
                }
                Ok(HermMatrix::diagonal(d))
            }
            MatrixSpec::Rows(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(LabError::DimensionMismatch { expected: n, found: rows.len() });
                }
                let entries = rows
                    .iter()
                    .flatten()
                    .map(|e| match *e {
                        Entry::Real(x) => C64::new(x, 0.0),
                        Entry::Complex { re, im } => C64::new(re, im),
                    })
                    .collect();
                HermMatrix::new(n, entries)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub g: MatrixSpec,
    #[serde(default)]
    pub chi: MatrixSpec,
    /// Required lower bound on the cone margin of `chi`.
    #[serde(default)]
    pub c_star: Option<f64>,
}

/// Right-hand side. Expressions use `x0..x{2n-1}`; `b0` is `log F(chi)`
/// and `u` the unknown (monotone mode only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhsSpec {
    Fixed { g: String },
    Monotone { g: String },
    /// Exact field `phi`; `G` is derived from it on every grid.
    Manufactured {
        phi: String,
        grids: Vec<usize>,
        #[serde(default)]
        min_order: Option<f64>,
        /// Largest accepted sup error on the finest grid.
        #[serde(default)]
        max_error: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyToggle {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvolutionToggle {
    pub eps: Vec<f64>,
    /// Semiconvexity constant is `c_factor / eps`.
    #[serde(default = "default_c_factor")]
    pub c_factor: f64,
}

fn default_c_factor() -> f64 {
    1.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaledAuditToggle {
    pub eps: Vec<f64>,
    pub a1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityToggle {
    pub p0: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub sigmas: Vec<f64>,
    /// Perturbation direction.
    pub zeta: String,
    #[serde(default = "default_decades")]
    pub min_decades: f64,
}

fn default_margin() -> f64 {
    0.05
}

fn default_decades() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonotonicityToggle {
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessToggle {
    pub inits: usize,
    /// Largest accepted pairwise sup gap.
    #[serde(default = "default_gap")]
    pub max_gap: f64,
}

fn default_gap() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeGiorgiToggle {
    pub trials: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub mu: f64,
}

fn default_steps() -> usize {
    12
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    pub certify: Option<CertifyToggle>,
    pub convolution: Option<ConvolutionToggle>,
    pub scaled_audit: Option<ScaledAuditToggle>,
    pub stability: Option<StabilityToggle>,
    pub monotonicity: Option<MonotonicityToggle>,
    pub uniqueness: Option<UniquenessToggle>,
    pub de_giorgi: Option<DeGiorgiToggle>,
}

impl Analysis {
    pub fn estimate_enabled(&self) -> bool {
        self.stability.is_some() || self.monotonicity.is_some() || self.uniqueness.is_some() || self.de_giorgi.is_some()
    }

    pub fn regularize_enabled(&self) -> bool {
        self.convolution.is_some() || self.scaled_audit.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub operator: OperatorKind,
    pub background: BackgroundSpec,
    pub rhs: RhsSpec,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| LabError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn operator(&self) -> Result<OperatorSpec> {
        OperatorSpec::new(self.background.n, self.operator.clone())
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.background.n, self.background.m)
    }

    /// Constant background on the configured grid.
    pub fn background_on(&self, grid: TorusGrid) -> Result<BackgroundData> {
        let n = self.background.n;
        let op = self.operator()?;
        let bg = BackgroundData::constant(grid, self.background.g.build(n)?, self.background.chi.build(n)?, &op.cone())?;
        if let Some(req) = self.background.c_star {
            if bg.c_star < req {
                return Err(LabError::ConfigInvalid(format!("chi has cone margin {} below c_star = {req}", bg.c_star)));
            }
        }
        Ok(bg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::ConfigInvalid(m));
        if self.name.is_empty() {
            return bad("empty experiment name".into());
        }
        let op = self.operator().map_err(|e| LabError::ConfigInvalid(e.to_string()))?;
        let grid = self.grid().map_err(|e| LabError::ConfigInvalid(e.to_string()))?;
        let n = self.background.n;
        for (label, m) in [("g", &self.background.g), ("chi", &self.background.chi)] {
            m.build(n).map_err(|e| LabError::ConfigInvalid(format!("{label}: {e}")))?;
        }
        self.solver.validate()?;
        let check_expr = |label: &str, src: &str, allow_u: bool| -> Result<Expr> {
            let e = Expr::parse(src).map_err(|e| LabError::ConfigInvalid(format!("{label}: {e}")))?;
            e.check_coords(grid).map_err(|e| LabError::ConfigInvalid(format!("{label}: {e}")))?;
            if e.uses_u() && !allow_u {
                return Err(LabError::ConfigInvalid(format!("{label}: `u` is only allowed in monotone mode")));
            }
            Ok(e)
        };
        match &self.rhs {
            RhsSpec::Fixed { g } => {
                check_expr("rhs.g", g, false)?;
            }
            RhsSpec::Monotone { g } => {
                if !check_expr("rhs.g", g, true)?.uses_u() {
                    return bad("monotone rhs must depend on u".into());
                }
            }
            RhsSpec::Manufactured { phi, grids, .. } => {
                let e = check_expr("rhs.phi", phi, false)?;
                if e.uses_b0() {
                    return bad("rhs.phi may not use b0".into());
                }
                if grids.is_empty() {
                    return bad("manufactured study needs at least one grid".into());
                }
                for &m in grids {
                    TorusGrid::new(n, m).map_err(|e| LabError::ConfigInvalid(e.to_string()))?;
                }
            }
        }
        let a = &self.analysis;
        if let Some(c) = &a.certify {
            if c.samples < 1000 {
                return bad(format!("certify.samples {} < 1000", c.samples));
            }
        }
        if let Some(c) = &a.convolution {
            if c.eps.is_empty() || c.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                return bad("convolution.eps must be nonempty with values in (0, 1)".into());
            }
            if !(c.c_factor > 1.0) {
                return bad("convolution.c_factor must exceed 1".into());
            }
        }
        if let Some(s) = &a.scaled_audit {
            if s.eps.is_empty() || s.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
                return bad("scaled_audit.eps must be nonempty with values in (0, 1)".into());
            }
            if !(s.a1 > 0.0 && s.a1 < 1.0) {
                return bad("scaled_audit.a1 must lie in (0, 1)".into());
            }
        }
        if let Some(s) = &a.stability {
            if s.sigmas.len() < 4 || s.sigmas.iter().any(|&x| !(x > 0.0)) {
                return bad("stability.sigmas needs at least 4 positive values".into());
            }
            check_expr("stability.zeta", &s.zeta, false)?;
            crate::estimate::StabilityProbe::with_margin(s.p0, op.n, s.margin)?;
        }
        if let Some(u) = &a.uniqueness {
            if u.inits < 1 {
                return bad("uniqueness.inits must be positive".into());
            }
        }
        if let Some(d) = &a.de_giorgi {
            if d.trials == 0 || d.steps < 2 || !(d.mu > 0.0) {
                return bad("de_giorgi needs trials > 0, steps >= 2 and mu > 0".into());
            }
        }
        let needs_fixed = a.stability.is_some() || a.monotonicity.is_some();
        if needs_fixed && matches!(self.rhs, RhsSpec::Monotone { .. }) {
            return bad("stability and monotonicity probes need a fixed or manufactured rhs".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(value.to_string().as_bytes());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "name": "t",
        "operator": {"kind": "sigma_k", "k": 2},
        "background": {"n": 2, "m": 8, "chi": [2.0, 3.0]},
        "rhs": {"mode": "fixed", "g": "0.1*cos(2*pi*x0)"}
    }"#;

    #[test]
    fn parses_and_hashes_stably() {
        let a = ExperimentConfig::from_json(BASE).unwrap();
        let b = ExperimentConfig::from_json(&serde_json::to_string_pretty(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn matrix_forms() {
        let m: MatrixSpec = serde_json::from_str(r#"[[2, {"re": 0.5, "im": 0.25}], [{"re": 0.5, "im": -0.25}, 3]]"#).unwrap();
        let h = m.build(2).unwrap();
        assert_eq!(h.get(0, 1), C64::new(0.5, 0.25));
        assert!(MatrixSpec::Diagonal(vec![1.0]).build(2).is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(ExperimentConfig::from_json("{"), Err(LabError::ConfigInvalid(_))));
        let bad_var = BASE.replace("x0", "x5");
        assert!(matches!(ExperimentConfig::from_json(&bad_var), Err(LabError::ConfigInvalid(_))));
        let bad_k = BASE.replace("\"k\": 2", "\"k\": 3");
        assert!(matches!(ExperimentConfig::from_json(&bad_k), Err(LabError::ConfigInvalid(_))));
        let unknown = BASE.replace("\"name\"", "\"nam\": 1, \"name\"");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
    }
}
