use thiserror::Error;

/// Errors raised by every layer of the lab.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("metric is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NonPositiveMetric { min_eigenvalue: f64 },

    #[error("input matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NonPositiveInput { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("index k = {k} out of range for dimension {n}")]
    BadIndex { k: usize, n: usize },

    #[error("eigenvalues leave the admissible cone (slack {slack:e}{})", fmt_location(.location))]
    OutsideCone { slack: f64, location: Option<usize> },

    #[error("gradient requested too close to the cone boundary (slack {slack:e})")]
    BoundaryDegenerate { slack: f64 },

    #[error("polynomial is not homogeneous: term {term} has degree {found}, expected {expected}")]
    NotHomogeneous { term: usize, expected: u32, found: u32 },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("grid too coarse: m = {m} (need at least 8)")]
    GridTooCoarse { m: usize },

    #[error("search radius {radius} exceeds half the torus period")]
    RadiusExceedsTorus { radius: f64 },

    #[error("Newton iterate left the cone at t = {t} (iteration {iteration}) and damping reached its floor")]
    ConeEscape { t: f64, iteration: usize },

    #[error("no convergence at t = {t} after {iterations} Newton iterations (residual {residual:e})")]
    NoConvergence { t: f64, iterations: usize, residual: f64 },

    #[error("right-hand side is not strictly increasing: dG/du = {du:e} at u = {u}")]
    MonotonicityViolation { u: f64, du: f64 },

    #[error("De Giorgi hypothesis violated at s = {s}, r = {r}: {lhs:e} > {rhs:e}")]
    HypothesisViolated { s: f64, r: f64, lhs: f64, rhs: f64 },

    #[error("stability pairs span only {decades:.2} decades of L1 distance (need {required:.2})")]
    InsufficientSpread { decades: f64, required: f64 },

    #[error("right-hand sides are not ordered: G1 < G2 at point {index} by {gap:e}")]
    OrderingViolated { index: usize, gap: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn fmt_location(loc: &Option<usize>) -> String {
    match loc {
        Some(i) => format!(" at grid point {i}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
