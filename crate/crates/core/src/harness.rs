//! Command-line pipeline: certify, solve, regularize, estimate, report.
//!
//! Exit codes: 0 success, 1 assertion failure, 2 configuration or I/O
//! error (including a missing prerequisite), 3 numerical failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::background::BackgroundData;
use crate::cone::{certify_operator, gurvits_check, OperatorKind, OperatorSpec};
use crate::config::{ExperimentConfig, RhsSpec};
use crate::ddc::Backend;
use crate::error::{LabError, Result};
use crate::estimate::{
    c_monotonicity_trials, de_giorgi_trials, stability_exponent_fit, stability_pairs, uniqueness_gap_probe, RhsMode,
    StabilityProbe,
};
use crate::expr::{Expr, ExprRhs};
use crate::field::{TorusField, TorusGrid};
use crate::ledger::{append_entry, read_ledger, RunLedgerEntry, LEDGER_FILE};
use crate::regularize::{
    inf_convolution, maximizer_radius_audit, sandwich_check, scaled_subsolution_audit, semiconvexity_check,
    sup_convolution, Curvature,
};
use crate::solver::{
    b0_field, c_bound_holds, solve_fixed_rhs, solve_monotone_rhs, MonotoneRhs, PathKind, SolveConfig, SolveReport,
};
use crate::study::{manufactured_problem, manufactured_study_runs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit code for an error.
pub fn exit_code(err: &LabError) -> i32 {
    match err {
        LabError::ConfigInvalid(_)
        | LabError::MissingPrerequisite(_)
        | LabError::Expression(_)
        | LabError::Io(_)
        | LabError::Json(_)
        | LabError::InvalidOperator(_)
        | LabError::BadIndex { .. }
        | LabError::GridTooCoarse { .. }
        | LabError::DimensionMismatch { .. }
        | LabError::NotHermitian { .. }
        | LabError::NotHomogeneous { .. }
        | LabError::NonPositiveMetric { .. }
        | LabError::OrderingViolated { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "hessian-lab", version, about = "Complex Hessian equations on flat tori")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sampled structural certification of the operator.
    Certify(RunArgs),
    /// Solve the configured equation and persist the field and reports.
    Solve(RunArgs),
    /// Sup/inf-convolution audits on the solved field.
    Regularize(RunArgs),
    /// Estimate probes: stability, monotonicity, uniqueness, De Giorgi.
    Estimate(RunArgs),
    /// Summarize the ledger of an output directory.
    Report(ReportArgs),
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Fail instead of solving when no matching solve is on disk.
    #[arg(long)]
    pub reuse: bool,
}

#[derive(Clone, Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Result of one command.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub entries: Vec<RunLedgerEntry>,
    pub passed: bool,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(o) => {
            for e in &o.entries {
                println!("{} {} {}", e.id, if e.passed { "PASS" } else { "FAIL" }, failed_list(e));
            }
            if o.passed {
                EXIT_OK
            } else {
                EXIT_ASSERTION
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn failed_list(e: &RunLedgerEntry) -> String {
    let failed: Vec<&str> = e.assertions.iter().filter(|(_, &v)| !v).map(|(k, _)| k.as_str()).collect();
    if failed.is_empty() {
        String::new()
    } else {
        format!("failed: {}", failed.join(","))
    }
}

pub fn run(cmd: &Command) -> Result<Outcome> {
    let threads = match cmd {
        Command::Certify(a) | Command::Solve(a) | Command::Regularize(a) | Command::Estimate(a) => a.threads,
        Command::Report(a) => a.threads,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(LabError::ConfigInvalid("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| LabError::ConfigInvalid(e.to_string()))?;
    pool.install(|| match cmd {
        Command::Certify(a) => Run::new(a)?.certify(),
        Command::Solve(a) => Run::new(a)?.solve(),
        Command::Regularize(a) => Run::new(a)?.regularize(),
        Command::Estimate(a) => Run::new(a)?.estimate(),
        Command::Report(a) => report(&a.out),
    })
}

/// An experiment with command-line overrides applied.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub hash: String,
    reuse: bool,
}

/// Persisted solve metadata, matched by config hash.
#[derive(Serialize, Deserialize)]
struct SolveRecord {
    config_hash: String,
    n: usize,
    m: usize,
    c: f64,
    report: SolveReport,
}

const SOLVE_FILE: &str = "solve.json";
const FIELD_FILE: &str = "phi.bin";

/// Solved field with the data the audits need.
struct Solution {
    phi: TorusField,
    c: f64,
    /// `G` evaluated along the solution.
    g: TorusField,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

impl Run {
    pub fn new(args: &RunArgs) -> Result<Self> {
        let mut cfg = ExperimentConfig::load(&args.config)?;
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(b) = args.backend {
            cfg.solver.backend = b;
        }
        let out = args.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
        cfg.output = None;
        cfg.validate()?;
        Ok(Self::from_config(cfg, out, args.reuse))
    }

    pub fn from_config(cfg: ExperimentConfig, out: PathBuf, reuse: bool) -> Self {
        let hash = cfg.hash();
        Self { cfg, out, hash, reuse }
    }

    fn record(
        &self,
        command: &str,
        metrics: BTreeMap<String, Value>,
        assertions: BTreeMap<String, bool>,
        t0: Instant,
    ) -> Result<RunLedgerEntry> {
        fs::create_dir_all(&self.out)?;
        let passed = assertions.values().all(|&v| v);
        append_entry(
            &self.out.join(LEDGER_FILE),
            RunLedgerEntry {
                id: String::new(),
                experiment: self.cfg.name.clone(),
                command: command.into(),
                config_hash: self.hash.clone(),
                seed: self.cfg.seed,
                metrics,
                assertions,
                passed,
                wall_seconds: t0.elapsed().as_secs_f64(),
            },
        )
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join(name), serde_json::to_string_pretty(v)?)?;
        Ok(())
    }

    pub fn certify(&self) -> Result<Outcome> {
        let t0 = Instant::now();
        let op = self.cfg.operator()?;
        let samples = self.cfg.analysis.certify.as_ref().map_or(10_000, |c| c.samples);
        let rep = certify_operator(&op, samples, self.cfg.seed)?;
        let mut metrics = BTreeMap::new();
        let mut assertions = BTreeMap::new();
        metrics.insert("certification".into(), to_value(&rep));
        assertions.insert("certified".into(), rep.passed);
        if let OperatorKind::GurvitsPoly { poly } = &self.cfg.operator {
            let g = gurvits_check(poly, poly.degree()?)?;
            assertions.insert("gurvits".into(), g.passes);
            metrics.insert("gurvits".into(), to_value(&g));
        }
        self.write_json("certify.json", &metrics)?;
        let entry = self.record("certify", metrics, assertions, t0)?;
        Ok(Outcome { passed: entry.passed, entries: vec![entry] })
    }

    fn background(&self, grid: TorusGrid) -> Result<BackgroundData> {
        self.cfg.background_on(grid)
    }

    /// `G` on the configured grid for the fixed and manufactured modes.
    fn fixed_rhs(&self, op: &OperatorSpec, bg: &BackgroundData) -> Result<TorusField> {
        match &self.cfg.rhs {
            RhsSpec::Fixed { g } => Expr::parse(g)?.field(bg.grid, Some(&b0_field(op, bg)?)),
            RhsSpec::Manufactured { phi, .. } => {
                let n = self.cfg.background.n;
                let (g, chi) = (self.cfg.background.g.build(n)?, self.cfg.background.chi.build(n)?);
                Ok(manufactured_problem(op, &g, &chi, &Expr::parse(phi)?, bg.grid)?.rhs)
            }
            RhsSpec::Monotone { .. } => Err(LabError::ConfigInvalid("monotone rhs has no fixed G".into())),
        }
    }

    fn monotone_rhs(&self, op: &OperatorSpec, bg: &BackgroundData) -> Result<ExprRhs> {
        match &self.cfg.rhs {
            RhsSpec::Monotone { g } => ExprRhs::new(Expr::parse(g)?, bg.grid, Some(&b0_field(op, bg)?)),
            _ => Err(LabError::ConfigInvalid("rhs is not monotone".into())),
        }
    }

    fn monotone_config(&self) -> SolveConfig {
        SolveConfig { path: PathKind::MonotoneRhs, ..self.cfg.solver.clone() }
    }

    /// Solves on the configured grid and persists the result.
    fn solve_grid(&self, op: &OperatorSpec) -> Result<(Solution, SolveReport)> {
        let bg = self.background(self.cfg.grid()?)?;
        let (rep, g) = match &self.cfg.rhs {
            RhsSpec::Monotone { .. } => {
                let rhs = self.monotone_rhs(op, &bg)?;
                let rep = solve_monotone_rhs(op, &bg, &rhs, &self.monotone_config())?;
                let g = TorusField::new(bg.grid, (0..bg.grid.len()).map(|i| rhs.eval(i, rep.phi().values[i]).0).collect())?;
                (rep, g)
            }
            _ => {
                let g = self.fixed_rhs(op, &bg)?;
                (solve_fixed_rhs(op, &bg, &g, &self.cfg.solver)?, g)
            }
        };
        self.persist(&rep)?;
        Ok((Solution { phi: rep.phi().clone(), c: rep.c, g }, rep))
    }

    fn persist(&self, rep: &SolveReport) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        let phi = rep.phi();
        phi.save(&self.out.join(FIELD_FILE))?;
        let rec = SolveRecord { config_hash: self.hash.clone(), n: phi.grid.n, m: phi.grid.m, c: rep.c, report: rep.clone() };
        self.write_json(SOLVE_FILE, &rec)?;
        let mut f = fs::File::create(self.out.join("residuals.csv"))?;
        writeln!(f, "iteration,residual")?;
        for (i, r) in rep.residual_history.iter().enumerate() {
            writeln!(f, "{i},{r:e}")?;
        }
        Ok(())
    }

    /// Loads a persisted solve with a matching config hash, or solves.
    fn prerequisite(&self, op: &OperatorSpec) -> Result<Solution> {
        let path = self.out.join(SOLVE_FILE);
        let loaded = fs::read_to_string(&path).ok().and_then(|t| serde_json::from_str::<SolveRecord>(&t).ok());
        match loaded {
            Some(rec) if rec.config_hash == self.hash => {
                let phi = TorusField::load(&self.out.join(FIELD_FILE))?;
                let bg = self.background(phi.grid)?;
                let g = match &self.cfg.rhs {
                    RhsSpec::Monotone { .. } => {
                        let rhs = self.monotone_rhs(op, &bg)?;
                        TorusField::new(bg.grid, (0..bg.grid.len()).map(|i| rhs.eval(i, phi.values[i]).0).collect())?
                    }
                    _ => self.fixed_rhs(op, &bg)?,
                };
                Ok(Solution { phi, c: rec.c, g })
            }
            _ if self.reuse => Err(LabError::MissingPrerequisite(format!(
                "no solve for config {} in {}",
                &self.hash[..12],
                self.out.display()
            ))),
            _ => Ok(self.solve_grid(op)?.0),
        }
    }

    fn check_certified(&self, op: &OperatorSpec) -> Result<()> {
        let rep = certify_operator(op, 1000, self.cfg.seed)?;
        if !rep.passed {
            return Err(LabError::InvalidOperator(format!("{} fails certification", op.label())));
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<Outcome> {
        let t0 = Instant::now();
        let op = self.cfg.operator()?;
        self.check_certified(&op)?;
        let mut metrics = BTreeMap::new();
        let mut assertions = BTreeMap::new();
        if let RhsSpec::Manufactured { phi, grids, min_order, max_error } = &self.cfg.rhs {
            let n = self.cfg.background.n;
            let (g, chi) = (self.cfg.background.g.build(n)?, self.cfg.background.chi.build(n)?);
            let runs = manufactured_study_runs(&op, &g, &chi, &Expr::parse(phi)?, n, grids, &self.cfg.solver)?;
            let mut f = fs::File::create({
                fs::create_dir_all(&self.out)?;
                self.out.join("study.csv")
            })?;
            writeln!(f, "m,sup_error,order,c,c_error,c_bound_ok,newton_iterations,linear_iterations,seconds")?;
            let mut rows = Vec::new();
            for (r, _) in &runs {
                let order = r.order.map_or(String::new(), |o| format!("{o:.4}"));
                writeln!(
                    f,
                    "{},{:e},{},{},{:e},{},{},{},{:.3}",
                    r.m, r.sup_error, order, r.c, r.c_error, r.c_bound_ok, r.newton_iterations, r.linear_iterations, r.seconds
                )?;
                rows.push(json!({
                    "m": r.m, "sup_error": r.sup_error, "order": r.order, "c": r.c, "c_error": r.c_error,
                    "newton_iterations": r.newton_iterations, "linear_iterations": r.linear_iterations,
                }));
            }
            metrics.insert("study".into(), Value::Array(rows));
            assertions.insert("c_bound".into(), runs.iter().all(|(r, _)| r.c_bound_ok));
            if let Some(k) = min_order {
                assertions.insert("min_order".into(), runs.iter().skip(1).all(|(r, _)| r.order.is_some_and(|o| o >= *k)));
            }
            if let Some(e) = max_error {
                assertions.insert("max_error".into(), runs.last().is_some_and(|(r, _)| r.sup_error <= *e));
            }
            if let Some((_, rep)) = runs.iter().find(|(r, _)| r.m == self.cfg.background.m) {
                self.persist(rep)?;
            }
        } else {
            let (sol, rep) = self.solve_grid(&op)?;
            let bg = self.background(sol.phi.grid)?;
            metrics.insert("c".into(), json!(rep.c));
            metrics.insert("phi_sup_norm".into(), json!(sol.phi.sup_norm()));
            metrics.insert("phi_oscillation".into(), json!(sol.phi.oscillation()));
            metrics.insert("final_residual".into(), json!(rep.final_residual));
            metrics.insert("cone_margin".into(), json!(rep.cone_margin));
            metrics.insert("newton_iterations".into(), json!(rep.newton_iterations));
            metrics.insert("linear_iterations".into(), json!(rep.linear_iterations));
            assertions.insert("converged".into(), rep.converged);
            if !matches!(self.cfg.rhs, RhsSpec::Monotone { .. }) {
                assertions.insert("c_bound".into(), c_bound_holds(rep.c, &sol.g, &b0_field(&op, &bg)?));
            }
        }
        let entry = self.record("solve", metrics, assertions, t0)?;
        Ok(Outcome { passed: entry.passed, entries: vec![entry] })
    }

    pub fn regularize(&self) -> Result<Outcome> {
        let a = &self.cfg.analysis;
        if !a.regularize_enabled() {
            log::warn!("no regularization audits enabled; nothing to do");
            eprintln!("warning: no regularization audits enabled");
            return Ok(Outcome { entries: Vec::new(), passed: true });
        }
        let t0 = Instant::now();
        let op = self.cfg.operator()?;
        let sol = self.prerequisite(&op)?;
        let mut metrics = BTreeMap::new();
        let mut assertions = BTreeMap::new();
        if let Some(c) = &a.convolution {
            let mut rows = Vec::new();
            let mut all = [true; 5];
            for &eps in &c.eps {
                let sup = sup_convolution(&sol.phi, eps)?;
                let inf = inf_convolution(&sol.phi, eps)?;
                let radius = maximizer_radius_audit(&sol.phi, &sup)?;
                let sandwich = sandwich_check(&sol.phi, &sup)?;
                let convex = semiconvexity_check(&sup.field, c.c_factor / eps, Curvature::Convex);
                let concave = semiconvexity_check(&inf.field, c.c_factor / eps, Curvature::Concave);
                let dual = inf_convolution(&sol.phi.scale(-1.0), eps)?;
                let duality_gap = dual.field.add(&sup.field)?.sup_norm();
                for (k, ok) in [radius.ok, sandwich.ok, convex.ok, concave.ok, duality_gap == 0.0].into_iter().enumerate() {
                    all[k] &= ok;
                }
                rows.push(json!({
                    "eps": eps, "radius": to_value(&radius), "sandwich": to_value(&sandwich),
                    "semiconvexity": to_value(&convex), "semiconcavity": to_value(&concave), "duality_gap": duality_gap,
                }));
            }
            metrics.insert("convolution".into(), Value::Array(rows));
            for (k, name) in ["radius", "sandwich", "semiconvexity", "semiconcavity", "duality"].iter().enumerate() {
                assertions.insert(format!("convolution_{name}"), all[k]);
            }
        }
        if let Some(s) = &a.scaled_audit {
            let bg = self.background(sol.phi.grid)?;
            let audit = scaled_subsolution_audit(&op, &bg, &sol.phi, &sol.g, sol.c, &s.eps, s.a1, self.cfg.solver.backend)?;
            assertions.insert("scaled_subsolution".into(), audit.passed);
            metrics.insert("scaled_audit".into(), to_value(&audit));
        }
        self.write_json("regularize.json", &metrics)?;
        let entry = self.record("regularize", metrics, assertions, t0)?;
        Ok(Outcome { passed: entry.passed, entries: vec![entry] })
    }

    pub fn estimate(&self) -> Result<Outcome> {
        let a = &self.cfg.analysis;
        if !a.estimate_enabled() {
            log::warn!("no estimate probes enabled; nothing to do");
            eprintln!("warning: no estimate probes enabled");
            return Ok(Outcome { entries: Vec::new(), passed: true });
        }
        let t0 = Instant::now();
        let op = self.cfg.operator()?;
        let seed = self.cfg.seed;
        let mut metrics = BTreeMap::new();
        let mut assertions = BTreeMap::new();
        let needs_solve = a.stability.is_some() || a.monotonicity.is_some() || a.uniqueness.is_some();
        let bg = if needs_solve { Some(self.background(self.cfg.grid()?)?) } else { None };
        if let Some(st) = &a.stability {
            let bg = bg.as_ref().unwrap();
            let g = self.fixed_rhs(&op, bg)?;
            let zeta = Expr::parse(&st.zeta)?.field(bg.grid, None)?;
            let mut probe = StabilityProbe::with_margin(st.p0, op.n, st.margin)?;
            probe.min_decades = st.min_decades;
            let pairs = stability_pairs(&op, bg, &g, &zeta, &st.sigmas, &self.cfg.solver)?;
            match stability_exponent_fit(&pairs, &probe) {
                Ok(fit) => {
                    assertions.insert("stability".into(), fit.passes);
                    metrics.insert("stability".into(), to_value(&fit));
                }
                Err(e @ LabError::InsufficientSpread { .. }) => {
                    assertions.insert("stability".into(), false);
                    metrics.insert("stability".into(), json!({ "error": e.to_string() }));
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(mt) = &a.monotonicity {
            let bg = bg.as_ref().unwrap();
            let g = self.fixed_rhs(&op, bg)?;
            let trials = c_monotonicity_trials(&op, bg, &g, mt.pairs, seed, &self.cfg.solver)?;
            assertions.insert("c_monotonicity".into(), trials.passed);
            metrics.insert("c_monotonicity".into(), to_value(&trials));
        }
        if let Some(u) = &a.uniqueness {
            let bg = bg.as_ref().unwrap();
            let rep = match &self.cfg.rhs {
                RhsSpec::Monotone { .. } => {
                    let rhs = self.monotone_rhs(&op, bg)?;
                    uniqueness_gap_probe(&op, bg, RhsMode::Monotone(&rhs), &self.monotone_config(), u.inits, seed)?
                }
                _ => {
                    let g = self.fixed_rhs(&op, bg)?;
                    uniqueness_gap_probe(&op, bg, RhsMode::Fixed(&g), &self.cfg.solver, u.inits, seed)?
                }
            };
            assertions.insert("uniqueness".into(), rep.max_pairwise_sup_gap <= u.max_gap && rep.max_c_gap <= u.max_gap);
            metrics.insert("uniqueness".into(), to_value(&rep));
        }
        if let Some(d) = &a.de_giorgi {
            let rep = de_giorgi_trials(d.trials, d.steps, d.mu, seed)?;
            assertions.insert("de_giorgi".into(), rep.passed);
            metrics.insert("de_giorgi".into(), to_value(&rep));
        }
        self.write_json("estimate.json", &metrics)?;
        let entry = self.record("estimate", metrics, assertions, t0)?;
        Ok(Outcome { passed: entry.passed, entries: vec![entry] })
    }
}

/// Summary of a ledger, written to `report.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerReport {
    pub entries: usize,
    pub passed: usize,
    pub failed: Vec<String>,
}

pub fn report(out: &Path) -> Result<Outcome> {
    let path = out.join(LEDGER_FILE);
    if !path.exists() {
        return Err(LabError::MissingPrerequisite(format!("no ledger at {}", path.display())));
    }
    let entries = read_ledger(&path)?;
    let rep = LedgerReport {
        entries: entries.len(),
        passed: entries.iter().filter(|e| e.passed).count(),
        failed: entries.iter().filter(|e| !e.passed).map(|e| e.id.clone()).collect(),
    };
    fs::write(out.join("report.json"), serde_json::to_string_pretty(&rep)?)?;
    println!("{} entries, {} passed", rep.entries, rep.passed);
    Ok(Outcome { passed: rep.failed.is_empty(), entries })
}
