//! Command-line front end: argument definitions and the subcommands behind
//! the `lqrecover` binary.

pub mod manifest;
pub mod matrix_file;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use lqrecover::bounds::{lambda_default, theorem_bounds, TheoremBounds, TuningParams};
use lqrecover::experiments::example1::{example1_design, log_grid};
use lqrecover::experiments::{
    aggregate, run_sweep_with_jobs, verify_example1, write_aggregate_csv, write_coverage_csv, write_tables_csv,
    write_trials_csv, Example1Config, ExperimentConfig, MethodSpec, TrialReport,
};
use lqrecover::regularity::{check_sufficient_conditions, rec_modulus_estimate, RecParams, SearchConfig};
use lqrecover::solvers::{
    irl1_constrained_solve, prox_gradient_solve, PenaltySpec, SolveResult, SolverOptions, DEFAULT_MCP_GAMMA,
    DEFAULT_SCAD_A,
};

pub use manifest::RunManifest;
pub use matrix_file::{read_matrix, read_vector, MatrixFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    /// The solver stopped at its iteration limit; the result was still written.
    #[error("solver did not converge within {0} iterations")]
    NonConvergence(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Data(_) => 1,
            CliError::NonConvergence(_) => 2,
        }
    }
}

impl From<lqrecover::Error> for CliError {
    fn from(e: lqrecover::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "lqrecover", version, about = "Sparse recovery with lq estimators and restricted eigenvalue diagnostics")]
pub struct Cli {
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true, env = "LQRECOVER_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one regularized or constrained problem.
    Solve(SolveArgs),
    /// Estimate the q-restricted eigenvalue modulus and check sufficient conditions.
    Certify(CertifyArgs),
    /// Evaluate the tuning rules and recovery bounds.
    Bounds(BoundsArgs),
    /// Run the sample-size sweep behind the sensitivity/specificity tables.
    Sweep(SweepArgs),
    /// Bound coverage on the 2x3 example design.
    Example1(Example1Args),
    /// Rebuild the tables from the per-trial reports of a sweep.
    Tables(TablesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PenaltyKind {
    L0,
    L1,
    Lq,
    Scad,
    Mcp,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Design matrix (MatrixFile).
    #[arg(long)]
    pub design: PathBuf,
    /// Observation vector (single row or column MatrixFile).
    #[arg(long)]
    pub observation: PathBuf,
    #[arg(long, value_enum, default_value = "lq")]
    pub penalty: PenaltyKind,
    /// Exponent for `lq` and the constrained problem.
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    /// A number, or `auto` for the tuning rule (needs --sigma).
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Solve `min ‖β‖_q^q s.t. ‖y − Xβ‖ ≤ ε` instead; a number or `auto` (σ√(5m)).
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Noise level used by the automatic λ and ε.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Cone constant of the tuning rule.
    #[arg(long, default_value_t = 3.0)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub b: f64,
    /// Bound on ‖β*‖_q used by the tuning rule.
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = DEFAULT_SCAD_A)]
    pub scad_a: f64,
    #[arg(long, default_value_t = DEFAULT_MCP_GAMMA)]
    pub mcp_gamma: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Design matrix (MatrixFile); omit with --example1.
    #[arg(long, required_unless_present = "example1")]
    pub design: Option<PathBuf>,
    /// Use X₁ = [[2,3,1],[2,1,3]].
    #[arg(long)]
    pub example1: bool,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    /// Defaults to s.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, default_value_t = 200)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the sufficient-condition checks.
    #[arg(long)]
    pub no_conditions: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 3.0)]
    pub a: f64,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub s: usize,
    /// Defaults to s.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Population modulus φ_q(s,t,a,Σ^{1/2}).
    #[arg(long, default_value_t = 1.0)]
    pub phi_sigma: f64,
    /// Design modulus φ_q(s,t,a,X); defaults to √m·φ_Σ/2.
    #[arg(long)]
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Paper,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Starting configuration; overridden by --config.
    #[arg(long, value_enum, default_value = "paper")]
    pub preset: Preset,
    /// ExperimentConfig JSON, or the manifest of an earlier sweep.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Dimension; also resets s to 10% of n unless --s is given.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub sample_sizes: Option<Vec<usize>>,
    /// Comma-separated methods: l0, half, two-thirds, l1, scad[:a], mcp[:g], lq:<q>, cp:<q>.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct Example1Args {
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 25)]
    pub num_lambdas: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    /// `reports.json` written by `sweep`.
    #[arg(long)]
    pub reports: PathBuf,
    /// Write the per-cell aggregate instead of the two tables.
    #[arg(long)]
    pub aggregate: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses and runs; the return value is the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let jobs = cli.jobs.filter(|j| *j > 0);
    match cli.command {
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Certify(a) => cmd_certify(&a, out),
        Command::Bounds(a) => cmd_bounds(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, jobs, out),
        Command::Example1(a) => cmd_example1(&a, jobs, out),
        Command::Tables(a) => cmd_tables(&a, out),
    }
}

fn emit<S: Serialize>(value: &S, output: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))? + "\n";
    match output {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Data(e.to_string())),
    }
}

fn auto_or_number(s: &str, what: &str) -> Result<Option<f64>, CliError> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(Some(v)),
        _ => Err(CliError::Usage(format!("--{what} must be a positive number or 'auto', got '{s}'"))),
    }
}

#[derive(Debug, Serialize)]
pub struct SolveOutput {
    pub problem: String,
    pub penalty: Option<String>,
    pub q: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    /// `given`, or `auto` when the tuning rule picked the parameter.
    pub parameter_source: String,
    pub beta_hat: Vec<f64>,
    pub objective_trace_tail: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stationarity_residual: f64,
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let x = read_matrix(&a.design)?;
    let y = read_vector(&a.observation)?;
    if x.nrows() != y.len() {
        return Err(CliError::Data(format!(
            "design is {}x{} but the observation has {} entries (expected {})",
            x.nrows(),
            x.ncols(),
            y.len(),
            x.nrows()
        )));
    }
    let (m, n) = x.shape();
    let opts = SolverOptions { max_iters: a.max_iters, tol: a.tol, ..SolverOptions::default() };
    let need_sigma = |what: &str| a.sigma.ok_or_else(|| CliError::Usage(format!("automatic {what} needs --sigma")));
    let (res, output) = if let Some(eps) = &a.epsilon {
        let (epsilon, source) = match auto_or_number(eps, "epsilon")? {
            Some(v) => (v, "given"),
            None => (lqrecover::bounds::epsilon_default(need_sigma("epsilon")?, m), "auto"),
        };
        let res = irl1_constrained_solve(&x, &y, epsilon, a.q, &opts)?;
        let o = solve_output(&res, "constrained", None, Some(a.q), None, Some(epsilon), source);
        (res, o)
    } else {
        let (lambda, source) = match auto_or_number(&a.lambda, "lambda")? {
            Some(v) => (v, "given"),
            None => {
                let q = match a.penalty {
                    PenaltyKind::Lq => a.q,
                    PenaltyKind::L1 => 1.0,
                    _ => return Err(CliError::Usage("--lambda auto applies to the lq and l1 penalties only".into())),
                };
                let p = TuningParams { sigma: need_sigma("lambda")?, m, n, a: a.a, theta: a.theta, b: a.b, r: a.r, q };
                (lambda_default(&p)?.lambda, "auto")
            }
        };
        let pen = match a.penalty {
            PenaltyKind::L0 => PenaltySpec::l0(lambda),
            PenaltyKind::L1 => PenaltySpec::l1(lambda),
            PenaltyKind::Lq => PenaltySpec::lq(a.q, lambda),
            PenaltyKind::Scad => PenaltySpec::scad(a.scad_a, lambda),
            PenaltyKind::Mcp => PenaltySpec::mcp(a.mcp_gamma, lambda),
        }
        .map_err(|e| CliError::Usage(e.to_string()))?;
        let res = prox_gradient_solve(&x, &y, &pen, &opts, &DVector::zeros(n))?;
        let q = match a.penalty {
            PenaltyKind::Lq => Some(a.q),
            PenaltyKind::L1 => Some(1.0),
            _ => None,
        };
        let o = solve_output(&res, "regularized", Some(pen.penalty.name()), q, Some(lambda), None, source);
        (res, o)
    };
    emit(&output, a.output.as_deref(), out)?;
    if res.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(res.iterations))
    }
}

fn solve_output(
    res: &SolveResult<f64>,
    problem: &str,
    penalty: Option<String>,
    q: Option<f64>,
    lambda: Option<f64>,
    epsilon: Option<f64>,
    source: &str,
) -> SolveOutput {
    let tail = res.objective_trace.len().saturating_sub(10);
    SolveOutput {
        problem: problem.into(),
        penalty,
        q,
        lambda,
        epsilon,
        parameter_source: source.into(),
        beta_hat: res.beta_hat.iter().copied().collect(),
        objective_trace_tail: res.objective_trace[tail..].to_vec(),
        iterations: res.iterations,
        converged: res.converged,
        stationarity_residual: res.stationarity_residual,
    }
}

#[derive(Debug, Serialize)]
pub struct CertifyOutput {
    pub rows: usize,
    pub cols: usize,
    pub params: RecParams<f64>,
    /// The estimate, with the witness as a plain array.
    pub rec: serde_json::Value,
    pub conditions: Option<lqrecover::regularity::SufficientConditions<f64>>,
    pub conditions_error: Option<String>,
}

fn cmd_certify(a: &CertifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let x = match (&a.design, a.example1) {
        (_, true) => example1_design(),
        (Some(p), false) => read_matrix(p)?,
        (None, false) => return Err(CliError::Usage("pass --design or --example1".into())),
    };
    let params = RecParams::new(a.q, a.s, a.t.unwrap_or(a.s), a.a, x.ncols()).map_err(|e| CliError::Usage(e.to_string()))?;
    let search = SearchConfig { num_starts: a.starts, seed: a.seed, ..SearchConfig::default() };
    let rec = rec_modulus_estimate(&x, &params, &search)?;
    let (conditions, conditions_error) = if a.no_conditions {
        (None, None)
    } else {
        match check_sufficient_conditions(&x, &params, search.budget) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let mut rec_json = serde_json::to_value(&rec).map_err(|e| CliError::Data(e.to_string()))?;
    rec_json["witness"] = serde_json::json!(rec.witness.as_ref().map(|w| w.as_slice().to_vec()));
    let report = CertifyOutput { rows: x.nrows(), cols: x.ncols(), params, rec: rec_json, conditions, conditions_error };
    emit(&report, a.output.as_deref(), out)
}

#[derive(Debug, Serialize)]
pub struct BoundsOutput {
    pub tuning: TuningParams<f64>,
    pub s: usize,
    pub t: usize,
    pub phi: f64,
    pub phi_sigma: f64,
    pub variance_branch: bool,
    pub bounds: TheoremBounds<f64>,
}

fn cmd_bounds(a: &BoundsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let tuning = TuningParams { sigma: a.sigma, m: a.m, n: a.n, a: a.a, theta: a.theta, b: a.b, r: a.r, q: a.q };
    let t = a.t.unwrap_or(a.s);
    let phi = a.phi.unwrap_or((a.m as f64).sqrt() * a.phi_sigma / 2.0);
    let choice = lambda_default(&tuning).map_err(|e| CliError::Usage(e.to_string()))?;
    let bounds = theorem_bounds(&tuning, a.s, t, phi, a.phi_sigma).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = BoundsOutput { tuning, s: a.s, t, phi, phi_sigma: a.phi_sigma, variance_branch: choice.variance_branch, bounds };
    emit(&report, None, out)
}

/// Applies preset, config file and flag overrides, in that order.
pub fn resolve_sweep_config(a: &SweepArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match a.preset {
        Preset::Paper => ExperimentConfig::paper(),
    };
    if let Some(p) = &a.config {
        let text = fs::read_to_string(p).map_err(io_err(p))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        let inner = match value.get("config") {
            Some(c) if value.get("config_hash").is_some() => {
                let m: RunManifest = serde_json::from_value(value.clone()).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                if !m.verify() {
                    return Err(CliError::Data(format!("{}: config does not match its recorded hash", p.display())));
                }
                c.clone()
            }
            _ => value,
        };
        cfg = serde_json::from_value(inner).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    }
    if let Some(n) = a.n {
        cfg.n = n;
        if a.s.is_none() {
            cfg.s = ((n as f64) * 0.1).round() as usize;
        }
    }
    if let Some(s) = a.s {
        cfg.s = s;
    }
    if let Some(t) = a.trials {
        cfg.num_trials = t;
    }
    if let Some(sz) = &a.sample_sizes {
        cfg.sample_sizes = sz.clone();
    }
    if let Some(ms) = &a.methods {
        cfg.methods = ms.iter().map(|m| MethodSpec::parse(m.trim())).collect::<Result<_, _>>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(f) = a.folds {
        cfg.cv_folds = f;
    }
    if let Some(sg) = a.sigma {
        cfg.sigma = sg;
    }
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn jobs_or_default(jobs: Option<usize>) -> usize {
    jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn create_file(path: &Path) -> Result<fs::File, CliError> {
    fs::File::create(path).map_err(io_err(path))
}

fn cmd_sweep(a: &SweepArgs, jobs: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    let started = manifest::now();
    let cfg = resolve_sweep_config(a)?;
    fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    let reports = run_sweep_with_jobs(&cfg, jobs_or_default(jobs))?;
    let rows = aggregate(&reports);
    let paths = ["trials.csv", "aggregate.csv", "tables.csv", "reports.json"].map(|f| a.out_dir.join(f));
    write_trials_csv(create_file(&paths[0])?, &reports)?;
    write_aggregate_csv(create_file(&paths[1])?, &rows)?;
    write_tables_csv(create_file(&paths[2])?, &rows)?;
    let json = serde_json::to_vec(&reports).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&paths[3], json).map_err(io_err(&paths[3]))?;
    let mut man = RunManifest::new("sweep", &cfg, cfg.master_seed, jobs, started)?;
    man.outputs = paths.to_vec();
    man.write(&a.out_dir.join("manifest.json"))?;
    let failed = reports.iter().filter(|r| r.error.is_some()).count();
    writeln!(out, "{} trials ({} failed); outputs in {}", reports.len(), failed, a.out_dir.display())
        .map_err(|e| CliError::Data(e.to_string()))
}

fn cmd_example1(a: &Example1Args, jobs: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    let started = manifest::now();
    if !(a.lambda_min > 0.0 && a.lambda_min <= a.lambda_max) {
        return Err(CliError::Usage("need 0 < --lambda-min <= --lambda-max".into()));
    }
    let cfg = Example1Config {
        lambdas: log_grid(a.lambda_min, a.lambda_max, a.num_lambdas),
        draws: a.draws,
        seed: a.seed,
        sigma: a.sigma,
    };
    fs::create_dir_all(&a.out_dir).map_err(io_err(&a.out_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs_or_default(jobs))
        .build()
        .map_err(|e| CliError::Data(e.to_string()))?;
    let report = pool.install(|| verify_example1(&cfg)).map_err(|e| CliError::Usage(e.to_string()))?;
    let csv_path = a.out_dir.join("coverage.csv");
    let json_path = a.out_dir.join("example1.json");
    write_coverage_csv(create_file(&csv_path)?, &report)?;
    let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&json_path, json).map_err(io_err(&json_path))?;
    let mut man = RunManifest::new("example1", &cfg, cfg.seed, jobs, started)?;
    man.outputs = vec![csv_path, json_path];
    man.write(&a.out_dir.join("manifest.json"))?;
    writeln!(out, "{} lambdas x {} draws; outputs in {}", report.rows.len(), report.draws, a.out_dir.display())
        .map_err(|e| CliError::Data(e.to_string()))
}

fn cmd_tables(a: &TablesArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read(&a.reports).map_err(io_err(&a.reports))?;
    let reports: Vec<TrialReport> =
        serde_json::from_slice(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.reports.display())))?;
    let rows = aggregate(&reports);
    let mut buf = Vec::new();
    if a.aggregate {
        write_aggregate_csv(&mut buf, &rows)?;
    } else {
        write_tables_csv(&mut buf, &rows)?;
    }
    match &a.output {
        Some(p) => fs::write(p, buf).map_err(io_err(p)),
        None => out.write_all(&buf).map_err(|e| CliError::Data(e.to_string())),
    }
}

