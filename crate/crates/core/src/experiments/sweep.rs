//! The sample-size sweep behind the sensitivity/specificity tables.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{epsilon_experiment, lambda_default, theorem34_bounds, theorem_bounds, TheoremBounds, TuningParams};
use crate::error::{Error, Result};
use crate::experiments::cv::{cross_validate_prepared, CvData, CvSettings, LambdaGrid};
use crate::experiments::design::{generate_instance_with, CovarianceSpec, SignalSpec};
use crate::experiments::metrics::{cone_dominance, mean_ci, support_metrics, MeanCi};
use crate::instance::RegressionInstance;
use crate::solvers::{irl1_constrained_solve, Penalty, SolverOptions, DEFAULT_MCP_GAMMA, DEFAULT_SCAD_A};
use crate::sparsity::lq_quasi_norm;

/// Cone constant used for regularized overlays and dominance checks.
pub const REGULARIZED_CONE_A: f64 = 3.0;
/// Relative slack of the dominance checks.
pub const DOMINANCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MethodSpec {
    /// Penalized least squares with λ chosen by cross-validation.
    Regularized { penalty: Penalty<f64> },
    /// `min ‖β‖_q^q s.t. ‖y − Xβ‖₂ ≤ ε` with `ε = σ√(m + 2√(2m))`.
    Constrained { q: f64 },
}

impl MethodSpec {
    pub fn regularized(penalty: Penalty<f64>) -> Self {
        MethodSpec::Regularized { penalty }
    }

    /// The six methods of the tables, in table order.
    pub fn table_methods() -> Vec<MethodSpec> {
        vec![
            Self::regularized(Penalty::L0),
            Self::regularized(Penalty::Lq { q: 0.5 }),
            Self::regularized(Penalty::Lq { q: 2.0 / 3.0 }),
            Self::regularized(Penalty::L1),
            Self::regularized(Penalty::Scad { a: DEFAULT_SCAD_A }),
            Self::regularized(Penalty::Mcp { gamma: DEFAULT_MCP_GAMMA }),
        ]
    }

    /// Exponent of the ℓq theory that applies, if any.
    pub fn q(&self) -> Option<f64> {
        match self {
            MethodSpec::Regularized { penalty: Penalty::Lq { q } } => Some(*q),
            MethodSpec::Regularized { penalty: Penalty::L1 } => Some(1.0),
            MethodSpec::Regularized { .. } => None,
            MethodSpec::Constrained { q } => Some(*q),
        }
    }

    pub fn label(&self) -> String {
        match self {
            MethodSpec::Regularized { penalty } => match penalty {
                Penalty::L0 => "q=0".into(),
                Penalty::Lq { q } => format!("q={}", q_label(*q)),
                Penalty::L1 => "q=1".into(),
                Penalty::Scad { .. } => "SCAD".into(),
                Penalty::Mcp { .. } => "MCP".into(),
            },
            MethodSpec::Constrained { q } => format!("CP q={}", q_label(*q)),
        }
    }

    /// Parses `l0`, `l1`, `lq:<q>`, `half`, `two-thirds`, `scad[:a]`,
    /// `mcp[:gamma]` and `cp:<q>`.
    pub fn parse(s: &str) -> Result<MethodSpec> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |default: Option<f64>| -> Result<f64> {
            match arg {
                Some(a) => parse_fraction(a),
                None => default.ok_or_else(|| Error::InvalidParameter(format!("method '{s}' needs a value"))),
            }
        };
        let method = match head.to_ascii_lowercase().as_str() {
            "l0" | "q0" => Self::regularized(Penalty::L0),
            "l1" | "lasso" | "q1" => Self::regularized(Penalty::L1),
            "half" | "l1/2" => Self::regularized(Penalty::Lq { q: 0.5 }),
            "two-thirds" | "l2/3" => Self::regularized(Penalty::Lq { q: 2.0 / 3.0 }),
            "lq" => {
                let q = num(None)?;
                if q == 1.0 {
                    Self::regularized(Penalty::L1)
                } else {
                    Self::regularized(Penalty::Lq { q })
                }
            }
            "scad" => Self::regularized(Penalty::Scad { a: num(Some(DEFAULT_SCAD_A))? }),
            "mcp" => Self::regularized(Penalty::Mcp { gamma: num(Some(DEFAULT_MCP_GAMMA))? }),
            "cp" => MethodSpec::Constrained { q: num(None)? },
            _ => return Err(Error::InvalidParameter(format!("unknown method '{s}'"))),
        };
        method.validate()?;
        Ok(method)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodSpec::Regularized { penalty } => crate::solvers::PenaltySpec::new(*penalty, 1.0).map(|_| ()),
            MethodSpec::Constrained { q } if !(*q > 0.0 && *q <= 1.0) => {
                Err(Error::InvalidParameter(format!("constrained method needs 0 < q <= 1, got {q}")))
            }
            MethodSpec::Constrained { .. } => Ok(()),
        }
    }
}

/// Accepts `0.5` as well as `1/2`.
pub fn parse_fraction(s: &str) -> Result<f64> {
    let bad = || Error::InvalidParameter(format!("cannot parse number '{s}'"));
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            Ok(a / b)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

fn q_label(q: f64) -> String {
    for (num, den) in [(1, 2), (2, 3), (1, 3), (3, 4), (1, 4)] {
        if (q - num as f64 / den as f64).abs() < 1e-12 {
            return format!("{num}/{den}");
        }
    }
    format!("{q}")
}

/// `m = ⌈c·s·ln n⌉` for each factor `c`.
pub fn log_rule_sizes(factors: &[f64], s: usize, n: usize) -> Vec<usize> {
    factors.iter().map(|c| (c * s as f64 * (n as f64).ln()).ceil() as usize).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub s: usize,
    pub sample_sizes: Vec<usize>,
    pub sigma: f64,
    pub num_trials: usize,
    pub methods: Vec<MethodSpec>,
    pub cv_folds: usize,
    pub lambda_grid: LambdaGrid,
    pub support_tol: f64,
    pub master_seed: u64,
    pub covariance: CovarianceSpec,
    pub signal: SignalSpec,
    pub cv_solver: SolverOptions<f64>,
    pub final_solver: SolverOptions<f64>,
    pub max_support_ratio: f64,
    /// Options of the reweighted solver for constrained methods.
    pub constrained_solver: SolverOptions<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ExperimentConfig {
    /// n = 1024, 10% sparsity, σ = 0.01, the six table sample sizes, 100
    /// trials, 10-fold CV.
    pub fn paper() -> Self {
        let cv = CvSettings::default();
        ExperimentConfig {
            n: 1024,
            s: 102,
            sample_sizes: vec![177, 355, 532, 710, 887, 976],
            sigma: 0.01,
            num_trials: 100,
            methods: MethodSpec::table_methods(),
            cv_folds: 10,
            lambda_grid: cv.grid,
            support_tol: 1e-4,
            master_seed: 0,
            covariance: CovarianceSpec::Identity,
            signal: SignalSpec::default(),
            cv_solver: cv.solver,
            final_solver: cv.final_solver,
            max_support_ratio: cv.max_support_ratio,
            constrained_solver: SolverOptions::default(),
        }
    }

    pub fn cv_settings(&self) -> CvSettings {
        CvSettings {
            folds: self.cv_folds,
            grid: self.lambda_grid.clone(),
            solver: self.cv_solver,
            final_solver: self.final_solver,
            max_support_ratio: self.max_support_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.s > self.n {
            return Err(Error::InvalidParameter(format!("need 1 <= n and s <= n (n = {}, s = {})", self.n, self.s)));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidParameter("sample sizes must be nonempty and positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods configured".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.support_tol >= 0.0) {
            return Err(Error::InvalidParameter("support_tol must be nonnegative".into()));
        }
        let regularized = self.methods.iter().any(|m| matches!(m, MethodSpec::Regularized { .. }));
        if regularized {
            if self.cv_folds < 2 {
                return Err(Error::InvalidParameter(format!("cv_folds = {} must be at least 2", self.cv_folds)));
            }
            if let Some(m) = self.sample_sizes.iter().find(|m| **m < self.cv_folds) {
                return Err(Error::InvalidParameter(format!("sample size {m} is smaller than the fold count")));
            }
            self.lambda_grid.values(1.0)?;
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.cv_solver.validate()?;
        self.final_solver.validate()?;
        self.constrained_solver.validate()?;
        self.covariance.matrix(self.n).map(|_| ())
    }
}

/// splitmix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of seed components.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6c71_7265_636f_7672, |h, p| splitmix(h ^ splitmix(*p)))
}

/// Seed of the instance for sample size `m` and trial `trial`; every method
/// sees the same instance so comparisons are paired.
pub fn instance_seed(master: u64, m: usize, trial: usize) -> u64 {
    mix_seed(&[master, m as u64, trial as u64])
}

/// Seed of the cross-validation fold partition, shared by every method on
/// the instance so that all of them are scored on the same splits.
pub fn fold_seed(master: u64, m: usize, trial: usize) -> u64 {
    mix_seed(&[master, m as u64, trial as u64, 0xf01d])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundStatus {
    /// The bound rests on a proven positive modulus and its preconditions hold.
    Certified,
    /// Evaluated, but from an uncertified modulus.
    Advisory,
    NotApplicable,
}

impl BoundStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundStatus::Certified => "CERTIFIED",
            BoundStatus::Advisory => "ADVISORY",
            BoundStatus::NotApplicable => "NOT-APPLICABLE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    /// Fold-partition seed.
    pub seed: u64,
    pub instance_seed: u64,
    pub method: String,
    pub m: usize,
    pub beta_hat: Vec<f64>,
    pub l2_error_sq: f64,
    /// `‖X(β̂ − β*)‖²/m`.
    pub prediction_error: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Cone dominance of `β̂ − β*` (`a = 1` constrained, `a = 3` regularized);
    /// `None` outside the ℓq family.
    pub dominant_property_held: Option<bool>,
    /// Theory bounds at the tuning-rule λ, for ℓq methods.
    pub bound_values: Option<TheoremBounds<f64>>,
    /// The ℓ2 bound that applies to this estimate.
    pub bound: Option<f64>,
    pub bound_status: BoundStatus,
    pub within_bound: Option<bool>,
    /// λ for regularized methods, ε for constrained ones.
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest single-step objective increase over every proximal gradient
    /// solve behind this estimate.
    pub max_objective_increase: f64,
    pub error: Option<String>,
}

impl TrialReport {
    fn failed(trial: usize, seed: u64, instance_seed: u64, method: String, m: usize, err: String) -> Self {
        TrialReport {
            trial,
            seed,
            instance_seed,
            method,
            m,
            beta_hat: Vec::new(),
            l2_error_sq: f64::NAN,
            prediction_error: f64::NAN,
            sensitivity: f64::NAN,
            specificity: f64::NAN,
            dominant_property_held: None,
            bound_values: None,
            bound: None,
            bound_status: BoundStatus::NotApplicable,
            within_bound: None,
            lambda: f64::NAN,
            iterations: 0,
            converged: false,
            max_objective_increase: 0.0,
            error: Some(err),
        }
    }
}

/// What is known about `Σ` for the bound overlays.
#[derive(Debug, Clone, Copy, PartialEq)]
struct PopulationModulus {
    /// `√λ_min(Σ)`, a lower bound on `φ_q(s,t,a,Σ^{1/2})` for every
    /// `(q,s,t,a)`; `None` if `Σ` is singular.
    phi: Option<f64>,
    unit_diagonal: bool,
}

impl PopulationModulus {
    fn new(cov: &CovarianceSpec, n: usize) -> Result<Self> {
        let (phi, unit_diagonal) = match cov {
            CovarianceSpec::Identity => (Some(1.0), true),
            _ => {
                let min = cov.matrix(n)?.symmetric_eigenvalues().min();
                (if min > 0.0 { Some(min.sqrt()) } else { None }, cov.unit_diagonal(n)?)
            }
        };
        Ok(PopulationModulus { phi, unit_diagonal })
    }
}

/// Runs every `(m, method, trial)` cell. Instances are independent work
/// items on the current rayon pool; the result order is fixed by
/// `(m, method, trial)` regardless of scheduling.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<TrialReport>> {
    config.validate()?;
    let pop = PopulationModulus::new(&config.covariance, config.n)?;
    let cells: Vec<(usize, usize)> = config
        .sample_sizes
        .iter()
        .flat_map(|&m| (0..config.num_trials).map(move |t| (m, t)))
        .collect();
    let per_cell: Vec<Vec<TrialReport>> = cells.par_iter().map(|&(m, t)| run_cell(config, &pop, m, t)).collect();
    let k = config.methods.len();
    let mut out = Vec::with_capacity(per_cell.len() * k);
    for (mi, _) in config.sample_sizes.iter().enumerate() {
        for method in 0..k {
            for t in 0..config.num_trials {
                out.push(per_cell[mi * config.num_trials + t][method].clone());
            }
        }
    }
    Ok(out)
}

/// [`run_sweep`] on a dedicated pool of `jobs` threads.
pub fn run_sweep_with_jobs(config: &ExperimentConfig, jobs: usize) -> Result<Vec<TrialReport>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_sweep(config))
}

fn run_cell(config: &ExperimentConfig, pop: &PopulationModulus, m: usize, trial: usize) -> Vec<TrialReport> {
    let iseed = instance_seed(config.master_seed, m, trial);
    let labels: Vec<String> = config.methods.iter().map(|x| x.label()).collect();
    let fseed = fold_seed(config.master_seed, m, trial);
    let fail_all = |e: Error| {
        labels
            .iter()
            .map(|l| TrialReport::failed(trial, fseed, iseed, l.clone(), m, e.to_string()))
            .collect()
    };
    let inst = match generate_instance_with(m, config.n, config.s, config.sigma, &config.covariance, &config.signal, iseed)
    {
        Ok(i) => i,
        Err(e) => return fail_all(e),
    };
    let cv = config.cv_settings();
    let mut reports = Vec::with_capacity(labels.len());
    let shared = if config.methods.iter().any(|x| matches!(x, MethodSpec::Regularized { .. })) {
        Some(CvData::new(&inst.x, &inst.y, config.cv_folds, fseed))
    } else {
        None
    };
    for (k, method) in config.methods.iter().enumerate() {
        let report = match method {
            MethodSpec::Regularized { penalty } => match shared.as_ref().expect("regularized methods present") {
                Ok(data) => regularized_trial(config, pop, &inst, data, *penalty, &cv),
                Err(e) => Err(Error::InvalidParameter(e.to_string())),
            },
            MethodSpec::Constrained { q } => constrained_trial(config, pop, &inst, *q),
        };
        reports.push(match report {
            Ok(mut r) => {
                r.trial = trial;
                r.seed = fseed;
                r.instance_seed = iseed;
                r.method = labels[k].clone();
                r
            }
            Err(e) => TrialReport::failed(trial, fseed, iseed, labels[k].clone(), m, e.to_string()),
        });
    }
    reports
}

struct Assessed {
    l2: f64,
    prediction: f64,
    sensitivity: f64,
    specificity: f64,
}

fn assess(inst: &RegressionInstance<f64>, beta: &DVector<f64>, tol: f64) -> Assessed {
    let delta = beta - &inst.beta_star;
    let (sensitivity, specificity) = support_metrics(beta, &inst.beta_star, tol);
    Assessed {
        l2: delta.norm_squared(),
        prediction: (&inst.x * &delta).norm_squared() / inst.m() as f64,
        sensitivity,
        specificity,
    }
}

fn tuning(config: &ExperimentConfig, inst: &RegressionInstance<f64>, q: f64) -> Result<TuningParams<f64>> {
    let r = lq_quasi_norm(&inst.beta_star, q)?.max(f64::MIN_POSITIVE);
    Ok(TuningParams {
        sigma: config.sigma,
        m: inst.m(),
        n: config.n,
        a: REGULARIZED_CONE_A,
        theta: 0.0,
        b: 0.0,
        r,
        q,
    })
}

/// Bounds at the tuning-rule λ. The design modulus is taken as `√m·φ_Σ/2`,
/// the value it exceeds with high probability for Gaussian designs.
fn rule_bounds(config: &ExperimentConfig, pop: &PopulationModulus, inst: &RegressionInstance<f64>, q: f64) -> Option<TheoremBounds<f64>> {
    let phi_sigma = pop.phi?;
    let s = config.s.max(1);
    let p = tuning(config, inst, q).ok()?;
    theorem_bounds(&p, s, s, (inst.m() as f64).sqrt() * phi_sigma / 2.0, phi_sigma).ok()
}

fn regularized_trial(
    config: &ExperimentConfig,
    pop: &PopulationModulus,
    inst: &RegressionInstance<f64>,
    data: &CvData,
    penalty: Penalty<f64>,
    cv: &CvSettings,
) -> Result<TrialReport> {
    let res = cross_validate_prepared(data, penalty, cv)?;
    let beta = &res.fit.beta_hat;
    let a = assess(inst, beta, config.support_tol);
    let method = MethodSpec::Regularized { penalty };
    let s = config.s.max(1);
    let q = method.q();
    let dominant = q.map(|q| cone_dominance(&(beta - &inst.beta_star), q, s, REGULARIZED_CONE_A, DOMINANCE_SLACK));
    let bound_values = q.and_then(|q| rule_bounds(config, pop, inst, q));
    // The random-design bound holds for any λ at or above the rule λ.
    let (bound, status) = match (q, pop.phi, &bound_values) {
        (Some(q), Some(phi), Some(bv)) if pop.unit_diagonal && res.lambda >= bv.lambda => {
            let (_, rp) = theorem34_bounds(phi, inst.m(), q, s, s, REGULARIZED_CONE_A, res.lambda, bv.epsilon)?;
            (Some(rp.l2), BoundStatus::Certified)
        }
        _ => (None, BoundStatus::NotApplicable),
    };
    Ok(TrialReport {
        trial: 0,
        seed: 0,
        instance_seed: 0,
        method: String::new(),
        m: inst.m(),
        beta_hat: beta.as_slice().to_vec(),
        l2_error_sq: a.l2,
        prediction_error: a.prediction,
        sensitivity: a.sensitivity,
        specificity: a.specificity,
        dominant_property_held: dominant,
        bound_values,
        bound,
        bound_status: status,
        within_bound: bound.map(|b| a.l2 <= b),
        lambda: res.lambda,
        iterations: res.fit.iterations,
        converged: res.fit.converged,
        max_objective_increase: res.max_increase,
        error: None,
    })
}

fn constrained_trial(
    config: &ExperimentConfig,
    pop: &PopulationModulus,
    inst: &RegressionInstance<f64>,
    q: f64,
) -> Result<TrialReport> {
    let eps = epsilon_experiment(config.sigma, inst.m());
    let res = irl1_constrained_solve(&inst.x, &inst.y, eps, q, &config.constrained_solver)?;
    let beta = &res.beta_hat;
    let a = assess(inst, beta, config.support_tol);
    let s = config.s.max(1);
    let dominant = cone_dominance(&(beta - &inst.beta_star), q, s, 1.0, DOMINANCE_SLACK);
    let bound_values = rule_bounds(config, pop, inst, q);
    let bound = match pop.phi {
        Some(phi) => {
            let lam = lambda_default(&tuning(config, inst, q)?)?.lambda;
            Some(theorem34_bounds(phi, inst.m(), q, s, s, REGULARIZED_CONE_A, lam, eps)?.0)
        }
        None => None,
    };
    Ok(TrialReport {
        trial: 0,
        seed: 0,
        instance_seed: 0,
        method: String::new(),
        m: inst.m(),
        beta_hat: beta.as_slice().to_vec(),
        l2_error_sq: a.l2,
        prediction_error: a.prediction,
        sensitivity: a.sensitivity,
        specificity: a.specificity,
        dominant_property_held: Some(dominant),
        bound_values,
        bound,
        bound_status: if bound.is_some() { BoundStatus::Certified } else { BoundStatus::NotApplicable },
        within_bound: bound.map(|b| a.l2 <= b),
        lambda: eps,
        iterations: res.iterations,
        converged: res.converged,
        max_objective_increase: 0.0,
        error: None,
    })
}

/// One `(m, method)` cell of the tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub m: usize,
    pub method: String,
    pub trials: usize,
    pub failures: usize,
    pub sensitivity: MeanCi,
    pub specificity: MeanCi,
    pub l2_error_sq: MeanCi,
    pub prediction_error: MeanCi,
    pub lambda: MeanCi,
    /// Fraction of trials with the dominant property, over trials where it
    /// was evaluated.
    pub dominant_rate: Option<f64>,
    pub within_bound_rate: Option<f64>,
    pub nonconverged: usize,
    pub max_objective_increase: f64,
}

fn rate(flags: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags.flatten() {
        total += 1;
        hit += usize::from(f);
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Means and 95% half-widths per `(m, method)`, in first-appearance order.
pub fn aggregate(reports: &[TrialReport]) -> Vec<AggregateRow> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in reports {
        if !keys.iter().any(|(m, l)| *m == r.m && *l == r.method) {
            keys.push((r.m, r.method.clone()));
        }
    }
    keys.into_iter()
        .map(|(m, method)| {
            let all: Vec<&TrialReport> = reports.iter().filter(|r| r.m == m && r.method == method).collect();
            let ok: Vec<&TrialReport> = all.iter().copied().filter(|r| r.error.is_none()).collect();
            let col = |f: fn(&TrialReport) -> f64| mean_ci(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                m,
                trials: all.len(),
                failures: all.len() - ok.len(),
                sensitivity: col(|r| r.sensitivity),
                specificity: col(|r| r.specificity),
                l2_error_sq: col(|r| r.l2_error_sq),
                prediction_error: col(|r| r.prediction_error),
                lambda: col(|r| r.lambda),
                dominant_rate: rate(ok.iter().map(|r| r.dominant_property_held)),
                within_bound_rate: rate(ok.iter().map(|r| r.within_bound)),
                nonconverged: ok.iter().filter(|r| !r.converged).count(),
                max_objective_increase: ok.iter().map(|r| r.max_objective_increase).fold(0.0, f64::max),
                method,
            }
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidParameter(format!("csv output failed: {e}"))
}

fn opt_f(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn opt_b(x: Option<bool>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub const TRIAL_HEADER: [&str; 18] = [
    "m",
    "method",
    "trial",
    "seed",
    "instance_seed",
    "lambda",
    "l2_error_sq",
    "prediction_error",
    "sensitivity",
    "specificity",
    "dominant_property_held",
    "bound",
    "bound_status",
    "within_bound",
    "iterations",
    "converged",
    "max_objective_increase",
    "error",
];

/// One row per trial; empty fields mean "not evaluated".
pub fn write_trials_csv<W: Write>(w: W, reports: &[TrialReport]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRIAL_HEADER).map_err(csv_err)?;
    for r in reports {
        out.write_record([
            r.m.to_string(),
            r.method.clone(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.instance_seed.to_string(),
            format!("{:e}", r.lambda),
            format!("{:e}", r.l2_error_sq),
            format!("{:e}", r.prediction_error),
            format!("{}", r.sensitivity),
            format!("{}", r.specificity),
            opt_b(r.dominant_property_held),
            opt_f(r.bound),
            r.bound_status.as_str().to_string(),
            opt_b(r.within_bound),
            r.iterations.to_string(),
            r.converged.to_string(),
            format!("{:e}", r.max_objective_increase),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::InvalidParameter(format!("csv output failed: {e}")))
}

pub const AGGREGATE_HEADER: [&str; 19] = [
    "m",
    "method",
    "trials",
    "failures",
    "sensitivity_mean",
    "sensitivity_ci95",
    "specificity_mean",
    "specificity_ci95",
    "l2_error_sq_mean",
    "l2_error_sq_ci95",
    "prediction_error_mean",
    "prediction_error_ci95",
    "lambda_mean",
    "lambda_ci95",
    "dominant_rate",
    "within_bound_rate",
    "nonconverged",
    "max_objective_increase",
    "sensitivity_table",
];

pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(AGGREGATE_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.m.to_string(),
            r.method.clone(),
            r.trials.to_string(),
            r.failures.to_string(),
            format!("{}", r.sensitivity.mean),
            format!("{}", r.sensitivity.half_width),
            format!("{}", r.specificity.mean),
            format!("{}", r.specificity.half_width),
            format!("{:e}", r.l2_error_sq.mean),
            format!("{:e}", r.l2_error_sq.half_width),
            format!("{:e}", r.prediction_error.mean),
            format!("{:e}", r.prediction_error.half_width),
            format!("{:e}", r.lambda.mean),
            format!("{:e}", r.lambda.half_width),
            opt_f(r.dominant_rate),
            opt_f(r.within_bound_rate),
            r.nonconverged.to_string(),
            format!("{:e}", r.max_objective_increase),
            format!("{:.4}", r.sensitivity.mean),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::InvalidParameter(format!("csv output failed: {e}")))
}

/// Tables layout: one block per metric, one row per method, one column per
/// sample size, four decimals.
pub fn write_tables_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<()> {
    let mut sizes: Vec<usize> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for r in rows {
        if !sizes.contains(&r.m) {
            sizes.push(r.m);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["table".to_string(), "method".to_string()];
    header.extend(sizes.iter().map(|m| m.to_string()));
    out.write_record(&header).map_err(csv_err)?;
    for (table, pick) in [
        ("sensitivity", (|r: &AggregateRow| r.sensitivity.mean) as fn(&AggregateRow) -> f64),
        ("specificity", |r: &AggregateRow| r.specificity.mean),
    ] {
        for method in &methods {
            let mut rec = vec![table.to_string(), method.clone()];
            for m in &sizes {
                let cell = rows.iter().find(|r| r.m == *m && &r.method == method).map(pick);
                rec.push(cell.map(|v| format!("{v:.4}")).unwrap_or_default());
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| Error::InvalidParameter(format!("csv output failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n: 32,
            s: 3,
            sample_sizes: vec![12, 24],
            num_trials: 2,
            cv_folds: 3,
            lambda_grid: LambdaGrid::Relative { num: 8, min_ratio: 1e-3 },
            master_seed: 11,
            ..ExperimentConfig::paper()
        }
    }

    #[test]
    fn one_report_per_cell() {
        let mut cfg = small();
        cfg.methods.push(MethodSpec::Constrained { q: 0.5 });
        let reports = run_sweep(&cfg).unwrap();
        assert_eq!(reports.len(), 2 * 7 * 2);
        for r in &reports {
            assert!(r.error.is_none(), "{r:?}");
            assert!((0.0..=1.0).contains(&r.sensitivity) && (0.0..=1.0).contains(&r.specificity));
            assert_eq!(r.beta_hat.len(), 32);
        }
        // order is (m, method, trial)
        assert_eq!((reports[0].m, reports[0].method.as_str(), reports[0].trial), (12, "q=0", 0));
        assert_eq!((reports[1].m, reports[1].trial), (12, 1));
        assert_eq!(reports[2].method, "q=1/2");
        assert_eq!(reports[13].method, "CP q=1/2");
        let rows = aggregate(&reports);
        assert_eq!(rows.len(), 14);
        // table cells are plain means of the trials
        let cell: Vec<f64> = reports.iter().filter(|r| r.m == 24 && r.method == "q=1").map(|r| r.sensitivity).collect();
        let row = rows.iter().find(|r| r.m == 24 && r.method == "q=1").unwrap();
        assert!((row.sensitivity.mean - cell.iter().sum::<f64>() / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let cfg = small();
        let a = run_sweep_with_jobs(&cfg, 1).unwrap();
        let b = run_sweep_with_jobs(&cfg, 3).unwrap();
        let csv = |r: &[TrialReport]| {
            let mut buf = Vec::new();
            write_aggregate_csv(&mut buf, &aggregate(r)).unwrap();
            write_trials_csv(&mut buf, r).unwrap();
            buf
        };
        assert_eq!(csv(&a), csv(&b));
    }

    #[test]
    fn seeds_separate_components() {
        assert_ne!(instance_seed(1, 100, 0), instance_seed(1, 100, 1));
        assert_ne!(instance_seed(1, 100, 0), instance_seed(2, 100, 0));
        assert_ne!(fold_seed(0, 10, 3), instance_seed(0, 10, 3));
        assert_ne!(mix_seed(&[1, 2]), mix_seed(&[2, 1]));
    }

    #[test]
    fn methods_parse_and_label() {
        let labels: Vec<String> = MethodSpec::table_methods().iter().map(|m| m.label()).collect();
        assert_eq!(labels, ["q=0", "q=1/2", "q=2/3", "q=1", "SCAD", "MCP"]);
        assert_eq!(MethodSpec::parse("lq:1/2").unwrap().label(), "q=1/2");
        assert_eq!(MethodSpec::parse("lq:1").unwrap().label(), "q=1");
        assert_eq!(MethodSpec::parse("scad").unwrap(), MethodSpec::regularized(Penalty::Scad { a: 3.7 }));
        assert_eq!(MethodSpec::parse("cp:0.5").unwrap().label(), "CP q=1/2");
        assert!(MethodSpec::parse("lq:1.5").is_err());
        assert!(MethodSpec::parse("ridge").is_err());
        assert!(MethodSpec::parse("scad:1.5").is_err());
    }

    #[test]
    fn log_rule() {
        // ⌈4·8·ln 256⌉ = ⌈177.44⌉
        assert_eq!(log_rule_sizes(&[4.0], 8, 256), vec![178]);
    }

    #[test]
    fn tables_layout() {
        let cfg = ExperimentConfig { methods: vec![MethodSpec::regularized(Penalty::L1)], ..small() };
        let rows = aggregate(&run_sweep(&cfg).unwrap());
        let mut buf = Vec::new();
        write_tables_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "table,method,12,24");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("sensitivity,q=1,"));
        assert!(lines[2].starts_with("specificity,q=1,"));
    }

    #[test]
    fn failures_are_recorded_per_trial() {
        // more columns than the fold split allows for: the sweep rejects the
        // configuration up front rather than failing every cell
        let cfg = ExperimentConfig { sample_sizes: vec![2], ..small() };
        assert!(run_sweep(&cfg).is_err());
        let bad = TrialReport::failed(0, 1, 2, "x".into(), 5, "boom".into());
        let rows = aggregate(&[bad]);
        assert_eq!(rows[0].failures, 1);
        assert!(rows[0].sensitivity.mean.is_nan());
    }
}
