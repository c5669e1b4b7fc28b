//! Bound coverage on the 2×3 design `X₁ = [[2,3,1],[2,1,3]]`, which satisfies
//! the ½-restricted eigenvalue condition but not the classical one.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::theorem2_bounds;
use crate::error::{Error, Result};
use crate::experiments::metrics::mean_ci;
use crate::experiments::sweep::{mix_seed, BoundStatus};
use crate::regularity::{rec_modulus_estimate, Certification, RecParams, SearchConfig};
use crate::solvers::{global_solve_tiny, prox_gradient_solve, PenaltySpec, SolverOptions, DEFAULT_MAX_N};

pub fn example1_design() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 3, &[2.0, 3.0, 1.0, 2.0, 1.0, 3.0])
}

pub fn example1_beta() -> DVector<f64> {
    DVector::from_column_slice(&[1.0, 0.0, 0.0])
}

/// `num` log-spaced values from `lo` to `hi`, increasing.
pub fn log_grid(lo: f64, hi: f64, num: usize) -> Vec<f64> {
    match num {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..num).map(|k| 10f64.powf(a + (b - a) * k as f64 / (num - 1) as f64)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Config {
    pub lambdas: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
    /// Noise standard deviation; 0.1 reads `N(0, 0.01)` as a variance.
    pub sigma: f64,
}

impl Default for Example1Config {
    fn default() -> Self {
        Example1Config {
            lambdas: log_grid(1e-8, 1.0, 25),
            draws: 500,
            seed: 0,
            sigma: 0.1,
        }
    }
}

/// Per-λ summary for one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub mean_error: f64,
    pub ci_half_width: f64,
    pub bound: Option<f64>,
    pub status: BoundStatus,
    /// Fraction of draws with `‖β̂ − β*‖² ≤ bound`.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub lambda: f64,
    pub half: Coverage,
    pub l1: Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example1Report {
    pub sigma: f64,
    pub draws: usize,
    /// Search estimate of `φ_{1/2}(1,1,1,X₁)`, used for the bound.
    pub phi_half: f64,
    /// Sparse-eigenvalue lower bound on `φ_{1/2}(1,1,1,X₁)`.
    pub phi_half_lower: Option<f64>,
    pub half_certification: Certification,
    pub l1_certification: Certification,
    pub rows: Vec<CoverageRow>,
}

/// Draws `draws` noise vectors once and, for every λ, solves the ℓ_{1/2}
/// problem globally and the lasso by FISTA, comparing `‖β̂ − β*‖²` with the
/// regularized ℓ2 bound at `(s, t, a) = (1, 1, 1)`.
pub fn verify_example1(cfg: &Example1Config) -> Result<Example1Report> {
    if cfg.draws == 0 || cfg.lambdas.is_empty() {
        return Err(Error::InvalidParameter("need at least one draw and one lambda".into()));
    }
    if !(cfg.sigma >= 0.0) || !cfg.sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma = {} must be nonnegative", cfg.sigma)));
    }
    let x = example1_design();
    let beta = example1_beta();
    let clean = &x * &beta;
    let search = SearchConfig::default();
    let half = rec_modulus_estimate(&x, &RecParams::new(0.5, 1, 1, 1.0, 3)?, &search)?;
    let one = rec_modulus_estimate(&x, &RecParams::new(1.0, 1, 1, 1.0, 3)?, &search)?;
    let half_ok = half.certified == Certification::Positive;
    let one_ok = one.certified == Certification::Positive;

    let ys: Vec<DVector<f64>> = (0..cfg.draws)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, k as u64]));
            let e = DVector::from_fn(2, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cfg.sigma * z
            });
            &clean + e
        })
        .collect();
    let lasso_opts = SolverOptions { max_iters: 200_000, tol: 1e-14, ..SolverOptions::default() };

    let rows: Result<Vec<CoverageRow>> = cfg
        .lambdas
        .par_iter()
        .map(|&lam| {
            let mut err_half = Vec::with_capacity(cfg.draws);
            let mut err_l1 = Vec::with_capacity(cfg.draws);
            let l1 = PenaltySpec::l1(lam)?;
            for y in &ys {
                let g = global_solve_tiny(&x, y, lam, 0.5, DEFAULT_MAX_N)?;
                err_half.push((&g.beta_hat - &beta).norm_squared());
                let f = prox_gradient_solve(&x, y, &l1, &lasso_opts, &DVector::zeros(3))?;
                err_l1.push((&f.beta_hat - &beta).norm_squared());
            }
            let half_bound = if half_ok { Some(theorem2_bounds(half.modulus_upper, 2, 0.5, 1, 1, 1.0, lam)?.l2) } else { None };
            let l1_bound = if one_ok { Some(theorem2_bounds(one.modulus_upper, 2, 1.0, 1, 1, 1.0, lam)?.l2) } else { None };
            Ok(CoverageRow { lambda: lam, half: summarize(&err_half, half_bound), l1: summarize(&err_l1, l1_bound) })
        })
        .collect();
    Ok(Example1Report {
        sigma: cfg.sigma,
        draws: cfg.draws,
        phi_half: half.modulus_upper,
        phi_half_lower: half.analytic_lower,
        half_certification: half.certified,
        l1_certification: one.certified,
        rows: rows?,
    })
}

fn summarize(errors: &[f64], bound: Option<f64>) -> Coverage {
    let ci = mean_ci(errors);
    Coverage {
        mean_error: ci.mean,
        ci_half_width: ci.half_width,
        bound,
        status: if bound.is_some() { BoundStatus::Certified } else { BoundStatus::NotApplicable },
        coverage: bound.map(|b| errors.iter().filter(|e| **e <= b).count() as f64 / errors.len() as f64),
    }
}

pub const COVERAGE_HEADER: [&str; 11] = [
    "lambda",
    "half_mean_error",
    "half_ci95",
    "half_bound",
    "half_coverage",
    "half_status",
    "l1_mean_error",
    "l1_ci95",
    "l1_bound",
    "l1_coverage",
    "l1_status",
];

pub fn write_coverage_csv<W: Write>(w: W, report: &Example1Report) -> Result<()> {
    let err = |e: csv::Error| Error::InvalidParameter(format!("csv output failed: {e}"));
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COVERAGE_HEADER).map_err(err)?;
    for r in &report.rows {
        out.write_record([
            format!("{:e}", r.lambda),
            format!("{:e}", r.half.mean_error),
            format!("{:e}", r.half.ci_half_width),
            opt(r.half.bound),
            opt(r.half.coverage),
            r.half.status.as_str().to_string(),
            format!("{:e}", r.l1.mean_error),
            format!("{:e}", r.l1.ci_half_width),
            opt(r.l1.bound),
            opt(r.l1.coverage),
            r.l1.status.as_str().to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::InvalidParameter(format!("csv output failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-8, 1.0, 25);
        assert_eq!(g.len(), 25);
        assert!((g[0] - 1e-8).abs() < 1e-20 && (g[24] - 1.0).abs() < 1e-12);
        // nine grid steps per three decades
        assert!((g[3] / g[0] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn lasso_overlay_is_not_applicable() {
        let cfg = Example1Config { lambdas: vec![1e-6, 0.3], draws: 20, ..Default::default() };
        let rep = verify_example1(&cfg).unwrap();
        assert_eq!(rep.l1_certification, Certification::Zero);
        assert_eq!(rep.half_certification, Certification::Positive);
        assert!(rep.rows.iter().all(|r| r.l1.status == BoundStatus::NotApplicable && r.l1.coverage.is_none()));
        assert!(rep.rows.iter().all(|r| r.half.bound.is_some()));
    }

    #[test]
    fn noiseless_coverage_is_degenerate() {
        let cfg = Example1Config { lambdas: vec![0.05], draws: 30, sigma: 0.0, seed: 3 };
        let rep = verify_example1(&cfg).unwrap();
        let c = rep.rows[0].half.coverage.unwrap();
        assert!(c == 0.0 || c == 1.0);
        assert!(rep.rows[0].half.ci_half_width.abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_lambda() {
        let cfg = Example1Config { lambdas: log_grid(1e-3, 1.0, 4), draws: 5, ..Default::default() };
        let mut buf = Vec::new();
        write_coverage_csv(&mut buf, &verify_example1(&cfg).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().ends_with("NOT-APPLICABLE"));
    }
}
