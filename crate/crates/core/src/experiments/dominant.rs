//! Empirical frequency of the dominant property `‖δ_{J^c}‖_q^q ≤ a‖δ_J‖_q^q`
//! for constrained and regularized estimates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{epsilon_default, lambda_default, TuningParams};
use crate::error::{Error, Result};
use crate::experiments::design::{generate_instance_with, CovarianceSpec, SignalSpec};
use crate::experiments::metrics::{cone_dominance, true_support_dominance};
use crate::experiments::sweep::{instance_seed, DOMINANCE_SLACK};
use crate::solvers::{irl1_constrained_solve, prox_gradient_solve, PenaltySpec, SolverOptions};
use crate::sparsity::lq_quasi_norm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DominantConfig {
    pub n: usize,
    pub s: usize,
    /// Defaults to `⌈4 s ln n⌉`.
    pub m: Option<usize>,
    pub sigma: f64,
    pub trials: usize,
    pub q: f64,
    /// Cone constant of the regularized estimate.
    pub a: f64,
    pub master_seed: u64,
    pub covariance: CovarianceSpec,
    pub signal: SignalSpec,
    pub solver: SolverOptions<f64>,
    pub constrained_solver: SolverOptions<f64>,
}

impl Default for DominantConfig {
    fn default() -> Self {
        DominantConfig {
            n: 256,
            s: 8,
            m: None,
            sigma: 0.01,
            trials: 200,
            q: 0.5,
            a: 3.0,
            master_seed: 0,
            covariance: CovarianceSpec::Identity,
            signal: SignalSpec::default(),
            solver: SolverOptions { max_iters: 5_000, tol: 1e-10, ..SolverOptions::default() },
            constrained_solver: SolverOptions::default(),
        }
    }
}

impl DominantConfig {
    pub fn sample_size(&self) -> usize {
        self.m.unwrap_or_else(|| (4.0 * self.s as f64 * (self.n as f64).ln()).ceil() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.s > self.n || self.n < 2 || self.trials == 0 || self.sample_size() == 0 {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= s <= n, n >= 2, m >= 1 and trials >= 1 (s = {}, n = {}, m = {}, trials = {})",
                self.s,
                self.n,
                self.sample_size(),
                self.trials
            )));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidParameter(format!("q = {} must lie in (0, 1]", self.q)));
        }
        if !(self.a > 1.0) || !self.a.is_finite() {
            return Err(Error::InvalidParameter(format!("a = {} must exceed 1", self.a)));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma = {} must be positive", self.sigma)));
        }
        self.solver.validate()?;
        self.constrained_solver.validate()
    }
}

/// How often one estimator satisfied the inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantRate {
    pub method: String,
    pub a: f64,
    /// Trials that produced an estimate.
    pub evaluated: usize,
    pub failures: usize,
    /// Inequality on the true support `J`.
    pub true_support_rate: f64,
    /// Membership of the cone `C_q(s, a)`, which uses the best `s`-set and is
    /// therefore never rarer than the true-support version.
    pub cone_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantReport {
    pub m: usize,
    /// `ε = σ√(5m)` of the constrained problem.
    pub epsilon: f64,
    /// `‖e‖₂ ≤ ε` fraction, the event under which the constrained claim holds.
    pub noise_event_rate: f64,
    pub constrained: DominantRate,
    pub regularized: DominantRate,
}

struct Outcome {
    noise_ok: bool,
    constrained: Option<(bool, bool)>,
    regularized: Option<(bool, bool)>,
}

/// Runs `trials` seeded instances and solves each twice: the constrained
/// problem at `ε = σ√(5m)` (reweighted ℓ1) and the regularized problem at the
/// tuning-rule λ with `θ = b = 0`, `r = ‖β*‖_q` (proximal gradient from zero).
pub fn dominant_property_rate(cfg: &DominantConfig) -> Result<DominantReport> {
    cfg.validate()?;
    let m = cfg.sample_size();
    let epsilon = epsilon_default(cfg.sigma, m);
    let outcomes: Vec<Outcome> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = instance_seed(cfg.master_seed, m, trial);
            let inst = match generate_instance_with(m, cfg.n, cfg.s, cfg.sigma, &cfg.covariance, &cfg.signal, seed) {
                Ok(i) => i,
                Err(_) => return Outcome { noise_ok: false, constrained: None, regularized: None },
            };
            let j = inst.support();
            let judge = |beta: &nalgebra::DVector<f64>, a: f64| {
                let delta = beta - &inst.beta_star;
                (
                    true_support_dominance(&delta, &j, cfg.q, a, DOMINANCE_SLACK),
                    cone_dominance(&delta, cfg.q, cfg.s, a, DOMINANCE_SLACK),
                )
            };
            let constrained = irl1_constrained_solve(&inst.x, &inst.y, epsilon, cfg.q, &cfg.constrained_solver)
                .ok()
                .map(|r| judge(&r.beta_hat, 1.0));
            let regularized = (|| {
                let r = lq_quasi_norm(&inst.beta_star, cfg.q)?;
                let p = TuningParams { sigma: cfg.sigma, m, n: cfg.n, a: cfg.a, theta: 0.0, b: 0.0, r, q: cfg.q };
                let lam = lambda_default(&p)?.lambda;
                let pen = PenaltySpec::lq(cfg.q, lam)?;
                prox_gradient_solve(&inst.x, &inst.y, &pen, &cfg.solver, &nalgebra::DVector::zeros(cfg.n))
            })()
            .ok()
            .map(|r| judge(&r.beta_hat, cfg.a));
            Outcome { noise_ok: inst.e.norm() <= epsilon, constrained, regularized }
        })
        .collect();
    let tally = |method: &str, a: f64, pick: &dyn Fn(&Outcome) -> Option<(bool, bool)>| {
        let done: Vec<(bool, bool)> = outcomes.iter().filter_map(pick).collect();
        let frac = |f: &dyn Fn(&(bool, bool)) -> bool| {
            if done.is_empty() {
                f64::NAN
            } else {
                done.iter().filter(|d| f(d)).count() as f64 / done.len() as f64
            }
        };
        DominantRate {
            method: method.to_string(),
            a,
            evaluated: done.len(),
            failures: outcomes.len() - done.len(),
            true_support_rate: frac(&|d| d.0),
            cone_rate: frac(&|d| d.1),
        }
    };
    Ok(DominantReport {
        m,
        epsilon,
        noise_event_rate: outcomes.iter().filter(|o| o.noise_ok).count() as f64 / outcomes.len() as f64,
        constrained: tally("constrained", 1.0, &|o| o.constrained),
        regularized: tally("regularized", cfg.a, &|o| o.regularized),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sample_size() {
        // ⌈32 ln 256⌉ = ⌈177.45⌉
        assert_eq!(DominantConfig::default().sample_size(), 178);
    }

    #[test]
    fn small_instances_are_dominant() {
        let cfg = DominantConfig { n: 64, s: 3, trials: 6, ..Default::default() };
        let rep = dominant_property_rate(&cfg).unwrap();
        assert_eq!(rep.constrained.evaluated, 6);
        assert_eq!(rep.constrained.true_support_rate, 1.0);
        assert_eq!(rep.regularized.true_support_rate, 1.0);
        assert!(rep.regularized.cone_rate >= rep.regularized.true_support_rate);
    }

    #[test]
    fn tiny_m_is_reported_not_asserted() {
        let cfg = DominantConfig { n: 20, s: 2, m: Some(2), trials: 5, ..Default::default() };
        let rep = dominant_property_rate(&cfg).unwrap();
        assert_eq!(rep.m, 2);
        assert!((0.0..=1.0).contains(&rep.regularized.cone_rate));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(dominant_property_rate(&DominantConfig { s: 0, ..Default::default() }).is_err());
        assert!(dominant_property_rate(&DominantConfig { a: 1.0, ..Default::default() }).is_err());
    }
}
