//! Support-recovery metrics and summary statistics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::sparsity::{cone_membership_tol, lq_pow_sum_over, ConeParams, IndexSet};

/// `(sensitivity, specificity)` of the estimated support `{i : |β̂_i| > tol}`.
///
/// Sensitivity is 1 when `β*` has no nonzeros and specificity is 1 when it
/// has no zeros.
pub fn support_metrics(beta_hat: &DVector<f64>, beta_star: &DVector<f64>, support_tol: f64) -> (f64, f64) {
    assert_eq!(beta_hat.len(), beta_star.len(), "support_metrics needs equal lengths");
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (h, s) in beta_hat.iter().zip(beta_star.iter()) {
        let est = h.abs() > support_tol;
        match (*s != 0.0, est) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 1.0 } else { a as f64 / (a + b) as f64 };
    (ratio(tp, fn_), ratio(tn, fp))
}

/// Whether `δ = β̂ − β*` satisfies `‖δ_{J^c}‖_q^q ≤ a‖δ_J‖_q^q` on the true
/// support `J`, up to a relative slack.
pub fn true_support_dominance(delta: &DVector<f64>, support: &IndexSet, q: f64, a: f64, rel_slack: f64) -> bool {
    let n = delta.len();
    let on = lq_pow_sum_over(delta, q, support.iter());
    let off = lq_pow_sum_over(delta, q, support.complement(n).iter());
    let rhs = a * on;
    off <= rhs + rel_slack * (off + rhs)
}

/// Cone membership of `δ` for `C_q(s, a)`, where the best index set of size
/// `s` is used rather than the true support.
pub fn cone_dominance(delta: &DVector<f64>, q: f64, s: usize, a: f64, rel_slack: f64) -> bool {
    let n = delta.len();
    if s >= n {
        return true;
    }
    match ConeParams::new(q, s, a, n) {
        Ok(cone) => cone_membership_tol(delta, &cone, rel_slack),
        Err(_) => false,
    }
}

/// Mean with a 95% normal-approximation confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub count: usize,
}

pub fn mean_ci(values: &[f64]) -> MeanCi {
    let k = values.len();
    if k == 0 {
        return MeanCi { mean: f64::NAN, half_width: f64::NAN, count: 0 };
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let half_width = if k < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        1.96 * var.sqrt() / (k as f64).sqrt()
    };
    MeanCi { mean, half_width, count: k }
}
