//! Sufficient conditions for the q-REC in terms of sparse eigenvalues (a),
//! restricted isometry/orthogonality constants (b) and mutual incoherence (c),
//! plus the relaxed variants (a°)–(c°) obtained by combining them with the
//! monotonicity of the q-REC in q.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::regularity::rec::RecParams;
use crate::regularity::spectral::{gram, normalize_columns, ric_from_sparse_eigen, roc_from_gram, sparse_eigenvalues};
use crate::scalar::Scalar;
use crate::sparsity::ensure_finite_matrix;

/// Tolerance on `|Γ_jj - 1|` for the unit-diagonal precondition.
pub const UNIT_DIAGONAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Holds,
    Fails,
    NotApplicable,
}

/// One condition `lhs < rhs` (or `lhs > rhs` for the eigenvalue conditions)
/// with both sides attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionOutcome<T> {
    pub verdict: Verdict,
    pub lhs: Option<T>,
    pub rhs: Option<T>,
}

impl<T: Scalar> ConditionOutcome<T> {
    fn greater(lhs: T, rhs: T) -> Self {
        let verdict = if lhs > rhs { Verdict::Holds } else { Verdict::Fails };
        ConditionOutcome { verdict, lhs: Some(lhs), rhs: Some(rhs) }
    }

    fn less(lhs: T, rhs: T) -> Self {
        let verdict = if lhs < rhs { Verdict::Holds } else { Verdict::Fails };
        ConditionOutcome { verdict, lhs: Some(lhs), rhs: Some(rhs) }
    }

    fn not_applicable(lhs: Option<T>, rhs: Option<T>) -> Self {
        ConditionOutcome { verdict: Verdict::NotApplicable, lhs, rhs }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }
}

/// Constants that enter the conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionConstants<T> {
    pub sigma_min_s_plus_t: T,
    pub sigma_max_t: T,
    pub eta_t: T,
    pub theta_s_t: T,
    pub theta_t_s_plus_t: T,
    /// `θ_{1,1}(X)`, the largest absolute off-diagonal Gram entry.
    pub theta_1_1: T,
    pub unit_diagonal: bool,
    pub column_norms: Vec<T>,
    /// `θ_{1,1}` of the column-normalized design.
    pub normalized_mic: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientConditions<T> {
    pub constants: ConditionConstants<T>,
    pub a: ConditionOutcome<T>,
    pub b: ConditionOutcome<T>,
    pub c: ConditionOutcome<T>,
    pub a_relaxed: ConditionOutcome<T>,
    pub b_relaxed: ConditionOutcome<T>,
    pub c_relaxed: ConditionOutcome<T>,
    /// Condition (c) evaluated on the column-normalized design. Informational
    /// only: it certifies the q-REC for the rescaled matrix, not for `X`.
    pub c_normalized: ConditionOutcome<T>,
}

impl<T: Scalar> SufficientConditions<T> {
    /// Whether any of (a), (b), (c), (a°), (b°), (c°) holds for `X` itself.
    pub fn any_holds(&self) -> bool {
        [self.a, self.b, self.c, self.a_relaxed, self.b_relaxed, self.c_relaxed]
            .iter()
            .any(|c| c.holds())
    }
}

/// Evaluates the sufficient conditions for `q`-REC`(s, t, a)`.
pub fn check_sufficient_conditions<T: Scalar>(
    x: &DMatrix<T>,
    rec: &RecParams<T>,
    budget: u128,
) -> Result<SufficientConditions<T>> {
    ensure_finite_matrix(x, "design matrix")?;
    let n = x.ncols();
    let rec = RecParams::new(rec.q, rec.s, rec.t, rec.a, n)?;
    let (s, t, a, q) = (rec.s, rec.t, rec.a, rec.q);
    let g = gram(x);

    let sig_st = sparse_eigenvalues(&g, s + t, budget)?;
    let sig_t = sparse_eigenvalues(&g, t, budget)?;
    let eta_t = ric_from_sparse_eigen(sig_t);
    let theta_st = roc_from_gram(&g, s, t, budget)?;
    let theta_t_st = roc_from_gram(&g, t, s + t, budget)?;
    let theta_11 = if n >= 2 { roc_from_gram(&g, 1, 1, budget)? } else { T::zero() };
    let tol = T::lit(UNIT_DIAGONAL_TOL);
    let unit_diagonal = (0..n).all(|j| (g[(j, j)] - T::one()).abs() <= tol);
    let (xn, norms) = normalize_columns(x);
    let gn = gram(&xn);
    let normalized_mic = if n >= 2 { roc_from_gram(&gn, 1, 1, budget)? } else { T::zero() };

    let one = T::one();
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let st_ratio = T::from_usize_lossy(s) / T::from_usize_lossy(t);
    let as_t = a * st_ratio;
    let inv_q = one / q;
    let s_plus_t = T::from_usize_lossy(s + t);

    // (a) σ_min(s+t) > a (as/t)^{2/q-1} σ_max(t)
    let cond_a = ConditionOutcome::greater(sig_st.min, a * as_t.powf(two * inv_q - one) * sig_t.max);
    // (b) η_t + θ_{s,t} + a^{1/2} (as/t)^{1/q-1/2} θ_{t,s+t} < 1
    let cond_b = ConditionOutcome::less(
        eta_t + theta_st + a.sqrt() * as_t.powf(inv_q - half) * theta_t_st,
        one,
    );
    // (c) unit diagonal and θ_{1,1} < ((1 + 2a (as/t)^{1/q-1}) (s+t))^{-1}
    let c_rhs = one / ((one + two * a * as_t.powf(inv_q - one)) * s_plus_t);
    let cond_c = if unit_diagonal {
        ConditionOutcome::less(theta_11, c_rhs)
    } else {
        ConditionOutcome::not_applicable(Some(theta_11), Some(c_rhs))
    };

    let damp = |p: T| one.min(as_t.powf(p));
    // (a°) σ_min(s+t) > min{1, (as/t)^{2/q-2}} (s/t) a² σ_max(t)
    let cond_a_relaxed =
        ConditionOutcome::greater(sig_st.min, damp(two * inv_q - two) * st_ratio * a * a * sig_t.max);
    // (b°) η_t + θ_{s,t} + min{1, (as/t)^{1/q-1}} (s/t)^{1/2} a θ_{t,s+t} < 1
    let cond_b_relaxed = ConditionOutcome::less(
        eta_t + theta_st + damp(inv_q - one) * st_ratio.sqrt() * a * theta_t_st,
        one,
    );
    // (c°) unit diagonal and θ_{1,1} < ((1 + 2a min{1, (as/t)^{1/q-1}}) (s+t))^{-1}
    let c_relaxed_rhs = one / ((one + two * a * damp(inv_q - one)) * s_plus_t);
    let cond_c_relaxed = if unit_diagonal {
        ConditionOutcome::less(theta_11, c_relaxed_rhs)
    } else {
        ConditionOutcome::not_applicable(Some(theta_11), Some(c_relaxed_rhs))
    };
    let c_normalized = ConditionOutcome::less(normalized_mic, c_rhs);

    Ok(SufficientConditions {
        constants: ConditionConstants {
            sigma_min_s_plus_t: sig_st.min,
            sigma_max_t: sig_t.max,
            eta_t,
            theta_s_t: theta_st,
            theta_t_s_plus_t: theta_t_st,
            theta_1_1: theta_11,
            unit_diagonal,
            column_norms: norms.iter().copied().collect(),
            normalized_mic,
        },
        a: cond_a,
        b: cond_b,
        c: cond_c,
        a_relaxed: cond_a_relaxed,
        b_relaxed: cond_b_relaxed,
        c_relaxed: cond_c_relaxed,
        c_normalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularity::spectral::DEFAULT_BUDGET;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identity_condition_a_is_tight() {
        let id = DMatrix::<f64>::identity(4, 4);
        let rec = RecParams::new(0.5, 1, 1, 1.0, 4).unwrap();
        let rep = check_sufficient_conditions(&id, &rec, DEFAULT_BUDGET).unwrap();
        assert_eq!(rep.a.lhs, Some(1.0));
        assert_eq!(rep.a.rhs, Some(1.0));
        assert_eq!(rep.a.verdict, Verdict::Fails);
        // with orthonormal columns every RIP-type constant vanishes
        assert!(rep.b.holds());
        assert!(rep.c.holds());
    }

    #[test]
    fn normalized_example_condition_c() {
        let x = DMatrix::from_row_slice(2, 3, &[2.0, 3.0, 1.0, 2.0, 1.0, 3.0]);
        let (xn, _) = normalize_columns(&x);
        let rec = RecParams::new(0.5, 1, 1, 1.0, 3).unwrap();
        let rep = check_sufficient_conditions(&xn, &rec, DEFAULT_BUDGET).unwrap();
        assert_relative_eq!(rep.c.rhs.unwrap(), 1.0 / 6.0, max_relative = 1e-12);
        assert_relative_eq!(rep.c.lhs.unwrap(), 8.0 / 80f64.sqrt(), max_relative = 1e-12);
        assert_eq!(rep.c.verdict, Verdict::Fails);
        // raw design has diagonal (8, 10, 10)
        let raw = check_sufficient_conditions(&x, &rec, DEFAULT_BUDGET).unwrap();
        assert_eq!(raw.c.verdict, Verdict::NotApplicable);
        assert!(!raw.constants.unit_diagonal);
        assert_relative_eq!(raw.constants.normalized_mic, 8.0 / 80f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn near_orthogonal_design_satisfies_b() {
        // identity plus a small perturbation, re-orthonormalized, then a
        // tiny coherent perturbation added and columns normalized
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = DMatrix::from_fn(8, 8, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.01 * z
        });
        let q = (DMatrix::<f64>::identity(8, 8) + noise.clone()).qr().q();
        let (x, _) = normalize_columns(&(q + noise * 0.5));
        let rec = RecParams::new(0.5, 1, 1, 1.0, 8).unwrap();
        let rep = check_sufficient_conditions(&x, &rec, DEFAULT_BUDGET).unwrap();
        assert!(rep.constants.theta_1_1 < 0.05);
        assert!(rep.b.holds(), "{:?}", rep.b);
        assert!(rep.any_holds());
    }

    #[test]
    fn relaxed_conditions_dominate_for_large_t() {
        // when t > as the relaxed factors are at most the originals
        let x = DMatrix::from_fn(6, 6, |i, j| if i == j { 1.0 } else { 0.02 * ((i + 2 * j) % 3) as f64 });
        let (xn, _) = normalize_columns(&x);
        let rec = RecParams::new(0.5, 1, 3, 1.0, 6).unwrap();
        let rep = check_sufficient_conditions(&xn, &rec, DEFAULT_BUDGET).unwrap();
        assert!(rep.a_relaxed.rhs.unwrap() <= rep.a.rhs.unwrap() + 1e-15);
        assert!(rep.c_relaxed.rhs.unwrap() >= rep.c.rhs.unwrap() - 1e-15);
    }
}
