//! The q-restricted eigenvalue modulus
//!
//! ```text
//! φ_q(s,t,a,X) = min { ‖Xδ‖₂ / ‖δ_{J ∪ J(δ;t)}‖₂ : |J| ≤ s, ‖δ_{J^c}‖_q^q ≤ a‖δ_J‖_q^q }
//! ```
//!
//! Computing φ_q exactly is intractable in general. [`rec_modulus_estimate`]
//! returns a search value (an upper bound: every evaluated point is feasible),
//! the analytic sandwich from sparse eigenvalues, and a certificate when the
//! sign of φ_q can be decided rigorously.
//!
//! For fixed δ the best `J` is the top-`s` coordinates, so the denominator is
//! the ℓ2 norm of the `s + t` largest coordinates of δ.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularity::spectral::{gram, sparse_eigenvalues, DEFAULT_BUDGET};
use crate::scalar::Scalar;
use crate::sparsity::{cone_masses, cone_membership_tol, ensure_finite_matrix, top_k, ConeParams};

/// Relative slack used when deciding cone membership of kernel directions.
pub const CONE_TOL: f64 = 1e-9;

/// `(q, s, t, a)` with `1 ≤ s ≤ t`, `s + t ≤ n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecParams<T> {
    pub q: T,
    pub s: usize,
    pub t: usize,
    pub a: T,
}

impl<T: Scalar> RecParams<T> {
    pub fn new(q: T, s: usize, t: usize, a: T, n: usize) -> Result<Self> {
        if !(q > T::zero() && q <= T::one()) {
            return Err(Error::InvalidParameter(format!("q = {q} must lie in (0, 1]")));
        }
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("a = {a} must be positive")));
        }
        if s == 0 || s > t || s + t > n {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= s <= t and s + t <= n (s = {s}, t = {t}, n = {n})"
            )));
        }
        Ok(RecParams { q, s, t, a })
    }

    pub fn cone(&self) -> ConeParams<T> {
        ConeParams { q: self.q, s: self.s, a: self.a }
    }

    /// `a^{1/q} (s/t)^{1/q - 1/2}`, the tail factor of the sandwich bounds.
    pub fn tail_factor(&self) -> T {
        let ratio = T::from_usize_lossy(self.s) / T::from_usize_lossy(self.t);
        let inv_q = T::one() / self.q;
        self.a.powf(inv_q) * ratio.powf(inv_q - T::lit(0.5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Certification {
    /// φ_q > 0 is proven.
    Positive,
    /// A feasible δ with `Xδ = 0` (numerically) was found, so φ_q = 0.
    Zero,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecEstimate<T: Scalar> {
    /// Smallest ratio attained by a feasible point found during the search.
    pub modulus_upper: T,
    /// Sparse-eigenvalue lower bound; `None` if the enumeration budget was exceeded.
    pub analytic_lower: Option<T>,
    /// Sparse-eigenvalue upper bound; `None` if the enumeration budget was exceeded.
    pub analytic_upper: Option<T>,
    pub certified: Certification,
    /// Point attaining `modulus_upper` (unit ℓ2 norm).
    pub witness: Option<DVector<T>>,
    pub kernel_dim: usize,
    pub starts: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub num_starts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub budget: u128,
    /// Extra starts from minimal sparse eigenvectors are added when the number
    /// of `(s+t)`-subsets does not exceed this.
    pub eigvec_seed_limit: u128,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            num_starts: 200,
            max_iters: 500,
            seed: 0,
            budget: DEFAULT_BUDGET,
            eigvec_seed_limit: 2_000,
        }
    }
}

/// Analytic sandwich `(lower, upper)` from sparse eigenvalues of `XᵀX`.
pub fn analytic_bounds<T: Scalar>(g: &DMatrix<T>, rec: &RecParams<T>, budget: u128) -> Result<(T, T)> {
    let st = sparse_eigenvalues(g, rec.s + rec.t, budget)?;
    let t = sparse_eigenvalues(g, rec.t, budget)?;
    let tail = rec.tail_factor() * t.max.max(T::zero()).sqrt();
    let lower = st.min.max(T::zero()).sqrt() - tail;
    let upper = st.max.max(T::zero()).sqrt() + tail;
    Ok((lower, upper))
}

struct Search<'a, T: Scalar> {
    x: &'a DMatrix<T>,
    g: &'a DMatrix<T>,
    rec: RecParams<T>,
    cone: ConeParams<T>,
}

impl<'a, T: Scalar> Search<'a, T> {
    fn denominator_sq(&self, d: &DVector<T>) -> T {
        let top = top_k(d, self.rec.s + self.rec.t);
        top.iter().map(|i| d[i] * d[i]).fold(T::zero(), |a, b| a + b)
    }

    /// Squared ratio `‖Xδ‖² / ‖δ_top‖²`.
    fn objective(&self, d: &DVector<T>) -> T {
        let num = (self.x * d).norm_squared();
        num / self.denominator_sq(d)
    }

    /// Shrinks the off-support part until δ is in the cone, then normalizes.
    fn retract(&self, mut d: DVector<T>) -> Option<DVector<T>> {
        let (off, on) = cone_masses(&d, &self.cone);
        if on <= T::zero() {
            return None;
        }
        if off > self.cone.a * on {
            let scale = (self.cone.a * on / off).powf(T::one() / self.cone.q);
            let keep = top_k(&d, self.cone.s);
            for i in 0..d.len() {
                if !keep.contains(i) {
                    d[i] *= scale;
                }
            }
        }
        let norm = d.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return None;
        }
        Some(d / norm)
    }

    /// Projected descent on the unit sphere with step halving.
    fn descend(&self, start: DVector<T>, max_iters: usize) -> Option<(T, DVector<T>)> {
        let mut d = self.retract(start)?;
        let mut f = self.objective(&d);
        let mut step = T::lit(0.5);
        let min_step = T::lit(1e-12);
        for _ in 0..max_iters {
            let top = top_k(&d, self.rec.s + self.rec.t);
            let den = self.denominator_sq(&d);
            let mut grad = self.g * &d;
            for i in top.iter() {
                grad[i] -= f * d[i];
            }
            let radial = grad.dot(&d);
            grad.axpy(-radial, &d, T::one());
            let gn = grad.norm();
            if !(gn > T::eps() * den) {
                break;
            }
            grad /= gn;
            let mut improved = false;
            while step >= min_step {
                if let Some(cand) = self.retract(&d - &grad * step) {
                    let fc = self.objective(&cand);
                    if fc < f {
                        let rel = (f - fc) / f.max(T::tiny());
                        d = cand;
                        f = fc;
                        step = (step * T::lit(2.0)).min(T::one());
                        improved = rel > T::lit(1e-14);
                        break;
                    }
                }
                step *= T::lit(0.5);
            }
            if !improved {
                break;
            }
        }
        Some((f, d))
    }
}

/// Orthonormal basis of the numerical kernel of `X` (columns), from the
/// eigendecomposition of the Gram matrix.
pub fn kernel_basis<T: Scalar>(g: &DMatrix<T>) -> DMatrix<T> {
    let n = g.nrows();
    let eig = g.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let tol = T::from_usize_lossy(n) * T::lit(100.0) * T::eps() * lmax.max(T::tiny());
    let cols: Vec<DVector<T>> = (0..n)
        .filter(|&i| eig.eigenvalues[i] <= tol)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn minimal_sparse_eigvecs<T: Scalar>(g: &DMatrix<T>, k: usize) -> Vec<DVector<T>> {
    use itertools::Itertools;
    let n = g.nrows();
    (0..n)
        .combinations(k)
        .map(|idx| {
            let sub = DMatrix::from_fn(k, k, |r, c| g[(idx[r], idx[c])]);
            let eig = sub.symmetric_eigen();
            let j = eig.eigenvalues.imin();
            let mut v = DVector::zeros(n);
            for (r, &i) in idx.iter().enumerate() {
                v[i] = eig.eigenvectors[(r, j)];
            }
            v
        })
        .collect()
}

/// Estimates `φ_q(s, t, a, X)` and certifies its sign where possible.
///
/// Certification rules:
/// * `Zero` if a kernel direction lies in the cone, or the search reaches a
///   ratio below `1e-9·‖X‖₂`.
/// * `Positive` if `X` is injective, if the kernel is one-dimensional and its
///   direction lies strictly outside the cone (the ratio is continuous and
///   positive on the compact feasible slice of the unit sphere), or if the
///   analytic lower bound is positive.
pub fn rec_modulus_estimate<T: Scalar>(
    x: &DMatrix<T>,
    rec: &RecParams<T>,
    search: &SearchConfig,
) -> Result<RecEstimate<T>> {
    ensure_finite_matrix(x, "design matrix")?;
    let n = x.ncols();
    let rec = RecParams::new(rec.q, rec.s, rec.t, rec.a, n)?;
    let g = gram(x);
    let mut notes = Vec::new();

    let (analytic_lower, analytic_upper) = match analytic_bounds(&g, &rec, search.budget) {
        Ok((lo, hi)) => (Some(lo), Some(hi)),
        Err(Error::Budget { required, budget }) => {
            notes.push(format!(
                "analytic bounds unavailable: {required} subsets exceed budget {budget}"
            ));
            (None, None)
        }
        Err(e) => return Err(e),
    };

    let ctx = Search { x, g: &g, rec, cone: rec.cone() };
    let kernel = kernel_basis(&g);
    let kernel_dim = kernel.ncols();
    let tol = T::lit(CONE_TOL);

    let mut best: Option<(T, DVector<T>)> = None;
    let consider = |cand: Option<(T, DVector<T>)>, best: &mut Option<(T, DVector<T>)>| {
        if let Some((f, d)) = cand {
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                *best = Some((f, d));
            }
        }
    };

    // Kernel directions: exact zero certificate when one lies in the cone.
    let mut zero_witness = None;
    let mut kernel_outside = true;
    for k in 0..kernel_dim {
        let v = kernel.column(k).into_owned();
        if cone_membership_tol(&v, &ctx.cone, tol) {
            kernel_outside = false;
            if zero_witness.is_none() {
                zero_witness = Some(v.clone());
            }
        }
    }

    let mut starts: Vec<DVector<T>> = Vec::new();
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = T::one();
        starts.push(e);
    }
    for k in 0..kernel_dim {
        starts.push(kernel.column(k).into_owned());
    }
    let k = rec.s + rec.t;
    if crate::regularity::spectral::binomial(n, k) <= search.eigvec_seed_limit {
        starts.extend(minimal_sparse_eigvecs(&g, k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    for _ in 0..search.num_starts {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        starts.push(DVector::from_iterator(n, v.into_iter().map(T::lit)));
    }
    // Random combinations inside the kernel give the search a chance to find
    // cone members when the kernel has dimension > 1.
    if kernel_dim > 1 {
        for _ in 0..search.num_starts {
            let c: Vec<f64> = (0..kernel_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let coeffs = DVector::from_iterator(kernel_dim, c.into_iter().map(T::lit));
            let v = &kernel * coeffs;
            if cone_membership_tol(&v, &ctx.cone, tol) && zero_witness.is_none() {
                zero_witness = Some(v.normalize());
            }
            starts.push(v);
        }
    }
    let num_starts = starts.len();
    for s in starts {
        consider(ctx.descend(s, search.max_iters), &mut best);
    }

    let (mut f_best, mut witness) = best.ok_or_else(|| Error::InvalidParameter("no feasible start".into()))?;
    if let Some(z) = zero_witness.clone() {
        let zn = z.normalize();
        let fz = ctx.objective(&zn);
        if fz <= f_best {
            f_best = fz;
            witness = zn;
        }
    }
    let modulus_upper = f_best.max(T::zero()).sqrt();

    let scale = g.symmetric_eigenvalues().amax().max(T::tiny()).sqrt();
    let certified = if zero_witness.is_some() || modulus_upper <= T::lit(1e-9) * scale {
        if zero_witness.is_none() {
            notes.push("zero certificate from search witness".into());
        }
        Certification::Zero
    } else if kernel_dim == 0 {
        notes.push("X is injective".into());
        Certification::Positive
    } else if kernel_dim == 1 && kernel_outside {
        notes.push("one-dimensional kernel lies outside the cone".into());
        Certification::Positive
    } else if analytic_lower.is_some_and(|lo| lo > T::zero()) {
        notes.push("analytic lower bound is positive".into());
        Certification::Positive
    } else {
        Certification::Unknown
    };

    let witness = if certified == Certification::Zero {
        zero_witness.map(|z| z.normalize()).or(Some(witness))
    } else {
        Some(witness)
    };

    Ok(RecEstimate {
        modulus_upper,
        analytic_lower,
        analytic_upper,
        certified,
        witness,
        kernel_dim,
        starts: num_starts,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn x1() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[2.0, 3.0, 1.0, 2.0, 1.0, 3.0])
    }

    fn quick() -> SearchConfig {
        SearchConfig { num_starts: 40, max_iters: 200, ..Default::default() }
    }

    #[test]
    fn params_validation() {
        assert!(RecParams::new(0.5, 2, 1, 1.0, 5).is_err());
        assert!(RecParams::new(0.5, 1, 3, 1.0, 3).is_err());
        assert!(RecParams::new(1.5, 1, 1, 1.0, 3).is_err());
        assert!(RecParams::new(0.5, 1, 1, 0.0, 3).is_err());
        assert!(RecParams::new(0.5, 1, 2, 1.0, 3).is_ok());
    }

    #[test]
    fn example_classical_rec_fails() {
        let rec = RecParams::new(1.0, 1, 1, 1.0, 3).unwrap();
        let est = rec_modulus_estimate(&x1(), &rec, &quick()).unwrap();
        assert_eq!(est.certified, Certification::Zero);
        assert_eq!(est.kernel_dim, 1);
        let w = est.witness.unwrap();
        let dir = DVector::from_column_slice(&[-2.0, 1.0, 1.0]).normalize();
        assert_relative_eq!(w.dot(&dir).abs(), 1.0, epsilon = 1e-9);
        assert!(est.modulus_upper < 1e-6);
    }

    #[test]
    fn example_half_rec_holds() {
        let rec = RecParams::new(0.5, 1, 1, 1.0, 3).unwrap();
        let est = rec_modulus_estimate(&x1(), &rec, &quick()).unwrap();
        assert_eq!(est.certified, Certification::Positive);
        assert!(est.modulus_upper > 0.1);
    }

    #[test]
    fn identity_modulus_is_one() {
        let id = DMatrix::<f64>::identity(5, 5);
        let rec = RecParams::new(1.0, 1, 2, 2.0, 5).unwrap();
        let est = rec_modulus_estimate(&id, &rec, &quick()).unwrap();
        assert!(est.modulus_upper >= 1.0 - 1e-6);
        let lower = 1.0 - rec.tail_factor();
        assert_relative_eq!(est.analytic_lower.unwrap(), lower, max_relative = 1e-12);
        assert_eq!(est.certified, Certification::Positive);
    }

    #[test]
    fn witness_is_feasible() {
        let x = DMatrix::from_fn(3, 5, |i, j| ((i * 5 + j * 2) % 7) as f64 - 3.0);
        let rec = RecParams::new(0.5, 1, 2, 1.0, 5).unwrap();
        let est = rec_modulus_estimate(&x, &rec, &quick()).unwrap();
        let w = est.witness.unwrap();
        assert!(cone_membership_tol(&w, &rec.cone(), 1e-9));
        let top = top_k(&w, 3);
        let den: f64 = top.iter().map(|i| w[i] * w[i]).sum::<f64>().sqrt();
        assert_relative_eq!((&x * &w).norm() / den, est.modulus_upper, max_relative = 1e-9);
    }

    #[test]
    fn budget_degrades_gracefully() {
        let x = DMatrix::from_fn(4, 12, |i, j| ((i * 3 + j * 5) % 11) as f64 - 5.0);
        let rec = RecParams::new(1.0, 2, 4, 1.0, 12).unwrap();
        let cfg = SearchConfig { budget: 10, num_starts: 5, max_iters: 20, ..Default::default() };
        let est = rec_modulus_estimate(&x, &rec, &cfg).unwrap();
        assert!(est.analytic_lower.is_none() && est.analytic_upper.is_none());
        assert!(!est.notes.is_empty());
    }
}
