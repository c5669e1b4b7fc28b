//! Exact sparse spectral constants by subset enumeration.

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparsity::ensure_finite_matrix;

/// Default cap on the number of enumerated subsets.
pub const DEFAULT_BUDGET: u128 = 1_000_000;

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn check_budget(required: u128, budget: u128) -> Result<()> {
    if required > budget {
        Err(Error::Budget { required, budget })
    } else {
        Ok(())
    }
}

/// Gram matrix `XᵀX`.
pub fn gram<T: Scalar>(x: &DMatrix<T>) -> DMatrix<T> {
    x.tr_mul(x)
}

fn principal<T: Scalar>(delta: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| delta[(idx[r], idx[c])])
}

fn block<T: Scalar>(delta: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| delta[(rows[r], cols[c])])
}

fn extreme_eigenvalues<T: Scalar>(sub: DMatrix<T>) -> (T, T) {
    if sub.nrows() == 1 {
        let v = sub[(0, 0)];
        return (v, v);
    }
    let ev = sub.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

fn spectral_norm<T: Scalar>(b: DMatrix<T>) -> T {
    if b.nrows() == 1 || b.ncols() == 1 {
        return b.norm();
    }
    b.singular_values().max()
}

fn ensure_symmetric<T: Scalar>(delta: &DMatrix<T>) -> Result<()> {
    if !delta.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            delta.nrows(),
            delta.ncols()
        )));
    }
    ensure_finite_matrix(delta, "symmetric matrix")?;
    let scale = delta.amax().max(T::one());
    let tol = T::lit(1e-10) * scale;
    for i in 0..delta.nrows() {
        for j in 0..i {
            if (delta[(i, j)] - delta[(j, i)]).abs() > tol {
                return Err(Error::InvalidParameter(format!(
                    "matrix not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

/// `(σ_min(s, Δ), σ_max(s, Δ))`: extreme Rayleigh quotients over vectors
/// with at most `s` nonzeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseEigen<T> {
    pub min: T,
    pub max: T,
}

/// Exact sparse eigenvalues by enumerating all `C(n, s)` principal
/// submatrices. By eigenvalue interlacing, subsets of size exactly `s` suffice.
pub fn sparse_eigenvalues<T: Scalar>(delta: &DMatrix<T>, s: usize, budget: u128) -> Result<SparseEigen<T>> {
    ensure_symmetric(delta)?;
    let n = delta.nrows();
    if s == 0 || s > n {
        return Err(Error::InvalidParameter(format!("s = {s} must satisfy 1 <= s <= n = {n}")));
    }
    check_budget(binomial(n, s), budget)?;
    let mut lo = T::max_value().expect("bounded scalar");
    let mut hi = T::min_value().expect("bounded scalar");
    for idx in (0..n).combinations(s) {
        let (a, b) = extreme_eigenvalues(principal(delta, &idx));
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok(SparseEigen { min: lo, max: hi })
}

/// Monte-Carlo bounds on the sparse eigenvalues from `samples` random
/// supports. These are one-sided: the sampled minimum is an *upper* bound on
/// `σ_min(s)` and the sampled maximum a *lower* bound on `σ_max(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledSparseEigen<T> {
    pub min_upper_bound: T,
    pub max_lower_bound: T,
    pub samples: usize,
}

pub fn sparse_eigenvalues_sampled<T: Scalar>(
    delta: &DMatrix<T>,
    s: usize,
    samples: usize,
    seed: u64,
) -> Result<SampledSparseEigen<T>> {
    ensure_symmetric(delta)?;
    let n = delta.nrows();
    if s == 0 || s > n || samples == 0 {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= s <= n and samples > 0 (s = {s}, n = {n}, samples = {samples})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = T::max_value().expect("bounded scalar");
    let mut hi = T::min_value().expect("bounded scalar");
    for _ in 0..samples {
        let mut idx = sample(&mut rng, n, s).into_vec();
        idx.sort_unstable();
        let (a, b) = extreme_eigenvalues(principal(delta, &idx));
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok(SampledSparseEigen {
        min_upper_bound: lo,
        max_lower_bound: hi,
        samples,
    })
}

/// `η_s(X)`, the smallest constant with
/// `(1-η)‖β_J‖² ≤ ‖Xβ_J‖² ≤ (1+η)‖β_J‖²` for every `|J| ≤ s`.
pub fn restricted_isometry_constant<T: Scalar>(x: &DMatrix<T>, s: usize, budget: u128) -> Result<T> {
    ensure_finite_matrix(x, "design matrix")?;
    let eig = sparse_eigenvalues(&gram(x), s, budget)?;
    Ok(ric_from_sparse_eigen(eig))
}

pub(crate) fn ric_from_sparse_eigen<T: Scalar>(eig: SparseEigen<T>) -> T {
    (T::one() - eig.min).max(eig.max - T::one()).max(T::zero())
}

/// Size pairs `(|J|, |T|)` that dominate all disjoint pairs with
/// `|J| ≤ a`, `|T| ≤ b` inside `{0..n-1}`.
fn maximal_size_pairs(a: usize, b: usize, n: usize) -> Vec<(usize, usize)> {
    if a + b <= n {
        return vec![(a, b)];
    }
    let lo = n.saturating_sub(b).max(1);
    let hi = a.min(n.saturating_sub(1));
    (lo..=hi).map(|j| (j, n - j)).filter(|&(_, k)| k >= 1).collect()
}

/// θ over disjoint `|J| ≤ a`, `|T| ≤ b` from a precomputed Gram matrix.
/// When `a + b > n` the largest disjoint pairs that fit are used.
pub(crate) fn roc_from_gram<T: Scalar>(g: &DMatrix<T>, a: usize, b: usize, budget: u128) -> Result<T> {
    let n = g.nrows();
    let pairs = maximal_size_pairs(a, b, n);
    let required = pairs
        .iter()
        .map(|&(j, k)| binomial(n, j).saturating_mul(binomial(n - j, k)))
        .fold(0u128, |acc, c| acc.saturating_add(c));
    check_budget(required, budget)?;
    let mut best = T::zero();
    for (j, k) in pairs {
        for rows in (0..n).combinations(j) {
            let rest: Vec<usize> = (0..n).filter(|i| !rows.contains(i)).collect();
            for cols in rest.iter().copied().combinations(k) {
                best = best.max(spectral_norm(block(g, &rows, &cols)));
            }
        }
    }
    Ok(best)
}

/// `θ_{s,t}(X)`: the largest spectral norm of an off-diagonal `J×T` block of
/// `XᵀX` over disjoint `|J| ≤ s`, `|T| ≤ t`.
pub fn restricted_orthogonality_constant<T: Scalar>(
    x: &DMatrix<T>,
    s: usize,
    t: usize,
    budget: u128,
) -> Result<T> {
    ensure_finite_matrix(x, "design matrix")?;
    let n = x.ncols();
    if s == 0 || t == 0 || s + t > n {
        return Err(Error::InvalidParameter(format!(
            "need s, t >= 1 and s + t <= n (s = {s}, t = {t}, n = {n})"
        )));
    }
    roc_from_gram(&gram(x), s, t, budget)
}

/// Largest absolute off-diagonal Gram entry, i.e. `θ_{1,1}`.
pub fn mutual_incoherence<T: Scalar>(x: &DMatrix<T>) -> T {
    let g = gram(x);
    let n = g.nrows();
    let mut best = T::zero();
    for i in 0..n {
        for j in 0..i {
            best = best.max(g[(i, j)].abs());
        }
    }
    best
}

/// Rescales columns to unit Euclidean norm. Returns the scaled matrix and the
/// original norms; zero columns are left untouched.
pub fn normalize_columns<T: Scalar>(x: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let norms = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.norm()));
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        if norms[j] > T::zero() {
            col /= norms[j];
        }
    }
    (out, norms)
}

/// Restricted isometry and orthogonality constants up to a given order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipConstants<T> {
    /// `η_s` for `s = 1..=max_order`.
    pub eta: BTreeMap<usize, T>,
    /// `θ_{s,t}` for `1 ≤ s ≤ t`, `s + t ≤ max_order`.
    pub theta: BTreeMap<(usize, usize), T>,
    /// `θ_{1,1}` when the columns have unit norm (within 1e-8).
    pub mic: Option<T>,
}

pub fn rip_constants<T: Scalar>(x: &DMatrix<T>, max_order: usize, budget: u128) -> Result<RipConstants<T>> {
    ensure_finite_matrix(x, "design matrix")?;
    let n = x.ncols();
    let max_order = max_order.min(n);
    let g = gram(x);
    let mut eta = BTreeMap::new();
    for s in 1..=max_order {
        eta.insert(s, ric_from_sparse_eigen(sparse_eigenvalues(&g, s, budget)?));
    }
    let mut theta = BTreeMap::new();
    for s in 1..=max_order {
        for t in s..=max_order.saturating_sub(s) {
            theta.insert((s, t), roc_from_gram(&g, s, t, budget)?);
        }
    }
    let unit = (0..n).all(|j| (g[(j, j)] - T::one()).abs() <= T::lit(1e-8));
    let mic = if unit && n >= 2 { Some(roc_from_gram(&g, 1, 1, budget)?) } else { None };
    Ok(RipConstants { eta, theta, mic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn x1() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[2.0, 3.0, 1.0, 2.0, 1.0, 3.0])
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(1024, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(1024, 102), u128::MAX);
    }

    #[test]
    fn identity_sparse_eigenvalues() {
        let id = DMatrix::<f64>::identity(5, 5);
        for s in 1..=5 {
            let e = sparse_eigenvalues(&id, s, DEFAULT_BUDGET).unwrap();
            assert_relative_eq!(e.min, 1.0);
            assert_relative_eq!(e.max, 1.0);
        }
    }

    #[test]
    fn example_gram_sparse_eigenvalues() {
        let g = gram(&x1());
        let e1 = sparse_eigenvalues(&g, 1, DEFAULT_BUDGET).unwrap();
        assert_relative_eq!(e1.min, 8.0, max_relative = 1e-12);
        assert_relative_eq!(e1.max, 10.0, max_relative = 1e-12);
        // oracle: roots of the characteristic quadratics of the three 2x2 blocks
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let (a, b, c) = (g[(i, i)], g[(j, j)], g[(i, j)]);
            let disc = ((a - b).powi(2) + 4.0 * c * c).sqrt();
            lo = lo.min((a + b - disc) / 2.0);
            hi = hi.max((a + b + disc) / 2.0);
        }
        let e2 = sparse_eigenvalues(&g, 2, DEFAULT_BUDGET).unwrap();
        assert_relative_eq!(e2.min, lo, max_relative = 1e-10);
        assert_relative_eq!(e2.max, hi, max_relative = 1e-12);
        assert_relative_eq!(e2.min, (18.0 - 260f64.sqrt()) / 2.0, max_relative = 1e-10);
        assert_relative_eq!(e2.max, (18.0 + 260f64.sqrt()) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let id = DMatrix::<f64>::identity(30, 30);
        let err = sparse_eigenvalues(&id, 15, 1000).unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(sparse_eigenvalues(&m, 1, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn sampled_bounds_bracket_exact() {
        let g = gram(&x1());
        let exact = sparse_eigenvalues(&g, 2, DEFAULT_BUDGET).unwrap();
        let sampled = sparse_eigenvalues_sampled(&g, 2, 10, 3).unwrap();
        assert!(sampled.min_upper_bound >= exact.min - 1e-12);
        assert!(sampled.max_lower_bound <= exact.max + 1e-12);
    }

    #[test]
    fn orthonormal_columns_have_zero_constants() {
        let q = DMatrix::<f64>::identity(4, 3);
        assert_relative_eq!(restricted_isometry_constant(&q, 1, DEFAULT_BUDGET).unwrap(), 0.0);
        assert_relative_eq!(restricted_orthogonality_constant(&q, 1, 1, DEFAULT_BUDGET).unwrap(), 0.0);
    }

    #[test]
    fn normalized_example_constants() {
        let (xn, norms) = normalize_columns(&x1());
        assert_relative_eq!(norms[0], 8f64.sqrt());
        assert!(restricted_isometry_constant(&xn, 1, DEFAULT_BUDGET).unwrap() < 1e-12);
        let rho = 8.0 / 80f64.sqrt();
        assert_relative_eq!(
            restricted_isometry_constant(&xn, 2, DEFAULT_BUDGET).unwrap(),
            rho,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            restricted_orthogonality_constant(&xn, 1, 1, DEFAULT_BUDGET).unwrap(),
            rho,
            max_relative = 1e-12
        );
        assert_relative_eq!(mutual_incoherence(&xn), rho, max_relative = 1e-12);
        // oracle for θ_{1,2}: for each J = {j}, the 1x2 block norm sqrt(g1² + g2²)
        let g = gram(&xn);
        let oracle = (0..3)
            .map(|j| {
                (0..3)
                    .filter(|&k| k != j)
                    .map(|k| g[(j, k)].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(
            restricted_orthogonality_constant(&xn, 1, 2, DEFAULT_BUDGET).unwrap(),
            oracle,
            max_relative = 1e-12
        );
    }

    #[test]
    fn roc_requires_room() {
        assert!(restricted_orthogonality_constant(&x1(), 2, 2, DEFAULT_BUDGET).is_err());
        assert_eq!(maximal_size_pairs(2, 3, 4), vec![(1, 3), (2, 2)]);
        assert_eq!(maximal_size_pairs(1, 2, 5), vec![(1, 2)]);
    }

    #[test]
    fn rip_constants_satisfy_lattice() {
        let x = DMatrix::from_fn(5, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64);
        let c = rip_constants(&x, 4, DEFAULT_BUDGET).unwrap();
        for (&(s, t), &th) in &c.theta {
            let e_st = c.eta[&(s + t)];
            assert!(th <= e_st + 1e-10);
            assert!(e_st <= th + c.eta[&s].max(c.eta[&t]) + 1e-10);
        }
        let etas: Vec<f64> = c.eta.values().copied().collect();
        assert!(etas.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        assert!(c.mic.is_none());
    }
}
