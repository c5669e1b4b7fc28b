//! Quasi-norms, index sets and the restricted cone.
//!
//! Indices are stored 0-based. Anything user-facing (file formats, reports,
//! `Display`) renders them 1-based.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sorted, duplicate-free set of coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    /// Builds a set from arbitrary 0-based indices, sorting and deduplicating.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::InvalidParameter(format!(
                    "index {} out of bounds for dimension {n}",
                    last + 1
                )));
            }
        }
        Ok(IndexSet(indices))
    }

    /// Builds a set from 1-based indices.
    pub fn from_one_based(indices: &[usize], n: usize) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidParameter("1-based index 0".into()));
        }
        Self::new(indices.iter().map(|i| i - 1).collect(), n)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    /// Complement within `{0, .., n-1}`.
    pub fn complement(&self, n: usize) -> IndexSet {
        IndexSet((0..n).filter(|i| !self.contains(*i)).collect())
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut v: Vec<usize> = self.0.iter().chain(other.0.iter()).copied().collect();
        v.sort_unstable();
        v.dedup();
        IndexSet(v)
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|i| !other.contains(*i))
    }

    /// Support of `v`: indices with `|v_i| > tol`.
    pub fn support<T: Scalar>(v: &DVector<T>, tol: T) -> IndexSet {
        IndexSet(
            v.iter()
                .enumerate()
                .filter(|(_, x)| x.abs() > tol)
                .map(|(i, _)| i)
                .collect(),
        )
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Parameters `(q, s, a)` of the cone `C_q(s, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeParams<T> {
    pub q: T,
    pub s: usize,
    pub a: T,
}

impl<T: Scalar> ConeParams<T> {
    pub fn new(q: T, s: usize, a: T, n: usize) -> Result<Self> {
        if !(q > T::zero() && q <= T::one()) {
            return Err(Error::InvalidParameter(format!("q = {q} must lie in (0, 1]")));
        }
        if !(a > T::zero()) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!("a = {a} must be positive")));
        }
        if s == 0 || s > n {
            return Err(Error::InvalidParameter(format!(
                "s = {s} must satisfy 1 <= s <= n = {n}"
            )));
        }
        Ok(ConeParams { q, s, a })
    }
}

pub(crate) fn ensure_finite<T: Scalar>(v: &DVector<T>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite_matrix<T: Scalar>(x: &DMatrix<T>, what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `Σ|β_i|^q` over the given coordinates (`q > 0`).
pub fn lq_pow_sum_over<T: Scalar>(beta: &DVector<T>, q: T, idx: impl IntoIterator<Item = usize>) -> T {
    let mut acc = T::zero();
    for i in idx {
        let v = beta[i].abs();
        if v > T::zero() {
            acc += if q == T::one() { v } else { v.powf(q) };
        }
    }
    acc
}

/// `‖β‖_q^q = Σ|β_i|^q` for `q > 0`, or the nonzero count for `q = 0`.
pub fn lq_pow_sum<T: Scalar>(beta: &DVector<T>, q: T) -> T {
    if q == T::zero() {
        T::from_usize_lossy(beta.iter().filter(|x| **x != T::zero()).count())
    } else {
        lq_pow_sum_over(beta, q, 0..beta.len())
    }
}

/// The ℓq quasi-norm `(Σ|β_i|^q)^{1/q}` for `0 < q ≤ 1`; for `q = 0` the
/// number of exactly nonzero entries.
pub fn lq_quasi_norm<T: Scalar>(beta: &DVector<T>, q: T) -> Result<T> {
    ensure_finite(beta, "beta")?;
    if q < T::zero() || q > T::one() {
        return Err(Error::InvalidParameter(format!("q = {q} must lie in {{0}} ∪ (0, 1]")));
    }
    let sum = lq_pow_sum(beta, q);
    if q == T::zero() || q == T::one() || sum == T::zero() {
        Ok(sum)
    } else {
        Ok(sum.powf(T::one() / q))
    }
}

/// Indices of `candidates` ordered by decreasing `|δ_i|`, ties to the lower index.
pub(crate) fn rank_by_magnitude<T: Scalar>(delta: &DVector<T>, candidates: &[usize]) -> Vec<usize> {
    let mut order = candidates.to_vec();
    // stable sort keeps ascending index order among equal magnitudes
    order.sort_by(|&i, &j| {
        delta[j]
            .abs()
            .partial_cmp(&delta[i].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// The `k` largest-magnitude coordinates of `delta` over all of `{0..n-1}`.
pub fn top_k<T: Scalar>(delta: &DVector<T>, k: usize) -> IndexSet {
    let all: Vec<usize> = (0..delta.len()).collect();
    let mut order = rank_by_magnitude(delta, &all);
    order.truncate(k);
    order.sort_unstable();
    IndexSet(order)
}

/// `J(δ; t)`: the `t` largest-magnitude coordinates of `δ` outside `J`.
pub fn top_index_set<T: Scalar>(delta: &DVector<T>, j: &IndexSet, t: usize) -> Result<IndexSet> {
    let rest = j.complement(delta.len());
    if t == 0 || t > rest.len() {
        return Err(Error::InvalidParameter(format!(
            "t = {t} must satisfy 1 <= t <= |J^c| = {}",
            rest.len()
        )));
    }
    let mut order = rank_by_magnitude(delta, rest.as_slice());
    order.truncate(t);
    order.sort_unstable();
    Ok(IndexSet(order))
}

/// Splits `J^c` into consecutive batches `J_0, J_1, …` of the `t` largest,
/// next `t` largest, … coordinates in magnitude. Only the last batch may be short.
pub fn batch_partition<T: Scalar>(delta: &DVector<T>, j: &IndexSet, t: usize) -> Result<Vec<IndexSet>> {
    let rest = j.complement(delta.len());
    if t == 0 || t > rest.len() {
        return Err(Error::InvalidParameter(format!(
            "t = {t} must satisfy 1 <= t <= |J^c| = {}",
            rest.len()
        )));
    }
    let order = rank_by_magnitude(delta, rest.as_slice());
    Ok(order
        .chunks(t)
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_unstable();
            IndexSet(v)
        })
        .collect())
}

/// Off-support and on-support mass `(‖δ_{J^c}‖_q^q, ‖δ_J‖_q^q)` for the best
/// choice of `J`, namely the `s` largest-magnitude coordinates.
pub fn cone_masses<T: Scalar>(delta: &DVector<T>, cone: &ConeParams<T>) -> (T, T) {
    let j = top_k(delta, cone.s.min(delta.len()));
    let on = lq_pow_sum_over(delta, cone.q, j.iter());
    let off = lq_pow_sum_over(delta, cone.q, j.complement(delta.len()).iter());
    (off, on)
}

/// Whether `δ ∈ C_q(s, a)`, i.e. `‖δ_{J^c}‖_q^q ≤ a‖δ_J‖_q^q` for some `|J| ≤ s`.
///
/// The top-`s` coordinates are the optimal `J`: they maximize the right side
/// and minimize the left side simultaneously.
pub fn cone_membership<T: Scalar>(delta: &DVector<T>, cone: &ConeParams<T>) -> bool {
    cone_membership_tol(delta, cone, T::zero())
}

/// [`cone_membership`] with relative slack: accepts when
/// `off ≤ a·on + rel_tol·(off + a·on)`.
pub fn cone_membership_tol<T: Scalar>(delta: &DVector<T>, cone: &ConeParams<T>, rel_tol: T) -> bool {
    let (off, on) = cone_masses(delta, cone);
    let rhs = cone.a * on;
    off <= rhs + rel_tol * (off + rhs)
}
