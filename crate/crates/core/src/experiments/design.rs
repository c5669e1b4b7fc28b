//! Random instances `y = Xβ* + e` with Gaussian designs.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::RegressionInstance;

/// Row covariance `Σ` of the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CovarianceSpec {
    Identity,
    /// `Σ_ij = ρ^{|i−j|}`.
    Toeplitz { rho: f64 },
    /// Row-major `n × n` matrix.
    Explicit { matrix: Vec<Vec<f64>> },
}

impl CovarianceSpec {
    pub fn matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            CovarianceSpec::Identity => Ok(DMatrix::identity(n, n)),
            CovarianceSpec::Toeplitz { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(Error::InvalidParameter(format!("toeplitz rho = {rho} must satisfy |rho| < 1")));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32)))
            }
            CovarianceSpec::Explicit { matrix } => {
                if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!("covariance must be {n}x{n}")));
                }
                let s = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("covariance"));
                }
                for i in 0..n {
                    for j in 0..i {
                        if (s[(i, j)] - s[(j, i)]).abs() > 1e-10 * s.amax().max(1.0) {
                            return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                        }
                    }
                }
                Ok(s)
            }
        }
    }

    /// Whether `Σ_jj = 1` for all `j`, the precondition of the random-design
    /// bounds for the regularized problem.
    pub fn unit_diagonal(&self, n: usize) -> Result<bool> {
        let s = self.matrix(n)?;
        Ok((0..n).all(|j| (s[(j, j)] - 1.0).abs() <= 1e-12))
    }

    /// Symmetric square root `Σ^{1/2}`, or `None` for the identity.
    pub fn sqrt(&self, n: usize) -> Result<Option<DMatrix<f64>>> {
        if matches!(self, CovarianceSpec::Identity) {
            return Ok(None);
        }
        let s = self.matrix(n)?;
        let eig = s.symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -1e-10 * eig.eigenvalues.amax().max(1.0) {
            return Err(Error::NotPsd(min));
        }
        let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let q = &eig.eigenvectors;
        Ok(Some(q * DMatrix::from_diagonal(&roots) * q.transpose()))
    }
}

/// How the nonzero entries of `β*` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    /// Standard normal values are redrawn until `|β*_j| ≥ min_abs`.
    pub min_abs: f64,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec { min_abs: 0.1 }
    }
}

/// Draws `X` (rows `N(0, Σ)`), an `s`-sparse `β*` on uniformly random
/// positions and `e ~ N(0, σ²I)`, in that order, from a single seeded stream.
pub fn generate_instance(
    m: usize,
    n: usize,
    s: usize,
    sigma: f64,
    cov: &CovarianceSpec,
    seed: u64,
) -> Result<RegressionInstance<f64>> {
    generate_instance_with(m, n, s, sigma, cov, &SignalSpec::default(), seed)
}

pub fn generate_instance_with(
    m: usize,
    n: usize,
    s: usize,
    sigma: f64,
    cov: &CovarianceSpec,
    signal: &SignalSpec,
    seed: u64,
) -> Result<RegressionInstance<f64>> {
    if s > n || m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!("need m >= 1 and s <= n (m = {m}, n = {n}, s = {s})")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} must be nonnegative")));
    }
    if !(signal.min_abs >= 0.0 && signal.min_abs < 3.0) {
        return Err(Error::InvalidParameter(format!("min_abs = {} must lie in [0, 3)", signal.min_abs)));
    }
    let root = cov.sqrt(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
    let x = match root {
        Some(r) => z * r,
        None => z,
    };
    let mut beta = DVector::zeros(n);
    let mut positions = sample(&mut rng, n, s).into_vec();
    positions.sort_unstable();
    for j in positions {
        beta[j] = loop {
            let v: f64 = StandardNormal.sample(&mut rng);
            if v.abs() >= signal.min_abs {
                break v;
            }
        };
    }
    let e = DVector::from_fn(m, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); sigma * z });
    RegressionInstance::new(x, beta, e, sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_instance_is_exact() {
        let inst = generate_instance(20, 30, 4, 0.0, &CovarianceSpec::Identity, 5).unwrap();
        assert_eq!(inst.y, &inst.x * &inst.beta_star);
        assert_eq!(inst.sparsity(), 4);
        assert!(inst.beta_star.iter().all(|b| *b == 0.0 || b.abs() >= 0.1));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cov = CovarianceSpec::Toeplitz { rho: 0.3 };
        let a = generate_instance(15, 10, 3, 0.1, &cov, 42).unwrap();
        let b = generate_instance(15, 10, 3, 0.1, &cov, 42).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.x.as_slice()), bits(b.x.as_slice()));
        assert_eq!(bits(a.y.as_slice()), bits(b.y.as_slice()));
        let c = generate_instance(15, 10, 3, 0.1, &cov, 43).unwrap();
        assert_ne!(bits(a.y.as_slice()), bits(c.y.as_slice()));
    }

    #[test]
    fn identity_design_has_identity_covariance() {
        // 10^4 rows: entries of the sample covariance have sd ~ 0.01-0.014
        let inst = generate_instance(10_000, 2, 1, 0.0, &CovarianceSpec::Identity, 1).unwrap();
        let cov = inst.x.tr_mul(&inst.x) / 10_000.0;
        assert!((cov[(0, 0)] - 1.0).abs() < 0.05);
        assert!((cov[(1, 1)] - 1.0).abs() < 0.05);
        assert!(cov[(0, 1)].abs() < 0.05);
    }

    #[test]
    fn toeplitz_design_matches_population() {
        let cov = CovarianceSpec::Toeplitz { rho: 0.5 };
        let inst = generate_instance(20_000, 3, 1, 0.0, &cov, 2).unwrap();
        let sample = inst.x.tr_mul(&inst.x) / 20_000.0;
        let pop = cov.matrix(3).unwrap();
        assert!((sample - pop).amax() < 0.05);
        assert!(cov.unit_diagonal(3).unwrap());
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let cov = CovarianceSpec::Explicit { matrix: vec![vec![1.0, 2.0], vec![2.0, 1.0]] };
        assert!(matches!(generate_instance(5, 2, 1, 0.1, &cov, 0), Err(Error::NotPsd(_))));
        assert!(generate_instance(5, 2, 3, 0.1, &CovarianceSpec::Identity, 0).is_err());
    }
}
