//! Global minimization of the regularized ℓq problem for tiny `n` by
//! enumerating all `2^n` supports.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solvers::prox::{prox_unchecked, PenaltySpec};
use crate::solvers::proxgrad::{check_dims, lipschitz_constant, objective, prox_gradient_solve, SolveResult, SolverOptions};

pub const DEFAULT_MAX_N: usize = 12;
const RANDOM_STARTS: usize = 6;
const START_SEED: u64 = 0x5eed;

/// Global minimizer of `(1/2m)‖y − Xβ‖² + λ‖β‖_q^q`.
///
/// Single-coordinate supports are solved in closed form through the scalar
/// prox; larger supports by multi-start proximal gradient restricted to the
/// support. Every local search can only shrink its support, so each candidate
/// is a valid point and the best one over all supports is returned.
///
/// Supports whose columns are linearly dependent are skipped: at any local
/// minimizer the active columns are independent, so no global minimizer
/// lives there, and the remaining restricted problems are strongly convex in
/// their smooth part.
pub fn global_solve_tiny<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    lambda: T,
    q: T,
    max_n: usize,
) -> Result<SolveResult<T>> {
    check_dims(x, y)?;
    let (m, n) = x.shape();
    if n > max_n {
        return Err(Error::TooLarge { n, max_n });
    }
    let pen = PenaltySpec::lq(q, lambda)?;
    let mf = T::from_usize_lossy(m);
    let mut best = DVector::zeros(n);
    let mut fbest = objective(x, y, &pen, &best);
    let consider = |cand: DVector<T>, best: &mut DVector<T>, fbest: &mut T| {
        let f = objective(x, y, &pen, &cand);
        if f < *fbest {
            *fbest = f;
            *best = cand;
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let local = SolverOptions {
        max_iters: 20_000,
        tol: T::lit(1e-13),
        accelerate: false,
        ..SolverOptions::default()
    };
    for mask in 1u32..(1u32 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        if cols.len() > m {
            continue;
        }
        let xs = x.select_columns(&cols);
        if cols.len() > 1 && !full_column_rank(&xs) {
            continue;
        }
        let embed = |v: &DVector<T>| {
            let mut full = DVector::zeros(n);
            for (k, &j) in cols.iter().enumerate() {
                full[j] = v[k];
            }
            full
        };
        if cols.len() == 1 {
            // (a/2m)(β − b/a)² + λ|β|^q up to a constant
            let col = xs.column(0);
            let a = col.norm_squared();
            if a > T::zero() {
                let b = col.dot(y);
                let beta = prox_unchecked(b / a, mf * lambda / a, &pen);
                consider(embed(&DVector::from_element(1, beta)), &mut best, &mut fbest);
            }
            continue;
        }
        let lip = lipschitz_constant(&xs);
        if !(lip > T::zero()) {
            continue;
        }
        let opts = SolverOptions { lipschitz: Some(lip), ..local };
        let mut starts = Vec::new();
        if let Ok(ls) = xs.clone().svd(true, true).solve(y, T::eps() * T::lit(100.0)) {
            let scale = ls.norm().max(T::one());
            starts.push(ls.clone());
            starts.push(&ls * T::lit(0.5));
            for _ in 0..RANDOM_STARTS {
                starts.push(DVector::from_fn(cols.len(), |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::lit(z) * scale
                }));
            }
        }
        for start in starts {
            let res = prox_gradient_solve(&xs, y, &pen, &opts, &start)?;
            consider(embed(&res.beta_hat), &mut best, &mut fbest);
        }
    }
    // stationarity of the winner for the full problem
    let lip = lipschitz_constant(x);
    let step = if lip > T::zero() { T::one() / lip } else { T::one() };
    let g = x.tr_mul(&(x * &best - y)) / mf;
    let next = DVector::from_fn(n, |i, _| prox_unchecked(best[i] - step * g[i], step * lambda, &pen));
    Ok(SolveResult {
        stationarity_residual: (&next - &best).norm(),
        beta_hat: best,
        objective_trace: vec![fbest],
        iterations: (1usize << n) - 1,
        converged: true,
    })
}

fn full_column_rank<T: Scalar>(xs: &DMatrix<T>) -> bool {
    let sv = xs.singular_values();
    let top = sv.max();
    let floor = top * T::eps() * T::from_usize_lossy(xs.nrows().max(xs.ncols())) * T::lit(10.0);
    top > T::zero() && sv.iter().all(|&v| v > floor)
}
