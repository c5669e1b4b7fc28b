//! Iteratively reweighted ℓ1 for `min ‖β‖_q^q  s.t.  ‖y − Xβ‖₂ ≤ ε`.
//!
//! Outer step `k` solves the weighted problem
//! `min Σ w_i|β_i| s.t. ‖y − Xβ‖₂ ≤ ε` with `w_i = (|β_i^k| + δ_k)^{q−1}` and
//! `δ_k = max(0.1·2^{−k}, 1e−8)`. The inner problem is solved with the
//! Chambolle–Pock primal–dual iteration, warm-started across outer steps.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solvers::proxgrad::{apply, check_dims, SolveResult, SolverOptions};
use crate::sparsity::lq_pow_sum;

pub const MAX_OUTER: usize = 30;
/// Relative primal/dual change at which the inner iteration stops.
pub const INNER_TOL: f64 = 1e-7;
/// Slack allowed on the constraint of the returned point.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

fn delta_schedule<T: Scalar>(k: usize) -> T {
    let d = 0.1 * 0.5f64.powi(k.min(1000) as i32);
    T::lit(d.max(1e-8))
}

/// Euclidean projection onto the ball `‖z − y‖ ≤ ε`.
fn project_ball<T: Scalar>(z: &mut DVector<T>, y: &DVector<T>, eps: T) {
    let mut d = &*z - y;
    let nd = d.norm();
    if nd > eps {
        d *= eps / nd;
        *z = y + d;
    }
}

struct WeightedL1<'a, T: Scalar> {
    x: &'a DMatrix<T>,
    y: &'a DVector<T>,
    eps: T,
    tau: T,
    sigma: T,
}

impl<T: Scalar> WeightedL1<'_, T> {
    /// Runs primal–dual iterations from `(beta, u)` in place; returns the
    /// number of iterations and whether the relative changes fell below
    /// [`INNER_TOL`].
    fn solve(&self, w: &DVector<T>, beta: &mut DVector<T>, u: &mut DVector<T>, max_iters: usize) -> (usize, bool) {
        let tol = T::lit(INNER_TOL);
        let mut bar = beta.clone();
        for it in 1..=max_iters {
            // dual step: u ← p − σ·P_B(p/σ) with p = u + σXβ̄
            let p = &*u + apply(self.x, &bar) * self.sigma;
            let mut z = &p / self.sigma;
            project_ball(&mut z, self.y, self.eps);
            let u_new = p - z * self.sigma;
            // primal step: weighted soft threshold
            let g = self.x.tr_mul(&u_new);
            let b_new = DVector::from_fn(beta.len(), |i, _| {
                let v = beta[i] - self.tau * g[i];
                let t = self.tau * w[i];
                if v > t {
                    v - t
                } else if v < -t {
                    v + t
                } else {
                    T::zero()
                }
            });
            let db = (&b_new - &*beta).norm();
            let du = (&u_new - &*u).norm();
            bar = &b_new * T::lit(2.0) - &*beta;
            *beta = b_new;
            *u = u_new;
            let scale_b = beta.norm().max(T::lit(1e-12));
            let scale_u = u.norm().max(T::lit(1e-12));
            if db <= tol * scale_b && du <= tol * scale_u {
                return (it, true);
            }
            if !db.is_finite() || !du.is_finite() {
                return (it, false);
            }
        }
        (max_iters, false)
    }
}

/// Moves `beta` toward a feasible point until `‖y − Xβ‖ ≤ ε`.
///
/// The target is least squares on the support of `beta` if that is feasible,
/// otherwise the minimum-norm least-squares solution.
fn repair_feasibility<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, eps: T, beta: &DVector<T>) -> Result<DVector<T>> {
    let r = apply(x, beta) - y;
    if r.norm() <= eps {
        return Ok(beta.clone());
    }
    let support: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] != T::zero()).collect();
    let lstsq_eps = T::eps() * T::lit(100.0);
    let mut target = None;
    if !support.is_empty() && support.len() <= x.nrows() {
        let xs = x.select_columns(&support);
        if let Ok(sol) = xs.svd(true, true).solve(y, lstsq_eps) {
            let mut full = DVector::zeros(beta.len());
            for (k, &j) in support.iter().enumerate() {
                full[j] = sol[k];
            }
            if (apply(x, &full) - y).norm() <= eps {
                target = Some(full);
            }
        }
    }
    let target = match target {
        Some(t) => t,
        None => {
            let full = x
                .clone()
                .svd(true, true)
                .solve(y, lstsq_eps)
                .map_err(|e| Error::InvalidParameter(format!("least squares failed: {e}")))?;
            if (apply(x, &full) - y).norm() > eps * (T::one() + T::lit(FEASIBILITY_SLACK)) {
                return Err(Error::InvalidParameter(format!(
                    "constraint ‖y − Xβ‖ ≤ {eps} is infeasible (least-squares residual {})",
                    (apply(x, &full) - y).norm()
                )));
            }
            full
        }
    };
    // smallest θ ∈ (0, 1] with ‖r + θ(r_T − r)‖ = ε
    let d = (apply(x, &target) - y) - &r;
    let a = d.norm_squared();
    let b = r.dot(&d);
    let c = r.norm_squared() - eps * eps;
    let disc = (b * b - a * c).max(T::zero());
    let theta = if a > T::zero() {
        ((-b - disc.sqrt()) / a).max(T::zero()).min(T::one())
    } else {
        T::one()
    };
    let mut theta = theta;
    let mut out = beta * (T::one() - theta) + &target * theta;
    // rounding can leave the point a hair outside; step further if needed
    while (apply(x, &out) - y).norm() > eps * (T::one() + T::lit(FEASIBILITY_SLACK)) && theta < T::one() {
        theta = (theta + (T::one() - theta) * T::lit(0.5)).min(T::one());
        out = beta * (T::one() - theta) + &target * theta;
    }
    Ok(out)
}

/// Approximately solves the constrained ℓq problem. `opts.max_iters` bounds
/// the inner primal–dual iterations per outer step; `opts.tol` is the
/// relative change between outer iterates that stops the reweighting.
///
/// `objective_trace` holds `‖β^k‖_q^q` after every outer step (not
/// necessarily monotone); `stationarity_residual` is the last relative change.
pub fn irl1_constrained_solve<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    epsilon: T,
    q: T,
    opts: &SolverOptions<T>,
) -> Result<SolveResult<T>> {
    check_dims(x, y)?;
    opts.validate()?;
    if !(epsilon > T::zero()) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
    }
    if !(q > T::zero() && q <= T::one()) {
        return Err(Error::InvalidParameter(format!("q = {q} must lie in (0, 1]")));
    }
    let n = x.ncols();
    if y.norm() <= epsilon {
        return Ok(SolveResult {
            beta_hat: DVector::zeros(n),
            objective_trace: vec![T::zero()],
            iterations: 0,
            converged: true,
            stationarity_residual: T::zero(),
        });
    }
    let norm_x = x.clone().singular_values().max();
    let step = T::lit(0.99) / norm_x;
    let inner = WeightedL1 { x, y, eps: epsilon, tau: step, sigma: step };

    let mut beta = DVector::zeros(n);
    let mut u = DVector::zeros(x.nrows());
    let mut trace = Vec::new();
    let mut change = T::lit(f64::INFINITY);
    let mut converged = false;
    let mut outer = 0;
    while outer < MAX_OUTER {
        let delta: T = delta_schedule(outer);
        let mut w = beta.map(|b: T| (b.abs() + delta).powf(q - T::one()));
        let wmin = w.min();
        w /= wmin;
        let prev = beta.clone();
        let (_, ok) = inner.solve(&w, &mut beta, &mut u, opts.max_iters);
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(Error::InnerSolver {
                outer,
                reason: if ok { "non-finite iterate".into() } else { "no convergence, non-finite iterate".into() },
                iterate: prev.iter().map(|b| b.as_f64()).collect(),
            });
        }
        outer += 1;
        trace.push(lq_pow_sum(&beta, q));
        change = (&beta - &prev).norm() / prev.norm().max(T::tiny());
        if outer > 1 && change <= opts.tol {
            converged = true;
            break;
        }
        if q == T::one() && ok {
            converged = true;
            break;
        }
    }
    let beta_hat = repair_feasibility(x, y, epsilon, &beta)?;
    Ok(SolveResult {
        beta_hat,
        objective_trace: trace,
        iterations: outer,
        converged,
        stationarity_residual: if change.is_finite() { change } else { T::zero() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn setup(m: usize, n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
        let mut beta = DVector::zeros(n);
        beta[1] = 1.0;
        beta[7] = -1.5;
        beta[n - 1] = 0.7;
        (x, beta)
    }

    fn opts() -> SolverOptions<f64> {
        SolverOptions { max_iters: 20_000, tol: 1e-6, ..Default::default() }
    }

    #[test]
    fn exact_recovery_noiseless() {
        let (x, beta) = setup(30, 60, 1);
        let y = &x * &beta;
        for q in [1.0, 0.5] {
            let res = irl1_constrained_solve(&x, &y, 1e-6, q, &opts()).unwrap();
            assert!((&res.beta_hat - &beta).norm() < 1e-4, "q = {q}: {}", (&res.beta_hat - &beta).norm());
            assert!((&x * &res.beta_hat - &y).norm() <= 1e-6 * (1.0 + FEASIBILITY_SLACK));
        }
    }

    #[test]
    fn large_epsilon_gives_zero() {
        let (x, beta) = setup(10, 20, 2);
        let y = &x * &beta;
        let res = irl1_constrained_solve(&x, &y, y.norm() * 1.01, 0.5, &opts()).unwrap();
        assert_eq!(res.beta_hat, DVector::zeros(20));
    }

    #[test]
    fn noisy_solution_is_feasible_and_dominant() {
        let (x, beta) = setup(40, 80, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sigma = 0.05;
        let e = DVector::from_fn(40, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); sigma * z });
        let y = &x * &beta + &e;
        let eps = sigma * (5.0f64 * 40.0).sqrt();
        assert!(e.norm() <= eps);
        let res = irl1_constrained_solve(&x, &y, eps, 0.5, &opts()).unwrap();
        assert!((&x * &res.beta_hat - &y).norm() <= eps * (1.0 + FEASIBILITY_SLACK));
        // dominant property relative to the true support
        let delta = &res.beta_hat - &beta;
        let on: f64 = [1usize, 7, 79].iter().map(|&i| delta[i].abs().sqrt()).sum();
        let off: f64 = (0..80).filter(|i| ![1, 7, 79].contains(i)).map(|i| delta[i].abs().sqrt()).sum();
        assert!(off <= on, "{off} > {on}");
    }

    #[test]
    fn repair_reaches_the_ball() {
        let (x, beta) = setup(10, 20, 4);
        let y = &x * &beta;
        let bad = DVector::from_element(20, 0.3);
        let fixed = repair_feasibility(&x, &y, 0.01, &bad).unwrap();
        assert!((&x * &fixed - &y).norm() <= 0.01 * (1.0 + FEASIBILITY_SLACK));
    }

    #[test]
    fn rejects_bad_arguments() {
        let (x, beta) = setup(10, 20, 5);
        let y = &x * &beta;
        assert!(irl1_constrained_solve(&x, &y, 0.0, 0.5, &opts()).is_err());
        assert!(irl1_constrained_solve(&x, &y, 0.1, 1.5, &opts()).is_err());
    }
}
