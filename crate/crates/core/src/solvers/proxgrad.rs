//! Proximal gradient for `(1/2m)‖y − Xβ‖² + λ Σ ρ(β_i)`.
//!
//! With the ℓ0 penalty this is iterative hard thresholding, with ℓ_{1/2} and
//! ℓ_{2/3} it is iterative half / two-thirds thresholding, and with ℓ1 plus
//! acceleration it is a monotone FISTA.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::solvers::prox::{prox_unchecked, Penalty, PenaltySpec};
use crate::sparsity::{ensure_finite, ensure_finite_matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule<T> {
    /// `1/L` with `L = σ_max(XᵀX)/m`.
    Auto,
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions<T> {
    pub max_iters: usize,
    /// Relative objective change that counts as converged.
    pub tol: T,
    pub step: StepRule<T>,
    /// Momentum with restart; only honoured for convex penalties.
    pub accelerate: bool,
    pub seed: u64,
    /// Known upper bound on `σ_max(XᵀX)/m`, used by [`StepRule::Auto`]
    /// instead of an eigendecomposition.
    pub lipschitz: Option<T>,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            max_iters: 5_000,
            tol: T::lit(1e-8),
            step: StepRule::Auto,
            accelerate: true,
            seed: 0,
            lipschitz: None,
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidParameter(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be positive".into()));
        }
        if let StepRule::Fixed(s) = self.step {
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::InvalidParameter(format!("step = {s} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult<T: Scalar> {
    pub beta_hat: DVector<T>,
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub stationarity_residual: T,
}

/// `σ_max(XᵀX)/m`, computed from whichever Gram matrix is smaller and nudged
/// up so that `1/L` never exceeds the true step bound through rounding.
pub fn lipschitz_constant<T: Scalar>(x: &DMatrix<T>) -> T {
    let (m, n) = x.shape();
    if m == 0 || n == 0 {
        return T::zero();
    }
    let g = if m <= n { x * x.transpose() } else { x.tr_mul(x) };
    let top = g.symmetric_eigenvalues().max().max(T::zero());
    top * (T::one() + T::lit(1e-10)) / T::from_usize_lossy(m)
}

/// `Xβ`, skipping zero coefficients when β is sparse.
pub(crate) fn apply<T: Scalar>(x: &DMatrix<T>, beta: &DVector<T>) -> DVector<T> {
    let nnz = beta.iter().filter(|b| **b != T::zero()).count();
    if nnz * 4 >= beta.len() {
        return x * beta;
    }
    let mut out = DVector::zeros(x.nrows());
    for (j, &b) in beta.iter().enumerate() {
        if b != T::zero() {
            out.axpy(b, &x.column(j), T::one());
        }
    }
    out
}

pub(crate) fn check_dims<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>) -> Result<()> {
    ensure_finite_matrix(x, "design matrix")?;
    ensure_finite(y, "observation")?;
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design is {}x{} but observation has length {}",
            x.nrows(),
            x.ncols(),
            y.len()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Dimension("empty design matrix".into()));
    }
    Ok(())
}

/// `(1/2m)‖y − Xβ‖² + λ Σ ρ(β_i)`.
pub fn objective<T: Scalar>(x: &DMatrix<T>, y: &DVector<T>, pen: &PenaltySpec<T>, beta: &DVector<T>) -> T {
    let r = apply(x, beta) - y;
    data_term(&r) + pen.value(beta.as_slice())
}

fn data_term<T: Scalar>(r: &DVector<T>) -> T {
    r.norm_squared() / (T::lit(2.0) * T::from_usize_lossy(r.len()))
}

/// Sufficient statistics `(XᵀX, Xᵀy, yᵀy, m)` of the least-squares term.
///
/// Iterating on these costs `O(n·nnz(β))` per step instead of `O(mn)`, which
/// pays off when the same design is solved along a λ path.
#[derive(Debug, Clone, PartialEq)]
pub struct GramData<T: Scalar> {
    pub gram: DMatrix<T>,
    pub xty: DVector<T>,
    pub yty: T,
    pub m: usize,
}

impl<T: Scalar> GramData<T> {
    pub fn new(x: &DMatrix<T>, y: &DVector<T>) -> Result<Self> {
        check_dims(x, y)?;
        Ok(GramData {
            gram: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.norm_squared(),
            m: x.nrows(),
        })
    }

    /// Statistics of the rows of `(x, y)` not listed in `rows`, where `self`
    /// was built from all of `(x, y)`.
    pub fn without_rows(&self, x: &DMatrix<T>, y: &DVector<T>, rows: &[usize]) -> Self {
        let xv = x.select_rows(rows);
        let yv = y.select_rows(rows);
        GramData {
            gram: &self.gram - xv.tr_mul(&xv),
            xty: &self.xty - xv.tr_mul(&yv),
            yty: self.yty - yv.norm_squared(),
            m: self.m - rows.len(),
        }
    }

    /// `λ_max(XᵀX)/m`, nudged up as in [`lipschitz_constant`].
    pub fn lipschitz(&self) -> T {
        let top = self.gram.clone().symmetric_eigenvalues().max().max(T::zero());
        top * (T::one() + T::lit(1e-10)) / T::from_usize_lossy(self.m)
    }

    /// `(1/2m)‖y − Xβ‖²`, expanded through the Gram matrix.
    pub fn data_term(&self, beta: &DVector<T>) -> T {
        let u = self.gram_apply(beta);
        self.data_term_from(beta, &u)
    }

    fn data_term_from(&self, beta: &DVector<T>, u: &DVector<T>) -> T {
        let two = T::lit(2.0);
        (beta.dot(u) - two * beta.dot(&self.xty) + self.yty) / (two * T::from_usize_lossy(self.m))
    }

    /// `XᵀXβ` by columns, always skipping zeros: the dense product saves
    /// nothing here since the Gram matrix is square in the long dimension.
    fn gram_apply(&self, beta: &DVector<T>) -> DVector<T> {
        let mut out = DVector::zeros(self.gram.nrows());
        for (j, &b) in beta.iter().enumerate() {
            if b != T::zero() {
                out.axpy(b, &self.gram.column(j), T::one());
            }
        }
        out
    }
}

/// The least-squares part of the objective, seen through a linear image of β
/// (`Xβ` or `XᵀXβ`) so that momentum can combine images instead of
/// recomputing them.
trait Smooth<T: Scalar> {
    fn dims(&self) -> (usize, usize);
    fn image(&self, beta: &DVector<T>) -> DVector<T>;
    fn loss(&self, beta: &DVector<T>, image: &DVector<T>) -> T;
    /// `m·∇` of the data term.
    fn scaled_gradient(&self, image: &DVector<T>) -> DVector<T>;
}

struct Dense<'a, T: Scalar> {
    x: &'a DMatrix<T>,
    y: &'a DVector<T>,
}

impl<T: Scalar> Smooth<T> for Dense<'_, T> {
    fn dims(&self) -> (usize, usize) {
        self.x.shape()
    }

    fn image(&self, beta: &DVector<T>) -> DVector<T> {
        apply(self.x, beta)
    }

    fn loss(&self, _beta: &DVector<T>, image: &DVector<T>) -> T {
        data_term(&(image - self.y))
    }

    fn scaled_gradient(&self, image: &DVector<T>) -> DVector<T> {
        self.x.tr_mul(&(image - self.y))
    }
}

impl<T: Scalar> Smooth<T> for GramData<T> {
    fn dims(&self) -> (usize, usize) {
        (self.m, self.gram.ncols())
    }

    fn image(&self, beta: &DVector<T>) -> DVector<T> {
        self.gram_apply(beta)
    }

    fn loss(&self, beta: &DVector<T>, image: &DVector<T>) -> T {
        self.data_term_from(beta, image)
    }

    fn scaled_gradient(&self, image: &DVector<T>) -> DVector<T> {
        image - &self.xty
    }
}

struct Problem<'a, T: Scalar, S> {
    smooth: &'a S,
    pen: &'a PenaltySpec<T>,
    step: T,
    inv_m: T,
}

impl<T: Scalar, S: Smooth<T>> Problem<'_, T, S> {
    /// Linear image and objective value at β.
    fn eval(&self, beta: &DVector<T>) -> (DVector<T>, T) {
        let u = self.smooth.image(beta);
        let f = self.smooth.loss(beta, &u) + self.pen.value(beta.as_slice());
        (u, f)
    }

    /// `prox(β − η∇f(β))` given the image at β.
    fn step_from(&self, beta: &DVector<T>, u: &DVector<T>) -> DVector<T> {
        let g = self.smooth.scaled_gradient(u);
        let tau = self.step * self.pen.lambda;
        let c = self.step * self.inv_m;
        // Below the ℓq threshold the prox is 0; testing it once here saves a
        // power per coordinate and gives the same result.
        let skip = match self.pen.penalty {
            Penalty::Lq { .. } => self.pen.zero_threshold(tau),
            _ => -T::one(),
        };
        DVector::from_fn(beta.len(), |i, _| {
            let v = beta[i] - c * g[i];
            if v.abs() <= skip {
                T::zero()
            } else {
                prox_unchecked(v, tau, self.pen)
            }
        })
    }
}

/// Proximal gradient from `beta0`.
pub fn prox_gradient_solve<T: Scalar>(
    x: &DMatrix<T>,
    y: &DVector<T>,
    pen: &PenaltySpec<T>,
    opts: &SolverOptions<T>,
    beta0: &DVector<T>,
) -> Result<SolveResult<T>> {
    check_dims(x, y)?;
    run(&Dense { x, y }, pen, opts, beta0, || lipschitz_constant(x))
}

/// [`prox_gradient_solve`] on precomputed [`GramData`].
pub fn prox_gradient_solve_gram<T: Scalar>(
    data: &GramData<T>,
    pen: &PenaltySpec<T>,
    opts: &SolverOptions<T>,
    beta0: &DVector<T>,
) -> Result<SolveResult<T>> {
    ensure_finite_matrix(&data.gram, "gram matrix")?;
    ensure_finite(&data.xty, "correlation vector")?;
    if data.m == 0 || data.gram.nrows() != data.gram.ncols() || data.xty.len() != data.gram.ncols() {
        return Err(Error::Dimension("inconsistent gram data".into()));
    }
    run(data, pen, opts, beta0, || data.lipschitz())
}

fn run<T: Scalar, S: Smooth<T>>(
    smooth: &S,
    pen: &PenaltySpec<T>,
    opts: &SolverOptions<T>,
    beta0: &DVector<T>,
    lipschitz: impl FnOnce() -> T,
) -> Result<SolveResult<T>> {
    let (m, n) = smooth.dims();
    ensure_finite(beta0, "initial point")?;
    if beta0.len() != n {
        return Err(Error::Dimension(format!(
            "initial point has length {} but design has {} columns",
            beta0.len(),
            n
        )));
    }
    pen.validate()?;
    opts.validate()?;
    let step = match opts.step {
        StepRule::Fixed(s) => s,
        StepRule::Auto => {
            let l = opts.lipschitz.unwrap_or_else(lipschitz);
            if l > T::zero() {
                T::one() / l
            } else {
                T::one()
            }
        }
    };
    let prob = Problem {
        smooth,
        pen,
        step,
        inv_m: T::one() / T::from_usize_lossy(m),
    };
    // Only a user-forced step can make a nonconvex method blow up.
    let guard = matches!(opts.step, StepRule::Fixed(_)) && !pen.penalty.is_convex();
    if opts.accelerate && pen.penalty.is_convex() {
        accelerated(&prob, opts, beta0.clone())
    } else {
        plain(&prob, opts, beta0.clone(), guard)
    }
}

fn relative_change<T: Scalar>(old: T, new: T) -> T {
    (old - new).abs() / old.abs().max(T::tiny())
}

fn diverged<T: Scalar>(f: T, f0: T, guard: bool) -> bool {
    !f.is_finite() || (guard && f > T::lit(10.0) * f0.abs().max(T::tiny()))
}

fn plain<T: Scalar, S: Smooth<T>>(
    prob: &Problem<'_, T, S>,
    opts: &SolverOptions<T>,
    mut beta: DVector<T>,
    guard: bool,
) -> Result<SolveResult<T>> {
    let (mut u, mut f) = prob.eval(&beta);
    let f0 = f;
    let mut trace = vec![f];
    let mut small_change = false;
    let mut residual;
    let mut converged = false;
    let mut iterations = 0;
    let stat_tol = T::lit(10.0) * opts.tol;
    loop {
        let z = prob.step_from(&beta, &u);
        residual = (&z - &beta).norm();
        if small_change && residual <= stat_tol {
            converged = true;
            break;
        }
        if iterations == opts.max_iters {
            break;
        }
        let (uz, fz) = prob.eval(&z);
        iterations += 1;
        if diverged(fz, f0, guard) {
            return Err(Error::Diverged {
                iteration: iterations,
                objective: fz.as_f64(),
                initial: f0.as_f64(),
            });
        }
        small_change = relative_change(f, fz) <= opts.tol;
        beta = z;
        u = uz;
        f = fz;
        trace.push(f);
    }
    Ok(SolveResult {
        beta_hat: beta,
        objective_trace: trace,
        iterations,
        converged,
        stationarity_residual: residual,
    })
}

/// Monotone FISTA: a momentum step is kept only if it does not increase the
/// objective; otherwise momentum restarts and a plain step is taken from the
/// current iterate.
fn accelerated<T: Scalar, S: Smooth<T>>(
    prob: &Problem<'_, T, S>,
    opts: &SolverOptions<T>,
    mut beta: DVector<T>,
) -> Result<SolveResult<T>> {
    let (mut u, mut f) = prob.eval(&beta);
    let f0 = f;
    let mut trace = vec![f];
    let mut point = beta.clone();
    let mut u_point = u.clone();
    let mut t = T::one();
    let mut residual = T::zero();
    let mut converged = false;
    let mut iterations = 0;
    let stat_tol = T::lit(10.0) * opts.tol;
    while iterations < opts.max_iters {
        let mut z = prob.step_from(&point, &u_point);
        let (mut uz, mut fz) = prob.eval(&z);
        iterations += 1;
        let mut t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
        if !(fz <= f) {
            z = prob.step_from(&beta, &u);
            (uz, fz) = prob.eval(&z);
            t_next = T::one();
        }
        if diverged(fz, f0, false) {
            return Err(Error::Diverged {
                iteration: iterations,
                objective: fz.as_f64(),
                initial: f0.as_f64(),
            });
        }
        let small = relative_change(f, fz) <= opts.tol;
        let prev = std::mem::replace(&mut beta, z);
        let prev_u = std::mem::replace(&mut u, uz);
        f = fz;
        trace.push(f);
        if small {
            let next = prob.step_from(&beta, &u);
            residual = (&next - &beta).norm();
            if residual <= stat_tol {
                converged = true;
                break;
            }
        }
        let momentum = (t - T::one()) / t_next;
        if momentum > T::zero() {
            point = &beta + (&beta - &prev) * momentum;
            u_point = &u + (&u - &prev_u) * momentum;
        } else {
            point = beta.clone();
            u_point = u.clone();
        }
        t = t_next;
    }
    if !converged {
        residual = (prob.step_from(&beta, &u) - &beta).norm();
    }
    Ok(SolveResult {
        beta_hat: beta,
        objective_trace: trace,
        iterations,
        converged,
        stationarity_residual: residual,
    })
}
