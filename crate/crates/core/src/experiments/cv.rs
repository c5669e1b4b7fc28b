//! K-fold cross-validation over a warm-started λ path.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::{
    lipschitz_constant, prox_gradient_solve_gram, GramData, Penalty, PenaltySpec, SolveResult, SolverOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LambdaGrid {
    /// `num` log-spaced values from `λ_max` down to `min_ratio·λ_max`, where
    /// `λ_max` is the smallest λ for which `β = 0` is a fixed point.
    Relative { num: usize, min_ratio: f64 },
    Explicit { values: Vec<f64> },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Relative { num: 20, min_ratio: 1e-5 }
    }
}

impl LambdaGrid {
    /// Grid values in decreasing order.
    pub fn values(&self, lambda_max: f64) -> Result<Vec<f64>> {
        let mut v = match self {
            LambdaGrid::Relative { num, min_ratio } => {
                if *num == 0 || !(*min_ratio > 0.0 && *min_ratio <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "relative grid needs num >= 1 and 0 < min_ratio <= 1 (num = {num}, min_ratio = {min_ratio})"
                    )));
                }
                if *num == 1 {
                    vec![lambda_max]
                } else {
                    (0..*num)
                        .map(|k| lambda_max * min_ratio.powf(k as f64 / (*num - 1) as f64))
                        .collect()
                }
            }
            LambdaGrid::Explicit { values } => values.clone(),
        };
        if v.is_empty() || v.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter("lambda grid must be nonempty and positive".into()));
        }
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        Ok(v)
    }
}

/// Smallest λ at which a proximal gradient step of size `step` maps `β = 0`
/// to itself, i.e. `step·‖Xᵀy‖∞/m ≤ zero_threshold(step·λ)`.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>, penalty: Penalty<f64>, step: f64) -> f64 {
    lambda_max_from(x.tr_mul(y).amax() / x.nrows() as f64, penalty, step)
}

/// [`lambda_max`] given `g = ‖Xᵀy‖∞/m`.
fn lambda_max_from(g: f64, penalty: Penalty<f64>, step: f64) -> f64 {
    if g == 0.0 {
        return f64::MIN_POSITIVE;
    }
    match penalty {
        Penalty::L1 | Penalty::Scad { .. } | Penalty::Mcp { .. } => g,
        Penalty::L0 => step * g * g / 2.0,
        Penalty::Lq { .. } => {
            let target = step * g;
            let clears = |lam: f64| {
                PenaltySpec { penalty, lambda: lam }.zero_threshold(step * lam) >= target
            };
            let (mut lo, mut hi) = (0.0, g.max(1e-300));
            while !clears(hi) {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if clears(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    }
}

fn sparse_apply(x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(x.nrows());
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            out.axpy(b, &x.column(j), 1.0);
        }
    }
    out
}

/// Largest single-step increase of an objective trace (0 if monotone).
pub fn max_increase(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub folds: usize,
    pub grid: LambdaGrid,
    /// Solver settings for every fit on the path.
    pub solver: SolverOptions<f64>,
    /// Settings for the reported full-data fit at the chosen λ.
    pub final_solver: SolverOptions<f64>,
    /// A training path stops after the first fit with more than this
    /// fraction of the training rows as nonzeros; beyond it the fit is not
    /// identifiable and the remaining grid points are scored as infinite.
    pub max_support_ratio: f64,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            folds: 10,
            grid: LambdaGrid::default(),
            solver: SolverOptions { tol: 1e-7, max_iters: 1_000, ..SolverOptions::default() },
            final_solver: SolverOptions::default(),
            max_support_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda: f64,
    pub index: usize,
    /// Decreasing grid actually used.
    pub lambdas: Vec<f64>,
    /// Mean held-out `(1/2m')‖y' − X'β̂‖²` per grid point.
    pub errors: Vec<f64>,
    /// Full-data fit at the chosen λ.
    pub fit: SolveResult<f64>,
    /// Largest objective increase seen in any solve.
    pub max_increase: f64,
    /// Whether every path solve met the convergence test; the final fit
    /// reports its own flag.
    pub path_converged: bool,
    /// Proximal gradient iterations summed over every solve.
    pub total_iterations: usize,
}

/// Fits a warm-started path over the decreasing `lambdas`, calling `visit`
/// after each fit; the path stops early when `visit` returns `false`.
pub fn fit_path(
    data: &GramData<f64>,
    penalty: Penalty<f64>,
    lambdas: &[f64],
    opts: &SolverOptions<f64>,
    mut visit: impl FnMut(usize, &SolveResult<f64>) -> bool,
) -> Result<()> {
    let mut beta = DVector::zeros(data.xty.len());
    for (k, &lam) in lambdas.iter().enumerate() {
        let pen = PenaltySpec::new(penalty, lam)?;
        let res = prox_gradient_solve_gram(data, &pen, opts, &beta)?;
        if !visit(k, &res) {
            break;
        }
        beta = res.beta_hat;
    }
    Ok(())
}

/// Random partition of `0..m` into `folds` contiguous blocks of a shuffled
/// order; block sizes differ by at most one.
pub fn fold_partition(m: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || m < folds {
        return Err(Error::InvalidParameter(format!("need 2 <= folds <= m (folds = {folds}, m = {m})")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (m / folds, m % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut block = order[start..start + len].to_vec();
        block.sort_unstable();
        out.push(block);
        start += len;
    }
    Ok(out)
}

/// Per-instance cross-validation data shared by every penalty: the fold
/// partition, Gram statistics of each training split and the held-out rows.
#[derive(Debug, Clone)]
pub struct CvData {
    pub blocks: Vec<Vec<usize>>,
    pub full: GramData<f64>,
    pub train: Vec<GramData<f64>>,
    held_out: Vec<(DMatrix<f64>, DVector<f64>)>,
    /// `‖X‖₂²`; deleting rows cannot raise it, so it bounds every split.
    pub norm_sq: f64,
}

impl CvData {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, folds: usize, seed: u64) -> Result<Self> {
        let m = x.nrows();
        if y.len() != m {
            return Err(Error::Dimension(format!("design has {m} rows but observation has length {}", y.len())));
        }
        let blocks = fold_partition(m, folds, seed)?;
        let full = GramData::new(x, y)?;
        let train = blocks.iter().map(|held| full.without_rows(x, y, held)).collect();
        let held_out = blocks.iter().map(|held| (x.select_rows(held), y.select_rows(held))).collect();
        Ok(CvData {
            blocks,
            full,
            train,
            held_out,
            norm_sq: lipschitz_constant(x) * m as f64,
        })
    }

    fn step(&self) -> f64 {
        if self.norm_sq > 0.0 {
            self.full.m as f64 / self.norm_sq
        } else {
            1.0
        }
    }
}

/// Chooses λ by K-fold cross-validation, then refits on all rows along the
/// path down to the chosen λ. Ties go to the larger λ.
pub fn cross_validate_lambda(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    penalty: Penalty<f64>,
    settings: &CvSettings,
    seed: u64,
) -> Result<CvResult> {
    let data = CvData::new(x, y, settings.folds, seed)?;
    cross_validate_prepared(&data, penalty, settings)
}

/// [`cross_validate_lambda`] on prepared folds; `settings.folds` is ignored.
pub fn cross_validate_prepared(data: &CvData, penalty: Penalty<f64>, settings: &CvSettings) -> Result<CvResult> {
    let lam_max = lambda_max_from(data.full.xty.amax() / data.full.m as f64, penalty, data.step());
    let lambdas = settings.grid.values(lam_max)?;
    let mut errors = vec![0.0; lambdas.len()];
    let mut reached = vec![true; lambdas.len()];
    let mut worst = 0.0f64;
    let mut path_converged = true;
    let mut total_iterations = 0;
    let folds = data.blocks.len() as f64;
    for (train, (xv, yv)) in data.train.iter().zip(&data.held_out) {
        let opts = SolverOptions { lipschitz: Some(data.norm_sq / train.m as f64), ..settings.solver };
        let scale = 1.0 / (2.0 * yv.len() as f64 * folds);
        let cap = settings.max_support_ratio * train.m as f64;
        let mut last = 0;
        fit_path(train, penalty, &lambdas, &opts, |k, res| {
            worst = worst.max(max_increase(&res.objective_trace));
            path_converged &= res.converged;
            total_iterations += res.iterations;
            errors[k] += (yv - sparse_apply(xv, &res.beta_hat)).norm_squared() * scale;
            last = k;
            (res.beta_hat.iter().filter(|b| **b != 0.0).count() as f64) <= cap
        })?;
        reached[last + 1..].iter_mut().for_each(|r| *r = false);
    }
    for (e, r) in errors.iter_mut().zip(&reached) {
        if !r {
            *e = f64::INFINITY;
        }
    }
    let mut index = 0;
    for (k, e) in errors.iter().enumerate() {
        if *e < errors[index] {
            index = k;
        }
    }
    // Final fit: the path down to the chosen λ, then a tight solve there.
    let lipschitz = Some(1.0 / data.step());
    let opts = SolverOptions { lipschitz, ..settings.solver };
    let mut beta = DVector::zeros(data.full.xty.len());
    fit_path(&data.full, penalty, &lambdas[..index], &opts, |_, res| {
        worst = worst.max(max_increase(&res.objective_trace));
        path_converged &= res.converged;
        total_iterations += res.iterations;
        beta = res.beta_hat.clone();
        true
    })?;
    let final_opts = SolverOptions { lipschitz, ..settings.final_solver };
    let fit = prox_gradient_solve_gram(&data.full, &PenaltySpec::new(penalty, lambdas[index])?, &final_opts, &beta)?;
    worst = worst.max(max_increase(&fit.objective_trace));
    total_iterations += fit.iterations;
    Ok(CvResult {
        lambda: lambdas[index],
        index,
        lambdas,
        errors,
        fit,
        max_increase: worst,
        path_converged,
        total_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::design::{generate_instance, CovarianceSpec};
    use crate::solvers::prox_penalty;

    #[test]
    fn lambda_max_is_the_zero_boundary() {
        let inst = generate_instance(30, 20, 3, 0.01, &CovarianceSpec::Identity, 3).unwrap();
        let (x, y) = (&inst.x, &inst.y);
        let step = 30.0 / (lipschitz_constant(x) * 30.0);
        let g = x.tr_mul(y) / 30.0;
        for pen in [Penalty::L0, Penalty::L1, Penalty::Lq { q: 0.5 }, Penalty::Lq { q: 2.0 / 3.0 }, Penalty::Scad { a: 3.7 }] {
            let lm = lambda_max(x, y, pen, step);
            let first = |lam: f64| {
                let spec = PenaltySpec::new(pen, lam).unwrap();
                g.iter().map(|gi| prox_penalty(step * gi, step * lam, &spec).unwrap().abs()).fold(0.0, f64::max)
            };
            assert_eq!(first(lm * (1.0 + 1e-9)), 0.0, "{pen:?}");
            assert!(first(lm * (1.0 - 1e-6)) > 0.0, "{pen:?}");
        }
    }

    #[test]
    fn grids_are_decreasing() {
        let g = LambdaGrid::Relative { num: 5, min_ratio: 1e-4 }.values(2.0).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 2.0);
        assert!((g[4] - 2e-4).abs() < 1e-16);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        let e = LambdaGrid::Explicit { values: vec![0.1, 1.0, 0.1] }.values(9.0).unwrap();
        assert_eq!(e, vec![1.0, 0.1]);
        assert!(LambdaGrid::Explicit { values: vec![] }.values(1.0).is_err());
        assert!(LambdaGrid::Relative { num: 3, min_ratio: 0.0 }.values(1.0).is_err());
    }

    #[test]
    fn partition_covers_rows_once() {
        let p = fold_partition(23, 5, 1).unwrap();
        let mut all: Vec<usize> = p.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(p.iter().all(|b| b.len() == 4 || b.len() == 5));
        assert_eq!(p, fold_partition(23, 5, 1).unwrap());
        assert!(fold_partition(3, 4, 0).is_err());
        assert!(fold_partition(10, 1, 0).is_err());
    }

    #[test]
    fn single_lambda_grid_returns_it() {
        let inst = generate_instance(20, 10, 2, 0.01, &CovarianceSpec::Identity, 4).unwrap();
        let s = CvSettings { folds: 4, grid: LambdaGrid::Explicit { values: vec![0.05] }, ..CvSettings::default() };
        let cv = cross_validate_lambda(&inst.x, &inst.y, Penalty::L1, &s, 0).unwrap();
        assert_eq!(cv.lambda, 0.05);
        assert_eq!(cv.errors.len(), 1);
    }

    #[test]
    fn noiseless_does_not_pick_largest() {
        let inst = generate_instance(60, 30, 3, 0.0, &CovarianceSpec::Identity, 5).unwrap();
        let s = CvSettings {
            folds: 5,
            grid: LambdaGrid::Explicit { values: vec![1e-5, 1e-3, 1e-1, 1e1, 1e3] },
            ..CvSettings::default()
        };
        for pen in [Penalty::L1, Penalty::Lq { q: 0.5 }] {
            let a = cross_validate_lambda(&inst.x, &inst.y, pen, &s, 9).unwrap();
            assert!(a.lambda < 1e3);
            let b = cross_validate_lambda(&inst.x, &inst.y, pen, &s, 9).unwrap();
            assert_eq!(a.lambda, b.lambda);
            assert_eq!(a.errors, b.errors);
            assert_eq!(a.max_increase, 0.0);
        }
    }
}
