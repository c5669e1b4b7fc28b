//! Tuning rules, recovery bounds, probability floors and sample-size
//! thresholds for the constrained and regularized ℓq estimators.
//!
//! `log` is the natural logarithm throughout. Constants from the random-design
//! lemmas are only known up to universal constants; [`UniversalConstants`]
//! defaults them to 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularity::RecParams;
use crate::scalar::Scalar;

fn positive<T: Scalar>(x: T, what: &str) -> Result<()> {
    if x > T::zero() && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} = {x} must be positive")))
    }
}

fn check_q<T: Scalar>(q: T) -> Result<()> {
    if q > T::zero() && q <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("q = {q} must lie in (0, 1]")))
    }
}

fn check_st(s: usize, t: usize) -> Result<()> {
    if s == 0 || t == 0 {
        return Err(Error::InvalidParameter(format!("s = {s} and t = {t} must be positive")));
    }
    Ok(())
}

/// Inputs of the tuning rule for `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningParams<T> {
    pub sigma: T,
    pub m: usize,
    pub n: usize,
    /// Cone constant, `a > 1`.
    pub a: T,
    /// `0 ≤ θ < 1`.
    pub theta: T,
    /// `b ≥ 0`.
    pub b: T,
    /// Upper bound on `‖β*‖_q`.
    pub r: T,
    pub q: T,
}

impl<T: Scalar> TuningParams<T> {
    pub fn validate(&self) -> Result<()> {
        positive(self.sigma, "sigma")?;
        positive(self.r, "r")?;
        check_q(self.q)?;
        if self.m == 0 || self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "need m >= 1 and n >= 2 (m = {}, n = {})",
                self.m, self.n
            )));
        }
        if !(self.a > T::one()) || !self.a.is_finite() {
            return Err(Error::InvalidParameter(format!("a = {} must exceed 1", self.a)));
        }
        if !(self.theta >= T::zero() && self.theta < T::one()) {
            return Err(Error::InvalidParameter(format!("theta = {} must lie in [0, 1)", self.theta)));
        }
        if !(self.b >= T::zero()) || !self.b.is_finite() {
            return Err(Error::InvalidParameter(format!("b = {} must be nonnegative", self.b)));
        }
        Ok(())
    }
}

/// Constants `c₁..c₄` and `τ ≥ 1` of the random-design lemmas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalConstants<T> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
    pub tau: T,
}

impl<T: Scalar> Default for UniversalConstants<T> {
    fn default() -> Self {
        let one = T::one();
        UniversalConstants { c1: one, c2: one, c3: one, c4: one, tau: one }
    }
}

impl<T: Scalar> UniversalConstants<T> {
    pub fn validate(&self) -> Result<()> {
        positive(self.c1, "c1")?;
        positive(self.c2, "c2")?;
        positive(self.c3, "c3")?;
        positive(self.c4, "c4")?;
        if !(self.tau >= T::one()) || !self.tau.is_finite() {
            return Err(Error::InvalidParameter(format!("tau = {} must be at least 1", self.tau)));
        }
        Ok(())
    }
}

/// `ε = σ√(5m)`.
pub fn epsilon_default<T: Scalar>(sigma: T, m: usize) -> T {
    sigma * (T::lit(5.0) * T::from_usize_lossy(m)).sqrt()
}

/// `ε = σ√(m + 2√(2m))`, the noise level used in the simulations.
pub fn epsilon_experiment<T: Scalar>(sigma: T, m: usize) -> T {
    let mf = T::from_usize_lossy(m);
    sigma * (mf + T::lit(2.0) * (T::lit(2.0) * mf).sqrt()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice<T> {
    pub lambda: T,
    /// `ρ = (5σ²/(2λ) + r^q)^{1/q}`.
    pub rho: T,
    /// Whether the `(5/2)σ²` branch of the maximum is active.
    pub variance_branch: bool,
}

/// `λ = max{ ((a+1)/(a−1))·σ(1+θ)·2^{1−q}(1+r^q)^{(1−q)/q}·√(2(1+b) log n / m), (5/2)σ² }`.
pub fn lambda_default<T: Scalar>(p: &TuningParams<T>) -> Result<LambdaChoice<T>> {
    p.validate()?;
    let one = T::one();
    let two = T::lit(2.0);
    let (m, n) = (T::from_usize_lossy(p.m), T::from_usize_lossy(p.n));
    let rq = p.r.powf(p.q);
    let noise = (p.a + one) / (p.a - one)
        * p.sigma
        * (one + p.theta)
        * two.powf(one - p.q)
        * (one + rq).powf((one - p.q) / p.q)
        * (two * (one + p.b) * n.ln() / m).sqrt();
    let variance = T::lit(2.5) * p.sigma * p.sigma;
    let variance_branch = variance > noise;
    let lambda = if variance_branch { variance } else { noise };
    let rho = (T::lit(5.0) * p.sigma * p.sigma / (two * lambda) + rq).powf(one / p.q);
    Ok(LambdaChoice { lambda, rho, variance_branch })
}

/// `(1 + (s/t)^{2/q−1}) · 4ε²/φ²`.
pub fn theorem1_bound<T: Scalar>(phi: T, q: T, s: usize, t: usize, epsilon: T) -> Result<T> {
    positive(phi, "phi")?;
    check_q(q)?;
    check_st(s, t)?;
    positive(epsilon, "epsilon")?;
    Ok(cp_factor(q, s, t) * T::lit(4.0) * epsilon * epsilon / (phi * phi))
}

fn cp_factor<T: Scalar>(q: T, s: usize, t: usize) -> T {
    let ratio = T::from_usize_lossy(s) / T::from_usize_lossy(t);
    T::one() + ratio.powf(T::lit(2.0) / q - T::one())
}

/// Prediction, oracle and ℓ2 bounds for the regularized problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpBounds<T> {
    pub prediction: T,
    pub oracle: T,
    pub l2: T,
}

/// Shared shape of the regularized bounds:
/// `(c_p aλ/κ^q)^{2/(2−q)} s`, `(c_o aλ/κ^q)^{2/(2−q)} s` and
/// `(1 + a^{2/q}(s/t)^{2/q−1}) (c_l aλ/κ²)^{2/(2−q)} s`.
fn rp_shape<T: Scalar>(kappa: T, consts: [T; 3], q: T, s: usize, t: usize, a: T, lambda: T) -> RpBounds<T> {
    let two = T::lit(2.0);
    let expo = two / (two - q);
    let sf = T::from_usize_lossy(s);
    let ratio = sf / T::from_usize_lossy(t);
    let kq = kappa.powf(q);
    let prediction = (consts[0] * a * lambda / kq).powf(expo) * sf;
    let oracle = (consts[1] * a * lambda / kq).powf(expo) * sf;
    let spread = T::one() + a.powf(two / q) * ratio.powf(two / q - T::one());
    let l2 = spread * (consts[2] * a * lambda / (kappa * kappa)).powf(expo) * sf;
    RpBounds { prediction, oracle, l2 }
}

fn check_rp<T: Scalar>(phi: T, q: T, s: usize, t: usize, a: T, lambda: T) -> Result<()> {
    positive(phi, "phi")?;
    check_q(q)?;
    check_st(s, t)?;
    positive(a, "a")?;
    positive(lambda, "lambda")
}

/// Regularized-problem bounds for a deterministic design with modulus
/// `φ = φ_q(s,t,a,X)`. The prediction and oracle bounds use `(φ/√m)^q`, the
/// ℓ2 bound `(φ/√m)²`, exactly as displayed in the theorem.
pub fn theorem2_bounds<T: Scalar>(phi: T, m: usize, q: T, s: usize, t: usize, a: T, lambda: T) -> Result<RpBounds<T>> {
    check_rp(phi, q, s, t, a, lambda)?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let kappa = phi / T::from_usize_lossy(m).sqrt();
    let two = T::lit(2.0);
    Ok(rp_shape(kappa, [two, two.powf(q / two), two], q, s, t, a, lambda))
}

/// Gaussian-design bounds in terms of `φ_Σ = φ_q(s,t,a,Σ^{1/2})`:
/// the constrained ℓ2 bound `16(1 + (s/t)^{2/q−1}) ε²/(m φ_Σ²)` and the
/// regularized triple with constants `2^{q+1}`, `8^{q/2}`, `8`.
pub fn theorem34_bounds<T: Scalar>(
    phi_sigma_half: T,
    m: usize,
    q: T,
    s: usize,
    t: usize,
    a: T,
    lambda: T,
    epsilon: T,
) -> Result<(T, RpBounds<T>)> {
    check_rp(phi_sigma_half, q, s, t, a, lambda)?;
    positive(epsilon, "epsilon")?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be positive".into()));
    }
    let phi = phi_sigma_half;
    let cp = T::lit(16.0) * cp_factor(q, s, t) * epsilon * epsilon / (T::from_usize_lossy(m) * phi * phi);
    let two = T::lit(2.0);
    let rp = rp_shape(phi, [two.powf(q + T::one()), T::lit(8.0).powf(q / two), T::lit(8.0)], q, s, t, a, lambda);
    Ok((cp, rp))
}

/// Lower bounds on the probabilities of the events behind the theorems,
/// clipped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityFloors<T> {
    /// `‖e‖₂ ≤ ε`: `1 − e^{−m}`.
    pub noise_ball: T,
    /// Correlation event: `1 − (n^b √(π log n))^{−1}`.
    pub correlation: T,
    /// Both of the above: `1 − e^{−m} − (n^b √(π log n))^{−1}`.
    pub noise_and_correlation: T,
    /// Random design inherits the q-REC: `1 − e^{−c₂m}`.
    pub design_rec: T,
    /// Column norms concentrate: `1 − 2e^{−c₄θ²m/τ⁴}`.
    pub column_norms: T,
}

fn clip01<T: Scalar>(x: T) -> T {
    x.max(T::zero()).min(T::one())
}

pub fn probability_floors<T: Scalar>(
    m: usize,
    n: usize,
    b: T,
    constants: &UniversalConstants<T>,
    theta: T,
) -> Result<ProbabilityFloors<T>> {
    constants.validate()?;
    if m == 0 || n < 2 {
        return Err(Error::InvalidParameter(format!("need m >= 1 and n >= 2 (m = {m}, n = {n})")));
    }
    if !(b >= T::zero()) || !(theta >= T::zero()) {
        return Err(Error::InvalidParameter("b and theta must be nonnegative".into()));
    }
    let (mf, nf) = (T::from_usize_lossy(m), T::from_usize_lossy(n));
    let one = T::one();
    let tail_a = (-mf).exp();
    let tail_b = one / (nf.powf(b) * (T::pi() * nf.ln()).sqrt());
    let tau4 = constants.tau.powi(4);
    Ok(ProbabilityFloors {
        noise_ball: clip01(one - tail_a),
        correlation: clip01(one - tail_b),
        noise_and_correlation: clip01(one - tail_a - tail_b),
        design_rec: clip01(one - (-constants.c2 * mf).exp()),
        column_norms: clip01(one - T::lit(2.0) * (-constants.c4 * theta * theta * mf / tau4).exp()),
    })
}

/// Right-hand sides of the sample-size conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleThresholds<T> {
    /// `c₁ζ(Σ)/φ_Σ² · (√(s+t) + a√s (as/t)^{1/q−1})² log n`.
    pub design_rec: T,
    /// `c₃τ⁴θ^{−2} log n` (infinite for `θ = 0`).
    pub column_norms: T,
    /// The larger of the two.
    pub required: T,
}

pub fn sample_size_thresholds<T: Scalar>(
    rec: &RecParams<T>,
    phi_sigma_half: T,
    zeta_sigma: T,
    n: usize,
    theta: T,
    constants: &UniversalConstants<T>,
) -> Result<SampleThresholds<T>> {
    constants.validate()?;
    positive(phi_sigma_half, "phi")?;
    positive(zeta_sigma, "zeta")?;
    check_q(rec.q)?;
    check_st(rec.s, rec.t)?;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n} must be at least 2")));
    }
    if !(theta >= T::zero()) {
        return Err(Error::InvalidParameter(format!("theta = {theta} must be nonnegative")));
    }
    let (s, t) = (T::from_usize_lossy(rec.s), T::from_usize_lossy(rec.t));
    let log_n = T::from_usize_lossy(n).ln();
    let a = rec.a;
    let shape = (s + t).sqrt() + a * s.sqrt() * (a * s / t).powf(T::one() / rec.q - T::one());
    let design_rec = constants.c1 * zeta_sigma / (phi_sigma_half * phi_sigma_half) * shape * shape * log_n;
    let column_norms = if theta > T::zero() {
        constants.c3 * constants.tau.powi(4) / (theta * theta) * log_n
    } else {
        T::lit(f64::INFINITY)
    };
    Ok(SampleThresholds { design_rec, column_norms, required: design_rec.max(column_norms) })
}

/// Every bound for one parameter set, as emitted by reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds<T> {
    pub epsilon: T,
    pub rho: T,
    pub lambda: T,
    pub cp_l2_bound: T,
    pub rp_prediction: T,
    pub rp_oracle: T,
    pub rp_l2: T,
    pub random_cp_l2: T,
    pub random_rp_prediction: T,
    pub random_rp_oracle: T,
    pub random_rp_l2: T,
    /// Floor for the event under which the regularized bounds hold.
    pub prob_floor: T,
}

/// Evaluates every theorem for `p`, sparsity `s`, `t`, the design modulus
/// `φ` (used with `a = 1` for the constrained bound and `a = p.a` for the
/// regularized ones) and the population modulus `φ_Σ`.
pub fn theorem_bounds<T: Scalar>(
    p: &TuningParams<T>,
    s: usize,
    t: usize,
    phi: T,
    phi_sigma_half: T,
) -> Result<TheoremBounds<T>> {
    let choice = lambda_default(p)?;
    let epsilon = epsilon_default(p.sigma, p.m);
    let cp = theorem1_bound(phi, p.q, s, t, epsilon)?;
    let rp = theorem2_bounds(phi, p.m, p.q, s, t, p.a, choice.lambda)?;
    let (rcp, rrp) = theorem34_bounds(phi_sigma_half, p.m, p.q, s, t, p.a, choice.lambda, epsilon)?;
    let floors = probability_floors(p.m, p.n, p.b, &UniversalConstants::default(), p.theta)?;
    Ok(TheoremBounds {
        epsilon,
        rho: choice.rho,
        lambda: choice.lambda,
        cp_l2_bound: cp,
        rp_prediction: rp.prediction,
        rp_oracle: rp.oracle,
        rp_l2: rp.l2,
        random_cp_l2: rcp,
        random_rp_prediction: rrp.prediction,
        random_rp_oracle: rrp.oracle,
        random_rp_l2: rrp.l2,
        prob_floor: floors.noise_and_correlation,
    })
}
