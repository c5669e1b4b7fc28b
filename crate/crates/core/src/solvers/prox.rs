//! Scalar penalties and their proximal maps.
//!
//! Every penalty is written as `λ·ρ(x)`; [`prox_penalty`] minimizes
//! `½(x − v)² + τ·ρ(x)` so that a proximal gradient step with step size `η`
//! uses `τ = ηλ`. SCAD and MCP are not positively homogeneous in `λ`, so their
//! `ρ` is `p_λ(x)/λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_MCP_GAMMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Penalty<T> {
    /// Number of nonzeros.
    L0,
    /// `|x|^q` with `0 < q < 1`.
    Lq { q: T },
    L1,
    Scad { a: T },
    Mcp { gamma: T },
}

impl<T: Scalar> Penalty<T> {
    pub fn is_convex(&self) -> bool {
        matches!(self, Penalty::L1)
    }

    pub fn name(&self) -> String {
        match self {
            Penalty::L0 => "l0".into(),
            Penalty::Lq { q } => format!("lq({q})"),
            Penalty::L1 => "l1".into(),
            Penalty::Scad { a } => format!("scad({a})"),
            Penalty::Mcp { gamma } => format!("mcp({gamma})"),
        }
    }
}

/// A penalty together with its regularization level `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec<T> {
    pub penalty: Penalty<T>,
    pub lambda: T,
}

impl<T: Scalar> PenaltySpec<T> {
    pub fn new(penalty: Penalty<T>, lambda: T) -> Result<Self> {
        let spec = PenaltySpec { penalty, lambda };
        spec.validate()?;
        Ok(spec)
    }

    pub fn l0(lambda: T) -> Result<Self> {
        Self::new(Penalty::L0, lambda)
    }

    pub fn l1(lambda: T) -> Result<Self> {
        Self::new(Penalty::L1, lambda)
    }

    /// `|x|^q`; `q = 1` is mapped to [`Penalty::L1`].
    pub fn lq(q: T, lambda: T) -> Result<Self> {
        if q == T::one() {
            return Self::l1(lambda);
        }
        Self::new(Penalty::Lq { q }, lambda)
    }

    pub fn scad(a: T, lambda: T) -> Result<Self> {
        Self::new(Penalty::Scad { a }, lambda)
    }

    pub fn mcp(gamma: T, lambda: T) -> Result<Self> {
        Self::new(Penalty::Mcp { gamma }, lambda)
    }

    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        Self::new(self.penalty, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda = {} must be positive", self.lambda)));
        }
        match self.penalty {
            Penalty::Lq { q } if !(q > T::zero() && q < T::one()) => {
                Err(Error::InvalidParameter(format!("lq penalty needs 0 < q < 1, got {q}")))
            }
            Penalty::Scad { a } if !(a > T::lit(2.0)) || !a.is_finite() => {
                Err(Error::InvalidParameter(format!("scad needs a > 2, got {a}")))
            }
            Penalty::Mcp { gamma } if !(gamma > T::one()) || !gamma.is_finite() => {
                Err(Error::InvalidParameter(format!("mcp needs gamma > 1, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// `ρ(x)`, so that the penalty term is `λ·ρ(x)`.
    pub fn rho(&self, x: T) -> T {
        let ax = x.abs();
        let lam = self.lambda;
        match self.penalty {
            Penalty::L0 => {
                if ax > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Penalty::Lq { q } => {
                if ax > T::zero() {
                    ax.powf(q)
                } else {
                    T::zero()
                }
            }
            Penalty::L1 => ax,
            Penalty::Scad { a } => scad_value(ax, lam, a) / lam,
            Penalty::Mcp { gamma } => mcp_value(ax, lam, gamma) / lam,
        }
    }

    /// `λ Σ ρ(β_i)`.
    pub fn value(&self, beta: &[T]) -> T {
        self.lambda * beta.iter().fold(T::zero(), |acc, &b| acc + self.rho(b))
    }

    /// Smallest `|v|` at which `prox(v, τ)` is nonzero. For SCAD and MCP this
    /// assumes `τ/λ` below `a − 1` (resp. `γ`), which covers every step size a
    /// proximal gradient method uses in practice.
    pub fn zero_threshold(&self, tau: T) -> T {
        match self.penalty {
            Penalty::L0 => (T::lit(2.0) * tau).sqrt(),
            Penalty::Lq { q } => lq_threshold(tau, q),
            Penalty::L1 | Penalty::Scad { .. } | Penalty::Mcp { .. } => tau,
        }
    }
}

fn scad_value<T: Scalar>(x: T, lam: T, a: T) -> T {
    let two = T::lit(2.0);
    if x <= lam {
        lam * x
    } else if x <= a * lam {
        (two * a * lam * x - x * x - lam * lam) / (two * (a - T::one()))
    } else {
        (a + T::one()) * lam * lam / two
    }
}

fn mcp_value<T: Scalar>(x: T, lam: T, gamma: T) -> T {
    let two = T::lit(2.0);
    if x <= gamma * lam {
        lam * x - x * x / (two * gamma)
    } else {
        gamma * lam * lam / two
    }
}

/// Zero threshold of `½(x − v)² + τ|x|^q`:
/// `(2 − q)/(2(1 − q)) · (2τ(1 − q))^{1/(2−q)}`.
fn lq_threshold<T: Scalar>(tau: T, q: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    (two - q) / (two * (one - q)) * (two * tau * (one - q)).powf(one / (two - q))
}

/// Returns the global minimizer of `½(x − v)² + τ·ρ(x)`.
pub fn prox_penalty<T: Scalar>(v: T, tau: T, pen: &PenaltySpec<T>) -> Result<T> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!("tau = {tau} must be positive")));
    }
    if !v.is_finite() {
        return Err(Error::NonFinite("prox argument"));
    }
    pen.validate()?;
    Ok(prox_unchecked(v, tau, pen))
}

/// [`prox_penalty`] without argument validation, for inner loops.
pub(crate) fn prox_unchecked<T: Scalar>(v: T, tau: T, pen: &PenaltySpec<T>) -> T {
    let u = v.abs();
    let x = match pen.penalty {
        Penalty::L0 => {
            if u * u > T::lit(2.0) * tau {
                u
            } else {
                T::zero()
            }
        }
        Penalty::L1 => (u - tau).max(T::zero()),
        Penalty::Lq { q } => prox_lq_abs(u, tau, q),
        Penalty::Scad { a } => prox_scad_abs(u, tau / pen.lambda, pen.lambda, a),
        Penalty::Mcp { gamma } => prox_mcp_abs(u, tau / pen.lambda, pen.lambda, gamma),
    };
    if v < T::zero() {
        -x
    } else {
        x
    }
}

fn prox_lq_abs<T: Scalar>(u: T, tau: T, q: T) -> T {
    if u <= lq_threshold(tau, q) {
        return T::zero();
    }
    let x = if q == T::lit(0.5) {
        half_threshold(u, tau)
    } else if q == T::lit(2.0 / 3.0) {
        two_thirds_threshold(u, tau)
    } else {
        lq_newton(u, tau, q)
    };
    // The closed forms are exact up to rounding; keep 0 if it is no worse.
    // Objective difference to x = 0, written without cancellation.
    if x > T::zero() && x * (x * T::lit(0.5) - u) + tau * x.powf(q) <= T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Half thresholding: largest root of `x − u + τ/(2√x) = 0`, i.e.
/// `x = (2/3)u(1 + cos(2π/3 − (2/3)φ))`, `cos φ = (τ/4)(u/3)^{−3/2}`.
fn half_threshold<T: Scalar>(u: T, tau: T) -> T {
    let three = T::lit(3.0);
    let c = (tau / T::lit(4.0)) * (u / three).powf(T::lit(-1.5));
    let phi = c.min(T::one()).acos();
    T::lit(2.0 / 3.0) * u * (T::one() + (T::two_pi() / three - T::lit(2.0 / 3.0) * phi).cos())
}

/// Closed-form ℓ_{2/3} thresholding: with `μ = 2τ`,
/// `A = (2/√3) μ^{1/4} cosh(φ/3)^{1/2}`, `cosh φ = (27/16) u² μ^{−3/2}`,
/// `x = ((A + √(2u/A − A²))/2)³`.
fn two_thirds_threshold<T: Scalar>(u: T, tau: T) -> T {
    let mu = T::lit(2.0) * tau;
    let c = T::lit(27.0 / 16.0) * u * u * mu.powf(T::lit(-1.5));
    let phi = c.max(T::one()).acosh();
    let a = T::lit(2.0) / T::lit(3.0).sqrt() * mu.powf(T::lit(0.25)) * (phi / T::lit(3.0)).cosh().sqrt();
    let inner = (T::lit(2.0) * u / a - a * a).max(T::zero());
    let z = (a + inner.sqrt()) / T::lit(2.0);
    z * z * z
}

/// Largest root of `g(x) = x − u + τq x^{q−1}` by Newton from `u`, safeguarded
/// by bisection on `[x*, u]` where `x*` minimizes `g`.
fn lq_newton<T: Scalar>(u: T, tau: T, q: T) -> T {
    let one = T::one();
    let g = |x: T| x - u + tau * q * x.powf(q - one);
    let dg = |x: T| one + tau * q * (q - one) * x.powf(q - T::lit(2.0));
    let mut lo = (tau * q * (one - q)).powf(one / (T::lit(2.0) - q));
    let mut hi = u;
    if lo >= hi || g(lo) > T::zero() {
        return T::zero();
    }
    let mut x = hi;
    for _ in 0..200 {
        let gx = g(x);
        if gx > T::zero() {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - gx / dg(x);
        if !(next > lo && next < hi) {
            next = (lo + hi) * T::lit(0.5);
        }
        if (next - x).abs() <= T::eps() * x.max(T::one()) {
            x = next;
            break;
        }
        x = next;
    }
    x
}

/// Picks the best of a few candidates for `½(x − u)² + η·p(x)` on `x ≥ 0`,
/// comparing objective differences to `x = 0` to avoid cancellation.
fn best_candidate<T: Scalar>(u: T, eta: T, p: impl Fn(T) -> T, cands: &[T]) -> T {
    let f = |x: T| x * (x * T::lit(0.5) - u) + eta * p(x);
    let mut best = T::zero();
    let mut fbest = f(best);
    for &c in cands {
        let fc = f(c);
        if fc < fbest {
            best = c;
            fbest = fc;
        }
    }
    best
}

fn clamp<T: Scalar>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}

/// SCAD prox for `½(x − u)² + η·p_λ(x)`, any `η > 0`: minimize on each
/// piece and compare.
fn prox_scad_abs<T: Scalar>(u: T, eta: T, lam: T, a: T) -> T {
    let one = T::one();
    let al = a * lam;
    let curv = one - eta / (a - one);
    let mid = if curv > T::zero() {
        clamp((u - eta * al / (a - one)) / curv, lam, al)
    } else {
        lam
    };
    let cands = [clamp(u - eta * lam, T::zero(), lam), lam, al, u.max(al), mid];
    best_candidate(u, eta, |x| scad_value(x, lam, a), &cands)
}

/// MCP prox for `½(x − u)² + η·p_λ(x)`.
fn prox_mcp_abs<T: Scalar>(u: T, eta: T, lam: T, gamma: T) -> T {
    let gl = gamma * lam;
    let curv = T::one() - eta / gamma;
    let inner = if curv > T::zero() {
        clamp((u - eta * lam) / curv, T::zero(), gl)
    } else {
        gl
    };
    let cands = [gl, u.max(gl), inner];
    best_candidate(u, eta, |x| mcp_value(x, lam, gamma), &cands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force minimizer: dense grid on `[−|v|−1, |v|+1]` (plus 0), then
    /// bisection refinement around every discrete local minimum.
    fn oracle(v: f64, tau: f64, pen: &PenaltySpec<f64>, points: usize) -> (f64, f64) {
        let f = |x: f64| 0.5 * (x - v).powi(2) + tau * pen.rho(x);
        let r = v.abs() + 1.0;
        let h = 2.0 * r / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| -r + h * i as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        let mut best = (0.0, f(0.0));
        for i in 0..points {
            let left = if i > 0 { vals[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < points { vals[i + 1] } else { f64::INFINITY };
            if vals[i] <= left && vals[i] <= right {
                // bisection on the sign of a central difference
                let (mut a, mut b) = (grid[i] - h, grid[i] + h);
                let d = 1e-7 * (1.0 + v.abs());
                for _ in 0..80 {
                    let c = 0.5 * (a + b);
                    if f(c + d) > f(c - d) {
                        b = c;
                    } else {
                        a = c;
                    }
                }
                for x in [grid[i], 0.5 * (a + b)] {
                    if f(x) < best.1 {
                        best = (x, f(x));
                    }
                }
            }
        }
        best
    }

    fn all_penalties(lambda: f64) -> Vec<PenaltySpec<f64>> {
        vec![
            PenaltySpec::l0(lambda).unwrap(),
            PenaltySpec::l1(lambda).unwrap(),
            PenaltySpec::lq(0.5, lambda).unwrap(),
            PenaltySpec::lq(2.0 / 3.0, lambda).unwrap(),
            PenaltySpec::lq(0.3, lambda).unwrap(),
            PenaltySpec::scad(DEFAULT_SCAD_A, lambda).unwrap(),
            PenaltySpec::mcp(DEFAULT_MCP_GAMMA, lambda).unwrap(),
        ]
    }

    #[test]
    fn spec_examples() {
        assert_eq!(prox_penalty(3.0, 1.0, &PenaltySpec::l1(1.0).unwrap()).unwrap(), 2.0);
        assert_eq!(prox_penalty(3.0, 1.0, &PenaltySpec::l0(1.0).unwrap()).unwrap(), 3.0);
        let half = PenaltySpec::lq(0.5, 1.0).unwrap();
        let got = prox_penalty(3.0, 1.0, &half).unwrap();
        let (want, _) = oracle(3.0, 1.0, &half, 1_000_001);
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        // stationarity of the interior root: x − 3 + 1/(2√x) = 0
        assert!((got - 3.0 + 0.5 / got.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hard_threshold_boundary() {
        let pen = PenaltySpec::l0(1.0).unwrap();
        assert_eq!(prox_penalty(1.4, 1.0, &pen).unwrap(), 0.0);
        assert_eq!(prox_penalty(1.5, 1.0, &pen).unwrap(), 1.5);
        assert_eq!(prox_penalty(-1.5, 1.0, &pen).unwrap(), -1.5);
    }

    #[test]
    fn lq_thresholds_match_known_constants() {
        // q = 1/2: (3/2) τ^{2/3}; q = 2/3: (2/3)(3 (2τ)^3)^{1/4}
        let t: f64 = 0.7;
        assert_relative_eq!(lq_threshold(t, 0.5), 1.5 * t.powf(2.0 / 3.0), max_relative = 1e-14);
        assert_relative_eq!(
            lq_threshold(t, 2.0 / 3.0),
            2.0 / 3.0 * (3.0 * (2.0 * t).powi(3)).powf(0.25),
            max_relative = 1e-12
        );
    }

    #[test]
    fn closed_forms_agree_with_newton() {
        for &(u, tau) in &[(3.0, 1.0), (1.2, 0.3), (10.0, 4.0), (0.51, 0.01)] {
            let h = half_threshold(u, tau);
            assert_relative_eq!(h, lq_newton(u, tau, 0.5), max_relative = 1e-10);
            let t = two_thirds_threshold(u, tau);
            assert_relative_eq!(t, lq_newton(u, tau, 2.0 / 3.0), max_relative = 1e-10);
        }
    }

    #[test]
    fn matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let v: f64 = rng.random_range(-5.0..5.0);
            let tau: f64 = rng.random_range(0.01..3.0);
            let lambda: f64 = rng.random_range(0.1..2.0);
            for pen in all_penalties(lambda) {
                let got = prox_penalty(v, tau, &pen).unwrap();
                let (x, fx) = oracle(v, tau, &pen, 4001);
                let fgot = 0.5 * (got - v).powi(2) + tau * pen.rho(got);
                assert!(
                    (got - x).abs() < 1e-6 || fgot <= fx + 1e-9,
                    "{pen:?} v={v} tau={tau}: prox {got} ({fgot}) vs oracle {x} ({fx})"
                );
            }
        }
    }

    #[test]
    fn sign_symmetry() {
        for pen in all_penalties(0.8) {
            for &v in &[0.3, 1.1, 2.5, 4.9] {
                let p = prox_penalty(v, 0.9, &pen).unwrap();
                assert_eq!(prox_penalty(-v, 0.9, &pen).unwrap(), -p);
            }
        }
    }

    #[test]
    fn zero_threshold_is_sharp() {
        for pen in all_penalties(1.3) {
            let tau = 0.6;
            let h = pen.zero_threshold(tau);
            assert_eq!(prox_penalty(h * (1.0 - 1e-9), tau, &pen).unwrap(), 0.0, "{pen:?}");
            assert!(prox_penalty(h * (1.0 + 1e-9), tau, &pen).unwrap() > 0.0, "{pen:?}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PenaltySpec::lq(1.5, 1.0).is_err());
        assert!(PenaltySpec::scad(2.0, 1.0).is_err());
        assert!(PenaltySpec::mcp(1.0, 1.0).is_err());
        assert!(PenaltySpec::l1(0.0).is_err());
        assert!(prox_penalty(1.0, 0.0, &PenaltySpec::l1(1.0).unwrap()).is_err());
        assert!(prox_penalty(f64::NAN, 1.0, &PenaltySpec::l1(1.0).unwrap()).is_err());
        assert_eq!(PenaltySpec::lq(1.0, 0.2).unwrap().penalty, Penalty::L1);
    }
}
