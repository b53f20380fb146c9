//! The stable branching mechanism `psi(l) = alpha*l + gamma*l^b` with
//! immigration `phi(l) = b*gamma*l^(b-1)`, and every deterministic scalar
//! derived from it.
//!
//! Quantities that overflow for extreme parameters (the extinction function
//! `c(t)` is of order `(1/t)^(1/(b-1))`, astronomically large when `b` is
//! close to 1) have log-space companions prefixed `ln_`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    SubCritical,
    Critical,
}

/// Parameters `(alpha, gamma, b)` of the stable mechanism.
///
/// `alpha > 0` selects the sub-critical (stationary) regime and `alpha == 0`
/// the critical one; the regime tag must agree with `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MechanismParams", into = "MechanismParams")]
pub struct StableMechanism {
    alpha: f64,
    gamma: f64,
    b: f64,
    regime: Regime,
}

/// Wire form of [`StableMechanism`]: `{alpha, gamma, b, regime}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MechanismParams {
    pub alpha: f64,
    pub gamma: f64,
    pub b: f64,
    pub regime: Regime,
}

impl TryFrom<MechanismParams> for StableMechanism {
    type Error = Error;

    fn try_from(p: MechanismParams) -> Result<Self> {
        StableMechanism::new(p.alpha, p.gamma, p.b, p.regime)
    }
}

impl From<StableMechanism> for MechanismParams {
    fn from(m: StableMechanism) -> Self {
        MechanismParams {
            alpha: m.alpha,
            gamma: m.gamma,
            b: m.b,
            regime: m.regime,
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(e^x - 1)` for `x > 0`.
pub(crate) fn ln_expm1(x: f64) -> f64 {
    if x > 1.0 {
        x + (-(-x).exp_m1()).ln()
    } else {
        x.exp_m1().ln()
    }
}

/// Falling factorial `b (b-1) ... (b-k+1)`.
pub(crate) fn falling(b: f64, k: usize) -> f64 {
    (0..k).map(|j| b - j as f64).product()
}

impl StableMechanism {
    pub fn new(alpha: f64, gamma: f64, b: f64, regime: Regime) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidMechanism(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !(b > 1.0 && b <= 2.0) {
            return Err(Error::InvalidMechanism(format!(
                "b must lie in (1, 2], got {b}"
            )));
        }
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidMechanism(format!(
                "alpha must be nonnegative, got {alpha}"
            )));
        }
        match (regime, alpha > 0.0) {
            (Regime::SubCritical, true) | (Regime::Critical, false) => {}
            _ => {
                return Err(Error::InvalidMechanism(format!(
                    "regime {regime:?} is inconsistent with alpha = {alpha}"
                )))
            }
        }
        Ok(StableMechanism {
            alpha,
            gamma,
            b,
            regime,
        })
    }

    pub fn sub_critical(alpha: f64, gamma: f64, b: f64) -> Result<Self> {
        Self::new(alpha, gamma, b, Regime::SubCritical)
    }

    pub fn critical(gamma: f64, b: f64) -> Result<Self> {
        Self::new(0.0, gamma, b, Regime::Critical)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `eta = b - 1`, in `(0, 1]`.
    pub fn eta(&self) -> f64 {
        self.b - 1.0
    }

    pub fn is_quadratic(&self) -> bool {
        self.b == 2.0
    }

    /// Immigration rate of the embedded GWI process, `b / (b - 1)`.
    pub fn immigration_rate(&self) -> f64 {
        self.b / self.eta()
    }

    fn require_sub_critical(&self, op: &'static str) -> Result<()> {
        match self.regime {
            Regime::SubCritical => Ok(()),
            Regime::Critical => Err(Error::UnsupportedRegime {
                op,
                regime: self.regime,
            }),
        }
    }

    /// `a = gamma / alpha`.
    pub fn scale_a(&self) -> Result<f64> {
        self.require_sub_critical("scale_a")?;
        Ok(self.gamma / self.alpha)
    }

    pub fn psi(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::domain("psi", "lambda", lambda));
        }
        Ok(self.alpha * lambda + self.gamma * lambda.powf(self.b))
    }

    /// k-th derivative of `psi`.
    pub fn psi_derivative(&self, k: usize, lambda: f64) -> Result<f64> {
        if k == 0 {
            return self.psi(lambda);
        }
        if !(lambda >= 0.0) {
            return Err(Error::domain("psi_derivative", "lambda", lambda));
        }
        if k == 1 {
            return Ok(self.alpha + self.gamma * self.b * lambda.powf(self.eta()));
        }
        if self.is_quadratic() {
            return Ok(if k == 2 { 2.0 * self.gamma } else { 0.0 });
        }
        if lambda == 0.0 {
            return Err(Error::domain("psi_derivative", "lambda", lambda));
        }
        Ok(self.gamma * falling(self.b, k) * lambda.powf(self.b - k as f64))
    }

    /// `ln |psi^(k)(e^ln_lambda)|` for `k >= 2`; `None` when the derivative
    /// vanishes identically (b = 2, k >= 3).
    pub fn ln_abs_psi_derivative(&self, k: usize, ln_lambda: f64) -> Option<f64> {
        debug_assert!(k >= 2);
        let coef = falling(self.b, k);
        if coef == 0.0 {
            return None;
        }
        Some(self.gamma.ln() + coef.abs().ln() + (self.b - k as f64) * ln_lambda)
    }

    pub fn phi(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::domain("phi", "lambda", lambda));
        }
        Ok(self.b * self.gamma * lambda.powf(self.eta()))
    }

    /// Extinction function `c(t) = u(+inf, t)`.
    pub fn extinction_c(&self, t: f64) -> Result<f64> {
        Ok(self.ln_extinction_c(t)?.exp())
    }

    pub fn ln_extinction_c(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::domain("extinction_c", "t", t));
        }
        let eta = self.eta();
        Ok(match self.regime {
            Regime::SubCritical => {
                (self.alpha.ln() - self.gamma.ln() - ln_expm1(eta * self.alpha * t)) / eta
            }
            Regime::Critical => -(self.gamma * eta * t).ln() / eta,
        })
    }

    /// Inverse of `c` by bisection on `ln c`, which is strictly decreasing.
    pub fn extinction_c_inverse(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain("extinction_c_inverse", "lambda", lambda));
        }
        let target = lambda.ln();
        let (mut lo, mut hi) = (1e-3, 1.0);
        while self.ln_extinction_c(lo)? < target {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::domain("extinction_c_inverse", "lambda", lambda));
            }
        }
        while self.ln_extinction_c(hi)? > target {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::domain("extinction_c_inverse", "lambda", lambda));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.ln_extinction_c(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// The flow `u(lambda, t)`; `lambda = +inf` gives `c(t)`.
    pub fn u_flow(&self, lambda: f64, t: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::domain("u_flow", "lambda", lambda));
        }
        if !(t >= 0.0) {
            return Err(Error::domain("u_flow", "t", t));
        }
        if lambda == 0.0 || t == 0.0 {
            return Ok(lambda);
        }
        if lambda.is_infinite() {
            return self.extinction_c(t);
        }
        let eta = self.eta();
        let (decay, coef) = match self.regime {
            Regime::SubCritical => (
                -self.alpha * t,
                self.gamma / self.alpha * -(-self.alpha * eta * t).exp_m1(),
            ),
            Regime::Critical => (0.0, self.gamma * eta * t),
        };
        let ln_l = lambda.ln();
        Ok((decay + ln_l - softplus(coef.ln() + eta * ln_l) / eta).exp())
    }

    /// Laplace transform of the stationary population size,
    /// `(1 + a l^(b-1))^(-b/(b-1))`.
    pub fn ubar(&self, lambda: f64) -> Result<f64> {
        self.require_sub_critical("ubar")?;
        if !(lambda >= 0.0) {
            return Err(Error::domain("ubar", "lambda", lambda));
        }
        if lambda == 0.0 {
            return Ok(1.0);
        }
        let eta = self.eta();
        let a = self.gamma / self.alpha;
        Ok((-(self.b / eta) * softplus(a.ln() + eta * lambda.ln())).exp())
    }

    /// `kappa = (alpha/gamma)^(1/(b-1))`, the limit of `c(t) e^(alpha t)`.
    pub fn kappa(&self) -> Result<f64> {
        self.require_sub_critical("kappa")?;
        Ok((self.alpha / self.gamma).powf(1.0 / self.eta()))
    }

    /// Exact term list of the n-th derivative of `ubar`.
    pub fn ubar_derivative(&self, n: usize) -> Result<DerivativeTable> {
        let a = self.scale_a()?;
        Ok(DerivativeTable::build(self.b, a, n))
    }

    /// Time change `R(t) = log(e^{(b-1) alpha t} / (e^{(b-1) alpha t} - 1))`.
    pub fn time_change_r(&self, t: f64) -> Result<f64> {
        self.require_sub_critical("time_change_r")?;
        if !(t > 0.0) {
            return Err(Error::domain("time_change_r", "t", t));
        }
        let x = self.eta() * self.alpha * t;
        Ok(-(-(-x).exp_m1()).ln())
    }

    pub fn time_change_r_inv(&self, u: f64) -> Result<f64> {
        self.require_sub_critical("time_change_r_inv")?;
        if !(u > 0.0) {
            return Err(Error::domain("time_change_r_inv", "u", u));
        }
        Ok(-(-(-u).exp_m1()).ln() / (self.eta() * self.alpha))
    }

    /// `|R'(t)| = (b-1) alpha / (e^{(b-1) alpha t} - 1)`.
    pub fn r_prime_abs(&self, t: f64) -> Result<f64> {
        self.require_sub_critical("r_prime_abs")?;
        if !(t > 0.0) {
            return Err(Error::domain("r_prime_abs", "t", t));
        }
        let x = self.eta() * self.alpha * t;
        Ok(self.eta() * self.alpha / x.exp_m1())
    }

    /// Calendar time `T(s) = -R^{-1}(s)` of GWI time `s`.
    pub fn calendar_time(&self, s: f64) -> Result<f64> {
        Ok(-self.time_change_r_inv(s)?)
    }

    fn check_unit(op: &'static str, r: f64) -> Result<()> {
        if (0.0..=1.0).contains(&r) {
            Ok(())
        } else {
            Err(Error::domain(op, "r", r))
        }
    }

    /// Offspring generating function `(b r - 1 + (1-r)^b) / (b-1)`.
    pub fn g_b(&self, r: f64) -> Result<f64> {
        Self::check_unit("g_b", r)?;
        if self.is_quadratic() {
            return Ok(r * r);
        }
        Ok((self.b * r - 1.0 + (1.0 - r).powf(self.b)) / self.eta())
    }

    /// Immigrant-count generating function `1 - (1-r)^(b-1)`.
    pub fn g_i(&self, r: f64) -> Result<f64> {
        Self::check_unit("g_i", r)?;
        if self.is_quadratic() {
            return Ok(r);
        }
        Ok(1.0 - (1.0 - r).powf(self.eta()))
    }

    /// Weights `(branching, immigration)` of the jump out of state `k`.
    pub fn jump_weights(&self, k: u64) -> (f64, f64) {
        let kb = k as f64 * self.eta();
        let total = kb + self.b;
        (kb / total, self.b / total)
    }

    /// Generating function of the jump size out of state `k`.
    pub fn g_k(&self, k: u64, r: f64) -> Result<f64> {
        let (wb, wi) = self.jump_weights(k);
        Ok(wb * self.g_b(r)? + wi * self.g_i(r)?)
    }

    /// `p_n` for `n = 0..=n_max`, by the ratio recurrence from `p_2 = b/2`.
    pub fn offspring_pmf_table(&self, n_max: usize) -> Vec<f64> {
        let mut p = vec![0.0; n_max + 1];
        if n_max >= 2 {
            p[2] = self.b / 2.0;
            for n in 2..n_max {
                p[n + 1] = p[n] * (n as f64 - self.b) / (n as f64 + 1.0);
            }
        }
        p
    }

    /// `q_n` for `n = 0..=n_max`, by the ratio recurrence from `q_1 = b - 1`.
    pub fn immigration_pmf_table(&self, n_max: usize) -> Vec<f64> {
        let eta = self.eta();
        let mut q = vec![0.0; n_max + 1];
        if n_max >= 1 {
            q[1] = eta;
            for n in 1..n_max {
                q[n + 1] = q[n] * (n as f64 - eta) / (n as f64 + 1.0);
            }
        }
        q
    }

    /// Single `p_n` in closed form, `b Gamma(n-b) / (Gamma(2-b) n!)`; agrees
    /// with the recurrence table.
    pub fn offspring_pmf(&self, n: usize) -> f64 {
        if n < 2 {
            return 0.0;
        }
        if self.is_quadratic() {
            return if n == 2 { 1.0 } else { 0.0 };
        }
        let b = self.b;
        (b.ln() + ln_gamma(n as f64 - b) - ln_gamma(2.0 - b) - ln_gamma(n as f64 + 1.0)).exp()
    }

    /// Single `q_n` in closed form, `eta Gamma(n-eta) / (Gamma(1-eta) n!)`.
    pub fn immigration_pmf(&self, n: usize) -> f64 {
        if n < 1 {
            return 0.0;
        }
        if self.is_quadratic() {
            return if n == 1 { 1.0 } else { 0.0 };
        }
        let eta = self.eta();
        (eta.ln() + ln_gamma(n as f64 - eta) - ln_gamma(1.0 - eta) - ln_gamma(n as f64 + 1.0))
            .exp()
    }
}

/// One term `C (1 + a l^eta)^p l^q` of a derivative table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTerm {
    pub coefficient: f64,
    pub power_outer: f64,
    pub power_lambda: f64,
}

/// Symbolic n-th derivative of `ubar(l) = (1 + a l^eta)^(-b/eta)`.
///
/// Differentiating `C (1+a l^eta)^p l^q` produces a term with exponents
/// `(p-1, q+eta-1)` and one with `(p, q-1)`. After `n` steps every surviving
/// term is indexed by the number `k` of outer differentiations, with
/// `p = -b/eta - k` and `q = k eta - n`, so like terms merge by `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTable {
    order: usize,
    scale: f64,
    eta: f64,
    terms: Vec<DerivativeTerm>,
}

impl DerivativeTable {
    pub(crate) fn build(b: f64, a: f64, n: usize) -> Self {
        let eta = b - 1.0;
        let outer = |k: usize| -b / eta - k as f64;
        let lam = |k: usize, order: usize| k as f64 * eta - order as f64;
        let mut coef = vec![1.0];
        for order in 0..n {
            let mut next = vec![0.0; coef.len() + 1];
            for (k, &c) in coef.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                next[k + 1] += c * outer(k) * a * eta;
                next[k] += c * lam(k, order);
            }
            coef = next;
        }
        let terms = coef
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(k, &c)| DerivativeTerm {
                coefficient: c,
                power_outer: outer(k),
                power_lambda: lam(k, n),
            })
            .collect();
        DerivativeTable {
            order: n,
            scale: a,
            eta,
            terms,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[DerivativeTerm] {
        &self.terms
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if lambda == 0.0 && self.order == 0 {
            return Ok(1.0);
        }
        if !(lambda > 0.0) {
            return Err(Error::domain("DerivativeTable::eval", "lambda", lambda));
        }
        let (sign, ln_abs) = self.ln_abs_eval(lambda.ln())?;
        Ok(sign * ln_abs.exp())
    }

    /// `(sign, ln |value|)` at `lambda = e^ln_lambda`, summed in log space.
    pub fn ln_abs_eval(&self, ln_lambda: f64) -> Result<(f64, f64)> {
        let outer = softplus(self.scale.ln() + self.eta * ln_lambda);
        let logs: Vec<(f64, f64)> = self
            .terms
            .iter()
            .map(|t| {
                (
                    t.coefficient.signum(),
                    t.coefficient.abs().ln() + t.power_outer * outer + t.power_lambda * ln_lambda,
                )
            })
            .collect();
        let lse = |sign: f64| -> f64 {
            let m = logs
                .iter()
                .filter(|(s, _)| *s == sign)
                .map(|(_, l)| *l)
                .fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                return m;
            }
            m + logs
                .iter()
                .filter(|(s, _)| *s == sign)
                .map(|(_, l)| (l - m).exp())
                .sum::<f64>()
                .ln()
        };
        let (pos, neg) = (lse(1.0), lse(-1.0));
        let out = if neg == f64::NEG_INFINITY {
            (1.0, pos)
        } else if pos == f64::NEG_INFINITY {
            (-1.0, neg)
        } else if pos >= neg {
            (1.0, pos + (-(neg - pos).exp()).ln_1p())
        } else {
            (-1.0, neg + (-(pos - neg).exp()).ln_1p())
        };
        if !out.1.is_finite() {
            return Err(Error::Evaluation {
                order: self.order,
                lambda: ln_lambda.exp(),
            });
        }
        Ok(out)
    }
}
