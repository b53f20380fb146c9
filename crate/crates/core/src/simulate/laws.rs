//! Exact samplers for the discrete jump laws and the continuous limit laws.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Beta, Exp1, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::mechanism::StableMechanism;

const TABLE_SIZE: usize = 4096;

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Geometric on `{1, 2, ...}` with success probability `p`, saturating at
/// `u64::MAX / 4`.
fn geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let k = (open01(rng).ln() / (-p).ln_1p()).floor();
    if k >= (u64::MAX / 4) as f64 {
        u64::MAX / 4
    } else {
        1 + k as u64
    }
}

/// Inverse-CDF table for the head of a heavy-tailed law plus the exact
/// tail mass beyond it.
#[derive(Debug, Clone)]
struct HeadTable {
    /// `cdf[n] = P(X <= n)` restricted to the head.
    cdf: Vec<f64>,
    tail: f64,
}

impl HeadTable {
    fn new(pmf: &[f64], tail: f64) -> Self {
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        HeadTable { cdf, tail }
    }

    /// `None` means the draw falls in the tail `X > N`.
    fn lookup(&self, u: f64) -> Option<u64> {
        if u < self.tail {
            return None;
        }
        let v = u - self.tail;
        let idx = self.cdf.partition_point(|&c| c <= v);
        Some(idx.min(self.cdf.len() - 1) as u64)
    }

    fn top(&self) -> u64 {
        (self.cdf.len() - 1) as u64
    }
}

/// Offspring (`g_B`) and immigrant-count (`g_I`) laws of the GWI process.
///
/// The head `n <= 4096` is sampled by inverse CDF on memoized prefix sums.
/// The tail is sampled exactly: the immigration law is a geometric mixture
/// with a Beta(b-1, 2-b) success probability, so conditionally on exceeding
/// `N` it is `N + Geometric(P)` with `P ~ Beta(b-1, N+2-b)`; the offspring
/// tail is obtained from it by rejection, using `n p_n = b/(b-1) q_{n-1}`.
#[derive(Debug, Clone)]
pub struct JumpLaws {
    mech: StableMechanism,
    offspring: HeadTable,
    immigration: HeadTable,
    immigration_tail: Option<Beta<f64>>,
    offspring_tail: Option<Beta<f64>>,
}

impl JumpLaws {
    pub fn new(mech: &StableMechanism) -> Self {
        let eta = mech.eta();
        let p = mech.offspring_pmf_table(TABLE_SIZE);
        let q = mech.immigration_pmf_table(TABLE_SIZE);
        let (p_tail, q_tail) = if mech.is_quadratic() {
            (0.0, 0.0)
        } else {
            // P(offspring > N) = q_N / eta; P(immigration > N) = prod (1 - eta/i).
            let n = TABLE_SIZE as f64;
            let surv = (ln_gamma(n + 1.0 - eta) - ln_gamma(1.0 - eta) - ln_gamma(n + 1.0)).exp();
            (q[TABLE_SIZE] / eta, surv)
        };
        let beta = |n: usize| {
            (!mech.is_quadratic()).then(|| Beta::new(eta, n as f64 + 1.0 - eta).unwrap())
        };
        JumpLaws {
            mech: *mech,
            offspring: HeadTable::new(&p, p_tail),
            immigration: HeadTable::new(&q, q_tail),
            immigration_tail: beta(TABLE_SIZE),
            offspring_tail: beta(TABLE_SIZE - 1),
        }
    }

    pub fn mechanism(&self) -> &StableMechanism {
        &self.mech
    }

    /// Immigration-law draw conditioned on exceeding `n`.
    fn sibuya_above<R: Rng + ?Sized>(&self, beta: &Beta<f64>, n: u64, rng: &mut R) -> u64 {
        n.saturating_add(geometric(rng.sample(beta), rng))
    }

    /// Draw from `p` (support `>= 2`).
    pub fn sample_offspring<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.mech.is_quadratic() {
            return 2;
        }
        if let Some(n) = self.offspring.lookup(rng.random()) {
            return n.max(2);
        }
        let top = self.offspring.top();
        let beta = self.offspring_tail.as_ref().unwrap();
        loop {
            let n = self.sibuya_above(beta, top - 1, rng).saturating_add(1);
            if open01(rng) * n as f64 <= (top + 1) as f64 {
                return n;
            }
        }
    }

    /// Draw from `q` (support `>= 1`).
    pub fn sample_immigration_size<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.mech.is_quadratic() {
            return 1;
        }
        match self.immigration.lookup(rng.random()) {
            Some(n) => n.max(1),
            None => self.sibuya_above(
                self.immigration_tail.as_ref().unwrap(),
                self.immigration.top(),
                rng,
            ),
        }
    }

    /// Size of the jump out of state `k`: a branching event adds
    /// `offspring - 1`, an immigration event adds the immigrant count.
    pub fn sample_jump<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> u64 {
        let (w_branch, _) = self.mech.jump_weights(k);
        if rng.random::<f64>() < w_branch {
            self.sample_offspring(rng) - 1
        } else {
            self.sample_immigration_size(rng)
        }
    }
}

/// `sin(eta u) / sin(u)^{1/eta} * sin((1-eta) u)^{(1-eta)/eta}`.
fn kanter(eta: f64, u: f64) -> f64 {
    let one = (eta * u).sin() / u.sin().powf(1.0 / eta);
    if eta == 1.0 {
        return one;
    }
    one * ((1.0 - eta) * u).sin().powf((1.0 - eta) / eta)
}

/// Positive stable `sigma` with `E[exp(-x sigma)] = exp(-x^index)`, by
/// Kanter's representation; index 1 is the constant 1.
pub fn sample_positive_stable<R: Rng + ?Sized>(index: f64, rng: &mut R) -> Result<f64> {
    if !(index > 0.0 && index <= 1.0) {
        return Err(Error::domain("sample_positive_stable", "index", index));
    }
    if index == 1.0 {
        return Ok(1.0);
    }
    let u = PI * open01(rng);
    let e = exp1(rng);
    Ok(kanter(index, u) * e.powf(-(1.0 - index) / index))
}

/// Martingale limit `W = G^{1/(b-1)} sigma` with `G ~ Gamma(b/(b-1), 1)`.
pub fn sample_w<R: Rng + ?Sized>(mech: &StableMechanism, rng: &mut R) -> f64 {
    let eta = mech.eta();
    let g: f64 = rng.sample(Gamma::new(mech.immigration_rate(), 1.0).unwrap());
    let sigma = sample_positive_stable(eta, rng).unwrap();
    g.powf(1.0 / eta) * sigma
}

/// Limit `lim e^{-s/(b-1)} Y_s` of the pure GW process (no immigration)
/// started from one individual; Laplace transform `1 - x (1 + x^eta)^{-1/eta}`.
///
/// Sampled as `E^{1/eta} a(U) G^{-(1-eta)/eta}` with `G ~ Gamma(1/eta)`,
/// `E ~ Exp(1)` and `U` on `(0, pi)` with density proportional to `1/a(U)`
/// (rejection from uniform, `a` being increasing). Exp(1) when `b = 2`.
pub fn sample_w_single<R: Rng + ?Sized>(mech: &StableMechanism, rng: &mut R) -> f64 {
    let eta = mech.eta();
    let e = exp1(rng);
    if mech.is_quadratic() {
        return e;
    }
    let a0 = eta * (1.0 - eta).powf((1.0 - eta) / eta);
    let a = loop {
        let u = PI * open01(rng);
        let a = kanter(eta, u);
        if open01(rng) * a <= a0 {
            break a;
        }
    };
    let g: f64 = rng.sample(Gamma::new(1.0 / eta, 1.0).unwrap());
    e.powf(1.0 / eta) * a * g.powf(-(1.0 - eta) / eta)
}

/// Spectrally positive `b`-stable `S` with `E[exp(-y S)] = exp(y^b / (b-1))`
/// (Chambers-Mallows-Stuck with skewness 1). The centred sum of `k` draws of
/// [`sample_w_single`] is close in law to `k^{1/b} S` for large `k`.
pub fn sample_centered_stable<R: Rng + ?Sized>(mech: &StableMechanism, rng: &mut R) -> f64 {
    let alpha = mech.b();
    let eta = mech.eta();
    if mech.is_quadratic() {
        // exp(y^2) is the Laplace transform of N(0, 2).
        let n: f64 = rng.sample(rand_distr::StandardNormal);
        return n * 2f64.sqrt();
    }
    let tan = (PI * alpha / 2.0).tan();
    let bb = tan.atan() / alpha;
    let sc = (1.0 + tan * tan).powf(1.0 / (2.0 * alpha));
    let v = PI * (open01(rng) - 0.5);
    let w = exp1(rng);
    let x = sc * (alpha * (v + bb)).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * (v + bb)).cos() / w).powf((1.0 - alpha) / alpha);
    let scale = ((PI * alpha / 2.0).cos().abs() / eta).powf(1.0 / alpha);
    scale * x
}

/// Sum of `k` iid [`sample_w_single`] draws; above `exact_limit` summands
/// the stable central limit `k + k^{1/b} S` replaces the explicit sum.
pub fn sample_w_single_sum<R: Rng + ?Sized>(
    mech: &StableMechanism,
    k: u64,
    exact_limit: u64,
    rng: &mut R,
) -> f64 {
    if k <= exact_limit {
        return (0..k).map(|_| sample_w_single(mech, rng)).sum();
    }
    let kf = k as f64;
    (kf + kf.powf(1.0 / mech.b()) * sample_centered_stable(mech, rng)).max(0.0)
}
