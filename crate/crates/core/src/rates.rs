//! Transition rates of the ancestral process `M0`: births forward in time,
//! deaths backward, their quadratic and critical specializations, the
//! Bolthausen-Sznitman limits, and the exact generating functions used as
//! oracles for the rates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::mechanism::{falling, ln_expm1, DerivativeTable, Regime, StableMechanism};

/// A jump `n -> m` queried at distance `t > 0` from the observation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateQuery {
    pub n: usize,
    pub m: usize,
    pub t: f64,
}

impl RateQuery {
    pub fn new(n: usize, m: usize, t: f64) -> Self {
        RateQuery { n, m, t }
    }

    fn check_birth(&self, op: &'static str) -> Result<()> {
        if self.m <= self.n {
            return Err(Error::contract(
                op,
                format!("birth needs m > n, got n = {}, m = {}", self.n, self.m),
            ));
        }
        self.check_t(op)
    }

    fn check_death(&self, op: &'static str) -> Result<()> {
        if self.n <= self.m {
            return Err(Error::contract(
                op,
                format!("death needs n > m, got n = {}, m = {}", self.n, self.m),
            ));
        }
        self.check_t(op)
    }

    fn check_t(&self, op: &'static str) -> Result<()> {
        if self.t > 0.0 && self.t.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(op, "t", self.t))
        }
    }
}

fn require(mech: &StableMechanism, op: &'static str, regime: Regime) -> Result<()> {
    if mech.regime() == regime {
        Ok(())
    } else {
        Err(Error::UnsupportedRegime {
            op,
            regime: mech.regime(),
        })
    }
}

/// Birth rate `q^b_{n,m}(-t)`:
/// `(m+1)/(m-n+1)! * |b(b-1)...(b-m+n)| * alpha / (e^{(b-1) alpha t} - 1)`.
pub fn birth_rate(mech: &StableMechanism, q: RateQuery) -> Result<f64> {
    require(mech, "birth_rate", Regime::SubCritical)?;
    q.check_birth("birth_rate")?;
    let j = q.m - q.n;
    let coef = falling(mech.b(), j + 1);
    if coef == 0.0 {
        return Ok(0.0);
    }
    let eta = mech.eta();
    let ln = ((q.m + 1) as f64).ln() - ln_factorial((j + 1) as u64)
        + coef.abs().ln()
        + mech.alpha().ln()
        - ln_expm1(eta * mech.alpha() * q.t);
    Ok(ln.exp())
}

/// Birth rate from the generic expression
/// `(m+1)/(m-n+1)! * c(t)^{m-n} |psi^{(m-n+1)}(c(t))|`.
pub fn birth_rate_generic(mech: &StableMechanism, q: RateQuery) -> Result<f64> {
    require(mech, "birth_rate_generic", Regime::SubCritical)?;
    q.check_birth("birth_rate_generic")?;
    let j = q.m - q.n;
    let ln_c = mech.ln_extinction_c(q.t)?;
    let Some(ln_psi) = mech.ln_abs_psi_derivative(j + 1, ln_c) else {
        return Ok(0.0);
    };
    let ln = ((q.m + 1) as f64).ln() - ln_factorial((j + 1) as u64) + j as f64 * ln_c + ln_psi;
    Ok(ln.exp())
}

/// Rate of `n -> m` in the time-changed (GWI) clock: `(m+1) p_{m-n+1}`.
pub fn time_changed_birth_rate(mech: &StableMechanism, n: usize, m: usize) -> Result<f64> {
    if m <= n {
        return Err(Error::contract(
            "time_changed_birth_rate",
            format!("birth needs m > n, got n = {n}, m = {m}"),
        ));
    }
    Ok((m + 1) as f64 * mech.offspring_pmf(m - n + 1))
}

/// Total escape rate out of `n` at calendar time `-t`,
/// `(n + b/(b-1)) |R'(t)|`.
pub fn birth_escape_rate(mech: &StableMechanism, n: usize, t: f64) -> Result<f64> {
    Ok((n as f64 + mech.immigration_rate()) * mech.r_prime_abs(t)?)
}

/// Derivative tables of `ubar` up to a fixed order, for repeated death-rate
/// queries.
#[derive(Debug, Clone)]
pub struct DeathRates {
    mech: StableMechanism,
    tables: Vec<DerivativeTable>,
}

impl DeathRates {
    pub fn new(mech: &StableMechanism, max_state: usize) -> Result<Self> {
        let tables = (0..=max_state)
            .map(|n| mech.ubar_derivative(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(DeathRates {
            mech: *mech,
            tables,
        })
    }

    pub fn max_state(&self) -> usize {
        self.tables.len() - 1
    }

    pub fn mechanism(&self) -> &StableMechanism {
        &self.mech
    }

    /// `q^d_{n,m}(t) = C(n+1,m) |ubar^(m)(c)| / |ubar^(n)(c)| |psi^(n-m+1)(c)|`
    /// with `c = c(t)`, assembled in log space.
    pub fn rate(&self, q: RateQuery) -> Result<f64> {
        q.check_death("death_rate")?;
        if q.n > self.max_state() {
            return Err(Error::contract(
                "death_rate",
                format!("state {} beyond table size {}", q.n, self.max_state()),
            ));
        }
        let ln_c = self.mech.ln_extinction_c(q.t)?;
        let Some(ln_psi) = self.mech.ln_abs_psi_derivative(q.n - q.m + 1, ln_c) else {
            return Ok(0.0);
        };
        let (_, ln_um) = self.tables[q.m].ln_abs_eval(ln_c)?;
        let (_, ln_un) = self.tables[q.n].ln_abs_eval(ln_c)?;
        let ln = ln_binomial((q.n + 1) as u64, q.m as u64) + ln_um - ln_un + ln_psi;
        if !ln.is_finite() {
            return Err(Error::Evaluation {
                order: q.n,
                lambda: ln_c.exp(),
            });
        }
        Ok(ln.exp())
    }

    /// All rates `n -> m` for `m = 0..n`, indexed by `m`.
    pub fn rates_from(&self, n: usize, t: f64) -> Result<Vec<f64>> {
        (0..n).map(|m| self.rate(RateQuery::new(n, m, t))).collect()
    }

    pub fn total(&self, n: usize, t: f64) -> Result<f64> {
        Ok(self.rates_from(n, t)?.iter().sum())
    }
}

/// Death rate `q^d_{n,m}(t)` through the symbolic derivative tables.
pub fn death_rate(mech: &StableMechanism, q: RateQuery) -> Result<f64> {
    require(mech, "death_rate", Regime::SubCritical)?;
    q.check_death("death_rate")?;
    DeathRates::new(mech, q.n)?.rate(q)
}

/// Quadratic closed form: `n (alpha + gamma c(t))` for `m = n-1`, else 0.
pub fn quadratic_death_rate(mech: &StableMechanism, q: RateQuery) -> Result<f64> {
    require_quadratic(mech, "quadratic_death_rate")?;
    q.check_death("quadratic_death_rate")?;
    if q.m + 1 != q.n {
        return Ok(0.0);
    }
    Ok(q.n as f64 * (mech.alpha() + mech.gamma() * mech.extinction_c(q.t)?))
}

/// Limit of the death rate as `b` decreases to 1:
/// `(n+1) / ((n+1-m)(n-m)) / (gamma t)`.
pub fn bs_limit_rate(n: usize, m: usize, t: f64, gamma: f64) -> Result<f64> {
    let q = RateQuery::new(n, m, t);
    q.check_death("bs_limit_rate")?;
    if !(gamma > 0.0) {
        return Err(Error::domain("bs_limit_rate", "gamma", gamma));
    }
    let (n, m) = (n as f64, m as f64);
    Ok((n + 1.0) / ((n + 1.0 - m) * (n - m)) / (gamma * t))
}

/// Critical birth rate, the `alpha -> 0` limit of [`birth_rate`]:
/// `(m+1)/(m-n+1)! * |b (b-2)(b-3)...(b-m+n)| / t`.
pub fn critical_birth_rate(mech: &StableMechanism, q: RateQuery) -> Result<f64> {
    require(mech, "critical_birth_rate", Regime::Critical)?;
    q.check_birth("critical_birth_rate")?;
    let j = q.m - q.n;
    if mech.is_quadratic() {
        return Ok(if j == 1 { (q.n + 2) as f64 / q.t } else { 0.0 });
    }
    let b = mech.b();
    let coef: f64 = b * (2..=j).map(|i| b - i as f64).product::<f64>();
    let ln = ((q.m + 1) as f64).ln() - ln_factorial((j + 1) as u64) + coef.abs().ln() - q.t.ln();
    Ok(ln.exp())
}

fn require_quadratic(mech: &StableMechanism, op: &'static str) -> Result<()> {
    require(mech, op, Regime::SubCritical)?;
    if mech.is_quadratic() {
        Ok(())
    } else {
        Err(Error::contract(op, format!("needs b = 2, got b = {}", mech.b())))
    }
}

/// `P(M0_{-t} = n) = (n+1) e^{-alpha t n} (1 - e^{-alpha t})^2` when `b = 2`.
pub fn quadratic_marginal_pmf(mech: &StableMechanism, n: usize, t: f64) -> Result<f64> {
    require_quadratic(mech, "quadratic_marginal_pmf")?;
    if !(t > 0.0) {
        return Err(Error::domain("quadratic_marginal_pmf", "t", t));
    }
    let at = mech.alpha() * t;
    let ln = ((n + 1) as f64).ln() - at * n as f64 + 2.0 * (-(-at).exp_m1()).ln();
    Ok(ln.exp())
}

/// Joint generating function `E[x^{M0_{-r}} y^{M0_{-s}}]` for `r >= s > 0`.
///
/// Written as `ubar(l0) [1 + A L^eta]^{-1/eta} (alpha + gamma U^eta) /
/// (alpha + gamma L^eta)` with `L = c(s)(1-y)`, `U = u(L, r-s)` and
/// `A = (gamma/alpha)(1 - e^{-alpha eta (r-s)})`, which equals the ratio
/// `e^{alpha(r-s)} psi(U)/psi(L)` but has no 0/0 at `y = 1`.
pub fn joint_pgf(mech: &StableMechanism, x: f64, y: f64, r: f64, s: f64) -> Result<f64> {
    require(mech, "joint_pgf", Regime::SubCritical)?;
    for (name, v) in [("x", x), ("y", y)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain("joint_pgf", name, v));
        }
    }
    let z = joint_pgf_complex(mech, Complex64::new(x, 0.0), Complex64::new(y, 0.0), r, s)?;
    Ok(z.re)
}

/// Analytic continuation of [`joint_pgf`] to complex `x, y` in the open unit
/// disc (principal branches), for coefficient extraction.
pub fn joint_pgf_complex(
    mech: &StableMechanism,
    x: Complex64,
    y: Complex64,
    r: f64,
    s: f64,
) -> Result<Complex64> {
    require(mech, "joint_pgf", Regime::SubCritical)?;
    if !(s > 0.0) {
        return Err(Error::domain("joint_pgf", "s", s));
    }
    if r < s {
        return Err(Error::contract(
            "joint_pgf",
            format!("needs r >= s, got r = {r}, s = {s}"),
        ));
    }
    let (alpha, gamma, eta, b) = (mech.alpha(), mech.gamma(), mech.eta(), mech.b());
    let one = Complex64::new(1.0, 0.0);
    let pow = |z: Complex64, p: f64| -> Complex64 {
        if z == Complex64::new(0.0, 0.0) {
            z
        } else {
            z.powf(p)
        }
    };
    let d = r - s;
    let big_a = gamma / alpha * -(-alpha * eta * d).exp_m1();
    let l = (one - y) * mech.extinction_c(s)?;
    let l_eta = pow(l, eta);
    let inner = pow(one + l_eta * big_a, -1.0 / eta);
    let u = l * inner * (-alpha * d).exp();
    let u_eta = pow(u, eta);
    let lambda0 = (one - x) * mech.extinction_c(r)? + x * u;
    let ubar = pow(one + pow(lambda0, eta) * (gamma / alpha), -b / eta);
    Ok(ubar * inner * (u_eta * gamma + alpha) / (l_eta * gamma + alpha))
}

/// Joint probabilities `P(M0_{-r} = i, M0_{-s} = j)` for `i, j <= n_max`,
/// by a two-dimensional DFT of [`joint_pgf_complex`] on the circle of
/// radius `radius` with `points` nodes per axis.
pub fn joint_pmf_grid(
    mech: &StableMechanism,
    r: f64,
    s: f64,
    n_max: usize,
    radius: f64,
    points: usize,
) -> Result<Vec<Vec<f64>>> {
    if !(radius > 0.0 && radius < 1.0) || points <= n_max {
        return Err(Error::contract(
            "joint_pmf_grid",
            format!("radius {radius} / points {points} unusable for n_max {n_max}"),
        ));
    }
    let roots: Vec<Complex64> = (0..points)
        .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / points as f64))
        .collect();
    let mut values = vec![vec![Complex64::new(0.0, 0.0); points]; points];
    for (j, row) in values.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = joint_pgf_complex(mech, roots[j] * radius, roots[k] * radius, r, s)?;
        }
    }
    let norm = (points * points) as f64;
    let mut out = vec![vec![0.0; n_max + 1]; n_max + 1];
    for (i, row) in out.iter_mut().enumerate() {
        for (jn, cell) in row.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, vrow) in values.iter().enumerate() {
                for (k, v) in vrow.iter().enumerate() {
                    acc += v * roots[(j * i + k * jn) % points].conj();
                }
            }
            *cell = acc.re / norm / radius.powi((i + jn) as i32);
        }
    }
    Ok(out)
}

/// `P(M0_{-(t+eps)} = m | M0_{-t} = n)` from the joint generating function.
pub fn pgf_transition_probability(
    mech: &StableMechanism,
    n: usize,
    m: usize,
    t: f64,
    eps: f64,
) -> Result<f64> {
    let grid = joint_pmf_grid(mech, t + eps, t, n.max(m), 0.5, 64)?;
    // M0 is pure death going backward, so M0_{-(t+eps)} <= M0_{-t}.
    let marginal: f64 = (0..=n).map(|i| grid[i][n]).sum();
    Ok(grid[m][n] / marginal)
}

/// Rate `q^d_{n,m}(t)` recovered from the generating function by
/// Richardson extrapolation of `P(n -> m over [t, t+eps]) / eps` on
/// `eps = h, h/2, h/4`.
pub fn pgf_implied_death_rate(
    mech: &StableMechanism,
    n: usize,
    m: usize,
    t: f64,
    h: f64,
) -> Result<f64> {
    let q = |eps: f64| -> Result<f64> {
        Ok(pgf_transition_probability(mech, n, m, t, eps)? / eps)
    };
    let (q0, q1, q2) = (q(h)?, q(h / 2.0)?, q(h / 4.0)?);
    let (r1, r2) = (2.0 * q1 - q0, 2.0 * q2 - q1);
    Ok((4.0 * r2 - r1) / 3.0)
}

/// Rescaled per-collision rate
/// `T gamma e^{gamma t} q^d_{k-1,k-m}(T e^{gamma t}) / C(k,m)`.
pub fn rescaled_collision_rate(
    rates: &DeathRates,
    k: usize,
    m: usize,
    big_t: f64,
    t: f64,
) -> Result<f64> {
    if !(2 <= m && m <= k) {
        return Err(Error::contract(
            "rescaled_collision_rate",
            format!("needs 2 <= m <= k, got k = {k}, m = {m}"),
        ));
    }
    let gamma = rates.mechanism().gamma();
    let s = big_t * (gamma * t).exp();
    let q = rates.rate(RateQuery::new(k - 1, k - m, s))?;
    Ok(s * gamma * q / ln_binomial(k as u64, m as u64).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mech(b: f64) -> StableMechanism {
        StableMechanism::sub_critical(1.0, 1.0, b).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn quadratic_birth_rates() {
        let m = StableMechanism::sub_critical(0.7, 1.3, 2.0).unwrap();
        for n in 0..5 {
            for &t in &[0.2, 1.0, 3.0] {
                let q = birth_rate(&m, RateQuery::new(n, n + 1, t)).unwrap();
                let c = m.extinction_c(t).unwrap();
                assert!(close(q, (n + 2) as f64 * 1.3 * c, 1e-12));
                assert_eq!(birth_rate(&m, RateQuery::new(n, n + 2, t)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn birth_closed_form_matches_generic() {
        for &b in &[1.2, 1.5, 1.8] {
            let m = StableMechanism::sub_critical(0.8, 1.4, b).unwrap();
            for n in 0..4 {
                for mm in n + 1..n + 6 {
                    for &t in &[0.1, 1.0, 4.0] {
                        let q = RateQuery::new(n, mm, t);
                        let a = birth_rate(&m, q).unwrap();
                        let g = birth_rate_generic(&m, q).unwrap();
                        assert!(close(a, g, 1e-12), "b={b} n={n} m={mm} t={t}: {a} vs {g}");
                    }
                }
            }
        }
    }

    #[test]
    fn birth_rejects_bad_queries() {
        assert!(matches!(
            birth_rate(&mech(1.5), RateQuery::new(3, 3, 1.0)),
            Err(Error::Contract { .. })
        ));
        assert!(birth_rate(&mech(1.5), RateQuery::new(0, 1, 0.0)).is_err());
    }

    #[test]
    fn time_changed_rates_sum_to_escape_rate() {
        // Truncated sum over jump sizes j = m - n + 1 <= J. The neglected mass
        // decays like J^{-(b-1)}, so it is added back in closed form: the
        // tail of sum j p_j is (b/eta) P(Q > J-1) with Q the immigration law,
        // whose survival function is prod_{i<=k} (1 - eta/i).
        const J: usize = 100_000;
        for &b in &[1.3, 1.5, 1.9] {
            let m = mech(b);
            let eta = b - 1.0;
            let p = m.offspring_pmf_table(J);
            let head_mass: f64 = p.iter().sum();
            let survival: f64 = (1..J).map(|i| 1.0 - eta / i as f64).product();
            for n in 0..=10usize {
                let head: f64 = (2..=J)
                    .map(|j| time_changed_birth_rate(&m, n, n + j - 1).unwrap())
                    .sum();
                let total = head + n as f64 * (1.0 - head_mass) + b / eta * survival;
                let target = n as f64 + b / eta;
                assert!((total - target).abs() < 1e-6, "b={b} n={n}: {total} vs {target}");
            }
            let t = 0.7;
            let r = m.r_prime_abs(t).unwrap();
            let q = birth_rate(&m, RateQuery::new(2, 5, t)).unwrap();
            assert!(close(q / r, time_changed_birth_rate(&m, 2, 5).unwrap(), 1e-12));
        }
    }

    #[test]
    fn escape_rate_example() {
        let q = StableMechanism::sub_critical(1.0, 1.0, 2.0).unwrap();
        assert!(close(birth_escape_rate(&q, 0, 2f64.ln()).unwrap(), 2.0, 1e-14));
    }

    #[test]
    fn quadratic_death_rates() {
        let m = StableMechanism::sub_critical(0.6, 1.7, 2.0).unwrap();
        for n in 1..8 {
            for &t in &[0.05, 0.5, 2.0] {
                for mm in 0..n {
                    let q = RateQuery::new(n, mm, t);
                    let general = death_rate(&m, q).unwrap();
                    let closed = quadratic_death_rate(&m, q).unwrap();
                    if mm + 1 == n {
                        assert!(close(general, closed, 1e-10), "n={n} t={t}");
                    } else {
                        assert_eq!(general, 0.0);
                        assert_eq!(closed, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn death_rejects_bad_queries() {
        assert!(death_rate(&mech(1.5), RateQuery::new(2, 2, 1.0)).is_err());
        let crit = StableMechanism::critical(1.0, 1.5).unwrap();
        assert!(death_rate(&crit, RateQuery::new(2, 1, 1.0)).is_err());
    }

    #[test]
    fn death_rate_near_bs_limit() {
        let m = mech(1.001);
        let q = death_rate(&m, RateQuery::new(5, 2, 1.0)).unwrap();
        let lim = bs_limit_rate(5, 2, 1.0, 1.0).unwrap();
        assert!(close(q, lim, 0.01), "{q} vs {lim}");
    }

    #[test]
    fn bs_limit_examples() {
        assert_eq!(bs_limit_rate(1, 0, 1.0, 1.0).unwrap(), 1.0);
        assert!(close(bs_limit_rate(5, 2, 2.0, 1.0).unwrap(), 0.25, 1e-15));
        assert!(bs_limit_rate(2, 3, 1.0, 1.0).is_err());
    }

    #[test]
    fn bs_limit_convergence_sweep() {
        let mut prev = f64::INFINITY;
        for &b in &[1.1, 1.01, 1.001] {
            let err = (death_rate(&mech(b), RateQuery::new(4, 1, 1.0)).unwrap()
                - bs_limit_rate(4, 1, 1.0, 1.0).unwrap())
            .abs();
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn critical_birth_examples() {
        let q = StableMechanism::critical(1.0, 2.0).unwrap();
        assert_eq!(critical_birth_rate(&q, RateQuery::new(0, 1, 1.0)).unwrap(), 2.0);
        assert_eq!(critical_birth_rate(&q, RateQuery::new(1, 3, 1.0)).unwrap(), 0.0);
        let crit = StableMechanism::critical(1.0, 1.5).unwrap();
        for (n, mm) in [(0, 1), (1, 3), (2, 6)] {
            let exact = critical_birth_rate(&crit, RateQuery::new(n, mm, 0.8)).unwrap();
            let errs: Vec<f64> = [1e-2, 1e-4]
                .iter()
                .map(|&a| {
                    let sub = StableMechanism::sub_critical(a, 1.0, 1.5).unwrap();
                    let q = birth_rate(&sub, RateQuery::new(n, mm, 0.8)).unwrap();
                    (q - exact).abs() / exact
                })
                .collect();
            assert!(errs[1] < errs[0] && errs[1] < 1e-4, "{errs:?}");
        }
    }

    #[test]
    fn quadratic_marginal_examples() {
        let q = StableMechanism::sub_critical(1.0, 1.0, 2.0).unwrap();
        let t = 2f64.ln();
        let mut total = 0.0;
        for n in 0..200 {
            let p = quadratic_marginal_pmf(&q, n, t).unwrap();
            assert!(close(p, (n + 1) as f64 * 0.5f64.powi(n as i32) / 4.0, 1e-13));
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-12);
        let x: f64 = 0.3;
        let series: f64 = (0..200)
            .map(|n| quadratic_marginal_pmf(&q, n, 1.3).unwrap() * x.powi(n as i32))
            .sum();
        let e = 1.3f64.exp();
        assert!(close(series, ((e - 1.0) / (e - x)).powi(2), 1e-12));
        assert!(quadratic_marginal_pmf(&mech(1.5), 0, 1.0).is_err());
    }

    #[test]
    fn joint_pgf_boundaries() {
        let m = mech(1.5);
        assert!(close(joint_pgf(&m, 1.0, 1.0, 2.0, 1.0).unwrap(), 1.0, 1e-14));
        let q = StableMechanism::sub_critical(1.0, 1.0, 2.0).unwrap();
        for &y in &[0.0, 0.4, 0.9] {
            let s: f64 = 0.8;
            let v = joint_pgf(&q, 1.0, y, 1.5, s).unwrap();
            let e = s.exp();
            assert!(close(v, ((e - 1.0) / (e - y)).powi(2), 1e-12));
        }
        // y = 1 gives the one-time law at r.
        let v = joint_pgf(&m, 0.3, 1.0, 1.5, 0.5).unwrap();
        let c = m.extinction_c(1.5).unwrap();
        assert!(close(v, m.ubar(c * 0.7).unwrap(), 1e-14));
        assert!(joint_pgf(&m, 0.5, 0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn joint_pgf_monotone() {
        let m = mech(1.5);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        for &x in &grid {
            let mut prev = 0.0;
            for &y in &grid {
                let v = joint_pgf(&m, x, y, 1.4, 0.6).unwrap();
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
        for &y in &grid {
            let mut prev = 0.0;
            for &x in &grid {
                let v = joint_pgf(&m, x, y, 1.4, 0.6).unwrap();
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn pmf_grid_reproduces_quadratic_marginal() {
        let q = StableMechanism::sub_critical(1.0, 1.0, 2.0).unwrap();
        let grid = joint_pmf_grid(&q, 1.2, 0.7, 6, 0.5, 64).unwrap();
        for n in 0..=6 {
            let marginal: f64 = (0..=n).map(|i| grid[i][n]).sum();
            let exact = quadratic_marginal_pmf(&q, n, 0.7).unwrap();
            assert!(close(marginal, exact, 1e-10), "n={n}");
            // Births only: more ancestors further back is impossible.
            assert!(grid[n + 1..].iter().all(|row| row[n].abs() < 1e-12));
        }
    }

    #[test]
    fn pgf_recovers_death_rate() {
        let m = mech(1.5);
        let rates = DeathRates::new(&m, 4).unwrap();
        for n in 1..=4 {
            for mm in 0..n {
                let exact = rates.rate(RateQuery::new(n, mm, 1.0)).unwrap();
                let est = pgf_implied_death_rate(&m, n, mm, 1.0, 0.004).unwrap();
                assert!(close(est, exact, 1e-3), "n={n} m={mm}: {est} vs {exact}");
            }
        }
    }

    #[test]
    fn collision_rate_identity() {
        // C(k,m) * bs_rate(k,m) * (k-m+1 choose ...) bookkeeping: the limit rate
        // of k-1 -> k-m, divided by C(k,m), is the BS rate divided by gamma t.
        for k in 2..=8usize {
            for m in 2..=k {
                let lim = bs_limit_rate(k - 1, k - m, 1.0, 1.0).unwrap();
                let per = lim / ln_binomial(k as u64, m as u64).exp();
                let bs = ln_factorial((m - 2) as u64) + ln_factorial((k - m) as u64)
                    - ln_factorial((k - 1) as u64);
                assert!(close(per, bs.exp(), 1e-12), "k={k} m={m}");
            }
        }
    }
}
