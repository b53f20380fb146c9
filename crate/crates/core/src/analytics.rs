//! Deterministic numerics: Linnik densities, the Poisson point-measure
//! intensity `g`, the Laplace transform of the size-biased family, and the
//! moment recursion for the size-biased fraction `V`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::StableMechanism;
use crate::quadrature::{composite_gauss, gauss_legendre, integrate_panels, Estimate, QuadratureConfig};
use crate::simulate::sample_positive_stable;
use crate::stats::mean_se;

fn check_a(op: &'static str, a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(op, "a", a))
    }
}

/// `F_a(y) = 1 - arccot(cot(pi a) + y^a / sin(pi a)) / (pi a)`.
fn f_a(a: f64, y: f64) -> f64 {
    let x = 1.0 / (PI * a).tan() + y.powf(a) / (PI * a).sin();
    1.0 - (PI / 2.0 - x.atan()) / (PI * a)
}

fn denom(a: f64, y: f64) -> f64 {
    let ya = y.powf(a);
    ya * ya + 2.0 * ya * (a * PI).cos() + 1.0
}

/// Breakpoints `0, z 2^-k, ..., z, 2z, ..., cut` for integrands in `s`
/// whose structure sits at `s = z`.
fn dyadic_breaks(z: f64, cut: f64) -> Vec<f64> {
    let mut lower: Vec<f64> = (1..=30)
        .map(|k| z * 0.5f64.powi(k))
        .filter(|&x| x < cut)
        .collect();
    lower.reverse();
    let mut breaks = vec![0.0];
    breaks.extend(lower);
    let mut x = z;
    while x < cut {
        breaks.push(x);
        x *= 2.0;
    }
    breaks.push(cut);
    breaks
}

/// Linnik-type density
/// `f_{a,b}(z) = (1/pi) int_0^inf e^{-zy} sin(pi b F_a(y)) /
/// (y^{2a} + 2 y^a cos(a pi) + 1)^{b/(2a)} dy`,
/// computed as `(1/(pi z)) int_0^inf e^{-s} h(s/z) ds` on dyadic panels
/// around `s = z`. The error bound includes the truncation tail.
pub fn linnik_density(a: f64, b: f64, z: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_a("linnik_density", a)?;
    if !(b > 0.0) {
        return Err(Error::domain("linnik_density", "b", b));
    }
    if !(z > 0.0) {
        return Err(Error::domain("linnik_density", "z", z));
    }
    let h = |y: f64| (PI * b * f_a(a, y)).sin() / denom(a, y).powf(b / (2.0 * a));
    let cut = cfg.truncation_point;
    let inner = integrate_panels(|s| (-s).exp() * h(s / z), &dyadic_breaks(z, cut), cfg)?;
    // |h| <= sin(pi a)^{-b/a} since the denominator is at least sin^2(pi a).
    let tail = (-cut).exp() * (PI * a).sin().powf(-b / a);
    let k = 1.0 / (PI * z);
    Ok(Estimate {
        value: k * inner.value,
        error_bound: k * (inner.error_bound + tail),
    })
}

/// Second representation of `f_{a,a+1}`, through `-z d/dz f_{a,1}(z)`:
/// `f_{a,a+1}(z) = int_0^inf e^{-s} Delta(z/s) ds` with
/// `Delta(y) = sin(pi (1 - F_a(y))) / (pi (y^{2a} + 2 y^a cos(a pi) + 1)^{1/(2a)})`.
pub fn linnik_density_alt(a: f64, z: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_a("linnik_density_alt", a)?;
    if !(z > 0.0) {
        return Err(Error::domain("linnik_density_alt", "z", z));
    }
    let delta = |y: f64| (PI * (1.0 - f_a(a, y))).sin() / denom(a, y).powf(1.0 / (2.0 * a)) / PI;
    let cut = cfg.truncation_point;
    let inner = integrate_panels(
        |s| if s == 0.0 { 0.0 } else { (-s).exp() * delta(z / s) },
        &dyadic_breaks(z, cut),
        cfg,
    )?;
    let tail = (-cut).exp() * (PI * a).sin().powf(-1.0 / a) / PI;
    Ok(Estimate {
        value: inner.value,
        error_bound: inner.error_bound + tail,
    })
}

/// `int_0^inf e^{-lambda z} f_{a,b}(z) dz` over `z = e^v`, with `cfg` for
/// the inner density evaluations; `lambda = 0` gives the total mass.
pub fn linnik_transform(a: f64, b: f64, lambda: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    if !(lambda >= 0.0) {
        return Err(Error::domain("linnik_transform", "lambda", lambda));
    }
    let outer = QuadratureConfig {
        abs_tol: 1e-8,
        rel_tol: 1e-8,
        ..*cfg
    };
    let breaks: Vec<f64> = (-8..=8).map(|i| 5.0 * i as f64).collect();
    let f = |v: f64| {
        let z = v.exp();
        let d = linnik_density(a, b, z, cfg).map_or(f64::NAN, |e| e.value);
        (-lambda * z).exp() * d * z
    };
    integrate_panels(f, &breaks, &outer)
}

/// Monte Carlo estimate and standard error of the Poisson point-measure
/// intensity `g(x) = (b/x) E[exp(-(x/sigma)^{b-1})]`, `sigma` positive
/// `(b-1)`-stable.
pub fn intensity_g<R: Rng + ?Sized>(
    mech: &StableMechanism,
    x: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if !(x > 0.0) {
        return Err(Error::domain("intensity_g", "x", x));
    }
    if samples < 2 {
        return Err(Error::contract("intensity_g", "need at least 2 samples"));
    }
    let eta = mech.eta();
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let sigma = sample_positive_stable(eta, rng)?;
        vals.push((-(x / sigma).powf(eta)).exp());
    }
    let (m, se) = mean_se(&vals);
    let k = mech.b() / x;
    Ok((k * m, k * se))
}

/// Outcome of checking `int (1 - e^{-lambda x}) g(x) dx =
/// b/(b-1) log(1 + lambda^{b-1})` against Monte Carlo draws of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityCheck {
    pub lambda: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub quadrature_error: f64,
    pub exact: f64,
}

impl IntensityCheck {
    /// Agreement within three standard errors plus the quadrature error.
    pub fn passes(&self) -> bool {
        (self.estimate - self.exact).abs() <= 3.0 * self.std_error + self.quadrature_error
    }
}

/// Integrates `(1 - e^{-lambda x})` against the Monte Carlo intensity: for
/// each stable draw the `x`-integral is done over `v = ln x` by composite
/// Gauss-Legendre (panel width 1, error from the width-1/2 rerun); the
/// results are averaged.
pub fn intensity_laplace_check<R: Rng + ?Sized>(
    mech: &StableMechanism,
    lambda: f64,
    samples: usize,
    rng: &mut R,
) -> Result<IntensityCheck> {
    if !(lambda > 0.0) {
        return Err(Error::domain("intensity_laplace_check", "lambda", lambda));
    }
    let (b, eta) = (mech.b(), mech.eta());
    let rule = gauss_legendre(20);
    let mut vals = Vec::with_capacity(samples);
    let mut quad_err = 0.0;
    for _ in 0..samples {
        let sigma = sample_positive_stable(eta, rng)?;
        let f = |v: f64| {
            let x = v.exp();
            -b * (-lambda * x).exp_m1() * (-(x / sigma).powf(eta)).exp()
        };
        let hi = sigma.ln() + 60f64.ln() / eta;
        let lo = (-40.0 - lambda.ln()).min(hi - 60.0);
        let coarse = composite_gauss(f, lo, hi, 1.0, &rule);
        let fine = composite_gauss(f, lo, hi, 0.5, &rule);
        // Neglected tails: below lo the integrand is under b lambda e^v.
        quad_err += (fine - coarse).abs() + b * lambda * lo.exp();
        vals.push(fine);
    }
    let (m, se) = mean_se(&vals);
    Ok(IntensityCheck {
        lambda,
        estimate: m,
        std_error: se,
        quadrature_error: quad_err / samples as f64,
        exact: b / eta * lambda.powf(eta).ln_1p(),
    })
}

/// Laplace transform of the size-biased family `zeta*`,
/// `int_0^inf G(lambda + mu) ubar(mu) dmu` with `G = -ubar'/ubar`, over
/// `v = ln mu`.
pub fn zeta_star_laplace(mech: &StableMechanism, lambda: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    if !(lambda >= 0.0) {
        return Err(Error::domain("zeta_star_laplace", "lambda", lambda));
    }
    let d1 = mech.ubar_derivative(1)?;
    let eta = mech.eta();
    let g = |l: f64| -> f64 {
        let (_, ln_d) = d1.ln_abs_eval(l.ln()).unwrap_or((1.0, f64::NEG_INFINITY));
        (ln_d - mech.ubar(l).map(f64::ln).unwrap_or(f64::INFINITY)).exp()
    };
    let f = |v: f64| {
        let mu = v.exp();
        g(lambda + mu) * mech.ubar(mu).unwrap_or(0.0) * mu
    };
    let lo = -40.0 / eta;
    let hi = 60.0;
    let breaks: Vec<f64> = std::iter::successors(Some(lo), |&x| (x < hi).then(|| (x + 5.0).min(hi))).collect();
    integrate_panels(f, &breaks, cfg)
}

/// `I(n, k) = int v_n(t) (1 + a t^eta)^{-k} dt` for `n <= n_max`,
/// `k <= n_max - n`, indexed `[n][k]`.
pub fn moment_integrals(eta: f64, n_max: usize) -> Result<Vec<Vec<f64>>> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain("moment_table_v", "eta", eta));
    }
    let c = |k: usize| eta * (k as f64 + 1.0) + 1.0;
    let mut table = vec![(0..=n_max).map(|k| (eta + 1.0) / c(k)).collect::<Vec<_>>()];
    for n in 1..=n_max {
        let prev = &table[n - 1];
        let row = (0..=n_max - n)
            .map(|k| {
                let w = c(k) / n as f64;
                (1.0 - w) * prev[k] + w * prev[k + 1]
            })
            .collect();
        table.push(row);
    }
    Ok(table)
}

/// `E[V^n]` for `n = 1..=n_max`; depends on `eta` only.
pub fn moment_table_v(eta: f64, n_max: usize) -> Result<Vec<f64>> {
    if n_max == 0 {
        return Err(Error::contract("moment_table_v", "n_max must be >= 1"));
    }
    let t = moment_integrals(eta, n_max)?;
    Ok((1..=n_max).map(|n| t[n][0]).collect())
}

/// Closed forms of `E[V]`, `E[V^2]`, `E[V^3]` as rational functions of `eta`.
pub fn moment_closed_forms(eta: f64) -> [f64; 3] {
    let e = eta;
    let m1 = (-e * e + e + 1.0) / (2.0 * e + 1.0);
    let m2 = (e.powi(4) - 7.0 * e.powi(3) + e * e + 7.0 * e + 2.0)
        / (2.0 * (2.0 * e + 1.0) * (3.0 * e + 1.0));
    let m3 = (23.0 * e.powi(5) - 80.0 * e.powi(4) - 30.0 * e.powi(3) + 74.0 * e * e + 43.0 * e + 6.0)
        / (6.0 * (2.0 * e + 1.0) * (3.0 * e + 1.0) * (4.0 * e + 1.0));
    [m1, m2, m3]
}

/// Third moment of the Beta law matching the first two moments of `V`,
/// as `(beta_m3, true_m3)`.
pub fn beta_fit_third_moment(eta: f64) -> Result<(f64, f64)> {
    let m = moment_table_v(eta, 3)?;
    let r = m[1] / m[0];
    let s = (1.0 - r) / (r - m[0]);
    let p = m[0] * s;
    Ok((m[1] * (p + 2.0) / (s + 2.0), m[2]))
}

/// `E[V^3]` minus its Beta-fit prediction.
pub fn beta_discrepancy(eta: f64) -> Result<f64> {
    let (fit, exact) = beta_fit_third_moment(eta)?;
    Ok(exact - fit)
}

/// Root of [`beta_discrepancy`] in `(lo, hi)` by bisection, if it changes
/// sign there.
pub fn beta_discrepancy_root(lo: f64, hi: f64) -> Result<Option<f64>> {
    let (mut lo, mut hi) = (lo, hi);
    let (mut flo, fhi) = (beta_discrepancy(lo)?, beta_discrepancy(hi)?);
    if flo.signum() == fhi.signum() {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = beta_discrepancy(mid)?;
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use crate::rng::RandomSource;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            ..QuadratureConfig::default()
        }
    }

    fn outer() -> QuadratureConfig {
        QuadratureConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            ..QuadratureConfig::default()
        }
    }

    /// `int_0^inf k(z) f(z) dz` over `z = e^v`.
    fn against<K: Fn(f64) -> f64, F: Fn(f64) -> f64>(k: K, f: F) -> f64 {
        let breaks: Vec<f64> = (-8..=8).map(|i| 5.0 * i as f64).collect();
        integrate_panels(|v| { let z = v.exp(); k(z) * f(z) * z }, &breaks, &outer()).unwrap().value
    }

    #[test]
    fn linnik_normalization_and_laplace() {
        let dens = |z: f64| linnik_density(0.5, 1.5, z, &cfg()).unwrap().value;
        assert!((against(|_| 1.0, dens) - 1.0).abs() < 1e-4);
        for &l in &[0.5f64, 1.0, 2.0] {
            let lt = against(|z| (-l * z).exp(), dens);
            let exact = (1.0 + l.sqrt()).powf(-3.0);
            assert!((lt - exact).abs() < 1e-4, "l={l}: {lt} vs {exact}");
        }
    }

    #[test]
    fn linnik_near_gamma_limit() {
        // The integrand peaks sharply at y = 1 as a -> 1; ask for less.
        let loose = QuadratureConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            max_subdivisions: 20_000,
            ..QuadratureConfig::default()
        };
        for &z in &[0.1, 0.5, 1.0, 2.0, 5.0] {
            let f = linnik_density(0.9999, 1.9999, z, &loose).unwrap().value;
            assert!((f - z * (-z).exp()).abs() < 1e-4, "z={z}: {f}");
        }
    }

    #[test]
    fn two_representations_agree() {
        for &z in &[0.1, 1.0, 5.0] {
            let f = linnik_density(0.5, 1.5, z, &cfg()).unwrap().value;
            let g = linnik_density_alt(0.5, z, &cfg()).unwrap().value;
            assert!((f - g).abs() < 1e-3, "z={z}: {f} vs {g}");
        }
        let f1 = linnik_density(0.5, 1.5, 1.0, &cfg()).unwrap().value;
        assert!((f1 - 0.118840).abs() < 1e-5);
    }

    #[test]
    fn alt_density_positive_and_normalized() {
        for i in -20..20 {
            let z = (i as f64 * 0.3).exp();
            assert!(linnik_density_alt(0.5, z, &cfg()).unwrap().value > 0.0);
        }
        let mass = against(|_| 1.0, |z| linnik_density_alt(0.5, z, &cfg()).unwrap().value);
        assert!((mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn density_domain_errors() {
        assert!(linnik_density(1.0, 1.5, 1.0, &cfg()).is_err());
        assert!(linnik_density(0.5, 1.5, 0.0, &cfg()).is_err());
        assert!(linnik_density_alt(0.0, 1.0, &cfg()).is_err());
    }

    #[test]
    fn intensity_quadratic_is_exact() {
        let m = StableMechanism::sub_critical(1.0, 1.0, 2.0).unwrap();
        let mut rng = RandomSource::new(31, 0);
        for &x in &[0.1, 1.0, 3.0] {
            let (g, se) = intensity_g(&m, x, 100, &mut rng).unwrap();
            let exact = 2.0 / x * (-x).exp();
            assert!((g - exact).abs() < 1e-14 * exact);
            assert_eq!(se, 0.0);
        }
    }

    #[test]
    fn intensity_bounded() {
        let m = StableMechanism::sub_critical(1.0, 1.0, 1.5).unwrap();
        let mut rng = RandomSource::new(32, 0);
        for &x in &[0.01, 0.5, 4.0] {
            let (g, _) = intensity_g(&m, x, 2000, &mut rng).unwrap();
            assert!(g * x / 1.5 <= 1.0);
        }
    }

    #[test]
    fn intensity_laplace_identity() {
        let m = StableMechanism::sub_critical(1.0, 1.0, 1.5).unwrap();
        let mut rng = RandomSource::new(33, 0);
        for &l in &[0.5, 1.0, 2.0] {
            let c = intensity_laplace_check(&m, l, 20_000, &mut rng).unwrap();
            assert!(c.passes(), "{c:?}");
            assert!(c.quadrature_error < 1e-8);
        }
    }

    #[test]
    fn zeta_star_laplace_properties() {
        let m = StableMechanism::sub_critical(1.0, 1.0, 1.5).unwrap();
        let at0 = zeta_star_laplace(&m, 0.0, &cfg()).unwrap().value;
        assert!((at0 - 1.0).abs() < 1e-6);
        let mut prev = at0;
        for i in 1..10 {
            let v = zeta_star_laplace(&m, i as f64 * 0.5, &cfg()).unwrap().value;
            assert!(v < prev);
            prev = v;
        }
        // b = 2, a = 1: G(l) = 2/(1+l) and ubar = (1+l)^{-2}.
        let q = StableMechanism::sub_critical(1.0, 1.0, 2.0).unwrap();
        let l = 0.7;
        let exact = integrate(|mu| 2.0 / (1.0 + l + mu) / (1.0 + mu).powi(2), 0.0, 1e4, &cfg()).unwrap().value
            + 1e-8;
        let v = zeta_star_laplace(&q, l, &cfg()).unwrap().value;
        assert!((v - exact).abs() < 1e-6);
    }

    #[test]
    fn moment_closed_forms_match() {
        for &eta in &[0.1, 0.25, 0.5, 0.75, 1.0] {
            let m = moment_table_v(eta, 3).unwrap();
            let c = moment_closed_forms(eta);
            for i in 0..3 {
                assert!((m[i] - c[i]).abs() < 1e-12, "eta={eta} i={i}");
            }
        }
        let m = moment_table_v(1.0, 3).unwrap();
        assert!((m[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((m[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn moments_are_hausdorff() {
        for i in 1..=20 {
            let eta = i as f64 / 20.0;
            let mut m = vec![1.0];
            m.extend(moment_table_v(eta, 8).unwrap());
            assert!(m.windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
            // (-1)^k Delta^k m_n >= 0
            let mut diff = m.clone();
            for _ in 1..=8 {
                diff = diff.windows(2).map(|w| w[0] - w[1]).collect();
                assert!(diff.iter().all(|&d| d >= -1e-13), "eta={eta}");
            }
        }
    }

    #[test]
    fn beta_fit_discrepancy() {
        let (fit, exact) = beta_fit_third_moment(1.0).unwrap();
        assert!((fit - exact).abs() < 1e-14);
        for &eta in &[0.2, 0.6, 0.9] {
            assert!(beta_discrepancy(eta).unwrap().abs() > 1e-11);
        }
        let root = beta_discrepancy_root(0.3, 0.6).unwrap().unwrap();
        assert!((root - 0.428).abs() < 0.01, "{root}");
    }
}
