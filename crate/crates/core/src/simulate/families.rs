use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::laws::{sample_positive_stable, sample_w};
use crate::error::{Error, Result};
use crate::mechanism::{Regime, StableMechanism};

/// Families of the extant population, ordered by immigration time.
///
/// `sizes[i]` is the unnormalized size `zeta_i` and `scale` the normalizer
/// (`kappa`, or `c(T)` in the critical case), so `scale * sizes[i]` is
/// `e^{-T_i/(b-1)} W_i`. Families arriving after the last clock are not
/// listed; by the Poisson structure their total is `tail_scale * W'` with
/// `W'` an independent copy of the martingale limit, and `tail_scale` is
/// recorded (below `1e-12` unless `count` stopped generation first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDecomposition {
    pub immigration_clocks: Vec<f64>,
    pub sizes: Vec<f64>,
    pub scale: f64,
    pub tail_scale: f64,
}

impl FamilyDecomposition {
    /// Sum of the listed family sizes.
    pub fn total(&self) -> f64 {
        self.sizes.iter().sum()
    }

    /// Listed total plus an exact draw of the unlisted remainder.
    pub fn total_with_tail<R: Rng + ?Sized>(&self, mech: &StableMechanism, rng: &mut R) -> f64 {
        self.total() + self.tail_scale * sample_w(mech, rng) / self.scale
    }
}

/// Truncation level for `e^{-T_i/(b-1)}`.
const SCALE_FLOOR: f64 = 1e-12;

fn decompose<R: Rng + ?Sized>(
    mech: &StableMechanism,
    count: usize,
    scale: f64,
    rng: &mut R,
) -> Result<FamilyDecomposition> {
    if count == 0 {
        return Err(Error::contract("sample_family_decomposition", "count must be >= 1"));
    }
    let eta = mech.eta();
    let rate = mech.immigration_rate();
    let mut clock = 0.0;
    let (mut clocks, mut sizes) = (Vec::new(), Vec::new());
    loop {
        clock += rng.sample::<f64, _>(Exp1) / rate;
        let decay = (-clock / eta).exp();
        if decay < SCALE_FLOOR || clocks.len() == count {
            break;
        }
        let e: f64 = rng.sample(Exp1);
        let w = e.powf(1.0 / eta) * sample_positive_stable(eta, rng)?;
        clocks.push(clock);
        sizes.push(decay * w / scale);
    }
    let tail_scale = clocks.last().map_or(1.0, |&t| (-t / eta).exp());
    Ok(FamilyDecomposition {
        immigration_clocks: clocks,
        sizes,
        scale,
        tail_scale,
    })
}

/// Stationary family decomposition with `kappa * zeta_i = e^{-T_i/(b-1)}
/// E_i^{1/(b-1)} sigma_i`, `T_i` the arrival times of a rate `b/(b-1)`
/// Poisson process.
pub fn sample_family_decomposition<R: Rng + ?Sized>(
    mech: &StableMechanism,
    count: usize,
    rng: &mut R,
) -> Result<FamilyDecomposition> {
    let kappa = mech.kappa()?;
    decompose(mech, count, kappa, rng)
}

/// Critical analogue: `c(T) zeta^(T)_i` has the same law as the stationary
/// normalized sizes.
pub fn sample_family_decomposition_critical<R: Rng + ?Sized>(
    mech: &StableMechanism,
    big_t: f64,
    count: usize,
    rng: &mut R,
) -> Result<FamilyDecomposition> {
    if mech.regime() != Regime::Critical {
        return Err(Error::UnsupportedRegime {
            op: "sample_family_decomposition_critical",
            regime: mech.regime(),
        });
    }
    decompose(mech, count, mech.extinction_c(big_t)?, rng)
}

/// Population `Z0^(T)` at time 0 of the critical process, as the sum of
/// its families (listed families plus an exact draw of the remainder).
pub fn sample_z0_t<R: Rng + ?Sized>(mech: &StableMechanism, big_t: f64, rng: &mut R) -> Result<f64> {
    let fam = sample_family_decomposition_critical(mech, big_t, usize::MAX, rng)?;
    Ok(fam.total_with_tail(mech, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    #[test]
    fn sizes_positive_and_age_ordered() {
        let m = StableMechanism::sub_critical(1.0, 2.0, 1.5).unwrap();
        let mut rng = RandomSource::new(21, 0);
        for _ in 0..200 {
            let f = sample_family_decomposition(&m, 1000, &mut rng).unwrap();
            assert!(f.sizes.iter().all(|&z| z > 0.0));
            assert!(f.immigration_clocks.windows(2).all(|w| w[0] < w[1]));
            assert!(f.immigration_clocks[0] > 0.0);
            assert!(f.tail_scale < 1e-10 || f.sizes.len() == 1000);
            assert_eq!(f.scale, m.kappa().unwrap());
        }
        assert!(sample_family_decomposition(&m, 0, &mut rng).is_err());
    }

    #[test]
    fn normalized_total_has_linnik_laplace() {
        let m = StableMechanism::sub_critical(1.0, 1.0, 1.5).unwrap();
        let mut rng = RandomSource::new(22, 0);
        let n = 100_000;
        let zs: Vec<f64> = (0..n)
            .map(|_| {
                let f = sample_family_decomposition(&m, usize::MAX, &mut rng).unwrap();
                f.scale * f.total()
            })
            .collect();
        for &l in &[0.5f64, 1.0, 2.0] {
            let xs: Vec<f64> = zs.iter().map(|z| (-l * z).exp()).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let exact = (1.0 + l.sqrt()).powf(-3.0);
            assert!((mean - exact).abs() < 3.0 * sd / (n as f64).sqrt(), "l={l}");
        }
    }

    #[test]
    fn quadratic_families_are_gamma_subordinator_jumps() {
        // For b = 2 the sizes E_i e^{-T_i} with T_i of rate 2 are the jumps of a
        // Gamma subordinator at time 2: the number of jumps above x is Poisson
        // with mean 2 E_1(x).
        let m = StableMechanism::sub_critical(1.0, 1.0, 2.0).unwrap();
        let mut rng = RandomSource::new(23, 0);
        let n = 50_000;
        let x: f64 = 0.5;
        let count: usize = (0..n)
            .map(|_| {
                let f = sample_family_decomposition(&m, usize::MAX, &mut rng).unwrap();
                f.sizes.iter().filter(|&&z| z > x).count()
            })
            .sum();
        let mean = count as f64 / n as f64;
        // E_1(0.5)
        let e1 = 0.559_773_594_776_160_8;
        assert!((mean - 2.0 * e1).abs() < 3.0 * (2.0 * e1 / n as f64).sqrt());
    }

    #[test]
    fn critical_z0_laplace() {
        let m = StableMechanism::critical(1.0, 1.5).unwrap();
        let mut rng = RandomSource::new(24, 0);
        let n = 100_000;
        let zs: Vec<f64> = (0..n).map(|_| sample_z0_t(&m, 1.0, &mut rng).unwrap()).collect();
        let l: f64 = 1.0;
        let xs: Vec<f64> = zs.iter().map(|z| (-l * z).exp()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let exact = (1.0 + 0.5 * l.sqrt()).powf(-3.0);
        assert!((mean - exact).abs() < 3.0 * sd / (n as f64).sqrt());
        let sub = StableMechanism::sub_critical(1.0, 1.0, 1.5).unwrap();
        assert!(sample_z0_t(&sub, 1.0, &mut rng).is_err());
    }
}
