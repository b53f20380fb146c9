//! Partition-valued genealogy of a sample of `n` individuals, the
//! Bolthausen-Sznitman comparison, and Poisson-Dirichlet checks on family
//! sizes.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::analytics::{beta_fit_third_moment, moment_table_v};
use crate::error::{Error, Result};
use crate::mechanism::{Regime, StableMechanism};
use crate::rates::{rescaled_collision_rate, DeathRates};
use crate::rng::RandomSource;
use crate::simulate::sample_family_decomposition;
use crate::stats::{ks_one_sample, ks_two_sample, mean_se, run_replicas, TestReport};

/// A partition of `{1..n}`; blocks sorted internally and by least element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn singletons(n: usize) -> Self {
        Partition {
            blocks: (1..=n).map(|i| vec![i]).collect(),
        }
    }

    /// Canonicalizes arbitrary blocks; fails unless they partition `{1..n}`.
    pub fn from_blocks(mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.retain(|b| !b.is_empty());
        blocks.sort_by_key(|b| b[0]);
        let mut all: Vec<usize> = blocks.iter().flatten().copied().collect();
        all.sort_unstable();
        if all.iter().enumerate().any(|(i, &x)| x != i + 1) {
            return Err(Error::contract("Partition", "blocks must partition {1..n}"));
        }
        Ok(Partition { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block sizes in decreasing order.
    pub fn block_sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.blocks.iter().map(Vec::len).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    /// Merges the blocks at the given indices into one.
    fn merge(&self, idx: &[usize]) -> Partition {
        let mut merged = Vec::new();
        let mut rest = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            if idx.contains(&i) {
                merged.extend_from_slice(b);
            } else {
                rest.push(b.clone());
            }
        }
        rest.push(merged);
        Partition::from_blocks(rest).expect("merge preserves the cover")
    }

    /// Restriction to `{1..k}`.
    pub fn restrict(&self, k: usize) -> Partition {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.iter().copied().filter(|&x| x <= k).collect::<Vec<_>>())
            .filter(|b| !b.is_empty())
            .collect();
        Partition::from_blocks(blocks).expect("restriction is a partition")
    }

    /// Whether `finer -> self` merges exactly one group of at least two
    /// blocks and leaves the others untouched.
    pub fn is_single_merge_of(&self, finer: &Partition) -> bool {
        if finer.n() != self.n() || self.block_count() >= finer.block_count() {
            return false;
        }
        let untouched = finer
            .blocks
            .iter()
            .filter(|b| self.blocks.contains(b))
            .count();
        let merged = finer.block_count() - untouched;
        let new = self.block_count() - untouched;
        // Every coarse block is a union of fine blocks in a coarsening.
        let coarsens = self.blocks.iter().all(|cb| {
            finer
                .blocks
                .iter()
                .filter(|fb| fb.iter().any(|x| cb.contains(x)))
                .all(|fb| fb.iter().all(|x| cb.contains(x)))
        });
        coarsens && new == 1 && merged >= 2
    }
}

/// Coarsening sequence of partitions with the times at which they start;
/// `partitions[0]` is the singleton partition at time `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescentPath {
    pub times: Vec<f64>,
    pub partitions: Vec<Partition>,
}

impl CoalescentPath {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("path serializes")
    }

    pub fn partition_at(&self, t: f64) -> &Partition {
        let i = self.times.partition_point(|&s| s <= t);
        &self.partitions[i.saturating_sub(1)]
    }

    /// Structural validity: increasing times, single multiple-collision
    /// steps, absorption in one block.
    pub fn is_valid(&self) -> bool {
        self.times.len() == self.partitions.len()
            && !self.partitions.is_empty()
            && self.times.windows(2).all(|w| w[0] < w[1])
            && self
                .partitions
                .windows(2)
                .all(|w| w[1].is_single_merge_of(&w[0]))
            && self.partitions.last().unwrap().block_count() == 1
    }

    /// The induced path on `{1..k}`, with steps that do not affect it dropped.
    pub fn restrict(&self, k: usize) -> CoalescentPath {
        let mut out = CoalescentPath {
            times: vec![self.times[0]],
            partitions: vec![self.partitions[0].restrict(k)],
        };
        for (t, p) in self.times.iter().zip(&self.partitions).skip(1) {
            let r = p.restrict(k);
            if &r != out.partitions.last().unwrap() {
                out.times.push(*t);
                out.partitions.push(r);
            }
        }
        out
    }
}

/// Relative slack allowed when comparing a rate with its bound.
const BOUND_SLACK: f64 = 1e-9;

/// Genealogy of `n` individuals sampled at time 0, conditioned on the
/// sample having `n-1` ancestors (besides the spine) at level `T`.
///
/// The backward death chain runs from state `n-1` at `T`; a jump
/// `k-1 -> k-m` merges a uniform `m`-subset of the `k` blocks. Jump times
/// come from thinning, using that the total death rate from a fixed state
/// decreases with distance from the observation level.
pub fn simulate_coalescent<R: Rng + ?Sized>(
    mech: &StableMechanism,
    n: usize,
    big_t: f64,
    rng: &mut R,
) -> Result<CoalescentPath> {
    if mech.regime() != Regime::SubCritical {
        return Err(Error::UnsupportedRegime {
            op: "simulate_coalescent",
            regime: mech.regime(),
        });
    }
    if n < 2 {
        return Err(Error::contract("simulate_coalescent", format!("n must be >= 2, got {n}")));
    }
    if !(big_t > 0.0 && big_t.is_finite()) {
        return Err(Error::domain("simulate_coalescent", "T", big_t));
    }
    let rates = DeathRates::new(mech, n - 1)?;
    simulate_with(&rates, n, big_t, rng)
}

/// As [`simulate_coalescent`] with prebuilt rate tables (covering `n - 1`).
pub fn simulate_with<R: Rng + ?Sized>(
    rates: &DeathRates,
    n: usize,
    big_t: f64,
    rng: &mut R,
) -> Result<CoalescentPath> {
    let mut part = Partition::singletons(n);
    let mut path = CoalescentPath {
        times: vec![big_t],
        partitions: vec![part.clone()],
    };
    let mut t = big_t;
    while part.block_count() > 1 {
        let k = part.block_count();
        let mut bound = rates.total(k - 1, t)?;
        loop {
            t += rng.sample::<f64, _>(Exp1) / bound;
            let row = rates.rates_from(k - 1, t)?;
            let total: f64 = row.iter().sum();
            if total > bound * (1.0 + BOUND_SLACK) {
                let worst = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
                return Err(Error::DominatingRate { k, m: k - worst, t });
            }
            if rng.random::<f64>() * bound < total {
                // Target state j = k - m, chosen proportionally to its rate.
                let mut u = rng.random::<f64>() * total;
                let mut j = 0;
                while j + 1 < row.len() && u >= row[j] {
                    u -= row[j];
                    j += 1;
                }
                let m = k - j;
                let idx = sample_indices(rng, k, m).into_vec();
                part = part.merge(&idx);
                path.times.push(t);
                path.partitions.push(part.clone());
                break;
            }
            bound = total;
        }
    }
    Ok(path)
}

/// Bolthausen-Sznitman rate `(m-2)!(k-m)!/(k-1)!` at which a given set of
/// `m` out of `k` blocks merges.
pub fn bs_rate(k: usize, m: usize) -> Result<f64> {
    if !(2 <= m && m <= k) {
        return Err(Error::contract("bs_rate", format!("needs 2 <= m <= k, got k = {k}, m = {m}")));
    }
    let ln = ln_factorial((m - 2) as u64) + ln_factorial((k - m) as u64) - ln_factorial((k - 1) as u64);
    Ok(ln.exp())
}

/// One row of the convergence sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BsRow {
    pub b: f64,
    pub max_rel_error: f64,
    pub worst_k: usize,
    pub worst_m: usize,
    pub worst_t: f64,
    /// Spread of the rescaled rates over the time grid, maximized over
    /// `(k, m)`; zero in the limit.
    pub time_spread: f64,
}

/// Rescaled per-collision rates against [`bs_rate`] for each `b`, over
/// `2 <= m <= k <= n` and the time grid.
pub fn bs_convergence_report(
    alpha: f64,
    gamma: f64,
    bs: &[f64],
    n: usize,
    big_t: f64,
    t_grid: &[f64],
) -> Result<Vec<BsRow>> {
    bs.iter()
        .map(|&b| {
            let mech = StableMechanism::sub_critical(alpha, gamma, b)?;
            let rates = DeathRates::new(&mech, n - 1)?;
            let mut row = BsRow {
                b,
                max_rel_error: 0.0,
                worst_k: 0,
                worst_m: 0,
                worst_t: 0.0,
                time_spread: 0.0,
            };
            for k in 2..=n {
                for m in 2..=k {
                    let exact = bs_rate(k, m)?;
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &t in t_grid {
                        let r = rescaled_collision_rate(&rates, k, m, big_t, t)?;
                        lo = lo.min(r);
                        hi = hi.max(r);
                        let e = (r - exact).abs() / exact;
                        if e > row.max_rel_error {
                            row.max_rel_error = e;
                            row.worst_k = k;
                            row.worst_m = m;
                            row.worst_t = t;
                        }
                    }
                    row.time_spread = row.time_spread.max((hi - lo) / exact);
                }
            }
            Ok(row)
        })
        .collect()
}

/// A Monte Carlo moment against its exact value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MomentCheck {
    pub order: usize,
    pub empirical: f64,
    pub std_error: f64,
    pub exact: f64,
}

impl MomentCheck {
    pub fn within(&self, se_multiple: f64) -> bool {
        (self.empirical - self.exact).abs() <= se_multiple * self.std_error
    }
}

/// Poisson-Dirichlet / GEM structure of the family sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PdReport {
    pub b: f64,
    pub replicas: usize,
    pub seed: u64,
    /// KS of the size-biased pick against Beta(1,2).
    pub size_biased: TestReport,
    /// Per-coordinate two-sample KS of age-ordered fractions against
    /// stick-breaking with Beta(1,2) sticks.
    pub gem: Vec<TestReport>,
    /// Bonferroni-adjusted minimum over `gem`.
    pub gem_p_value: f64,
    pub moments: Vec<MomentCheck>,
    /// Beta law fit to the exact first two moments, predicting the third.
    pub beta_fit_third: MomentCheck,
}

/// Number of age-ordered coordinates compared with stick-breaking.
pub const GEM_COORDINATES: usize = 5;

/// Beta(1,2) CDF.
fn beta12_cdf(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    1.0 - (1.0 - x) * (1.0 - x)
}

/// Samples family decompositions and checks the size-biased pick and the
/// age-ordered fractions. The Beta(1,2)/GEM comparisons only hold at
/// `b = 2`; for other `b` they are descriptive.
pub fn pd_tests(mech: &StableMechanism, replicas: usize, seed: u64) -> Result<PdReport> {
    if replicas < 2 {
        return Err(Error::contract("pd_tests", "need at least 2 replicas"));
    }
    let draws = run_replicas(seed, 0x5044, replicas, |rng| -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let fam = sample_family_decomposition(mech, usize::MAX, rng)?;
        let z = fam.total_with_tail(mech, rng);
        let mut u = rng.random::<f64>() * fam.total();
        let mut k = 0;
        while k + 1 < fam.sizes.len() && u >= fam.sizes[k] {
            u -= fam.sizes[k];
            k += 1;
        }
        let v = fam.sizes.get(k).map_or(0.0, |s| s / z);
        let fracs: Vec<f64> = (0..GEM_COORDINATES)
            .map(|i| fam.sizes.get(i).map_or(0.0, |s| s / z))
            .collect();
        let beta = Beta::new(1.0, 2.0).unwrap();
        let mut rest = 1.0;
        let sticks: Vec<f64> = (0..GEM_COORDINATES)
            .map(|_| {
                let u: f64 = beta.sample(rng);
                let x = rest * u;
                rest *= 1.0 - u;
                x
            })
            .collect();
        Ok((v, fracs, sticks))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let vs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let size_biased = ks_one_sample(&vs, beta12_cdf)?.with_seed(seed);
    let gem = (0..GEM_COORDINATES)
        .map(|i| {
            let a: Vec<f64> = draws.iter().map(|d| d.1[i]).collect();
            let s: Vec<f64> = draws.iter().map(|d| d.2[i]).collect();
            ks_two_sample(&a, &s).map(|r| r.with_seed(seed))
        })
        .collect::<Result<Vec<_>>>()?;
    let gem_p_value = gem
        .iter()
        .map(|r| (r.p_value * GEM_COORDINATES as f64).min(1.0))
        .fold(1.0, f64::min);

    let exact = moment_table_v(mech.eta(), 3)?;
    let moments: Vec<MomentCheck> = (1..=3)
        .map(|p| {
            let xs: Vec<f64> = vs.iter().map(|v| v.powi(p as i32)).collect();
            let (empirical, std_error) = mean_se(&xs);
            MomentCheck {
                order: p,
                empirical,
                std_error,
                exact: exact[p - 1],
            }
        })
        .collect();
    let (fit, _) = beta_fit_third_moment(mech.eta())?;
    let beta_fit_third = MomentCheck {
        exact: fit,
        ..moments[2].clone()
    };
    Ok(PdReport {
        b: mech.b(),
        replicas,
        seed,
        size_biased,
        gem,
        gem_p_value,
        moments,
        beta_fit_third,
    })
}

/// Empirical law of the first merge time for `n = 2`, for oracle checks:
/// returns merge times of `replicas` independent paths.
pub fn pair_merge_times(mech: &StableMechanism, big_t: f64, replicas: usize, seed: u64) -> Result<Vec<f64>> {
    let rates = DeathRates::new(mech, 1)?;
    run_replicas(seed, 0x4e32, replicas, |rng: &mut RandomSource| {
        simulate_with(&rates, 2, big_t, rng).map(|p| p.times[1])
    })
    .into_iter()
    .collect()
}
