//! Goodness-of-fit machinery and replica orchestration for the Monte Carlo
//! checks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// Replicate outcomes, either integer states or real samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EmpiricalDistribution {
    Counts { counts: BTreeMap<u64, u64>, total: u64 },
    Samples { samples: Vec<f64> },
}

impl EmpiricalDistribution {
    pub fn from_states(states: impl IntoIterator<Item = u64>) -> Self {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for s in states {
            *counts.entry(s).or_insert(0) += 1;
            total += 1;
        }
        EmpiricalDistribution::Counts { counts, total }
    }

    pub fn total(&self) -> u64 {
        match self {
            EmpiricalDistribution::Counts { total, .. } => *total,
            EmpiricalDistribution::Samples { samples } => samples.len() as u64,
        }
    }

    /// Associative merge of two partial results of the same kind.
    pub fn merge(self, other: Self) -> Result<Self> {
        use EmpiricalDistribution::*;
        match (self, other) {
            (Counts { mut counts, total }, Counts { counts: c2, total: t2 }) => {
                for (k, v) in c2 {
                    *counts.entry(k).or_insert(0) += v;
                }
                Ok(Counts {
                    counts,
                    total: total + t2,
                })
            }
            (Samples { mut samples }, Samples { samples: s2 }) => {
                samples.extend(s2);
                Ok(Samples { samples })
            }
            _ => Err(Error::Test("cannot merge counts with samples".into())),
        }
    }
}

/// Outcome of a statistical test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dof: Option<usize>,
    pub p_value: f64,
    pub n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TestReport {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

fn chi_square_p(stat: f64, dof: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64).unwrap().sf(stat)
}

/// Chi-square goodness of fit of integer counts against `pmf`.
///
/// Cells are formed by walking the support upward and closing a cell once
/// its expected count reaches `min_expected`; everything past the last
/// closed cell (including the infinite tail) forms the final cell.
pub fn chi_square_gof<F: Fn(u64) -> f64>(
    counts: &BTreeMap<u64, u64>,
    pmf: F,
    min_expected: f64,
) -> Result<TestReport> {
    let n: u64 = counts.values().sum();
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp, mut cum) = (0.0, 0.0, 0.0);
    let mut k = 0u64;
    loop {
        let p = pmf(k);
        cum += p;
        exp += nf * p;
        obs += counts.get(&k).copied().unwrap_or(0) as f64;
        k += 1;
        let rest = nf * (1.0 - cum);
        if rest < min_expected || k > 10_000_000 {
            break;
        }
        if exp >= min_expected {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    let tail_obs = counts.range(k..).map(|(_, &v)| v as f64).sum::<f64>();
    obs += tail_obs;
    exp += (nf * (1.0 - cum)).max(0.0);
    match cells.last_mut() {
        Some(last) if exp < min_expected => {
            last.0 += obs;
            last.1 += exp;
        }
        _ => cells.push((obs, exp)),
    }
    if cells.len() < 2 {
        return Err(Error::Test(format!(
            "chi-square needs at least 2 cells after pooling, got {}",
            cells.len()
        )));
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len() - 1;
    Ok(TestReport {
        test: "chi_square_gof".into(),
        statistic: stat,
        dof: Some(dof),
        p_value: chi_square_p(stat, dof),
        n,
        seed: None,
    })
}

/// Two-sample chi-square test of homogeneity on integer counts, with
/// consecutive states pooled until every cell has expected count at least
/// `min_expected` in both samples.
pub fn chi_square_two_sample(
    a: &BTreeMap<u64, u64>,
    b: &BTreeMap<u64, u64>,
    min_expected: f64,
) -> Result<TestReport> {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na == 0 || nb == 0 {
        return Err(Error::Test("empty sample".into()));
    }
    let n = (na + nb) as f64;
    let (fa, fb) = (na as f64 / n, nb as f64 / n);
    let mut keys: Vec<u64> = a.keys().chain(b.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut oa, mut ob) = (0.0, 0.0);
    for k in keys {
        oa += a.get(&k).copied().unwrap_or(0) as f64;
        ob += b.get(&k).copied().unwrap_or(0) as f64;
        if (oa + ob) * fa.min(fb) >= min_expected {
            cells.push((oa, ob));
            oa = 0.0;
            ob = 0.0;
        }
    }
    if oa + ob > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += oa;
                last.1 += ob;
            }
            None => cells.push((oa, ob)),
        }
    }
    if cells.len() < 2 {
        return Err(Error::Test("two-sample chi-square needs at least 2 cells".into()));
    }
    let stat: f64 = cells
        .iter()
        .map(|&(x, y)| {
            let t = x + y;
            let (ea, eb) = (t * fa, t * fb);
            (x - ea).powi(2) / ea + (y - eb).powi(2) / eb
        })
        .sum();
    let dof = cells.len() - 1;
    Ok(TestReport {
        test: "chi_square_two_sample".into(),
        statistic: stat,
        dof: Some(dof),
        p_value: chi_square_p(stat, dof),
        n: na + nb,
        seed: None,
    })
}

/// Kolmogorov limiting survival function `Q(l) = 2 sum (-1)^{j-1} e^{-2 j^2 l^2}`.
fn kolmogorov_q(l: f64) -> f64 {
    if l < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * l * l).exp();
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<TestReport> {
    if samples.is_empty() {
        return Err(Error::Test("empty sample".into()));
    }
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(TestReport {
        test: "ks_one_sample".into(),
        statistic: d,
        dof: None,
        p_value: ks_p(d, n),
        n: xs.len() as u64,
        seed: None,
    })
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestReport> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Test("empty sample".into()));
    }
    let (xa, xb) = (sorted(a), sorted(b));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(TestReport {
        test: "ks_two_sample".into(),
        statistic: d,
        dof: None,
        p_value: ks_p(d, na * nb / (na + nb)),
        n: (xa.len() + xb.len()) as u64,
        seed: None,
    })
}

/// Mean of `e^{-lambda x}` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub lambda: f64,
    pub estimate: f64,
    pub std_error: f64,
}

impl LaplacePoint {
    pub fn within(&self, exact: f64, se_multiple: f64) -> bool {
        (self.estimate - exact).abs() <= se_multiple * self.std_error
    }
}

pub fn empirical_laplace(samples: &[f64], lambdas: &[f64]) -> Vec<LaplacePoint> {
    lambdas
        .iter()
        .map(|&l| {
            let vals: Vec<f64> = samples.iter().map(|x| (-l * x).exp()).collect();
            let (estimate, std_error) = mean_se(&vals);
            LaplacePoint {
                lambda: l,
                estimate,
                std_error,
            }
        })
        .collect()
}

/// Sample mean and standard error of the mean (zero for a constant sample).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if xs.windows(2).all(|w| w[0] == w[1]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Runs `f` on `replicas` independent streams in parallel; output is ordered
/// by replica index, so results do not depend on scheduling.
pub fn run_replicas<T, F>(seed: u64, salt: u32, replicas: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RandomSource) -> T + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| f(&mut RandomSource::replica(seed, salt, i as u32)))
        .collect()
}
