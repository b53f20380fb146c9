//! The acceptance checks A1-A12, each comparing a closed form with
//! simulation or a second numerical route, under pinned seeds.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytics::{
    beta_discrepancy, beta_discrepancy_root, intensity_laplace_check, linnik_density, linnik_density_alt,
    linnik_transform, moment_closed_forms, moment_table_v,
};
use crate::coalescent::pd_tests;
use crate::error::{Error, Result};
use crate::mechanism::StableMechanism;
use crate::quadrature::QuadratureConfig;
use crate::rates::{bs_limit_rate, death_rate, pgf_implied_death_rate, quadratic_marginal_pmf, DeathRates, RateQuery};
use crate::rng::RandomSource;
use crate::simulate::{
    sample_scaled_gwi, sample_w, sample_z0_t, simulate_ancestral, simulate_ancestral_direct,
    simulate_ancestral_from, simulate_gwi, simulate_gwi_critical, JumpLaws, DEFAULT_STATE_CAP,
};
use crate::stats::{
    chi_square_gof, chi_square_two_sample, empirical_laplace, ks_one_sample, ks_two_sample, run_replicas,
    EmpiricalDistribution,
};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_260_601;

/// Pre-registered p-value floor.
pub const P_FLOOR: f64 = 0.01;

pub const CRITERIA: [&str; 12] = [
    "A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11", "A12",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Reduced replica counts.
    Fast,
    /// Full replica counts.
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Suite::Fast),
            "all" => Ok(Suite::All),
            _ => Err(Error::contract("Suite", format!("unknown suite '{s}' (all|fast)"))),
        }
    }
}

impl Suite {
    fn replicas(self, full: usize) -> usize {
        match self {
            Suite::All => full,
            Suite::Fast => (full / 5).max(2000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CriterionReport {
    pub id: String,
    pub passed: bool,
    pub summary: String,
    pub details: Value,
    pub seconds: f64,
}

fn to_counts(states: impl IntoIterator<Item = u64>) -> BTreeMap<u64, u64> {
    match EmpiricalDistribution::from_states(states) {
        EmpiricalDistribution::Counts { counts, .. } => counts,
        EmpiricalDistribution::Samples { .. } => unreachable!(),
    }
}

fn unit(b: f64) -> Result<StableMechanism> {
    StableMechanism::sub_critical(1.0, 1.0, b)
}

fn salt(id: &str) -> u32 {
    id[1..].parse::<u32>().unwrap_or(0) << 8
}

type Outcome = (bool, String, Value);

/// Censoring level for the two-sample state comparisons: both samplers see
/// `min(state, CENSOR)`, which keeps runtimes bounded under the heavy-tailed
/// immigration without biasing either side.
const CENSOR: u64 = 100_000;

fn a1(suite: Suite, seed: u64) -> Result<Outcome> {
    let mech = unit(2.0)?;
    let laws = JumpLaws::new(&mech);
    let t = std::f64::consts::LN_2;
    let n = suite.replicas(100_000);
    let states = run_replicas(seed, salt("A1"), n, |rng| {
        simulate_ancestral(&laws, -t, DEFAULT_STATE_CAP, rng).map(|p| p.final_state())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let r = chi_square_gof(&to_counts(states), |k| quadratic_marginal_pmf(&mech, k as usize, t).unwrap_or(0.0), 5.0)?
        .with_seed(seed);
    Ok((
        r.p_value > P_FLOOR,
        format!("chi-square p = {:.4} (dof {})", r.p_value, r.dof.unwrap_or(0)),
        json!({ "test": r }),
    ))
}

fn a2(suite: Suite, seed: u64) -> Result<Outcome> {
    let mech = unit(1.5)?;
    let laws = JumpLaws::new(&mech);
    let grid = [0.5, 1.0, 2.0];
    let cal: Vec<f64> = grid.iter().map(|&s| mech.calendar_time(s)).collect::<Result<_>>()?;
    let n = suite.replicas(20_000);
    let anc = run_replicas(seed, salt("A2"), n, |rng| {
        simulate_ancestral(&laws, cal[2], CENSOR, rng)
            .map(|p| cal.iter().map(|&t| p.state_at(t).min(CENSOR)).collect::<Vec<_>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let gwi = run_replicas(seed, salt("A2") + 1, n, |rng| {
        simulate_gwi(&laws, grid[2], CENSOR, rng)
            .map(|p| grid.iter().map(|&s| p.state_at(s).min(CENSOR)).collect::<Vec<_>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut tests = Vec::new();
    for i in 0..grid.len() {
        let a = to_counts(anc.iter().map(|v| v[i]));
        let g = to_counts(gwi.iter().map(|v| v[i]));
        tests.push(chi_square_two_sample(&a, &g, 5.0)?.with_seed(seed));
    }
    let passed = tests.iter().all(|r| r.p_value > P_FLOOR);
    let ps: Vec<String> = tests.iter().map(|r| format!("{:.4}", r.p_value)).collect();
    Ok((
        passed,
        format!("two-sample chi-square p at s = 0.5, 1, 2: {}", ps.join(", ")),
        json!({ "s": grid, "calendar": cal, "tests": tests }),
    ))
}

fn a3(suite: Suite, seed: u64) -> Result<Outcome> {
    let (t_start, t_end) = (-5.0, -0.5);
    let n = suite.replicas(20_000);
    let mut tests = Vec::new();
    for (i, &b) in [1.5, 2.0].iter().enumerate() {
        let mech = unit(b)?;
        let laws = JumpLaws::new(&mech);
        let s = salt("A3") + 2 * i as u32;
        let direct = run_replicas(seed, s, n, |rng| {
            // Each jump adds at least one, so a path cut at CENSOR jumps is censored.
            simulate_ancestral_direct(&laws, t_start, t_end, CENSOR as usize, rng)
                .map(|p| p.final_state().min(CENSOR))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let changed = run_replicas(seed, s + 1, n, |rng| {
            simulate_ancestral_from(&laws, t_start, t_end, CENSOR, rng).map(|p| p.final_state().min(CENSOR))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        tests.push(chi_square_two_sample(&to_counts(direct), &to_counts(changed), 5.0)?.with_seed(seed));
    }
    Ok((
        tests.iter().all(|r| r.p_value > P_FLOOR),
        format!(
            "direct vs time-changed, p = {:.4} (b=1.5), {:.4} (b=2)",
            tests[0].p_value, tests[1].p_value
        ),
        json!({ "b": [1.5, 2.0], "tStart": t_start, "tEnd": t_end, "tests": tests }),
    ))
}

fn a4(suite: Suite, seed: u64) -> Result<Outcome> {
    let mech = unit(1.5)?;
    let laws = JumpLaws::new(&mech);
    let eta = mech.eta();
    let n = suite.replicas(100_000);
    let scaled = run_replicas(seed, salt("A4"), n, |rng| sample_scaled_gwi(&laws, 25.0, 2_000, rng))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let w = run_replicas(seed, salt("A4") + 1, n, |rng| sample_w(&mech, rng));
    let lambdas = [0.5, 1.0, 2.0];
    let points = empirical_laplace(&scaled, &lambdas);
    let exact: Vec<f64> = lambdas.iter().map(|l: &f64| (1.0 + l.powf(eta)).powf(-mech.b() / eta)).collect();
    let laplace_ok = points.iter().zip(&exact).all(|(p, &e)| p.within(e, 3.0));
    let ks = ks_two_sample(&scaled, &w)?.with_seed(seed);
    Ok((
        laplace_ok && ks.p_value > P_FLOOR,
        format!(
            "Laplace within 3 SE: {laplace_ok}; KS vs W p = {:.4}",
            ks.p_value
        ),
        json!({ "laplace": points, "exact": exact, "ks": ks }),
    ))
}

fn a5() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for &eta in &[0.1, 0.25, 0.5, 0.75, 1.0] {
        let table = moment_table_v(eta, 3)?;
        let closed = moment_closed_forms(eta);
        for i in 0..3 {
            worst = worst.max((table[i] - closed[i]).abs());
        }
        rows.push(json!({ "eta": eta, "recursion": table, "closedForm": closed }));
    }
    let at1 = moment_table_v(1.0, 3)?;
    let beta = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 10.0];
    let beta_err = at1.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((
        worst <= 1e-12 && beta_err <= 1e-15,
        format!("max |recursion - closed form| = {worst:.2e}; eta=1 vs Beta(1,2): {beta_err:.2e}"),
        json!({ "rows": rows, "maxError": worst, "betaError": beta_err }),
    ))
}

fn a6(suite: Suite, seed: u64) -> Result<Outcome> {
    let mech = unit(1.5)?;
    let samples = suite.replicas(20_000);
    let checks = [0.5, 1.0, 2.0]
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut rng = RandomSource::replica(seed, salt("A6"), i as u32);
            intensity_laplace_check(&mech, l, samples, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = checks.iter().all(|c| c.passes());
    let worst = checks
        .iter()
        .map(|c| (c.estimate - c.exact).abs() / c.std_error.max(1e-300))
        .fold(0.0, f64::max);
    Ok((
        passed,
        format!("max deviation {worst:.2} SE over lambda = 0.5, 1, 2"),
        json!({ "checks": checks }),
    ))
}

fn a7(suite: Suite, seed: u64) -> Result<Outcome> {
    let r = pd_tests(&unit(2.0)?, suite.replicas(100_000), seed ^ u64::from(salt("A7")))?;
    Ok((
        r.size_biased.p_value > P_FLOOR && r.gem_p_value > P_FLOOR,
        format!(
            "size-biased vs Beta(1,2) p = {:.4}; GEM (Bonferroni) p = {:.4}",
            r.size_biased.p_value, r.gem_p_value
        ),
        serde_json::to_value(&r).expect("report serializes"),
    ))
}

fn a8() -> Result<Outcome> {
    let ts = [0.5, 1.0, 2.0];
    let mut errs = Vec::new();
    for &b in &[1.1, 1.01, 1.001] {
        let rates = DeathRates::new(&unit(b)?, 6)?;
        let mut worst: f64 = 0.0;
        for n in 1..=6 {
            for m in 0..n {
                for &t in &ts {
                    let q = rates.rate(RateQuery::new(n, m, t))?;
                    let lim = bs_limit_rate(n, m, t, 1.0)?;
                    worst = worst.max((q - lim).abs() / lim);
                }
            }
        }
        errs.push(worst);
    }
    // Cross-check the cached tables against the one-shot entry point.
    let direct = death_rate(&unit(1.001)?, RateQuery::new(6, 0, 1.0))?;
    let cached = DeathRates::new(&unit(1.001)?, 6)?.rate(RateQuery::new(6, 0, 1.0))?;
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    Ok((
        errs[2] < 0.01 && decreasing && direct == cached,
        format!(
            "max rel. error {:.2e}, {:.2e}, {:.2e} at b = 1.1, 1.01, 1.001",
            errs[0], errs[1], errs[2]
        ),
        json!({ "b": [1.1, 1.01, 1.001], "maxRelError": errs }),
    ))
}

fn a9() -> Result<Outcome> {
    let mech = unit(1.5)?;
    let rates = DeathRates::new(&mech, 4)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        for m in 0..n {
            let exact = rates.rate(RateQuery::new(n, m, 1.0))?;
            let est = pgf_implied_death_rate(&mech, n, m, 1.0, 0.004)?;
            let e = (est - exact).abs() / exact;
            worst = worst.max(e);
            rows.push(json!({ "n": n, "m": m, "pgf": est, "rate": exact, "relError": e }));
        }
    }
    Ok((
        worst < 1e-3,
        format!("max rel. error {worst:.2e} over n <= 4"),
        json!({ "rows": rows }),
    ))
}

fn a10(suite: Suite, seed: u64) -> Result<Outcome> {
    let (gamma, b, big_t) = (1.0, 1.5, 1.0);
    let mech = StableMechanism::critical(gamma, b)?;
    let eta = mech.eta();
    let n = suite.replicas(100_000);
    let z = run_replicas(seed, salt("A10"), n, |rng| sample_z0_t(&mech, big_t, rng))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let lambdas = [0.5, 1.0, 2.0];
    let points = empirical_laplace(&z, &lambdas);
    let exact: Vec<f64> = lambdas
        .iter()
        .map(|l: &f64| (1.0 + gamma * eta * l.powf(eta) * big_t).powf(-b / eta))
        .collect();
    let laplace_ok = points.iter().zip(&exact).all(|(p, &e)| p.within(e, 3.0));
    let laws = JumpLaws::new(&mech);
    let taus = run_replicas(seed, salt("A10") + 1, n, |rng| {
        // Only the first jump matters; a short horizon keeps paths small.
        simulate_gwi_critical(&laws, big_t, 40.0, 1, rng).map(|p| p.times.first().map_or(0.0, |t| -t))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let ks = ks_one_sample(&taus, |t| (t / big_t).clamp(0.0, 1.0).powf(b / eta))?.with_seed(seed);
    Ok((
        laplace_ok && ks.p_value > P_FLOOR,
        format!("Laplace within 3 SE: {laplace_ok}; first-jump KS p = {:.4}", ks.p_value),
        json!({ "laplace": points, "exact": exact, "firstJump": ks }),
    ))
}

fn a11() -> Result<Outcome> {
    let (a, b) = (0.5, 1.5);
    let cfg = QuadratureConfig {
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        ..QuadratureConfig::default()
    };
    let mass = linnik_transform(a, b, 0.0, &cfg)?.value;
    let mut laplace = Vec::new();
    let mut lap_err: f64 = 0.0;
    for &l in &[0.5f64, 1.0, 2.0] {
        let v = linnik_transform(a, b, l, &cfg)?.value;
        let exact = (1.0 + l.powf(a)).powf(-b / a);
        lap_err = lap_err.max((v - exact).abs());
        laplace.push(json!({ "lambda": l, "quadrature": v, "exact": exact }));
    }
    let mut rep_err: f64 = 0.0;
    for &z in &[0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
        let f = linnik_density(a, b, z, &cfg)?.value;
        let g = linnik_density_alt(a, z, &cfg)?.value;
        rep_err = rep_err.max((f - g).abs());
    }
    let mass_err = (mass - 1.0).abs();
    Ok((
        mass_err < 1e-4 && lap_err < 1e-4 && rep_err < 1e-3,
        format!("mass error {mass_err:.1e}, Laplace error {lap_err:.1e}, representation gap {rep_err:.1e}"),
        json!({ "mass": mass, "laplace": laplace, "representationGap": rep_err }),
    ))
}

fn a12() -> Result<Outcome> {
    // Numeric tolerance of the recursion: its agreement with the closed forms.
    let tol = [0.2, 0.6, 0.9]
        .iter()
        .map(|&eta| -> Result<f64> {
            let t = moment_table_v(eta, 3)?;
            let c = moment_closed_forms(eta);
            Ok((0..3).map(|i| (t[i] - c[i]).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(1e-15, f64::max);
    let gaps = [0.2, 0.6, 0.9]
        .iter()
        .map(|&eta| beta_discrepancy(eta))
        .collect::<Result<Vec<_>>>()?;
    let root = beta_discrepancy_root(0.3, 0.6)?;
    Ok((
        gaps.iter().all(|g| g.abs() > 10.0 * tol),
        format!(
            "|E[V^3] - Beta fit| = {:.2e}, {:.2e}, {:.2e} (tol {tol:.1e}); sign change near eta = {}",
            gaps[0].abs(),
            gaps[1].abs(),
            gaps[2].abs(),
            root.map_or("none".to_string(), |r| format!("{r:.4}"))
        ),
        json!({ "eta": [0.2, 0.6, 0.9], "discrepancy": gaps, "tolerance": tol, "root": root }),
    ))
}

/// Runs one criterion; numerical errors turn into a failed report.
pub fn run_criterion(id: &str, suite: Suite, seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let outcome = match id {
        "A1" => a1(suite, seed),
        "A2" => a2(suite, seed),
        "A3" => a3(suite, seed),
        "A4" => a4(suite, seed),
        "A5" => a5(),
        "A6" => a6(suite, seed),
        "A7" => a7(suite, seed),
        "A8" => a8(),
        "A9" => a9(),
        "A10" => a10(suite, seed),
        "A11" => a11(),
        "A12" => a12(),
        _ => return Err(Error::contract("run_criterion", format!("unknown criterion '{id}'"))),
    };
    let (passed, summary, details) = outcome.unwrap_or_else(|e| (false, format!("error: {e}"), Value::Null));
    Ok(CriterionReport {
        id: id.to_string(),
        passed,
        summary,
        details,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<CriterionReport> {
    CRITERIA
        .iter()
        .map(|id| run_criterion(id, suite, seed).expect("known id"))
        .collect()
}
