//! Subcommand implementations.

use rayon::prelude::*;
use serde_json::json;
use stablegen::acceptance::{run_criterion, CriterionReport, Suite, CRITERIA};
use stablegen::analytics::{intensity_g, linnik_density, moment_closed_forms, moment_table_v};
use stablegen::coalescent::{bs_convergence_report, simulate_with, CoalescentPath};
use stablegen::quadrature::QuadratureConfig;
use stablegen::rates::{birth_rate, critical_birth_rate, DeathRates, RateQuery};
use stablegen::simulate::{
    sample_family_decomposition, sample_family_decomposition_critical, simulate_ancestral,
    simulate_ancestral_direct, simulate_ancestral_from, simulate_gwi, simulate_gwi_critical, JumpLaws, JumpPath,
};
use stablegen::stats::{run_replicas, EmpiricalDistribution};
use stablegen::{RandomSource, Regime, StableMechanism};

use crate::config::{ConfigError, Format, RunConfig};
use crate::output::{format_or, write_csv, write_json};
use crate::{Command, DensityKind, SimKind, SuiteArg, VerificationFailed};

pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> anyhow::Result<()> {
    match cmd {
        Command::Simulate {
            kind,
            horizon,
            t_start,
            t_end,
            big_t,
            cap,
            marginal,
        } => simulate(cfg, *kind, *horizon, *t_start, *t_end, *big_t, *cap, marginal),
        Command::Rates {
            n,
            m,
            t,
            n_max,
            death,
            birth,
        } => rates(cfg, *n, *m, t, *n_max, *death, *birth),
        Command::Moments { eta, nmax } => moments(cfg, *eta, *nmax),
        Command::Density { which, grid } => density(cfg, *which, grid),
        Command::Families { count, big_t } => families(cfg, *count, *big_t),
        Command::Coalescent {
            n,
            big_t,
            bs_report,
            sweep,
            t_grid,
        } => coalescent(cfg, *n, *big_t, *bs_report, sweep, t_grid),
        Command::Verify { suite, strict, only } => verify(cfg, *suite, *strict, only),
    }
}

fn collect<T>(v: Vec<stablegen::Result<T>>) -> anyhow::Result<Vec<T>> {
    Ok(v.into_iter().collect::<stablegen::Result<Vec<T>>>()?)
}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    cfg: &RunConfig,
    kind: SimKind,
    horizon: f64,
    t_start: Option<f64>,
    t_end: f64,
    big_t: f64,
    cap: u64,
    marginal: &[f64],
) -> anyhow::Result<()> {
    let laws = JumpLaws::new(&cfg.mechanism);
    let last = marginal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let has_marginal = !marginal.is_empty();
    // With marginals requested, paths run just far enough to cover them.
    let (horizon, t_end) = match kind {
        SimKind::Gwi if has_marginal => (last, t_end),
        SimKind::Ancestral | SimKind::AncestralDirect if has_marginal => (horizon, last),
        SimKind::Critical if has_marginal => {
            if !(marginal.iter().all(|&t| t > -big_t && t < 0.0)) {
                return Err(bad("critical marginal times must lie in (-T, 0)"));
            }
            ((-big_t / last).ln().max(f64::MIN_POSITIVE), t_end)
        }
        _ => (horizon, t_end),
    };
    let one = |rng: &mut RandomSource| -> stablegen::Result<JumpPath> {
        match kind {
            SimKind::Gwi => simulate_gwi(&laws, horizon, cap, rng),
            SimKind::Ancestral => match t_start {
                Some(s) => simulate_ancestral_from(&laws, s, t_end, cap, rng),
                None => simulate_ancestral(&laws, t_end, cap, rng),
            },
            SimKind::AncestralDirect => {
                simulate_ancestral_direct(&laws, t_start.unwrap_or(-5.0), t_end, cap as usize, rng)
            }
            SimKind::Critical => simulate_gwi_critical(&laws, big_t, horizon, cap, rng),
        }
    };
    let paths = collect(run_replicas(cfg.seed, 1, cfg.replicas, one))?;
    let format = format_or(cfg, Format::Json);
    if has_marginal {
        let dists: Vec<(f64, EmpiricalDistribution)> = marginal
            .iter()
            .map(|&t| (t, EmpiricalDistribution::from_states(paths.iter().map(|p| p.state_at(t)))))
            .collect();
        let truncated = paths.iter().filter(|p| p.truncated).count();
        return match format {
            Format::Json => {
                let m: Vec<_> = dists
                    .iter()
                    .map(|(t, d)| json!({ "time": t, "distribution": d }))
                    .collect();
                write_json(cfg, json!({ "marginals": m, "truncatedPaths": truncated }))
            }
            Format::Csv => {
                let mut rows = Vec::new();
                for (t, d) in &dists {
                    if let EmpiricalDistribution::Counts { counts, .. } = d {
                        for (s, c) in counts {
                            rows.push(vec![t.to_string(), s.to_string(), c.to_string()]);
                        }
                    }
                }
                write_csv(cfg, &["time", "state", "count"], &rows)
            }
        };
    }
    match format {
        Format::Json => write_json(cfg, json!({ "paths": paths })),
        Format::Csv => {
            let mut rows = Vec::new();
            for (i, p) in paths.iter().enumerate() {
                for (t, s) in p.times.iter().zip(&p.states) {
                    rows.push(vec![i.to_string(), t.to_string(), s.to_string()]);
                }
            }
            write_csv(cfg, &["replica", "time", "state"], &rows)
        }
    }
}

fn birth(mech: &StableMechanism, q: RateQuery) -> stablegen::Result<f64> {
    match mech.regime() {
        Regime::SubCritical => birth_rate(mech, q),
        Regime::Critical => critical_birth_rate(mech, q),
    }
}

fn rates(
    cfg: &RunConfig,
    n: Option<usize>,
    m: Option<usize>,
    ts: &[f64],
    n_max: usize,
    only_death: bool,
    only_birth: bool,
) -> anyhow::Result<()> {
    let mech = cfg.mechanism;
    let pairs: Vec<(usize, usize)> = match (n, m) {
        (Some(n), Some(m)) => {
            if n == m {
                return Err(bad("--n and --m must differ"));
            }
            if (only_death && m > n) || (only_birth && m < n) {
                return Err(bad(format!("no {} rate for n = {n}, m = {m}", if m > n { "death" } else { "birth" })));
            }
            vec![(n, m)]
        }
        (None, None) => (0..=n_max)
            .flat_map(|n| (0..=n_max).map(move |m| (n, m)))
            .filter(|&(n, m)| n != m)
            .filter(|&(n, m)| !(only_death && m > n) && !(only_birth && m < n))
            .filter(|&(n, m)| m > n || mech.regime() == Regime::SubCritical)
            .collect(),
        _ => return Err(bad("give both --n and --m, or neither")),
    };
    let top = pairs.iter().map(|p| p.0).max().unwrap_or(0);
    let deaths = match mech.regime() {
        Regime::SubCritical => Some(DeathRates::new(&mech, top.max(1))?),
        Regime::Critical => None,
    };
    let mut rows = Vec::new();
    for &t in ts {
        for &(n, m) in &pairs {
            let q = RateQuery::new(n, m, t);
            let (qb, qd) = if m > n {
                (birth(&mech, q)?.to_string(), String::new())
            } else {
                let d = deaths.as_ref().ok_or_else(|| bad("death rates need the sub-critical regime"))?;
                (String::new(), d.rate(q)?.to_string())
            };
            rows.push(vec![n.to_string(), m.to_string(), t.to_string(), qb, qd]);
        }
    }
    write_csv(cfg, &["n", "m", "t", "q_birth", "q_death"], &rows)
}

fn moments(cfg: &RunConfig, eta: f64, nmax: usize) -> anyhow::Result<()> {
    let table = moment_table_v(eta, nmax)?;
    match format_or(cfg, Format::Json) {
        Format::Json => {
            let closed = moment_closed_forms(eta);
            write_json(cfg, json!({ "eta": eta, "moments": table, "closedForms": &closed[..nmax.min(3)] }))
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = table
                .iter()
                .enumerate()
                .map(|(i, v)| vec![(i + 1).to_string(), v.to_string()])
                .collect();
            write_csv(cfg, &["n", "moment"], &rows)
        }
    }
}

fn parse_grid(text: &str) -> anyhow::Result<Vec<f64>> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("bad grid value '{s}'")));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().map_err(|_| bad(format!("bad grid count '{n}'")))?;
            if n < 2 {
                return Err(bad("grid count must be >= 2"));
            }
            Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(bad(format!("grid must be 'start:stop:count' or a list, got '{text}'"))),
    }
}

fn density(cfg: &RunConfig, which: DensityKind, grid: &str) -> anyhow::Result<()> {
    let mech = cfg.mechanism;
    let xs = parse_grid(grid)?;
    let qcfg = QuadratureConfig::default();
    let vals = match which {
        DensityKind::Linnik => collect(
            xs.iter()
                .map(|&x| linnik_density(mech.eta(), mech.b(), x, &qcfg).map(|e| (e.value, e.error_bound)))
                .collect(),
        )?,
        DensityKind::G => {
            let samples = cfg.replicas;
            collect(
                xs.par_iter()
                    .enumerate()
                    .map(|(i, &x)| intensity_g(&mech, x, samples, &mut RandomSource::replica(cfg.seed, 2, i as u32)))
                    .collect(),
            )?
        }
    };
    let rows: Vec<Vec<String>> = xs
        .iter()
        .zip(&vals)
        .map(|(x, (v, e))| vec![x.to_string(), v.to_string(), e.to_string()])
        .collect();
    write_csv(cfg, &["x", "value", "errorBound"], &rows)
}

fn families(cfg: &RunConfig, count: Option<usize>, big_t: f64) -> anyhow::Result<()> {
    let mech = cfg.mechanism;
    let count = count.unwrap_or(usize::MAX);
    let fams = collect(run_replicas(cfg.seed, 3, cfg.replicas, |rng| match mech.regime() {
        Regime::SubCritical => sample_family_decomposition(&mech, count, rng),
        Regime::Critical => sample_family_decomposition_critical(&mech, big_t, count, rng),
    }))?;
    match format_or(cfg, Format::Json) {
        Format::Json => write_json(cfg, json!({ "families": fams })),
        Format::Csv => {
            let mut rows = Vec::new();
            for (r, f) in fams.iter().enumerate() {
                for (i, (c, s)) in f.immigration_clocks.iter().zip(&f.sizes).enumerate() {
                    rows.push(vec![r.to_string(), i.to_string(), c.to_string(), s.to_string()]);
                }
            }
            write_csv(cfg, &["replica", "index", "clock", "size"], &rows)
        }
    }
}

fn coalescent(
    cfg: &RunConfig,
    n: usize,
    big_t: f64,
    bs_report: bool,
    sweep: &[f64],
    t_grid: &[f64],
) -> anyhow::Result<()> {
    let mech = cfg.mechanism;
    if mech.regime() != Regime::SubCritical {
        return Err(bad("coalescent needs the sub-critical regime"));
    }
    if n < 2 {
        return Err(bad("--n must be >= 2"));
    }
    if bs_report {
        let bs = if sweep.is_empty() { vec![mech.b()] } else { sweep.to_vec() };
        let rows = bs_convergence_report(mech.alpha(), mech.gamma(), &bs, n, big_t, t_grid)?;
        return match format_or(cfg, Format::Json) {
            Format::Json => write_json(cfg, json!({ "n": n, "T": big_t, "tGrid": t_grid, "rows": rows })),
            Format::Csv => {
                let rows: Vec<Vec<String>> = rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.b.to_string(),
                            r.max_rel_error.to_string(),
                            r.worst_k.to_string(),
                            r.worst_m.to_string(),
                            r.worst_t.to_string(),
                            r.time_spread.to_string(),
                        ]
                    })
                    .collect();
                write_csv(cfg, &["b", "maxRelError", "worstK", "worstM", "worstT", "timeSpread"], &rows)
            }
        };
    }
    let rates = DeathRates::new(&mech, n - 1)?;
    let paths: Vec<CoalescentPath> =
        collect(run_replicas(cfg.seed, 4, cfg.replicas, |rng| simulate_with(&rates, n, big_t, rng)))?;
    write_json(cfg, json!({ "n": n, "T": big_t, "paths": paths }))
}

/// Seed of the second run under `--strict`.
fn strict_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

fn verify(cfg: &RunConfig, suite: SuiteArg, strict: bool, only: &[String]) -> anyhow::Result<()> {
    let suite = match suite {
        SuiteArg::All => Suite::All,
        SuiteArg::Fast => Suite::Fast,
    };
    let ids: Vec<&str> = if only.is_empty() {
        CRITERIA.to_vec()
    } else {
        for id in only {
            if !CRITERIA.contains(&id.as_str()) {
                return Err(bad(format!("unknown criterion '{id}'")));
            }
        }
        only.iter().map(String::as_str).collect()
    };
    let mut seeds = vec![cfg.seed];
    if strict {
        seeds.push(strict_seed(cfg.seed));
    }
    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for &seed in &seeds {
        let mut reports: Vec<CriterionReport> = Vec::new();
        for id in &ids {
            let r = run_criterion(id, suite, seed)?;
            eprintln!("{} {:<4} {}", if r.passed { "PASS" } else { "FAIL" }, r.id, r.summary);
            if !r.passed {
                failed.push(format!("{} (seed {seed})", r.id));
            }
            reports.push(r);
        }
        runs.push(json!({ "seed": seed, "checks": reports }));
    }
    write_json(
        cfg,
        json!({ "suite": suite, "strict": strict, "passed": failed.is_empty(), "runs": runs }),
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(VerificationFailed(failed).into())
    }
}
