//! Cross-module oracles: simulation against closed forms and quadrature.

use stablegen::analytics::linnik_density;
use stablegen::coalescent::{simulate_coalescent, CoalescentPath};
use stablegen::quadrature::QuadratureConfig;
use stablegen::rates::{death_rate, quadratic_death_rate, RateQuery};
use stablegen::simulate::{
    sample_family_decomposition, sample_w, simulate_ancestral, simulate_gwi, JumpLaws, DEFAULT_STATE_CAP,
};
use stablegen::stats::{empirical_laplace, ks_one_sample, run_replicas};
use stablegen::{RandomSource, StableMechanism};

fn mech(b: f64) -> StableMechanism {
    StableMechanism::sub_critical(1.0, 1.0, b).unwrap()
}

#[test]
fn w_samples_follow_linnik_cdf() {
    // CDF by cumulative trapezoid on a log grid, density from quadrature.
    let m = mech(1.5);
    let cfg = QuadratureConfig::default();
    // W has a heavy right tail (index b-1), so the grid runs far out.
    let grid: Vec<f64> = (0..=4160).map(|i| (-12.0 + i as f64 * 0.0125).exp()).collect();
    let dens: Vec<f64> = grid
        .iter()
        .map(|&z| linnik_density(m.eta(), m.b(), z, &cfg).unwrap().value)
        .collect();
    let mut cdf = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        cdf[i] = cdf[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (grid[i] - grid[i - 1]);
    }
    assert!((cdf.last().unwrap() - 1.0).abs() < 1e-4, "{}", cdf.last().unwrap());
    let interp = |x: f64| {
        let i = grid.partition_point(|&g| g <= x);
        if i == 0 {
            return 0.0;
        }
        if i == grid.len() {
            return 1.0;
        }
        let w = (x - grid[i - 1]) / (grid[i] - grid[i - 1]);
        cdf[i - 1] + w * (cdf[i] - cdf[i - 1])
    };
    let ws = run_replicas(81, 0, 50_000, |rng| sample_w(&m, rng));
    let r = ks_one_sample(&ws, interp).unwrap();
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn ancestral_is_time_changed_gwi_under_common_seed() {
    let m = mech(1.5);
    let laws = JumpLaws::new(&m);
    for seed in 0..50 {
        let t_end = -0.4;
        let anc = simulate_ancestral(&laws, t_end, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 9)).unwrap();
        let horizon = m.time_change_r(-t_end).unwrap();
        let gwi = simulate_gwi(&laws, horizon, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 9)).unwrap();
        assert_eq!(anc.states, gwi.states);
        for (t, s) in anc.times.iter().zip(&gwi.times) {
            assert!((m.calendar_time(*s).unwrap() - t).abs() < 1e-12);
        }
    }
}

#[test]
fn normalized_family_total_has_martingale_limit_law() {
    let m = mech(1.5);
    let kappa = m.kappa().unwrap();
    let z = run_replicas(82, 0, 40_000, |rng| {
        let f = sample_family_decomposition(&m, usize::MAX, rng).unwrap();
        kappa * f.total_with_tail(&m, rng)
    });
    let eta = m.eta();
    for p in empirical_laplace(&z, &[0.5, 1.0, 2.0]) {
        let exact = (1.0 + p.lambda.powf(eta)).powf(-m.b() / eta);
        assert!(p.within(exact, 3.0), "{p:?} vs {exact}");
    }
}

#[test]
fn generic_death_rates_reduce_to_quadratic() {
    let m = StableMechanism::sub_critical(0.8, 1.7, 2.0).unwrap();
    for n in 1..6 {
        for k in 0..n {
            for &t in &[0.3, 1.0, 4.0] {
                let q = RateQuery::new(n, k, t);
                let g = death_rate(&m, q).unwrap();
                let e = quadratic_death_rate(&m, q).unwrap();
                assert!((g - e).abs() <= 1e-10 * e.max(1.0), "n={n} m={k} t={t}: {g} vs {e}");
            }
        }
    }
}

#[test]
fn coalescent_json_schema() {
    let p = simulate_coalescent(&mech(1.5), 4, 1.0, &mut RandomSource::new(83, 0)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
    assert_eq!(v["times"].as_array().unwrap().len(), v["partitions"].as_array().unwrap().len());
    assert_eq!(v["partitions"][0], serde_json::json!([[1], [2], [3], [4]]));
    let back: CoalescentPath = serde_json::from_value(v).unwrap();
    assert_eq!(back, p);
}

#[test]
fn mechanism_wire_format_validates() {
    let m: StableMechanism =
        serde_json::from_str(r#"{"alpha":1.0,"gamma":2.0,"b":1.5,"regime":"SubCritical"}"#).unwrap();
    assert_eq!(m.gamma(), 2.0);
    assert!(serde_json::from_str::<StableMechanism>(r#"{"alpha":0.0,"gamma":2.0,"b":1.5,"regime":"SubCritical"}"#).is_err());
    assert!(serde_json::from_str::<StableMechanism>(r#"{"alpha":1.0,"gamma":2.0,"b":2.5,"regime":"SubCritical"}"#).is_err());
}
