//! Adaptive Gauss-Kronrod (7/15) and fixed Gauss-Legendre rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and limits for improper integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Upper cutoff for integrals over `[0, inf)`; callers add a tail bound.
    pub truncation_point: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            max_subdivisions: 2000,
            truncation_point: 60.0,
        }
    }
}

/// An integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error_bound: f64,
}

impl std::ops::Add for Estimate {
    type Output = Estimate;

    fn add(self, o: Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            error_bound: self.error_bound + o.error_bound,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Estimate {
        value: k * h,
        error_bound: ((k - g) * h).abs(),
    }
}

/// Globally adaptive integration over `[a, b]`, bisecting the panel with the
/// largest error until the total error meets the tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<Estimate> {
    integrate_panels(f, &[a, b], cfg)
}

/// As [`integrate`], starting from the given breakpoints.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    let mut panels: Vec<(f64, f64, Estimate)> = breaks
        .windows(2)
        .map(|w| (w[0], w[1], kronrod(&f, w[0], w[1])))
        .collect();
    loop {
        let total = panels.iter().fold(
            Estimate {
                value: 0.0,
                error_bound: 0.0,
            },
            |acc, p| acc + p.2,
        );
        if !total.value.is_finite() {
            return Err(Error::Quadrature {
                estimate: total.value,
                error_bound: total.error_bound,
            });
        }
        if total.error_bound <= cfg.abs_tol.max(cfg.rel_tol * total.value.abs()) {
            return Ok(total);
        }
        if panels.len() >= cfg.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: total.value,
                error_bound: total.error_bound,
            });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2.error_bound.total_cmp(&y.1 .2.error_bound))
            .unwrap();
        let (a, b, _) = panels.swap_remove(idx);
        let m = 0.5 * (a + b);
        panels.push((a, m, kronrod(&f, a, m)));
        panels.push((m, b, kronrod(&f, m, b)));
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre sum over equal panels of width `width` on `[a, b]`.
pub fn composite_gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, width: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let panels = ((b - a) / width).ceil().max(1.0) as usize;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let c = a + (p as f64 + 0.5) * h;
            rule.0
                .iter()
                .zip(&rule.1)
                .map(|(x, w)| w * f(c + 0.5 * h * x))
                .sum::<f64>()
                * 0.5
                * h
        })
        .sum()
}
