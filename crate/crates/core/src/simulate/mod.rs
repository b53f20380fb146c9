//! Random generation: the GWI jump chain, the ancestral process obtained from
//! it by the deterministic time change, a direct inhomogeneous sampler used
//! as an oracle, critical-case analogues, and the family decomposition.

mod families;
mod laws;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{Regime, StableMechanism};

pub use families::{
    sample_family_decomposition, sample_family_decomposition_critical, sample_z0_t,
    FamilyDecomposition,
};
pub use laws::{
    sample_centered_stable, sample_positive_stable, sample_w, sample_w_single,
    sample_w_single_sum, JumpLaws,
};

/// Default state cap beyond which a path is flagged as truncated.
pub const DEFAULT_STATE_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathOrigin {
    GwiClock,
    AncestralCalendar,
    CriticalCalendar,
}

/// Piecewise-constant pure-birth trajectory.
///
/// `times[i]` is the i-th jump time and `states[i]` the state right after
/// it; before `times[0]` the path sits in `initial_state`. The path is
/// observed up to `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPath {
    pub times: Vec<f64>,
    pub states: Vec<u64>,
    pub initial_state: u64,
    pub end: f64,
    pub origin: PathOrigin,
    pub truncated: bool,
}

impl JumpPath {
    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> u64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.initial_state,
            i => self.states[i - 1],
        }
    }

    pub fn final_state(&self) -> u64 {
        self.states.last().copied().unwrap_or(self.initial_state)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,state\n");
        for (t, s) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t},{s}\n"));
        }
        out
    }

    /// Structural checks: increasing times, strictly increasing states.
    pub fn is_valid(&self) -> bool {
        let times_ok = self.times.windows(2).all(|w| w[0] < w[1]);
        let mut prev = self.initial_state;
        let states_ok = self.states.iter().all(|&s| {
            let ok = s > prev;
            prev = s;
            ok
        });
        let calendar_ok = match self.origin {
            PathOrigin::GwiClock => true,
            _ => self.times.iter().all(|&t| t < 0.0),
        };
        times_ok && states_ok && calendar_ok && self.times.len() == self.states.len()
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

/// Runs the GWI chain from `state` at GWI time `start` until `horizon`, the
/// state reaching `stop_state`, or the cap. Returns jump times, states after
/// each jump, and whether the cap was hit.
fn run_gwi<R: Rng + ?Sized>(
    laws: &JumpLaws,
    start: f64,
    mut state: u64,
    horizon: f64,
    stop_state: u64,
    cap: u64,
    rng: &mut R,
) -> (Vec<f64>, Vec<u64>, bool) {
    let imm = laws.mechanism().immigration_rate();
    let (mut times, mut states) = (Vec::new(), Vec::new());
    let mut s = start;
    while state < stop_state {
        let e: f64 = rng.sample(Exp1);
        s += e / (state as f64 + imm);
        if s > horizon {
            break;
        }
        state = state.saturating_add(laws.sample_jump(state, rng));
        times.push(s);
        states.push(state);
        if state > cap {
            return (times, states, true);
        }
    }
    (times, states, false)
}

/// GWI process from state 0 at time 0, observed on `[0, horizon]`.
pub fn simulate_gwi<R: Rng + ?Sized>(
    laws: &JumpLaws,
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> Result<JumpPath> {
    if !(horizon > 0.0) {
        return Err(Error::domain("simulate_gwi", "horizon", horizon));
    }
    let (times, states, truncated) = run_gwi(laws, 0.0, 0, horizon, u64::MAX, cap, rng);
    Ok(JumpPath {
        times,
        states,
        initial_state: 0,
        end: horizon,
        origin: PathOrigin::GwiClock,
        truncated,
    })
}

/// Ancestral process `M0` on calendar times `(-inf, t_end]`, `t_end < 0`:
/// the GWI chain run to `R(-t_end)` with jump time `s` mapped to `-R^{-1}(s)`.
pub fn simulate_ancestral<R: Rng + ?Sized>(
    laws: &JumpLaws,
    t_end: f64,
    cap: u64,
    rng: &mut R,
) -> Result<JumpPath> {
    let mech = *laws.mechanism();
    require(&mech, "simulate_ancestral", Regime::SubCritical)?;
    if !(t_end < 0.0) {
        return Err(Error::domain("simulate_ancestral", "t_end", t_end));
    }
    let horizon = mech.time_change_r(-t_end)?;
    let (times, states, truncated) = run_gwi(laws, 0.0, 0, horizon, u64::MAX, cap, rng);
    to_calendar(&mech, times, states, 0, t_end, truncated)
}

/// Ancestral process conditioned on `M0_{t_start} = 0`, through the time
/// change: the GWI chain started at 0 at time `R(-t_start)`.
pub fn simulate_ancestral_from<R: Rng + ?Sized>(
    laws: &JumpLaws,
    t_start: f64,
    t_end: f64,
    cap: u64,
    rng: &mut R,
) -> Result<JumpPath> {
    let mech = *laws.mechanism();
    require(&mech, "simulate_ancestral_from", Regime::SubCritical)?;
    check_window("simulate_ancestral_from", t_start, t_end)?;
    let s0 = mech.time_change_r(-t_start)?;
    let horizon = mech.time_change_r(-t_end)?;
    let (times, states, truncated) = run_gwi(laws, s0, 0, horizon, u64::MAX, cap, rng);
    to_calendar(&mech, times, states, 0, t_end, truncated)
}

fn check_window(op: &'static str, t_start: f64, t_end: f64) -> Result<()> {
    if !(t_end < 0.0) {
        return Err(Error::domain(op, "t_end", t_end));
    }
    if !(t_start <= t_end) {
        return Err(Error::domain(op, "t_start", t_start));
    }
    Ok(())
}

fn to_calendar(
    mech: &StableMechanism,
    times: Vec<f64>,
    states: Vec<u64>,
    initial_state: u64,
    end: f64,
    truncated: bool,
) -> Result<JumpPath> {
    let times = times
        .into_iter()
        .map(|s| mech.calendar_time(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(JumpPath {
        times,
        states,
        initial_state,
        end,
        origin: PathOrigin::AncestralCalendar,
        truncated,
    })
}

/// Direct sampler of the inhomogeneous pure-birth chain on calendar
/// `[t_start, t_end]` from state 0: escape rate `(n + b/(b-1)) |R'(t)|`
/// at calendar `-t`, waiting times by exact inversion of the integrated
/// hazard, jump sizes from the `g_[n]` mixture.
pub fn simulate_ancestral_direct<R: Rng + ?Sized>(
    laws: &JumpLaws,
    t_start: f64,
    t_end: f64,
    max_jumps: usize,
    rng: &mut R,
) -> Result<JumpPath> {
    let mech = *laws.mechanism();
    require(&mech, "simulate_ancestral_direct", Regime::SubCritical)?;
    check_window("simulate_ancestral_direct", t_start, t_end)?;
    let imm = mech.immigration_rate();
    let (mut times, mut states) = (Vec::new(), Vec::new());
    let mut state = 0u64;
    let mut t = -t_start;
    let mut truncated = false;
    while t > -t_end {
        let hazard: f64 = rng.sample::<f64, _>(Exp1) / (state as f64 + imm);
        // Integrated hazard from calendar -t to -t' is rate * (R(t') - R(t)).
        let next = mech.time_change_r_inv(mech.time_change_r(t)? + hazard)?;
        if next <= -t_end {
            break;
        }
        if times.len() == max_jumps {
            truncated = true;
            break;
        }
        t = next;
        state = state.saturating_add(laws.sample_jump(state, rng));
        times.push(-t);
        states.push(state);
    }
    Ok(JumpPath {
        times,
        states,
        initial_state: 0,
        end: t_end,
        origin: PathOrigin::AncestralCalendar,
        truncated,
    })
}

/// Critical ancestral process `M^(T)` on calendar `(-T, -T e^{-horizon}]`:
/// the same GWI chain with GWI time `s` mapped to `-T e^{-s}`.
pub fn simulate_gwi_critical<R: Rng + ?Sized>(
    laws: &JumpLaws,
    big_t: f64,
    horizon: f64,
    cap: u64,
    rng: &mut R,
) -> Result<JumpPath> {
    require(laws.mechanism(), "simulate_gwi_critical", Regime::Critical)?;
    if !(big_t > 0.0) {
        return Err(Error::domain("simulate_gwi_critical", "T", big_t));
    }
    if !(horizon > 0.0) {
        return Err(Error::domain("simulate_gwi_critical", "horizon", horizon));
    }
    let (times, states, truncated) = run_gwi(laws, 0.0, 0, horizon, u64::MAX, cap, rng);
    Ok(JumpPath {
        times: times.into_iter().map(|s| -big_t * (-s).exp()).collect(),
        states,
        initial_state: 0,
        end: -big_t * (-horizon).exp(),
        origin: PathOrigin::CriticalCalendar,
        truncated,
    })
}

/// Draw of `e^{-s/(b-1)} X_s` for the GWI chain `X` from 0, for large `s`.
///
/// The chain is simulated exactly until GWI time `s` or until its state
/// reaches `threshold`. In the latter case, at time `s1` with state `k`,
/// the remainder is replaced by its limit law: each of the `k` present
/// individuals contributes an independent single-ancestor limit and later
/// immigration contributes a fresh `W`, all scaled by `e^{-s1/(b-1)}`.
pub fn sample_scaled_gwi<R: Rng + ?Sized>(
    laws: &JumpLaws,
    s: f64,
    threshold: u64,
    rng: &mut R,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::domain("sample_scaled_gwi", "s", s));
    }
    let mech = laws.mechanism();
    let eta = mech.eta();
    let (times, states, _) = run_gwi(laws, 0.0, 0, s, threshold, u64::MAX, rng);
    let state = states.last().copied().unwrap_or(0);
    if state < threshold {
        return Ok((-s / eta).exp() * state as f64);
    }
    let s1 = *times.last().unwrap();
    let family = sample_w_single_sum(mech, state, 16_384, rng);
    Ok((-s1 / eta).exp() * (family + sample_w(mech, rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    fn laws(b: f64) -> JumpLaws {
        JumpLaws::new(&StableMechanism::sub_critical(1.0, 1.0, b).unwrap())
    }

    #[test]
    fn first_holding_time_and_first_jump() {
        let l = laws(2.0);
        let mut rng = RandomSource::new(11, 0);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let p = simulate_gwi(&l, 20.0, 10, &mut rng).unwrap();
            sum += p.times[0];
            // From 0 only immigration is possible, which adds exactly 1 here.
            assert_eq!(p.states[0], 1);
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
    }

    #[test]
    fn paths_are_pure_birth_and_reproducible() {
        for &b in &[1.2, 1.5, 2.0] {
            let l = laws(b);
            for seed in 0..50 {
                let a = simulate_ancestral(&l, -0.3, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 1))
                    .unwrap();
                let c = simulate_ancestral(&l, -0.3, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 1))
                    .unwrap();
                assert_eq!(a, c);
                assert!(a.is_valid());
                let g = simulate_gwi(&l, 4.0, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 2)).unwrap();
                assert!(g.is_valid());
                assert!(g.times.iter().all(|&t| t > 0.0 && t <= 4.0));
            }
        }
    }

    #[test]
    fn time_change_is_exact_coupling() {
        let l = laws(1.5);
        let mech = *l.mechanism();
        for seed in 0..20 {
            let a = simulate_ancestral(&l, -0.4, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 0)).unwrap();
            let horizon = mech.time_change_r(0.4).unwrap();
            let g = simulate_gwi(&l, horizon, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 0)).unwrap();
            assert_eq!(a.states, g.states);
            for &t in &[0.5, 1.0, 3.0] {
                let s = mech.time_change_r(t).unwrap();
                assert_eq!(a.state_at(-t), g.state_at(s));
            }
        }
    }

    #[test]
    fn quadratic_extinction_probability() {
        // P(M0_{-t} = 0) = (1 - e^{-t})^2, 1/4 at t = ln 2.
        let l = laws(2.0);
        let mut rng = RandomSource::new(12, 0);
        let n = 100_000;
        let t = 2f64.ln();
        let zeros = (0..n)
            .filter(|_| {
                simulate_ancestral(&l, -t, DEFAULT_STATE_CAP, &mut rng)
                    .unwrap()
                    .final_state()
                    == 0
            })
            .count() as f64
            / n as f64;
        assert!((zeros - 0.25).abs() < 3.0 * (0.25 * 0.75 / n as f64).sqrt());
    }

    #[test]
    fn first_jump_law_matches_ubar() {
        // P(tau_0 < t) = P(M0_{-t} = 0) = ubar(c(t)).
        let l = laws(1.5);
        let mech = *l.mechanism();
        let mut rng = RandomSource::new(13, 0);
        let n = 100_000;
        let t = 0.8;
        let zeros = (0..n)
            .filter(|_| simulate_ancestral(&l, -t, DEFAULT_STATE_CAP, &mut rng).unwrap().final_state() == 0)
            .count() as f64
            / n as f64;
        let p = mech.ubar(mech.extinction_c(t).unwrap()).unwrap();
        assert!((zeros - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn monotone_in_horizon() {
        let l = laws(1.5);
        for seed in 0..30 {
            let short = simulate_ancestral(&l, -1.0, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 3)).unwrap();
            let long = simulate_ancestral(&l, -0.5, DEFAULT_STATE_CAP, &mut RandomSource::new(seed, 3)).unwrap();
            assert!(long.state_at(-1.0) == short.final_state());
            assert!(long.final_state() >= short.final_state());
        }
    }

    #[test]
    fn direct_sampler_basics() {
        let l = laws(1.5);
        let mut rng = RandomSource::new(14, 0);
        let p = simulate_ancestral_direct(&l, -1.0, -1.0, 100, &mut rng).unwrap();
        assert!(p.times.is_empty());
        for _ in 0..100 {
            let p = simulate_ancestral_direct(&l, -5.0, -0.5, 10_000, &mut rng).unwrap();
            assert!(p.is_valid());
            assert!(p.times.iter().all(|&t| (-5.0..=-0.5).contains(&t)));
        }
        let p = simulate_ancestral_direct(&l, -5.0, -0.001, 1, &mut rng).unwrap();
        assert!(p.truncated && p.times.len() == 1);
        assert!(simulate_ancestral_direct(&l, -0.5, -1.0, 10, &mut rng).is_err());
    }

    #[test]
    fn state_cap_sets_truncation_flag() {
        let l = laws(1.2);
        let mut rng = RandomSource::new(15, 0);
        let p = simulate_gwi(&l, 30.0, 1000, &mut rng).unwrap();
        assert!(p.truncated);
        assert!(p.final_state() > 1000);
    }

    #[test]
    fn critical_paths() {
        let mech = StableMechanism::critical(1.0, 1.5).unwrap();
        let l = JumpLaws::new(&mech);
        let mut rng = RandomSource::new(16, 0);
        for _ in 0..200 {
            let p = simulate_gwi_critical(&l, 2.0, 3.0, DEFAULT_STATE_CAP, &mut rng).unwrap();
            assert!(p.is_valid());
            assert!(p.times.iter().all(|&t| t > -2.0 && t < 0.0));
        }
        assert!(simulate_gwi_critical(&laws(1.5), 1.0, 1.0, 10, &mut rng).is_err());
        assert!(simulate_ancestral(&l, -1.0, 10, &mut rng).is_err());
    }

    #[test]
    fn json_round_trip() {
        let l = laws(1.5);
        let p = simulate_ancestral(&l, -0.2, DEFAULT_STATE_CAP, &mut RandomSource::new(3, 3)).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: JumpPath = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(p.to_csv().starts_with("time,state\n"));
    }
}
