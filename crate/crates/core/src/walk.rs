//! Nearest-neighbour random walk on `0, 1, 2, …` that steps up from `c` with
//! probability `ρ/(c+ρ)` and down otherwise. It is the jump chain of the
//! singleton count, and of an M/M/∞ queue with load `ρ`.

use rand::Rng;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::specials::{ln_factorial, ln_poisson_pmf, poisson_pmf_unchecked, poisson_tail_ratio};

/// Default cap on the number of steps of one simulated excursion.
pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkParams {
    rho: f64,
}

impl WalkParams {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return domain(format!("rho must be positive and finite, got {rho}"));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// One excursion above a level: from `c+1` until the first return to `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WalkExcursion {
    pub length: u64,
    pub height: u64,
    pub upmoves: u64,
}

/// `(p, q)`: probabilities of stepping up and down from `c`.
pub fn step_probs(params: &WalkParams, c: u64) -> (f64, f64) {
    let rho = params.rho;
    let c = c as f64;
    (rho / (c + rho), c / (c + rho))
}

/// Stationary law `e^{-ρ}(ρ+c)ρ^{c-1}/(2c!)`, the even mixture of Poisson(ρ)
/// and Poisson(ρ) shifted up by one.
pub fn stationary_pmf(params: &WalkParams, c: u64) -> f64 {
    let rho = params.rho;
    let shifted = if c == 0 { 0.0 } else { poisson_pmf_unchecked(rho, c - 1) };
    0.5 * (poisson_pmf_unchecked(rho, c) + shifted)
}

/// Expected length of an excursion above `c`.
pub fn mean_excursion_length(params: &WalkParams, c: u64) -> f64 {
    1.0 + 2.0 * poisson_tail_ratio(params.rho, c, 0)
}

/// Variance of the length of an excursion above 0.
pub fn var_excursion_length(params: &WalkParams) -> f64 {
    let rho = params.rho;
    let er = rho.exp();
    // Σ_r π_r Q_r² with Q_r = Σ_{j>r} π_j/π_r; terms decay factorially.
    let mut sum = 0.0;
    let mut r = 0u64;
    loop {
        let q = poisson_tail_ratio(rho, r, 0);
        let term = poisson_pmf_unchecked(rho, r) * q * q;
        sum += term;
        if r as f64 > 2.0 * rho + 10.0 && term <= 1e-18 * sum {
            break;
        }
        r += 1;
    }
    4.0 * er * (2.0 * rho - er + 1.0) + 8.0 * er * sum
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Probability that the walk started at `s` reaches `u` before `ell`:
/// `Σ_{r=ell}^{s-1} 1/π_r / Σ_{r=ell}^{u-1} 1/π_r`.
pub fn ruin_probability(params: &WalkParams, ell: u64, s: u64, u: u64) -> Result<f64> {
    if !(ell < s && s <= u) {
        return domain(format!("need ell < s <= u, got ell={ell}, s={s}, u={u}"));
    }
    if s == u {
        return Ok(1.0);
    }
    let rho = params.rho;
    let num = log_sum_exp((ell..s).map(|r| -ln_poisson_pmf(rho, r)));
    let den = log_sum_exp((ell..u).map(|r| -ln_poisson_pmf(rho, r)));
    Ok((num - den).exp())
}

/// `P[H_c ≥ h+1] = 1/Σ_{r=0}^h (c+1)_r/ρ^r`: the excursion above `c`
/// climbs at least `h` steps past its start.
pub fn height_tail(params: &WalkParams, c: u64, h: u64) -> f64 {
    let rho = params.rho;
    let terms = (0..=h).map(|r| ln_factorial(c + r) - ln_factorial(c) - r as f64 * rho.ln());
    (-log_sum_exp(terms)).exp()
}

/// Mean and variance of the height of an excursion above 0.
pub fn height_moments(params: &WalkParams) -> (f64, f64) {
    let rho = params.rho;
    let (mut mean, mut second) = (0.0, 0.0);
    // Running denominator Σ_{r≤h} r!/ρ^r; tails fall off factorially.
    let (mut term, mut den) = (1.0, 0.0);
    for h in 0u64.. {
        if h > 0 {
            term *= h as f64 / rho;
        }
        den += term;
        let tail = 1.0 / den;
        mean += tail;
        second += (2 * h + 1) as f64 * tail;
        if (h as f64) > rho + 5.0 && (2 * h + 1) as f64 * tail < 1e-18 * second {
            break;
        }
    }
    (mean, second - mean * mean)
}

/// Distribution function of the largest height among `m` independent
/// excursions above 0.
pub fn max_height_cdf(params: &WalkParams, m: u64, h: u64) -> f64 {
    if h == 0 {
        return 0.0;
    }
    (m as f64 * (-height_tail(params, 0, h)).ln_1p()).exp()
}

/// Park's index `⌊(ln m − ½ ln ln m − ½ ln 2π)/(ln ln m − 1 − ln ρ) + ½⌋`,
/// the typical largest height over `m` excursions above 0.
pub fn park_index(m: u64, params: &WalkParams) -> Result<i64> {
    if m < 2 {
        return domain("index needs m >= 2");
    }
    let lm = (m as f64).ln();
    let llm = lm.ln();
    let den = llm - 1.0 - params.rho.ln();
    if !(den > 0.0) {
        return domain(format!(
            "m = {m} is too small for rho = {}: ln ln m must exceed 1 + ln rho",
            params.rho
        ));
    }
    let num = lm - 0.5 * llm - 0.5 * (2.0 * std::f64::consts::PI).ln();
    Ok((num / den + 0.5).floor() as i64)
}

/// The walk itself, one step at a time.
#[derive(Debug, Clone)]
pub struct WalkChain {
    params: WalkParams,
    state: u64,
}

impl WalkChain {
    pub fn new(params: WalkParams, start: u64) -> Self {
        Self { params, state: start }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u64 {
        let (p, _) = step_probs(&self.params, self.state);
        if rng.random::<f64>() < p {
            self.state += 1;
        } else {
            self.state -= 1;
        }
        self.state
    }
}

/// Simulates one excursion above `c` with the default step cap.
pub fn simulate_excursion<R: Rng + ?Sized>(params: &WalkParams, c: u64, rng: &mut R) -> Result<WalkExcursion> {
    simulate_excursion_capped(params, c, DEFAULT_STEP_CAP, rng)
}

pub fn simulate_excursion_capped<R: Rng + ?Sized>(
    params: &WalkParams,
    c: u64,
    step_cap: u64,
    rng: &mut R,
) -> Result<WalkExcursion> {
    let mut chain = WalkChain::new(*params, c + 1);
    let (mut length, mut upmoves, mut top) = (0u64, 0u64, c + 1);
    while chain.state() > c {
        if length >= step_cap {
            return Err(Error::Runtime(format!("excursion exceeded {step_cap} steps")));
        }
        let before = chain.state();
        let now = chain.step(rng);
        length += 1;
        if now > before {
            upmoves += 1;
            top = top.max(now);
        }
    }
    Ok(WalkExcursion {
        length,
        height: top - c,
        upmoves,
    })
}

/// Whether a walk started at `s` reaches `u` before `ell`.
pub fn simulate_ruin<R: Rng + ?Sized>(params: &WalkParams, ell: u64, s: u64, u: u64, rng: &mut R) -> Result<bool> {
    if !(ell < s && s <= u) {
        return domain(format!("need ell < s <= u, got ell={ell}, s={s}, u={u}"));
    }
    let mut chain = WalkChain::new(*params, s);
    let mut steps = 0u64;
    loop {
        let x = chain.state();
        if x == u {
            return Ok(true);
        }
        if x == ell {
            return Ok(false);
        }
        if steps >= DEFAULT_STEP_CAP {
            return Err(Error::Runtime("ruin walk exceeded the step cap".into()));
        }
        chain.step(rng);
        steps += 1;
    }
}
