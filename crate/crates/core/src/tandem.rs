//! Continuous-time growth: every element present spawns a successor at rate
//! one and new cycles are started at rate `θ`. A cycle of size `i` then grows
//! at rate `i`, so the counts `C_1(t), C_2(t), …` form a tandem of
//! infinite-server stations, station `i` serving at total rate `i·C_i`.
//!
//! Simulation tracks sizes `1..=k`. Cycles that outgrow `k` either leave
//! ([`TrackingMode::Open`]) or join an untracked tail whose mass still feeds
//! the element count ([`TrackingMode::Full`]).

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::Serialize;

use crate::crp::{crp_step, next_change, CrpParams, CycleCounts, MAX_DEGREE};
use crate::error::{domain, Error, Result};
use crate::mc::{ks_distance, ks_threshold};
use crate::specials::{exp_integral_e1, harmonic_unchecked, ln_factorial, ln_rising, poisson_pmf_unchecked};

/// Default cap on events per simulated path.
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TandemParams {
    theta: f64,
    k: usize,
}

impl TandemParams {
    pub fn new(theta: f64, k: usize) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return domain(format!("theta must be positive and finite, got {theta}"));
        }
        if k == 0 {
            return domain("truncation depth k must be at least 1");
        }
        Ok(Self { theta, k })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingMode {
    /// Cycles growing past size `k` are dropped.
    #[default]
    Open,
    /// Cycles growing past size `k` keep growing in an untracked tail.
    Full,
}

/// What happened at one jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    NewCycle,
    /// A tracked cycle of this size grew by one.
    Grow(usize),
    /// Growth inside the untracked tail.
    TailGrow,
}

/// The tracked process, advanced one jump at a time.
#[derive(Debug, Clone)]
pub struct TandemProcess {
    params: TandemParams,
    mode: TrackingMode,
    counts: Vec<u64>,
    mass: u64,
    tail_cycles: u64,
    tail_mass: u64,
    time: f64,
    events: u64,
}

impl TandemProcess {
    pub fn new(params: TandemParams, mode: TrackingMode, initial: &CycleCounts) -> Result<Self> {
        if initial.largest_size() > params.k {
            return domain(format!(
                "initial state has cycles of size {} > k = {}",
                initial.largest_size(),
                params.k
            ));
        }
        Ok(Self {
            params,
            mode,
            counts: initial.to_vec(params.k),
            mass: initial.degree(),
            tail_cycles: 0,
            tail_mass: 0,
            time: 0.0,
            events: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Tracked counts `C_1..C_k`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn state(&self) -> CycleCounts {
        CycleCounts::from_counts(self.counts.clone())
    }

    /// `K(t)`: all cycles, tracked and tail.
    pub fn cycles(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.tail_cycles
    }

    /// `N(t)`: elements in tracked cycles plus the tail. In open mode the
    /// tail is empty and departed cycles are not counted.
    pub fn degree(&self) -> u64 {
        self.mass + self.tail_mass
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.params.theta + (self.mass + self.tail_mass) as f64
    }

    /// Time to the next jump and the jump itself; the state is not changed.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, Transition) {
        let total = self.total_rate();
        let dt = Exp::new(total).expect("positive rate").sample(rng);
        let mut u = rng.random::<f64>() * total;
        if u < self.params.theta {
            return (dt, Transition::NewCycle);
        }
        u -= self.params.theta;
        for (i, &c) in self.counts.iter().enumerate() {
            let w = (i as f64 + 1.0) * c as f64;
            if u < w {
                return (dt, Transition::Grow(i + 1));
            }
            u -= w;
        }
        if self.tail_mass > 0 {
            return (dt, Transition::TailGrow);
        }
        // Rounding overflow: give it to the largest occupied size.
        let i = self.counts.iter().rposition(|&c| c > 0).map_or(0, |i| i + 1);
        if i == 0 {
            (dt, Transition::NewCycle)
        } else {
            (dt, Transition::Grow(i))
        }
    }

    fn apply(&mut self, tr: Transition) {
        let k = self.params.k;
        match tr {
            Transition::NewCycle => {
                self.counts[0] += 1;
                self.mass += 1;
            }
            Transition::Grow(i) if i < k => {
                self.counts[i - 1] -= 1;
                self.counts[i] += 1;
                self.mass += 1;
            }
            Transition::Grow(_) => {
                self.counts[k - 1] -= 1;
                self.mass -= k as u64;
                if self.mode == TrackingMode::Full {
                    self.tail_cycles += 1;
                    self.tail_mass += k as u64 + 1;
                }
            }
            Transition::TailGrow => self.tail_mass += 1,
        }
        self.events += 1;
    }

    /// Performs the next jump if it happens before `t_end`; otherwise moves
    /// the clock to `t_end` and returns `None`.
    pub fn step_until<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Option<Transition> {
        let (dt, tr) = self.draw(rng);
        if self.time + dt > t_end {
            self.time = t_end;
            return None;
        }
        self.time += dt;
        self.apply(tr);
        Some(tr)
    }

    /// Runs to `t_end`, failing if more than `event_cap` jumps are needed.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, t_end: f64, event_cap: u64, rng: &mut R) -> Result<()> {
        let start = self.events;
        while self.step_until(t_end, rng).is_some() {
            if self.events - start > event_cap {
                return Err(Error::Runtime(format!(
                    "more than {event_cap} events before t = {t_end}"
                )));
            }
        }
        Ok(())
    }
}

/// One row of an [`EventPath`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEvent {
    pub time: f64,
    pub counts: Vec<u64>,
    pub cycles: u64,
    pub degree: u64,
}

/// Time-stamped jumps of a simulated path, starting with the initial state
/// at time 0. Each state holds until the next event's time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventPath {
    pub k: usize,
    pub events: Vec<PathEvent>,
    pub t_end: f64,
}

impl EventPath {
    /// The state in force at time `t`.
    pub fn state_at(&self, t: f64) -> &PathEvent {
        let i = self.events.partition_point(|e| e.time <= t);
        &self.events[i.saturating_sub(1)]
    }

    /// CSV with columns `time,c1..ck,K,N`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "time")?;
        for i in 1..=self.k {
            write!(w, ",c{i}")?;
        }
        writeln!(w, ",K,N")?;
        for e in &self.events {
            write!(w, "{}", crate::report::fmt_num(e.time))?;
            for c in &e.counts {
                write!(w, ",{c}")?;
            }
            writeln!(w, ",{},{}", e.cycles, e.degree)?;
        }
        Ok(())
    }
}

/// Exact jump-by-jump simulation on `[0, t_end]`.
pub fn simulate_tandem<R: Rng + ?Sized>(
    params: &TandemParams,
    mode: TrackingMode,
    t_end: f64,
    initial: &CycleCounts,
    rng: &mut R,
) -> Result<EventPath> {
    simulate_tandem_capped(params, mode, t_end, initial, DEFAULT_EVENT_CAP, rng)
}

pub fn simulate_tandem_capped<R: Rng + ?Sized>(
    params: &TandemParams,
    mode: TrackingMode,
    t_end: f64,
    initial: &CycleCounts,
    event_cap: u64,
    rng: &mut R,
) -> Result<EventPath> {
    if !(t_end > 0.0) {
        return domain("t_end must be positive");
    }
    let mut p = TandemProcess::new(*params, mode, initial)?;
    let snapshot = |p: &TandemProcess| PathEvent {
        time: p.time(),
        counts: p.counts().to_vec(),
        cycles: p.cycles(),
        degree: p.degree(),
    };
    let mut events = vec![snapshot(&p)];
    while p.step_until(t_end, rng).is_some() {
        if p.events() > event_cap {
            return Err(Error::Runtime(format!(
                "more than {event_cap} events before t = {t_end}"
            )));
        }
        events.push(snapshot(&p));
    }
    Ok(EventPath {
        k: params.k,
        events,
        t_end,
    })
}

/// Independent Poisson(θ/i) counts for `i ≤ k`: the stationary law.
pub fn steady_state_initial<R: Rng + ?Sized>(params: &TandemParams, rng: &mut R) -> CycleCounts {
    let counts = (1..=params.k)
        .map(|i| {
            let mean = params.theta / i as f64;
            Poisson::new(mean).expect("positive mean").sample(rng) as u64
        })
        .collect();
    CycleCounts::from_counts(counts)
}

/// `E[C_i(t)] = θ(1 − e^{-t})^i / i` from an empty start.
pub fn transient_marginal_mean(params: &TandemParams, i: usize, t: f64) -> Result<f64> {
    if i == 0 || i > params.k {
        return domain(format!("size {i} outside 1..={}", params.k));
    }
    if !(t >= 0.0) {
        return domain("t must be nonnegative");
    }
    Ok(params.theta * (-(-t).exp_m1()).powi(i as i32) / i as f64)
}

/// Stationary probability `e^{-θh_k} Π (θ/i)^{c_i}/c_i!` of the counts of
/// sizes `1..=k`.
pub fn steady_state_pmf(params: &TandemParams, state: &[u64]) -> Result<f64> {
    if state.len() != params.k {
        return domain(format!("state has length {}, expected k = {}", state.len(), params.k));
    }
    let theta = params.theta;
    let mut ln = -theta * harmonic_unchecked(params.k as u64);
    for (i, &c) in state.iter().enumerate() {
        ln += c as f64 * (theta / (i as f64 + 1.0)).ln() - ln_factorial(c);
    }
    Ok(ln.exp())
}

/// Probability that `j` elements are added during `dt` starting from `n`
/// elements: negative binomial with size `θ+n` and success `1 − e^{-dt}`.
pub fn pascal_increment_pmf(params: &TandemParams, n: u64, dt: f64, j: u64) -> Result<f64> {
    if !(dt > 0.0) {
        return domain("dt must be positive");
    }
    let r = params.theta + n as f64;
    let x = -(-dt).exp_m1();
    Ok((ln_rising(r, j) - ln_factorial(j) - r * dt + j as f64 * x.ln()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PascalCheck {
    pub residual: f64,
    /// Bound on the dropped terms plus a rounding allowance.
    pub truncation_bound: f64,
}

/// Compares `Σ_n P[N(t)=n]·(θz)_n/(θ)_n` over the first `n_terms` terms with
/// `e^{θt(z−1)}`, the generating function of the cycle count `K(t)`.
pub fn pascalisation_check(params: &TandemParams, t: f64, z: f64, n_terms: u64) -> Result<PascalCheck> {
    if !(t > 0.0) || !(0.0..=1.0).contains(&z) || n_terms == 0 {
        return domain("need t > 0, z in [0, 1] and n_terms >= 1");
    }
    let theta = params.theta;
    let x = -(-t).exp_m1();
    // P[N(t)=n] = (θ)_n/n! e^{-θt} x^n, built by its term ratio.
    let mut p = (-theta * t).exp();
    let mut pgf = 1.0;
    let mut sum = 0.0;
    for n in 0..n_terms {
        sum += p * pgf;
        let nf = n as f64;
        p *= (theta + nf) / (nf + 1.0) * x;
        pgf *= (theta * z + nf) / (theta + nf);
    }
    // Terms beyond n_terms are at most P[N = m] and their ratio is
    // (θ+m)x/(m+1), which decreases once m ≥ 1 if θ ≥ 1, else increases to x.
    let m = n_terms as f64;
    let ratio = if theta >= 1.0 { (theta + m) / (m + 1.0) * x } else { x };
    let tail = if ratio < 1.0 { p / (1.0 - ratio) } else { f64::INFINITY };
    let residual = (sum - (theta * t * (z - 1.0)).exp()).abs();
    Ok(PascalCheck {
        residual,
        truncation_bound: tail + 64.0 * f64::EPSILON,
    })
}

/// Limit law `exp(−θE₁(x))` of the scaled largest cycle `e^{-t}M(t)`.
pub fn max_cycle_limit_cdf(theta: f64, x: f64) -> Result<f64> {
    Ok((-prm_mean_measure_tail(theta, x)?).exp())
}

/// `θE₁(x)`: expected number of scaled cycle sizes above `x` in the limit.
pub fn prm_mean_measure_tail(theta: f64, x: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return domain("theta must be positive");
    }
    Ok(theta * exp_integral_e1(x)?)
}

/// Expected number of cycles at time `t` of size above `⌊x e^t⌋`:
/// `θ Σ_{j>m} y^j/j` with `y = 1 − e^{-t}`.
pub fn prm_pre_limit_tail(theta: f64, t: f64, x: f64) -> Result<f64> {
    if !(theta > 0.0) || !(t > 0.0) || !(x > 0.0) {
        return domain("need theta > 0, t > 0, x > 0");
    }
    let m = (x * t.exp()).floor() as u64;
    Ok(theta * log_series_tail(-(-t).exp_m1(), m))
}

/// `Σ_{j>m} y^j/j` for `0 < y < 1`, summed until the geometric remainder
/// bound is negligible.
fn log_series_tail(y: f64, m: u64) -> f64 {
    let ln_y = y.ln();
    let mut sum = 0.0;
    let mut j = m + 1;
    loop {
        let term = (j as f64 * ln_y).exp() / j as f64;
        sum += term;
        let rest = term * y / (1.0 - y);
        if rest <= 1e-16 * sum || term == 0.0 {
            break;
        }
        j += 1;
    }
    sum
}

/// `P[M(t) ≤ m]` from an empty start, exact at finite `t`: counts of every
/// size are independent Poisson.
pub fn max_cycle_exact_cdf(theta: f64, t: f64, m: u64) -> Result<f64> {
    if !(theta > 0.0) || !(t > 0.0) {
        return domain("need theta > 0 and t > 0");
    }
    Ok((-theta * log_series_tail(-(-t).exp_m1(), m)).exp())
}

/// Sizes of all cycles at time `t` from an empty start, simulated element
/// by element.
pub fn simulate_cycle_sizes<R: Rng + ?Sized>(theta: f64, t: f64, event_cap: u64, rng: &mut R) -> Result<Vec<u64>> {
    if !(theta > 0.0) || !(t > 0.0) {
        return domain("need theta > 0 and t > 0");
    }
    let mut sizes: Vec<u64> = Vec::new();
    let mut n = 0u64;
    let mut now = 0.0;
    let mut events = 0u64;
    loop {
        let total = theta + n as f64;
        now += Exp::new(total).expect("positive rate").sample(rng);
        if now > t {
            return Ok(sizes);
        }
        events += 1;
        if events > event_cap {
            return Err(Error::Runtime(format!("more than {event_cap} events before t = {t}")));
        }
        let mut u = rng.random::<f64>() * total;
        if u < theta || sizes.is_empty() {
            sizes.push(1);
        } else {
            u -= theta;
            let mut idx = sizes.len() - 1;
            for (i, &s) in sizes.iter().enumerate() {
                if u < s as f64 {
                    idx = i;
                    break;
                }
                u -= s as f64;
            }
            sizes[idx] += 1;
        }
        n += 1;
    }
}

/// How the starting configuration of a sojourn is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SojournStart {
    /// Put the chain in the target state at degree `ν` directly.
    Pinned,
    /// Grow permutations from scratch to degree `ν` and keep those whose
    /// small cycles match the target.
    Conditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SojournConfig {
    pub nu: u64,
    pub n_samples: usize,
    pub start: SojournStart,
    /// Conditioned start: growth attempts allowed per sample.
    pub max_attempts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SojournSummary {
    /// Rate `θ + Σ_{i≤k} i c_i` of the limiting exponential.
    pub rate: f64,
    pub n: usize,
    pub mean: f64,
    pub ks_distance: f64,
    pub ks_threshold: f64,
}

/// Rate `θ + Σ i c_i` at which the counts of sizes `≤ k` leave `state` on
/// the logarithmic degree scale.
pub fn sojourn_rate(params: &TandemParams, state: &CycleCounts) -> f64 {
    params.theta + state.truncated(params.k).degree() as f64
}

/// Runs the discrete growth from degree `ν` in `state` (sizes `≤ k`) until
/// those counts first change at degree `m`, and compares `ln(m/ν)` with the
/// exponential law of rate `θ + Σ i c_i`.
pub fn time_change_sojourn_check<R: Rng + ?Sized>(
    params: &TandemParams,
    state: &CycleCounts,
    config: &SojournConfig,
    rng: &mut R,
) -> Result<SojournSummary> {
    let k = params.k;
    if state.largest_size() > k {
        return domain("state has cycles larger than k");
    }
    if config.nu < state.degree().max(1) {
        return domain("nu must be at least the degree of the state");
    }
    if config.n_samples < 2 {
        return domain("need at least two samples");
    }
    let crp = CrpParams::new(params.theta)?;
    let target = state.to_vec(k);
    let mass = state.degree();
    let nu = config.nu;
    let mut samples = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        if config.start == SojournStart::Conditioned {
            let mut attempts = 0;
            loop {
                if attempts >= config.max_attempts {
                    return Err(Error::Runtime(format!(
                        "state {state} not reached at degree {nu} in {} attempts",
                        config.max_attempts
                    )));
                }
                attempts += 1;
                let mut s = CycleCounts::new();
                for _ in 0..nu {
                    crp_step(&mut s, &crp, rng);
                }
                if s.to_vec(k) == target {
                    break;
                }
            }
        }
        let j = next_change(nu, mass, params.theta, MAX_DEGREE, rng)?
            .ok_or_else(|| Error::Runtime("sojourn outlasted the largest supported degree".into()))?;
        samples.push(((j + 1) as f64 / nu as f64).ln());
    }
    let rate = sojourn_rate(params, state);
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(SojournSummary {
        rate,
        n: samples.len(),
        mean,
        ks_distance: ks_distance(&samples, |x| -(-rate * x).exp_m1()),
        ks_threshold: ks_threshold(samples.len())?,
    })
}

/// Gaps between successive departures from station `phase` (cycles of that
/// size growing) during `[0, t_end]`, started from the stationary law.
pub fn departure_gaps<R: Rng + ?Sized>(
    params: &TandemParams,
    phase: usize,
    t_end: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if phase == 0 || phase > params.k {
        return domain("phase must lie in 1..=k");
    }
    let init = steady_state_initial(params, rng);
    let mut p = TandemProcess::new(*params, TrackingMode::Open, &init)?;
    let mut last = 0.0;
    let mut gaps = Vec::new();
    while let Some(tr) = p.step_until(t_end, rng) {
        if tr == Transition::Grow(phase) {
            gaps.push(p.time() - last);
            last = p.time();
        }
    }
    // The first gap is a residual from time 0; memorylessness keeps it Exp(θ).
    Ok(gaps)
}

/// Probability of the marginal count `c` of size `i` at time `t`.
pub fn transient_marginal_pmf(params: &TandemParams, i: usize, t: f64, c: u64) -> Result<f64> {
    Ok(poisson_pmf_unchecked(transient_marginal_mean(params, i, t)?, c))
}
