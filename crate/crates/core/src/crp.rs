//! The Chinese Restaurant Process on cycle counts.
//!
//! A permutation of `[n]` is grown to `[n+1]` by letting element `n+1` start
//! a new cycle with probability `θ/(θ+n)` or enter an existing cycle, each
//! position equally likely. Only the multiplicities of cycle sizes are kept.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::specials::{ln_factorial, ln_gamma_ratio, ln_rising, poisson_pmf};

/// Multiplicities of cycle sizes: `count(i)` cycles of size `i`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize)]
pub struct CycleCounts {
    counts: Vec<u64>,
    degree: u64,
}

impl CycleCounts {
    /// The empty permutation.
    pub fn new() -> Self {
        Self::default()
    }

    /// From multiplicities `counts[i]` of size `i+1`; the degree is implied.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let degree = counts.iter().enumerate().map(|(i, c)| (i as u64 + 1) * c).sum();
        let mut s = Self { counts, degree };
        s.trim();
        s
    }

    /// As [`from_counts`](Self::from_counts) but checks the stated degree.
    pub fn with_degree(counts: Vec<u64>, degree: u64) -> Result<Self> {
        let s = Self::from_counts(counts);
        if s.degree != degree {
            return domain(format!("cycle sizes add up to {} but the degree is {degree}", s.degree));
        }
        Ok(s)
    }

    fn trim(&mut self) {
        while self.counts.last() == Some(&0) {
            self.counts.pop();
        }
    }

    /// Number of cycles of size `size` (sizes start at 1).
    pub fn count(&self, size: usize) -> u64 {
        if size == 0 {
            return 0;
        }
        self.counts.get(size - 1).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn degree(&self) -> u64 {
        self.degree
    }

    pub fn num_cycles(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn largest_size(&self) -> usize {
        self.counts.len()
    }

    /// Counts of sizes `1..=k` only, with the degree they account for.
    pub fn truncated(&self, k: usize) -> Self {
        Self::from_counts(self.counts.iter().take(k).copied().collect())
    }

    /// The first `k` multiplicities padded with zeros.
    pub fn to_vec(&self, k: usize) -> Vec<u64> {
        (1..=k).map(|i| self.count(i)).collect()
    }

    pub(crate) fn add(&mut self, size: usize) {
        if self.counts.len() < size {
            self.counts.resize(size, 0);
        }
        self.counts[size - 1] += 1;
        self.degree += size as u64;
    }

    pub(crate) fn remove(&mut self, size: usize) {
        debug_assert!(self.count(size) > 0);
        self.counts[size - 1] -= 1;
        self.degree -= size as u64;
        self.trim();
    }

    /// Moves one cycle of size `size` to `size + 1`.
    pub(crate) fn grow(&mut self, size: usize) {
        self.remove(size);
        self.add(size + 1);
    }

    pub(crate) fn check(&self) -> bool {
        let d: u64 = self.counts.iter().enumerate().map(|(i, c)| (i as u64 + 1) * c).sum();
        d == self.degree && self.counts.last() != Some(&0)
    }
}

impl fmt::Display for CycleCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrpParams {
    theta: f64,
}

impl CrpParams {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return domain(format!("theta must be positive and finite, got {theta}"));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Fraction of degrees `1..=n` at which the number of singletons equalled
/// `level`, recorded at each checkpoint `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationRecord {
    pub level: u64,
    pub checkpoints: Vec<(u64, f64)>,
}

/// One growth step: element `n+1` is inserted.
pub fn crp_step<R: Rng + ?Sized>(state: &mut CycleCounts, params: &CrpParams, rng: &mut R) {
    let n = state.degree as f64;
    let mut u = rng.random::<f64>() * (params.theta + n);
    if u < params.theta || state.degree == 0 {
        state.add(1);
    } else {
        u -= params.theta;
        let mut chosen = state.counts.len();
        for (i, &c) in state.counts.iter().enumerate() {
            let w = (i as f64 + 1.0) * c as f64;
            if u < w {
                chosen = i + 1;
                break;
            }
            u -= w;
        }
        // Rounding can push u past the last bin; the largest size takes it.
        state.grow(chosen);
    }
    debug_assert!(state.check(), "partition constraint broken: {state:?}");
}

/// Ewens sampling formula `n!/(θ)_n Π (θ/i)^{c_i}/c_i!`.
pub fn ewens_pmf(state: &CycleCounts, params: &CrpParams) -> Result<f64> {
    if !state.check() {
        return domain("cycle counts violate the partition constraint");
    }
    if state.degree == 0 {
        return domain("Ewens formula needs degree >= 1");
    }
    let theta = params.theta;
    let mut ln = ln_factorial(state.degree) - ln_rising(theta, state.degree);
    for (i, &c) in state.counts.iter().enumerate() {
        if c > 0 {
            ln += c as f64 * (theta.ln() - (i as f64 + 1.0).ln()) - ln_factorial(c);
        }
    }
    Ok(ln.exp())
}

/// All cycle types of permutations of `[n]`.
pub fn partitions(n: u64) -> Vec<CycleCounts> {
    fn rec(rest: u64, max_part: u64, counts: &mut Vec<u64>, out: &mut Vec<CycleCounts>) {
        if rest == 0 {
            out.push(CycleCounts::from_counts(counts.clone()));
            return;
        }
        for part in (1..=max_part.min(rest)).rev() {
            counts[part as usize - 1] += 1;
            rec(rest - part, part, counts, out);
            counts[part as usize - 1] -= 1;
        }
    }
    let mut out = Vec::new();
    let mut counts = vec![0; n as usize];
    rec(n, n, &mut counts, &mut out);
    out
}

/// Generating function `E[z^K]` of the number of cycles at degree `n`,
/// equal to `(θz)_n/(θ)_n`.
pub fn cycles_pgf(n: u64, params: &CrpParams, z: f64) -> Result<f64> {
    if n == 0 {
        return domain("cycle-count generating function needs n >= 1");
    }
    let t = params.theta;
    Ok((0..n).map(|i| (t * z + i as f64) / (t + i as f64)).product())
}

/// Poisson(θ/k) limit law of the number of `k`-cycles.
pub fn limiting_count_pmf(k: u64, params: &CrpParams, c: u64) -> Result<f64> {
    if k == 0 {
        return domain("cycle size must be at least 1");
    }
    poisson_pmf(params.theta / k as f64, c)
}

/// Powers of two up to `n_max`, with `n_max` itself appended.
pub fn geometric_checkpoints(n_max: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..64).map(|e| 1u64 << e).take_while(|&p| p <= n_max).collect();
    if v.last() != Some(&n_max) && n_max > 0 {
        v.push(n_max);
    }
    v
}

/// Largest degree at which the skip sampler may land.
pub(crate) const MAX_DEGREE: u64 = u64::MAX / 4;

/// Degree `J ≥ n` of the next change of a chain that, at degree `j`, stays
/// put with probability `(j − mass)/(j + θ)`. This is the law of the counts of
/// sizes `≤ k` when `mass = Σ_{i≤k} i c_i`. Returns `None` if the stay lasts
/// through degree `limit`.
pub(crate) fn next_change<R: Rng + ?Sized>(
    n: u64,
    mass: u64,
    theta: f64,
    limit: u64,
    rng: &mut R,
) -> Result<Option<u64>> {
    debug_assert!(mass <= n);
    if n >= limit {
        return Ok(None);
    }
    if mass == n {
        return Ok(Some(n));
    }
    let w = mass as f64;
    let ln_r = |x: u64| ln_gamma_ratio(x as f64, -w, theta);
    let base = ln_r(n);
    // ln P[no change on degrees n..m-1]
    let ln_stay = |m: u64| ln_r(m) - base;
    let ln_u = (1.0 - rng.random::<f64>()).ln();
    if ln_stay(limit) >= ln_u {
        return Ok(None);
    }
    // Largest m with ln_stay(m) >= ln_u; ln_stay(n) = 0.
    let mut lo = n;
    let mut step = 1u64;
    let mut hi = loop {
        let probe = n.saturating_add(step).min(limit);
        if ln_stay(probe) < ln_u {
            break probe;
        }
        lo = probe;
        step = step.saturating_mul(2);
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ln_stay(mid) >= ln_u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Follows the singleton count of one growing permutation from degree 1 to
/// `n_max` and reports the share of degrees spent at `level` at each
/// checkpoint. Runs of unchanged singleton count are skipped in one draw.
pub fn occupation_trajectory<R: Rng + ?Sized>(
    params: &CrpParams,
    level: u64,
    n_max: u64,
    checkpoints: &[u64],
    rng: &mut R,
) -> Result<OccupationRecord> {
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return domain("checkpoints must be sorted");
    }
    if checkpoints.iter().any(|&c| c == 0 || c > n_max) {
        return domain(format!("checkpoints must lie in 1..={n_max}"));
    }
    if n_max > MAX_DEGREE {
        return domain("n_max too large");
    }
    let theta = params.theta;
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut cps = checkpoints.iter().copied().peekable();
    let (mut degree, mut singles, mut time_at_level) = (1u64, 1u64, 0u64);
    loop {
        let change = next_change(degree, singles, theta, n_max, rng)?;
        let end = change.unwrap_or(n_max).min(n_max);
        let here = singles == level;
        while let Some(&cp) = cps.peek() {
            if cp > end {
                break;
            }
            let t = time_at_level + if here { cp - degree + 1 } else { 0 };
            out.push((cp, t as f64 / cp as f64));
            cps.next();
        }
        if here {
            time_at_level += end - degree + 1;
        }
        match change {
            Some(j) if j < n_max => {
                // Given a change: new singleton w.p. θ/(θ+s), else a singleton grows.
                let u = rng.random::<f64>() * (theta + singles as f64);
                if u < theta {
                    singles += 1;
                } else {
                    singles -= 1;
                }
                degree = j + 1;
            }
            _ => break,
        }
    }
    Ok(OccupationRecord {
        level,
        checkpoints: out,
    })
}

/// Probability that no cycle of the tracked sizes (total size `mass`) changes
/// while the degree grows from `n` to `m`.
pub fn stay_probability(n: u64, mass: u64, theta: f64, m: u64) -> f64 {
    if m <= n {
        return 1.0;
    }
    if mass >= n {
        return 0.0;
    }
    let w = mass as f64;
    (ln_gamma_ratio(m as f64, -w, theta) - ln_gamma_ratio(n as f64, -w, theta)).exp()
}
