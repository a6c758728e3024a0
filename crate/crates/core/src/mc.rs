//! Monte Carlo harness: reproducible replicate streams, estimators with
//! standard errors, batch means for time averages and the goodness-of-fit
//! tests used to compare simulations with exact answers.
//!
//! Replicate `i` of a run with master seed `s` draws from the ChaCha8 stream
//! with key derived from `s` and stream id `i` (see [`stream`]). Results are
//! gathered in replicate order and reduced by pairwise summation, so reported
//! digits do not depend on the thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{domain, Error, Result};
use crate::specials::{find_root, RootSpec};

/// Random stream handed to every sampler.
pub type Stream = ChaCha8Rng;

/// Significance level of every goodness-of-fit test.
pub const SIGNIFICANCE: f64 = 0.001;

/// Minimum sample size accepted by the goodness-of-fit tests.
pub const MIN_GOF_SAMPLES: usize = 1000;

/// Minimum expected count per chi-square bin.
pub const MIN_EXPECTED: f64 = 5.0;

/// Stream `index` under `master_seed`. The 256-bit key is the SplitMix
/// expansion of the master seed, and `index` selects one of the 2^64
/// independent ChaCha streams under that key.
pub fn stream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Derives an independent master seed for a named sub-experiment.
pub fn sub_seed(master_seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, then one draw from the labelled stream.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    stream(master_seed ^ h, u64::MAX).next_u64()
}

/// Point estimate with standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    /// How the underlying random numbers were produced.
    pub provenance: String,
}

impl McEstimate {
    /// Sample mean and `sd/√n` of `samples`.
    pub fn from_samples(samples: &[f64], provenance: impl Into<String>) -> Result<Self> {
        if samples.len() < 2 {
            return domain("an estimate needs at least two samples");
        }
        let n = samples.len() as f64;
        let mean = pairwise_sum(samples) / n;
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1.0);
        Ok(Self {
            mean,
            stderr: (var / n).sqrt(),
            n: samples.len() as u64,
            provenance: provenance.into(),
        })
    }

    /// Unbiased sample variance, with the delta-method standard error
    /// `sqrt((m4 − m2²)/n)` built from central moments.
    pub fn variance_of(samples: &[f64], provenance: impl Into<String>) -> Result<Self> {
        if samples.len() < 2 {
            return domain("a variance estimate needs at least two samples");
        }
        let n = samples.len() as f64;
        let mean = pairwise_sum(samples) / n;
        let d2: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
        let d4: Vec<f64> = d2.iter().map(|x| x * x).collect();
        let m2 = pairwise_sum(&d2) / n;
        let m4 = pairwise_sum(&d4) / n;
        Ok(Self {
            mean: m2 * n / (n - 1.0),
            stderr: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
            n: samples.len() as u64,
            provenance: provenance.into(),
        })
    }

    /// Sample covariance of paired samples; the standard error is that of
    /// the mean of centred products.
    pub fn covariance_of(xs: &[f64], ys: &[f64], provenance: impl Into<String>) -> Result<Self> {
        if xs.len() != ys.len() {
            return domain("paired samples must have equal length");
        }
        if xs.len() < 2 {
            return domain("a covariance estimate needs at least two samples");
        }
        let n = xs.len() as f64;
        let (mx, my) = (pairwise_sum(xs) / n, pairwise_sum(ys) / n);
        let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
        let est = Self::from_samples(&prods, provenance)?;
        Ok(Self {
            mean: est.mean * n / (n - 1.0),
            ..est
        })
    }

    pub fn z_score(&self, target: f64) -> f64 {
        if self.stderr > 0.0 {
            (self.mean - target) / self.stderr
        } else if self.mean == target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Summation by recursive halving; error grows like `log n` rather than `n`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn provenance(master_seed: u64, n: u64) -> String {
    format!("chacha8 seed={master_seed} streams=0..{n}")
}

/// Runs `n` replicates in parallel, replicate `i` on `stream(master_seed, i)`.
/// Output is in replicate order. The first failing replicate (by index) is
/// reported with its index attached.
pub fn replicate<T, F>(n: u64, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut Stream) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(master_seed, i);
            f(i, &mut rng)
        })
        .collect();
    let mut out = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(Error::Replicate {
                    index: i as u64,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Mean of `n_reps` i.i.d. draws of `sampler`.
pub fn estimate<F>(n_reps: u64, master_seed: u64, sampler: F) -> Result<McEstimate>
where
    F: Fn(&mut Stream) -> Result<f64> + Sync,
{
    if n_reps < 2 {
        return domain("estimate needs n_reps >= 2");
    }
    let xs = replicate(n_reps, master_seed, |_, rng| sampler(rng))?;
    McEstimate::from_samples(&xs, provenance(master_seed, n_reps))
}

/// Accumulates a piecewise-constant path into equal-length time batches.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    t_start: f64,
    width: f64,
    integrals: Vec<f64>,
    now: f64,
}

impl BatchAccumulator {
    pub fn new(t_start: f64, t_end: f64, n_batches: usize) -> Result<Self> {
        if n_batches < 10 {
            return domain(format!("batch means needs at least 10 batches, got {n_batches}"));
        }
        if !(t_end > t_start) {
            return domain("batch window must have positive length");
        }
        Ok(Self {
            t_start,
            width: (t_end - t_start) / n_batches as f64,
            integrals: vec![0.0; n_batches],
            now: t_start,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.width * self.integrals.len() as f64
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Records that the path held `value` for the next `duration` time units.
    /// Time beyond the window end is ignored.
    pub fn push(&mut self, value: f64, duration: f64) {
        let end = (self.now + duration).min(self.t_end());
        let nb = self.integrals.len();
        while self.now < end {
            let b = (((self.now - self.t_start) / self.width) as usize).min(nb - 1);
            let boundary = self.t_start + self.width * (b + 1) as f64;
            let stop = if b + 1 == nb { end } else { boundary.min(end) };
            self.integrals[b] += value * (stop - self.now);
            if stop <= self.now {
                // Rounding left us on a boundary; move to the next batch.
                self.now = boundary.min(end);
                if b + 1 == nb {
                    break;
                }
                continue;
            }
            self.now = stop;
        }
    }

    pub fn finish(&self, provenance: impl Into<String>) -> Result<McEstimate> {
        let means: Vec<f64> = self.integrals.iter().map(|x| x / self.width).collect();
        McEstimate::from_samples(&means, provenance)
    }
}

/// Batch-means estimate of the time average of a piecewise-constant path.
/// `path[i] = (time, value)` holds from its time until the next entry (or
/// `t_end`); the window runs from the first time to `t_end`.
pub fn batch_means(path: &[(f64, f64)], t_end: f64, n_batches: usize) -> Result<McEstimate> {
    let Some(&(t0, _)) = path.first() else {
        return domain("batch means needs a nonempty path");
    };
    let mut acc = BatchAccumulator::new(t0, t_end, n_batches)?;
    for (i, &(t, v)) in path.iter().enumerate() {
        let next = path.get(i + 1).map_or(t_end, |p| p.0);
        acc.push(v, next.min(t_end) - t.min(t_end));
    }
    acc.finish(format!("batch means over {n_batches} batches"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    ChiSquare,
    Ks,
    Z,
}

/// Outcome of a hypothesis test; `pass` iff `statistic <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub kind: TestKind,
}

impl GofResult {
    fn new(statistic: f64, threshold: f64, kind: TestKind) -> Self {
        Self {
            statistic,
            threshold,
            pass: statistic <= threshold,
            kind,
        }
    }
}

/// `|mean − target|` in units of the standard error against `n_sigmas`.
/// A zero standard error passes only on exact equality.
pub fn z_test(est: &McEstimate, target: f64, n_sigmas: f64) -> GofResult {
    GofResult::new(est.z_score(target).abs(), n_sigmas, TestKind::Z)
}

/// Chi-square test of categorical counts against probabilities. Leftover
/// reference mass `1 − Σ probs` forms one more category with no observations.
/// Adjacent categories are merged until each expects at least five counts.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<GofResult> {
    if observed.len() != probs.len() {
        return domain("observed counts and probabilities differ in length");
    }
    if probs.iter().any(|p| !(*p >= 0.0)) {
        return domain("reference probabilities must be nonnegative");
    }
    let total_p: f64 = probs.iter().sum();
    if total_p > 1.0 + 1e-9 {
        return domain(format!("reference probabilities sum to {total_p} > 1"));
    }
    let n: u64 = observed.iter().sum();
    if (n as usize) < MIN_GOF_SAMPLES {
        return domain(format!(
            "chi-square test needs at least {MIN_GOF_SAMPLES} samples, got {n}"
        ));
    }
    let nf = n as f64;
    let mut cells: Vec<(f64, f64)> = observed.iter().zip(probs).map(|(&o, &p)| (o as f64, nf * p)).collect();
    cells.push((0.0, nf * (1.0 - total_p).max(0.0)));

    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (o, e) in cells {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= MIN_EXPECTED {
            merged.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => merged.push(acc),
        }
    }
    if merged.len() < 2 {
        return domain("reference is degenerate: fewer than two bins after merging");
    }
    let mut stat = 0.0;
    for &(o, e) in &merged {
        if e <= 0.0 {
            if o > 0.0 {
                return Ok(GofResult::new(f64::INFINITY, 0.0, TestKind::ChiSquare));
            }
            continue;
        }
        stat += (o - e) * (o - e) / e;
    }
    let df = (merged.len() - 1) as f64;
    let threshold = ChiSquared::new(df)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .inverse_cdf(1.0 - SIGNIFICANCE);
    Ok(GofResult::new(stat, threshold, TestKind::ChiSquare))
}

/// Chi-square test of a histogram over `0, 1, 2, …` against an integer pmf.
pub fn chi_square_pmf<F: Fn(u64) -> f64>(histogram: &[u64], pmf: F) -> Result<GofResult> {
    let probs: Vec<f64> = (0..histogram.len() as u64).map(&pmf).collect();
    chi_square_gof(histogram, &probs)
}

/// Histogram of integer samples.
pub fn histogram(samples: impl IntoIterator<Item = u64>) -> Vec<u64> {
    let mut h = Vec::new();
    for s in samples {
        let s = s as usize;
        if s >= h.len() {
            h.resize(s + 1, 0);
        }
        h[s] += 1;
    }
    h
}

/// Kolmogorov distribution function `P[sup|B| ≤ x]` of the Brownian bridge.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        let c = (2.0 * std::f64::consts::PI).sqrt() / x;
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        let mut s = 0.0;
        for k in 0..50 {
            let e = (2 * k + 1) as f64;
            let t = q.powf(e * e);
            s += t;
            if t < 1e-18 {
                break;
            }
        }
        c * s
    } else {
        let mut s = 0.0;
        for k in 1..100 {
            let kf = k as f64;
            let t = (-2.0 * kf * kf * x * x).exp();
            s += if k % 2 == 1 { t } else { -t };
            if t < 1e-18 {
                break;
            }
        }
        1.0 - 2.0 * s
    }
}

/// Critical value of the KS distance for `n` samples at the global
/// significance level, with Stephens' finite-sample correction.
pub fn ks_threshold(n: usize) -> Result<f64> {
    let x = find_root(
        |x| kolmogorov_cdf(x) - (1.0 - SIGNIFICANCE),
        &RootSpec::new(0.5, 4.0, 1e-12)?,
    )?;
    let sn = (n as f64).sqrt();
    Ok(x / (sn + 0.12 + 0.11 / sn))
}

/// Largest gap between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF.
pub fn ks_gof<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<GofResult> {
    if samples.len() < MIN_GOF_SAMPLES {
        return domain(format!(
            "KS test needs at least {MIN_GOF_SAMPLES} samples, got {}",
            samples.len()
        ));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return domain("KS test got NaN samples");
    }
    Ok(GofResult::new(
        ks_distance(samples, cdf),
        ks_threshold(samples.len())?,
        TestKind::Ks,
    ))
}

/// Value above which exactly `count` of the samples lie (or the smallest
/// sample if there are fewer).
pub fn exceedance_level(samples: &[f64], count: usize) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let idx = xs.len().saturating_sub(count + 1);
    xs[idx]
}

/// Least-squares slope of `ln P̂[X > t]` against `t` on `n_points` equally
/// spaced points of `[t1, t2]`.
pub fn log_survival_slope(samples: &[f64], t1: f64, t2: f64, n_points: usize) -> Result<f64> {
    if !(t2 > t1) || n_points < 2 {
        return domain("slope fit needs t2 > t1 and at least two points");
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut pts = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let t = t1 + (t2 - t1) * i as f64 / (n_points - 1) as f64;
        let above = xs.len() - xs.partition_point(|&x| x <= t);
        if above == 0 {
            return domain(format!("no samples exceed {t}"));
        }
        pts.push((t, (above as f64 / n).ln()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// `f64` with a total order, for event heaps.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OrdF64(pub(crate) f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
