//! What a tagged arrival sees in a tandem of M/M/∞ stations in steady state.
//!
//! `L_j` is the number present at station `j` just before the tagged item
//! enters it. Each `L_j` is Poisson with mean `θ/μ_j`; the pairs are
//! positively correlated.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::mc::{stream, McEstimate, OrdF64};
use crate::specials::{integrate, ln_factorial, QuadratureSpec, TailBound, Upper};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggedParams {
    theta: f64,
    rates: Vec<f64>,
}

impl TaggedParams {
    pub fn new(theta: f64, rates: Vec<f64>) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return domain(format!("theta must be positive and finite, got {theta}"));
        }
        if rates.is_empty() {
            return domain("at least one station is needed");
        }
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return domain(format!("service rates must be positive and finite, got {r}"));
        }
        Ok(Self { theta, rates })
    }

    /// Rates `1, 2, ..., k`, the case coming from random permutations.
    pub fn permutation(theta: f64, k: usize) -> Result<Self> {
        Self::new(theta, (1..=k).map(|i| i as f64).collect())
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn stations(&self) -> usize {
        self.rates.len()
    }

    /// Mean occupancy `θ/μ_j` of station `j` (1-based).
    pub fn load(&self, j: usize) -> f64 {
        self.theta / self.rates[j - 1]
    }

    /// `s` when the rates are `s, 2s, 3s, ...`.
    fn permutation_scale(&self) -> Option<f64> {
        let s = self.rates[0];
        self.rates
            .iter()
            .enumerate()
            .all(|(i, &r)| (r - s * (i + 1) as f64).abs() <= 1e-12 * r)
            .then_some(s)
    }

    fn check_pair(&self, j: usize, k: usize) -> Result<()> {
        if j == 0 || j >= k || k > self.rates.len() {
            return domain(format!("need 1 <= j < k <= {}, got j={j}, k={k}", self.rates.len()));
        }
        Ok(())
    }
}

/// Occupancies `L_1..L_K` met by one tagged item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaggedObservation {
    pub occupancies: Vec<u64>,
}

fn ln_binom(n: u64, r: u64) -> f64 {
    ln_factorial(n) - ln_factorial(r) - ln_factorial(n - r)
}

fn binom(n: u64, r: u64) -> f64 {
    ln_binom(n, r).exp().round()
}

/// `φ` and `ψ` in the variable `x = 1 − e^{-st}`.
fn phi_psi_x(j: usize, k: usize, x: f64) -> (f64, f64) {
    let (j, k) = (j as u64, k as u64);
    let q = 1.0 - x;
    let phi = binom(k - 1, j - 1) * x.powi((k - j) as i32) * q.powi(j as i32);
    let psi = (0..j)
        .map(|i| binom(k - 1, i) * q.powi(i as i32) * x.powi((k - 1 - i) as i32))
        .sum::<f64>()
        .min(1.0);
    (phi, psi)
}

/// Density of `ψ` in the variable `x`.
fn psi_density_x(j: usize, k: usize, x: f64) -> f64 {
    let (j, k) = (j as u64, k as u64);
    (k - 1) as f64 * binom(k - 2, j - 1) * x.powi((k - j - 1) as i32) * (1.0 - x).powi((j - 1) as i32)
}

/// `φ(t)`: probability that an item entering station `j` at time 0 is at
/// station `k` at time `t`. `ψ(t)`: probability it has reached station `k`
/// by time `t`. Needs rates proportional to `1, 2, ..., K`.
pub fn phi_psi(params: &TaggedParams, j: usize, k: usize, t: f64) -> Result<(f64, f64)> {
    params.check_pair(j, k)?;
    if !(t >= 0.0) {
        return domain("time must be nonnegative");
    }
    let s = params
        .permutation_scale()
        .ok_or_else(|| Error::Unsupported("closed forms need rates proportional to 1, 2, ..., K".into()))?;
    if t.is_infinite() {
        return Ok((0.0, 1.0));
    }
    Ok(phi_psi_x(j, k, -(-s * t).exp_m1()))
}

fn quad() -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_depth: 60,
    }
}

fn joint_pgf_unchecked(params: &TaggedParams, j: usize, k: usize, x: f64, y: f64) -> Result<f64> {
    let (rj, rk) = (params.load(j), params.load(k));
    let a = rj * (x - 1.0) * (y - 1.0);
    let inner = integrate(
        |u| (a * phi_psi_x(j, k, u).0).exp() * psi_density_x(j, k, u),
        0.0,
        Upper::Finite(1.0),
        &quad(),
    )?;
    Ok((rj * (x - 1.0) + rk * (y - 1.0)).exp() * inner)
}

/// `E[x^{L_j} y^{L_k}]` for `j < k`.
pub fn joint_pgf(params: &TaggedParams, j: usize, k: usize, x: f64, y: f64) -> Result<f64> {
    params.check_pair(j, k)?;
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return domain("p.g.f. arguments must lie in [0, 1]");
    }
    if params.permutation_scale().is_none() {
        return Err(Error::Unsupported(
            "the joint p.g.f. needs rates proportional to 1, 2, ..., K".into(),
        ));
    }
    joint_pgf_unchecked(params, j, k, x, y)
}

/// `ln(C(k−1,j) C(k−1,j−1) (2k−2j−1)! (2j−1)! / (2k−1)!)`.
/// The factor is unchanged by `j → k−j`; the smaller index is used so both
/// give the same bits.
fn ln_beta_factor(j: usize, k: usize) -> f64 {
    let (j, k) = (j.min(k - j) as u64, k as u64);
    ln_binom(k - 1, j) + ln_binom(k - 1, j - 1) + ln_factorial(2 * k - 2 * j - 1) + ln_factorial(2 * j - 1)
        - ln_factorial(2 * k - 1)
}

/// `cov(L_j, L_k)` for rates `s, 2s, ..., Ks`.
pub fn covariance(params: &TaggedParams, j: usize, k: usize) -> Result<f64> {
    params.check_pair(j, k)?;
    let s = params
        .permutation_scale()
        .ok_or_else(|| Error::Unsupported("closed forms need rates proportional to 1, 2, ..., K".into()))?;
    Ok(params.theta / s * ln_beta_factor(j, k).exp())
}

/// `corr(L_j, L_k)` for rates proportional to `1..K`; free of `θ`.
pub fn correlation(j: usize, k: usize) -> Result<f64> {
    if j == 0 || j >= k {
        return domain(format!("need 1 <= j < k, got j={j}, k={k}"));
    }
    Ok(((j * k) as f64).sqrt() * ln_beta_factor(j, k).exp())
}

/// `cov(L_j, L_k) = (θ/μ_j) ∫ φ dψ`, integrated over time.
pub fn covariance_quadrature(params: &TaggedParams, j: usize, k: usize) -> Result<f64> {
    params.check_pair(j, k)?;
    let s = params
        .permutation_scale()
        .ok_or_else(|| Error::Unsupported("closed forms need rates proportional to 1, 2, ..., K".into()))?;
    // φ ≤ C(k−1,j−1) e^{-sjt} and ψ' ≤ (k−1) C(k−2,j−1) s e^{-sjt}.
    let tail = TailBound {
        constant: binom(k as u64 - 1, j as u64 - 1) * (k - 1) as f64 * binom(k as u64 - 2, j as u64 - 1) * s,
        rate: 2.0 * s * j as f64,
    };
    let v = integrate(
        |t| {
            let x = -(-s * t).exp_m1();
            phi_psi_x(j, k, x).0 * psi_density_x(j, k, x) * s * (1.0 - x)
        },
        0.0,
        Upper::Infinite(tail),
        &quad(),
    )?;
    Ok(params.load(j) * v)
}

/// `corr(L_j, L_k)` for any rates with distinct `μ_j..μ_k`: the value at 0
/// of the polynomial through `(μ_i², μ_i)`, `i = j..k`, divided by
/// `2√(μ_j μ_k)`.
pub fn lagrange_correlation(rates: &[f64], j: usize, k: usize) -> Result<f64> {
    if j == 0 || j >= k || k > rates.len() {
        return domain(format!("need 1 <= j < k <= {}, got j={j}, k={k}", rates.len()));
    }
    let mu = &rates[j - 1..k];
    if mu.iter().any(|m| !(*m > 0.0)) {
        return domain("rates must be positive");
    }
    let nodes: Vec<f64> = mu.iter().map(|m| m * m).collect();
    for (a, &xa) in nodes.iter().enumerate() {
        if nodes[a + 1..].contains(&xa) {
            return domain(format!("duplicate interpolation node {xa}"));
        }
    }
    // Barycentric weights in log form, rescaled so the largest is 1.
    let mut ln_w = Vec::with_capacity(nodes.len());
    let mut sign = Vec::with_capacity(nodes.len());
    for (a, &xa) in nodes.iter().enumerate() {
        let (mut l, mut s) = (0.0, 1.0);
        for (b, &xb) in nodes.iter().enumerate() {
            if a != b {
                l -= (xa - xb).abs().ln();
                if xa < xb {
                    s = -s;
                }
            }
        }
        ln_w.push(l);
        sign.push(s);
    }
    let top = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for a in 0..nodes.len() {
        let c = sign[a] * (ln_w[a] - top).exp() / (-nodes[a]);
        num += c * mu[a];
        den += c;
    }
    Ok(num / den / (2.0 * (mu[0] * mu[mu.len() - 1]).sqrt()))
}

/// Runs the tandem from a stationary start and tags the first `n_tagged`
/// arrivals after `warmup`. Returns observations in arrival order.
pub fn simulate_tagged<R: Rng + ?Sized>(
    params: &TaggedParams,
    n_tagged: usize,
    warmup: f64,
    rng: &mut R,
) -> Result<Vec<TaggedObservation>> {
    let kk = params.stations();
    let slowest = params.rates.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(warmup >= 10.0 / slowest) {
        return domain(format!(
            "warmup must be at least {} (ten mean stays at the slowest station)",
            10.0 / slowest
        ));
    }
    let clocks: Vec<Exp<f64>> = params
        .rates
        .iter()
        .map(|&m| Exp::new(m).expect("positive rate"))
        .collect();
    let arrivals = Exp::new(params.theta).expect("positive rate");

    // Per item: current station and tag slot. Slots of departed items are reused.
    let mut station: Vec<usize> = Vec::new();
    let mut tag: Vec<Option<usize>> = Vec::new();
    let mut free_ids: Vec<usize> = Vec::new();
    let mut heap: BinaryHeap<Reverse<(OrdF64, usize)>> = BinaryHeap::new();
    let mut n = vec![0u64; kk];

    for i in 0..kk {
        let count = Poisson::new(params.load(i + 1))
            .map_err(|e| Error::Numeric(e.to_string()))?
            .sample(rng) as u64;
        for _ in 0..count {
            station.push(i);
            tag.push(None);
            heap.push(Reverse((OrdF64(clocks[i].sample(rng)), station.len() - 1)));
        }
        n[i] = count;
    }

    let mut obs = vec![vec![0u64; kk]; n_tagged];
    let (mut issued, mut done) = (0usize, 0usize);
    let mut next_arrival = arrivals.sample(rng);
    while done < n_tagged {
        let next_move = heap.peek().map(|Reverse((t, _))| t.0).unwrap_or(f64::INFINITY);
        if next_arrival <= next_move {
            let now = next_arrival;
            let tg = if now >= warmup && issued < n_tagged {
                obs[issued][0] = n[0];
                issued += 1;
                if kk == 1 {
                    done += 1;
                    None
                } else {
                    Some(issued - 1)
                }
            } else {
                None
            };
            let id = match free_ids.pop() {
                Some(id) => {
                    station[id] = 0;
                    tag[id] = tg;
                    id
                }
                None => {
                    station.push(0);
                    tag.push(tg);
                    station.len() - 1
                }
            };
            n[0] += 1;
            heap.push(Reverse((OrdF64(now + clocks[0].sample(rng)), id)));
            next_arrival = now + arrivals.sample(rng);
        } else {
            let Reverse((OrdF64(now), id)) = heap.pop().expect("nonempty");
            let from = station[id];
            n[from] -= 1;
            if from + 1 == kk {
                free_ids.push(id);
                continue;
            }
            let to = from + 1;
            if let Some(slot) = tag[id] {
                obs[slot][to] = n[to];
                if to + 1 == kk {
                    done += 1;
                    tag[id] = None;
                }
            }
            station[id] = to;
            n[to] += 1;
            heap.push(Reverse((OrdF64(now + clocks[to].sample(rng)), id)));
        }
    }
    Ok(obs
        .into_iter()
        .map(|occupancies| TaggedObservation { occupancies })
        .collect())
}

pub fn write_observations_csv<W: Write>(obs: &[TaggedObservation], stations: usize, mut w: W) -> io::Result<()> {
    write!(w, "tag_id")?;
    for i in 1..=stations {
        write!(w, ",L{i}")?;
    }
    writeln!(w)?;
    for (id, o) in obs.iter().enumerate() {
        write!(w, "{id}")?;
        for v in &o.occupancies {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Sample covariance and correlation of columns `j` and `k` (1-based).
pub fn sample_moments(obs: &[TaggedObservation], j: usize, k: usize) -> (f64, f64) {
    let n = obs.len() as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for o in obs {
        sa += o.occupancies[j - 1] as f64;
        sb += o.occupancies[k - 1] as f64;
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut caa, mut cbb, mut cab) = (0.0, 0.0, 0.0);
    for o in obs {
        let a = o.occupancies[j - 1] as f64 - ma;
        let b = o.occupancies[k - 1] as f64 - mb;
        caa += a * a;
        cbb += b * b;
        cab += a * b;
    }
    let cov = cab / (n - 1.0);
    (cov, cab / (caa * cbb).sqrt())
}

/// Covariance and correlation of each pair `(L_j, L_k)` in `pairs`, over
/// `n_batches` independent runs of `n_tagged / n_batches` tags each, run in
/// parallel. Standard errors come from the spread across runs.
pub fn tagged_moments_mc(
    params: &TaggedParams,
    pairs: &[(usize, usize)],
    n_tagged: usize,
    warmup: f64,
    seed: u64,
    n_batches: usize,
) -> Result<Vec<(McEstimate, McEstimate)>> {
    for &(j, k) in pairs {
        params.check_pair(j, k)?;
    }
    if n_batches < 2 || n_tagged / n_batches < 2 {
        return domain("need at least two batches of at least two tags");
    }
    let per = n_tagged / n_batches;
    let parts: Vec<Result<Vec<(f64, f64)>>> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let obs = simulate_tagged(params, per, warmup, &mut rng)?;
            Ok(pairs.iter().map(|&(j, k)| sample_moments(&obs, j, k)).collect())
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let prov = format!("chacha8 seed={seed} streams=0..{n_batches} tags_per_stream={per}");
    (0..pairs.len())
        .map(|p| {
            let covs: Vec<f64> = parts.iter().map(|b| b[p].0).collect();
            let corrs: Vec<f64> = parts.iter().map(|b| b[p].1).collect();
            Ok((
                McEstimate::from_samples(&covs, prov.clone())?,
                McEstimate::from_samples(&corrs, prov.clone())?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_psi_values() {
        let p = TaggedParams::permutation(1.0, 4).unwrap();
        assert_eq!(phi_psi(&p, 1, 2, 0.0).unwrap(), (0.0, 0.0));
        let (phi, psi) = phi_psi(&p, 1, 2, 2f64.ln()).unwrap();
        assert_relative_eq!(phi, 0.25, max_relative = 1e-14);
        assert_relative_eq!(psi, 0.5, max_relative = 1e-14);
        let (phi, psi) = phi_psi(&p, 2, 4, 200.0).unwrap();
        assert!(phi < 1e-80 && (psi - 1.0).abs() < 1e-15);
        let q = TaggedParams::new(1.0, vec![1.0, 3.0]).unwrap();
        assert!(matches!(phi_psi(&q, 1, 2, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn phi_is_difference_of_psis() {
        let p = TaggedParams::permutation(1.0, 6).unwrap();
        for t in [0.3, 1.0, 2.5] {
            for k in 2..6 {
                for j in 1..k {
                    let (phi, psi) = phi_psi(&p, j, k, t).unwrap();
                    let (_, psi_next) = phi_psi(&p, j, k + 1, t).unwrap();
                    assert!((phi - (psi - psi_next)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn closed_forms() {
        let p = TaggedParams::permutation(1.0, 2).unwrap();
        assert_relative_eq!(covariance(&p, 1, 2).unwrap(), 1.0 / 6.0, max_relative = 1e-13);
        assert_relative_eq!(correlation(1, 2).unwrap(), 2f64.sqrt() / 6.0, max_relative = 1e-13);
        for k in 2..12 {
            let r = (k as f64).sqrt() / (2.0 * (2 * k - 1) as f64);
            assert_relative_eq!(correlation(1, k).unwrap(), r, max_relative = 1e-12);
        }
    }

    #[test]
    fn pgf_margins() {
        let p = TaggedParams::permutation(1.5, 4).unwrap();
        assert!((joint_pgf(&p, 1, 3, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let m = joint_pgf(&p, 2, 4, 0.3, 1.0).unwrap();
        assert_relative_eq!(m, (p.load(2) * -0.7).exp(), max_relative = 1e-12);
        let m = joint_pgf(&p, 2, 4, 1.0, 0.4).unwrap();
        assert_relative_eq!(m, (p.load(4) * -0.6).exp(), max_relative = 1e-12);
    }

    #[test]
    fn pgf_mixed_derivative() {
        let p = TaggedParams::permutation(1.3, 5).unwrap();
        let h = 1e-3;
        for (j, k) in [(1, 2), (2, 5), (3, 4)] {
            let g = |x: f64, y: f64| joint_pgf_unchecked(&p, j, k, x, y).unwrap();
            let mixed =
                (g(1.0 + h, 1.0 + h) - g(1.0 + h, 1.0 - h) - g(1.0 - h, 1.0 + h) + g(1.0 - h, 1.0 - h)) / (4.0 * h * h);
            let cov = mixed - p.load(j) * p.load(k);
            assert!((cov - covariance(&p, j, k).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn lagrange_two_nodes() {
        // Line through (1, 1) and (9, 3) meets the axis at 3/4.
        let r = lagrange_correlation(&[1.0, 3.0], 1, 2).unwrap();
        assert_relative_eq!(r, 0.75 / (2.0 * 3f64.sqrt()), max_relative = 1e-14);
        assert!(lagrange_correlation(&[2.0, 2.0], 1, 2).is_err());
    }

    #[test]
    fn simulation_shapes() {
        let p = TaggedParams::permutation(1.0, 3).unwrap();
        let mut rng = stream(4, 0);
        let obs = simulate_tagged(&p, 500, 20.0, &mut rng).unwrap();
        assert_eq!(obs.len(), 500);
        assert!(obs.iter().all(|o| o.occupancies.len() == 3));
        assert!(simulate_tagged(&p, 10, 1.0, &mut rng).is_err());
        let mut buf = Vec::new();
        write_observations_csv(&obs[..2], 3, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("tag_id,L1,L2,L3\n0,"));
    }
}
