//! Busy periods of the M/G/∞ queue formed by the total number of cycles of
//! sizes `1..=k`. Cycles arrive at rate `θ` and stay until they outgrow size
//! `k`; the stay has law `P[σ ≤ t] = (1 − e^{-t})^k` and mean `h_k`.
//!
//! Exact results run through `π₀(t)`, the chance of an empty system at time
//! `t` from an empty start, and its transform `L(z) = 1 + ∫ e^{-zt} π₀'(t) dt`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::mc::OrdF64;
use crate::mminf::QueueExcursion;
use crate::specials::{
    find_root, harmonic_unchecked, integrate_with_error, QuadratureSpec, RootSpec, TailBound, Upper,
};

/// Default cap on events in one simulated busy period.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

const BETA_SCAN_STEP: f64 = 0.01;

/// Bracket width at which the search for `β` stops.
const BETA_ROOT_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgParams {
    theta: f64,
    k: u32,
}

impl MgParams {
    pub fn new(theta: f64, k: u32) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return domain(format!("theta must be positive and finite, got {theta}"));
        }
        if k == 0 {
            return domain("k must be at least 1");
        }
        Ok(Self { theta, k })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Load `θ h_k`.
    pub fn rho(&self) -> f64 {
        self.theta * harmonic_unchecked(self.k as u64)
    }

    /// Stationary probability `e^{-ρ}` of an empty system.
    pub fn pi0(&self) -> f64 {
        (-self.rho()).exp()
    }
}

/// Exponential tail of the busy period: `P[D₀ > t] ~ α e^{-βt}` and the
/// density of its integrated tail `~ α* e^{-βt}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailAsymptotics {
    pub beta: f64,
    pub alpha: f64,
    /// From the renewal-equation formula, independently of `alpha`.
    pub alpha_star: f64,
}

/// `P[σ ≤ t] = (1 − e^{-t})^k`.
pub fn service_cdf(k: u32, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (k as f64 * (-(-t).exp_m1()).ln()).exp()
}

/// `P[σ > t]`, accurate deep in the tail.
pub fn service_survival(k: u32, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    -(k as f64 * (-(-t).exp()).ln_1p()).exp_m1()
}

/// `Σ_{i=1}^k y^i/i` and `Σ_{i=1}^k (1 − y^i)/i` for `y = 1 − e^{-t}`.
fn log_partial_sums(k: u32, t: f64) -> (f64, f64) {
    let ln_y = (-(-t).exp()).ln_1p();
    let (mut head, mut rest) = (0.0, 0.0);
    for i in 1..=k {
        let yi = i as f64 * ln_y;
        head += yi.exp() / i as f64;
        rest += -yi.exp_m1() / i as f64;
    }
    (head, rest)
}

/// Integrated-tail law `P[σ* ≤ t] = (1/h_k) ∫₀ᵗ P[σ > x] dx
/// = (1/h_k) Σ_{i≤k} y^i/i`.
pub fn residual_cdf(k: u32, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    log_partial_sums(k, t).0 / harmonic_unchecked(k as u64)
}

pub fn residual_survival(k: u32, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    log_partial_sums(k, t).1 / harmonic_unchecked(k as u64)
}

/// `π₀(t) = exp(−ρ P[σ* ≤ t])`.
pub fn pi0_of_t(params: &MgParams, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    (-params.theta * log_partial_sums(params.k, t).0).exp()
}

/// `π₀'(t) = −θ P[σ > t] π₀(t)`.
pub fn pi0_derivative(params: &MgParams, t: f64) -> f64 {
    -params.theta * service_survival(params.k, t) * pi0_of_t(params, t)
}

/// `π₀(t) − π₀` without cancellation.
pub fn pi0_excess(params: &MgParams, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0 - params.pi0();
    }
    params.pi0() * (params.theta * log_partial_sums(params.k, t).1).exp_m1()
}

fn quad() -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        max_depth: 60,
    }
}

/// `L(z) = 1 + ∫₀^∞ e^{-zt} π₀'(t) dt` for `z > −1`.
pub fn l_function(params: &MgParams, z: f64) -> Result<f64> {
    if !(z > -1.0) {
        return domain(format!("L(z) needs z > -1, got {z}"));
    }
    // |π₀'(t)| ≤ θ P[σ > t] ≤ θk e^{-t}.
    let tail = TailBound {
        constant: params.theta * params.k as f64,
        rate: 1.0 + z,
    };
    let (v, _) = integrate_with_error(
        |t| (-z * t).exp() * pi0_derivative(params, t),
        0.0,
        Upper::Infinite(tail),
        &quad(),
    )?;
    Ok(1.0 + v)
}

/// `E[e^{-zD₀}] = 1 + z/θ − z/(θ L(z))`.
pub fn takacs_duration_lt(params: &MgParams, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return domain("transform argument must be positive");
    }
    let theta = params.theta;
    Ok(1.0 + z / theta - z / (theta * l_function(params, z)?))
}

/// `E[D₀] = (e^ρ − 1)/θ`.
pub fn busy_mean(params: &MgParams) -> f64 {
    params.rho().exp_m1() / params.theta
}

/// `E[D₀²] = 2/(θπ₀²) ∫₀^∞ (π₀(t) − π₀) dt`.
pub fn busy_second_moment(params: &MgParams) -> Result<f64> {
    // π₀(t) − π₀ ≤ π₀(t) ρ P[σ* > t] ≤ θk e^{-t}.
    let tail = TailBound {
        constant: params.theta * params.k as f64,
        rate: 1.0,
    };
    let (v, _) = integrate_with_error(|t| pi0_excess(params, t), 0.0, Upper::Infinite(tail), &quad())?;
    let p0 = params.pi0();
    Ok(2.0 / (params.theta * p0 * p0) * v)
}

/// Decay rate `β ∈ (0, 1)` solving `L(−β) = 0` and the prefactors `α`, `α*`.
pub fn tail_asymptotics(params: &MgParams) -> Result<TailAsymptotics> {
    let f = |b: f64| l_function(params, -b);
    let mut lo = 0.0;
    let mut f_lo = params.pi0();
    let mut beta = None;
    let steps = (1.0 / BETA_SCAN_STEP).round() as usize;
    for i in 1..steps {
        let hi = i as f64 * BETA_SCAN_STEP;
        let f_hi = f(hi)?;
        if f_hi == 0.0 {
            beta = Some(hi);
            break;
        }
        if f_hi.signum() != f_lo.signum() {
            beta = Some(find_root(
                |b| f(b).unwrap_or(f64::NAN),
                &RootSpec::new(lo, hi, BETA_ROOT_TOL)?,
            )?);
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    let beta = beta.ok_or_else(|| Error::Numeric("L(-beta) has no sign change on (0, 1)".into()))?;

    let theta = params.theta;
    let k = params.k as f64;
    let decay = 1.0 - beta;
    // t e^{βt} |π₀'(t)| ≤ θk t e^{-(1-β)t} ≤ θk (2/((1-β)e)) e^{-(1-β)t/2}
    let tail_t = TailBound {
        constant: theta * k * 2.0 / (decay * std::f64::consts::E),
        rate: decay / 2.0,
    };
    let tail_1 = TailBound {
        constant: theta * k,
        rate: decay,
    };
    let (moment, _) = integrate_with_error(
        |t| (beta * t).exp() * t * pi0_derivative(params, t),
        0.0,
        Upper::Infinite(tail_t),
        &quad(),
    )?;
    let alpha = -1.0 / (theta * moment);

    // Renewal-equation form with the summand density u = −π₀'/(1 − π₀).
    let p0 = params.pi0();
    let (m0, _) = integrate_with_error(
        |t| -(beta * t).exp() * pi0_derivative(params, t),
        0.0,
        Upper::Infinite(tail_1),
        &quad(),
    )?;
    let u0 = m0 / (1.0 - p0);
    let u1 = -moment / (1.0 - p0);
    let alpha_star = p0 * u0 / ((1.0 - p0) * u1);
    Ok(TailAsymptotics {
        beta,
        alpha,
        alpha_star,
    })
}

/// `α θ/(e^ρ − 1)`: the integrated-tail prefactor implied by `α`.
pub fn alpha_star_from_alpha(params: &MgParams, alpha: f64) -> f64 {
    alpha * params.theta / params.rho().exp_m1()
}

/// Transform of the integrated-tail variable `D₀*`:
/// `(e^ρ − 1)^{-1} (1/L(z) − 1)`.
pub fn dstar_lt(params: &MgParams, z: f64) -> Result<f64> {
    if !(z > 0.0) {
        return domain("transform argument must be positive");
    }
    Ok((1.0 / l_function(params, z)? - 1.0) / params.rho().exp_m1())
}

/// The same transform through `(1 − E[e^{-zD₀}])/(z E[D₀])`.
pub fn dstar_lt_from_duration(params: &MgParams, z: f64) -> Result<f64> {
    Ok((1.0 - takacs_duration_lt(params, z)?) / (z * busy_mean(params)))
}

/// Sampler for `D₀*` as a geometric number of i.i.d. summands with density
/// `−π₀'(t)/(1 − π₀)`.
#[derive(Debug, Clone)]
pub struct DstarSampler {
    params: MgParams,
    pi0: f64,
    /// `θ Σ y^i/i` on a uniform grid of `y`, for bracketing the inversion.
    grid: Vec<f64>,
}

const GRID_SIZE: usize = 1024;

impl DstarSampler {
    pub fn new(params: MgParams) -> Self {
        let grid = (0..=GRID_SIZE)
            .map(|j| Self::g(&params, j as f64 / GRID_SIZE as f64))
            .collect();
        Self {
            params,
            pi0: params.pi0(),
            grid,
        }
    }

    fn g(params: &MgParams, y: f64) -> f64 {
        let mut s = 0.0;
        let mut p = 1.0;
        for i in 1..=params.k {
            p *= y;
            s += p / i as f64;
        }
        params.theta * s
    }

    /// One summand by inversion: its CDF is `(1 − π₀(t))/(1 − π₀)`, so solve
    /// `θ Σ y^i/i = −ln(1 − v(1 − π₀))` for `y = 1 − e^{-t}`.
    pub fn sample_summand<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v: f64 = rng.random();
        let target = -(-v * (1.0 - self.pi0)).ln_1p();
        let j = self.grid.partition_point(|&g| g <= target).clamp(1, GRID_SIZE);
        let (mut lo, mut hi) = ((j - 1) as f64 / GRID_SIZE as f64, j as f64 / GRID_SIZE as f64);
        let mut y = 0.5 * (lo + hi);
        for _ in 0..100 {
            let gy = Self::g(&self.params, y) - target;
            if gy > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let dg = self.params.theta * (0..self.params.k).map(|i| y.powi(i as i32)).sum::<f64>();
            let next = y - gy / dg;
            y = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 || gy.abs() < 1e-15 * target.max(1e-300) {
                break;
            }
        }
        -(-y).ln_1p()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut total = self.sample_summand(rng);
        // Q ≥ 1 with P[Q > j] = (1 − π₀)^j.
        while rng.random::<f64>() >= self.pi0 {
            total += self.sample_summand(rng);
        }
        total
    }
}

/// `D₀*` by its geometric-sum representation.
pub fn sample_dstar_geometric<R: Rng + ?Sized>(params: &MgParams, rng: &mut R) -> f64 {
    DstarSampler::new(*params).sample(rng)
}

/// One stay in the system: the largest of `k` unit exponentials, drawn by
/// inverting `(1 − e^{-t})^k`.
pub fn sample_service<R: Rng + ?Sized>(k: u32, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    -(-(u.ln() / k as f64).exp_m1()).ln()
}

/// Busy period started by one arrival into an empty system. The second
/// value is the initiating task's own stay.
pub fn simulate_busy_period_detailed<R: Rng + ?Sized>(
    params: &MgParams,
    event_cap: u64,
    rng: &mut R,
) -> Result<(QueueExcursion, f64)> {
    let arrivals_clock = Exp::new(params.theta).expect("positive rate");
    let first = sample_service(params.k, rng);
    let mut departures = BinaryHeap::new();
    departures.push(Reverse(OrdF64(first)));
    let (mut now, mut n, mut area, mut arrivals, mut top) = (0.0, 1u64, 0.0, 0u64, 1u64);
    let mut next_arrival = arrivals_clock.sample(rng);
    let mut events = 0u64;
    while n > 0 {
        events += 1;
        if events > event_cap {
            return Err(Error::Runtime(format!("busy period exceeded {event_cap} events")));
        }
        let Reverse(OrdF64(next_departure)) = *departures.peek().expect("nonempty");
        if next_arrival < next_departure {
            area += n as f64 * (next_arrival - now);
            now = next_arrival;
            departures.push(Reverse(OrdF64(now + sample_service(params.k, rng))));
            n += 1;
            arrivals += 1;
            top = top.max(n);
            next_arrival = now + arrivals_clock.sample(rng);
        } else {
            area += n as f64 * (next_departure - now);
            now = next_departure;
            departures.pop();
            n -= 1;
        }
    }
    Ok((
        QueueExcursion {
            duration: now,
            height: top,
            area,
            arrivals,
        },
        first,
    ))
}

pub fn simulate_busy_period<R: Rng + ?Sized>(params: &MgParams, rng: &mut R) -> Result<QueueExcursion> {
    simulate_busy_period_detailed(params, DEFAULT_EVENT_CAP, rng).map(|(e, _)| e)
}

/// Number in system at time `t` from an empty start.
pub fn mg_occupancy_at<R: Rng + ?Sized>(params: &MgParams, t: f64, rng: &mut R) -> u64 {
    let clock = Exp::new(params.theta).expect("positive rate");
    let mut s = clock.sample(rng);
    let mut alive = 0;
    while s < t {
        if s + sample_service(params.k, rng) > t {
            alive += 1;
        }
        s += clock.sample(rng);
    }
    alive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::stream;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn mg(theta: f64, k: u32) -> MgParams {
        MgParams::new(theta, k).unwrap()
    }

    /// `∫₀ᵗ 1 − (1 − e^{-x})^k dx` by the binomial expansion.
    fn residual_binomial(k: u32, t: f64) -> f64 {
        let mut s = 0.0;
        let mut binom = 1.0;
        for j in 1..=k {
            binom *= (k - j + 1) as f64 / j as f64;
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * binom * (-(-(j as f64) * t).exp_m1()) / j as f64;
        }
        s / harmonic_unchecked(k as u64)
    }

    #[test]
    fn service_law() {
        assert_eq!(service_cdf(3, 0.0), 0.0);
        assert_relative_eq!(service_cdf(1, 2f64.ln()), 0.5, max_relative = 1e-15);
        for k in 1..5 {
            let r = service_survival(k, 20.0) / (k as f64 * (-20.0f64).exp());
            assert!((r - 1.0).abs() < 1e-6);
            for t in [0.1, 1.0, 4.0] {
                assert!((service_cdf(k, t) + service_survival(k, t) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn residual_law() {
        assert_eq!(residual_cdf(2, 0.0), 0.0);
        assert!((residual_cdf(3, 60.0) - 1.0).abs() < 1e-15);
        for t in [0.2, 1.0, 3.0] {
            assert_relative_eq!(residual_cdf(1, t), 1.0 - (-t).exp(), max_relative = 1e-14);
            for k in 1..6 {
                assert_relative_eq!(residual_cdf(k, t), residual_binomial(k, t), max_relative = 1e-12);
                assert!((residual_cdf(k, t) + residual_survival(k, t) - 1.0).abs() < 1e-14);
            }
        }
        // Density at 0 is 1/h_k.
        let h = 1e-7;
        for k in 1..5 {
            let d = residual_cdf(k, h) / h;
            assert!((d * harmonic_unchecked(k as u64) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn empty_probability() {
        let p = mg(1.0, 1);
        assert_eq!(pi0_of_t(&p, 0.0), 1.0);
        assert_relative_eq!(pi0_of_t(&p, 50.0), (-1.0f64).exp(), max_relative = 1e-14);
        for k in 1..4 {
            let p = mg(1.0, k);
            let t = 25.0;
            let r = pi0_excess(&p, t) / (k as f64 * p.pi0() * (-t).exp());
            assert!((r - 1.0).abs() < 1e-4, "{r}");
            // Analytic derivative against a central difference.
            let h = 1e-5;
            let fd = (pi0_of_t(&p, 1.0 + h) - pi0_of_t(&p, 1.0 - h)) / (2.0 * h);
            assert!((fd - pi0_derivative(&p, 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn l_values() {
        for k in 1..4 {
            let p = mg(1.0, k);
            assert!((l_function(&p, 0.0).unwrap() - p.pi0()).abs() < 1e-12);
            assert!((l_function(&p, 1e4).unwrap() - (1.0 - 1e-4)).abs() < 1e-7);
            let grid: Vec<f64> = (0..20)
                .map(|i| l_function(&p, -0.95 + 0.05 * i as f64).unwrap())
                .collect();
            assert!(grid.windows(2).all(|w| w[1] > w[0]));
        }
        assert!(l_function(&mg(1.0, 2), -1.0).is_err());
    }

    #[test]
    fn moments() {
        assert_relative_eq!(busy_mean(&mg(1.0, 1)), E - 1.0, max_relative = 1e-15);
        assert_relative_eq!(busy_mean(&mg(1.0, 2)), 1.5f64.exp() - 1.0, max_relative = 1e-15);
        let v1 = busy_second_moment(&mg(1.0, 1)).unwrap() - (E - 1.0).powi(2);
        assert_relative_eq!(v1, 4.212_366_497_959, max_relative = 1e-10);
        let m2 = busy_mean(&mg(1.0, 2));
        let v2 = busy_second_moment(&mg(1.0, 2)).unwrap() - m2 * m2;
        assert_relative_eq!(v2, 12.792_068_692_552, max_relative = 1e-10);
    }

    #[test]
    fn takacs_transform() {
        let p = mg(1.0, 2);
        let h = 1e-6;
        let slope = (takacs_duration_lt(&p, h).unwrap() - 1.0) / h;
        assert!((-slope / busy_mean(&p) - 1.0).abs() < 1e-4);
        let vals: Vec<f64> = [0.1, 0.5, 1.0, 3.0]
            .iter()
            .map(|&z| takacs_duration_lt(&p, z).unwrap())
            .collect();
        assert!(vals.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn tail_constants() {
        let a = tail_asymptotics(&mg(1.0, 2)).unwrap();
        assert!((a.beta - 0.273_467_573_497).abs() < 1e-9, "{a:?}");
        assert!(a.alpha > 0.0);
        assert_relative_eq!(
            a.alpha_star,
            alpha_star_from_alpha(&mg(1.0, 2), a.alpha),
            max_relative = 1e-8
        );
        let a1 = tail_asymptotics(&mg(1.0, 1)).unwrap();
        assert!((a1.beta - 0.450_265_027_496).abs() < 1e-9, "{a1:?}");
    }

    #[test]
    fn dstar_routes() {
        for (k, z) in [(1, 1.0), (2, 0.5), (3, 2.0)] {
            let p = mg(1.0, k);
            let a = dstar_lt(&p, z).unwrap();
            let b = dstar_lt_from_duration(&p, z).unwrap();
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn summand_inversion_matches_cdf() {
        let p = mg(1.3, 3);
        let s = DstarSampler::new(p);
        let mut rng = stream(9, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| s.sample_summand(&mut rng)).collect();
        let cdf = |t: f64| (1.0 - pi0_of_t(&p, t)) / (1.0 - p.pi0());
        assert!(crate::mc::ks_gof(&xs, cdf).unwrap().pass);
    }

    #[test]
    fn busy_period_sanity() {
        let mut rng = stream(10, 0);
        let p = mg(1.0, 3);
        for _ in 0..2000 {
            let (e, first) = simulate_busy_period_detailed(&p, DEFAULT_EVENT_CAP, &mut rng).unwrap();
            assert!(e.duration >= first);
            assert!(e.area >= e.duration - 1e-12);
        }
    }
}
