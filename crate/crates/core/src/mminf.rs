//! The M/M/∞ queue: Poisson(θ) arrivals, each task served at rate μ by its
//! own server. Excursions above a level `c` start at `c+1` and end at the
//! first return to `c`; their duration `D_c`, height, area and number of
//! arrivals `Δ_c` are described here exactly and by simulation.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::specials::{
    find_root, integrate_with_error, kummer_m, ln_factorial, poisson_pmf_unchecked, poisson_tail_ratio, QuadratureSpec,
    RootSpec, Upper, DEFAULT_ROOT_TOL,
};
use statrs::function::gamma::ln_gamma;

/// Default cap on jumps in one simulated excursion.
pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

/// Step of the sign scan that brackets the leading root.
const ROOT_SCAN_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueParams {
    theta: f64,
    mu: f64,
}

impl QueueParams {
    pub fn new(theta: f64, mu: f64) -> Result<Self> {
        if !(theta > 0.0 && mu > 0.0) || !theta.is_finite() || !mu.is_finite() {
            return domain(format!("theta and mu must be positive, got {theta}, {mu}"));
        }
        Ok(Self { theta, mu })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Load `θ/μ`.
    pub fn rho(&self) -> f64 {
        self.theta / self.mu
    }
}

/// Statistics of one excursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueExcursion {
    pub duration: f64,
    /// Highest level reached, counted from the base level.
    pub height: u64,
    /// Time integral of the excess over the base level.
    pub area: f64,
    /// Arrivals after the one that started the excursion.
    pub arrivals: u64,
}

/// Time scale in the transient mean `ρ(1 − e^{-rate·t})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientConvention {
    /// `e^{-μt}`: each task leaves at rate μ. This is the law of the queue.
    #[default]
    ServiceRate,
    /// `e^{-t/μ}`, a variant that agrees with the above only at μ = 1.
    AsPrinted,
}

/// Argument of the `I_c` integrals in the duration transform at `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LtConvention {
    /// `α = z/μ`; matches the mean duration.
    #[default]
    ZOverMu,
    /// `α = μz`; agrees with the above only at μ = 1.
    MuZ,
}

/// `P[X(t) = c]` from an empty start: Poisson with mean `ρ(1 − e^{-μt})`.
pub fn transient_pmf(params: &QueueParams, t: f64, c: u64, convention: TransientConvention) -> Result<f64> {
    if !(t >= 0.0) {
        return domain("t must be nonnegative");
    }
    let scale = match convention {
        TransientConvention::ServiceRate => params.mu * t,
        TransientConvention::AsPrinted => t / params.mu,
    };
    let mean = params.rho() * -(-scale).exp_m1();
    if mean == 0.0 {
        return Ok(if c == 0 { 1.0 } else { 0.0 });
    }
    Ok(poisson_pmf_unchecked(mean, c))
}

/// `E[D_c] = Σ_{j>c} π_j / (θπ_c)` with `π` the Poisson(ρ) law.
pub fn mean_duration(params: &QueueParams, c: u64) -> f64 {
    poisson_tail_ratio(params.rho(), c, 0) / params.theta
}

/// `E[A_c] = Σ_{j>c} (j−c)π_j / (θπ_c)`.
pub fn mean_area(params: &QueueParams, c: u64) -> f64 {
    poisson_tail_ratio(params.rho(), c, 1) / params.theta
}

/// `E[Δ_c] = Σ_{j>c} π_j / π_c`, which is `θ E[D_c]`.
pub fn mean_arrivals(params: &QueueParams, c: u64) -> f64 {
    poisson_tail_ratio(params.rho(), c, 0)
}

/// `I_c(α, β) = ∫₀¹ u^c (1−u)^{α−1} e^{−βu} du`.
///
/// Computed by quadrature and through
/// `e^{−β} B(c+1, α) M(α, α+c+1, β)`; the two must agree to `1e-8`
/// relative or a numeric error is raised. The quadrature value is returned.
pub fn i_integral(c: u64, alpha: f64, beta: f64) -> Result<f64> {
    let (quad, kummer) = i_integral_both(c, alpha, beta)?;
    if (quad - kummer).abs() > 1e-8 * kummer.abs() {
        return Err(Error::Numeric(format!(
            "I_{c}({alpha}, {beta}): quadrature {quad:e} and Kummer form {kummer:e} disagree"
        )));
    }
    Ok(quad)
}

/// Both evaluations of [`i_integral`], unchecked: `(quadrature, kummer)`.
pub fn i_integral_both(c: u64, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return domain(format!("I integral needs alpha > 0, got {alpha}"));
    }
    let cf = c as f64;
    let ln_beta_fn = ln_factorial(c) + ln_gamma(alpha) - ln_gamma(cf + alpha + 1.0);
    let kummer = (-beta + ln_beta_fn).exp() * kummer_m(alpha, alpha + cf + 1.0, beta)?;
    // With v = 1 − u the weight is v^{α−1}; for α < 1 its singular part is
    // integrated in closed form.
    let g = |v: f64| (1.0 - v).powi(c as i32) * (-beta * (1.0 - v)).exp();
    let g0 = (-beta).exp();
    let spec = QuadratureSpec {
        abs_tol: (1e-13 * kummer.abs()).max(1e-300),
        rel_tol: 1e-12,
        max_depth: 60,
    };
    let quad = if alpha < 1.0 {
        let (v, _) = integrate_with_error(
            |v: f64| {
                if v == 0.0 {
                    0.0
                } else {
                    v.powf(alpha - 1.0) * (g(v) - g0)
                }
            },
            0.0,
            Upper::Finite(1.0),
            &spec,
        )?;
        v + g0 / alpha
    } else {
        integrate_with_error(|v: f64| v.powf(alpha - 1.0) * g(v), 0.0, Upper::Finite(1.0), &spec)?.0
    };
    Ok((quad, kummer))
}

/// `E[e^{−zD_c}] = I_{c+1}(α, ρ)/I_c(α, ρ)` with `α = z/μ`.
pub fn duration_lt(params: &QueueParams, c: u64, z: f64) -> Result<f64> {
    duration_lt_with(params, c, z, LtConvention::ZOverMu)
}

pub fn duration_lt_with(params: &QueueParams, c: u64, z: f64, convention: LtConvention) -> Result<f64> {
    if !(z >= 0.0) {
        return domain("transform argument must be nonnegative");
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let alpha = match convention {
        LtConvention::ZOverMu => z / params.mu,
        LtConvention::MuZ => params.mu * z,
    };
    let rho = params.rho();
    Ok(i_integral(c + 1, alpha, rho)? / i_integral(c, alpha, rho)?)
}

/// Joint transform `E[e^{−xD_c − yΔ_c − zB_c}]` where `B_c = A_c + cD_c` is
/// the area under the whole queue length, not just the excess over `c`:
/// `μ/(z+μ) · I_{c+1}(a−b, b)/I_c(a−b, b)` with `a = (x+θ)/(z+μ)` and
/// `b = θμe^{−y}/(z+μ)²`. Equals 1 at the origin, where `a = b`.
pub fn joint_lt(params: &QueueParams, c: u64, x: f64, y: f64, z: f64) -> Result<f64> {
    if !(x >= 0.0 && y >= 0.0 && z >= 0.0) {
        return domain("transform arguments must be nonnegative");
    }
    let (theta, mu) = (params.theta, params.mu);
    let a = (x + theta) / (z + mu);
    let b = theta * mu * (-y).exp() / ((z + mu) * (z + mu));
    // a − b computed without cancellation.
    let diff = (x * (z + mu) + theta * z - theta * mu * (-y).exp_m1()) / ((z + mu) * (z + mu));
    debug_assert!((diff - (a - b)).abs() <= 1e-12 * a.abs().max(1.0));
    if diff < 0.0 {
        return domain("outside the transform's region (a < b)");
    }
    if diff == 0.0 {
        return Ok(1.0);
    }
    Ok(mu / (z + mu) * i_integral(c + 1, diff, b)? / i_integral(c, diff, b)?)
}

/// `Σ_{j≥1} π_j/j^power` for Poisson(ρ).
fn poisson_inverse_moment(rho: f64, power: i32) -> f64 {
    let mut sum = 0.0;
    let mut j = 1u64;
    loop {
        let term = poisson_pmf_unchecked(rho, j) / (j as f64).powi(power);
        sum += term;
        if j as f64 > rho + 1.0 && term <= 1e-18 * sum {
            return sum;
        }
        j += 1;
    }
}

/// `E[D₀²] = 2e^{2ρ}/(θμ) Σ_{j≥1} π_j/j`, checked against the integral form
/// `2e^ρ/(θμ) ∫₀^ρ (e^s − 1)/s ds` to `1e-9` relative.
pub fn duration_second_moment(params: &QueueParams) -> Result<f64> {
    let (series, integral) = duration_second_moment_both(params)?;
    if (series - integral).abs() > 1e-9 * series {
        return Err(Error::Numeric(format!(
            "second moment: series {series:e} and integral {integral:e} disagree"
        )));
    }
    Ok(series)
}

/// Both evaluations of [`duration_second_moment`]: `(series, integral)`.
pub fn duration_second_moment_both(params: &QueueParams) -> Result<(f64, f64)> {
    let (theta, mu, rho) = (params.theta, params.mu, params.rho());
    let series = 2.0 * (2.0 * rho).exp() / (theta * mu) * poisson_inverse_moment(rho, 1);
    let (ein, _) = integrate_with_error(
        |s: f64| if s == 0.0 { 1.0 } else { s.exp_m1() / s },
        0.0,
        Upper::Finite(rho),
        &QuadratureSpec::precise(),
    )?;
    let integral = 2.0 * rho.exp() / (theta * mu) * ein;
    Ok((series, integral))
}

/// `E[D₀³] = 6e^ρ/(θμ²) [e^{2ρ}(Σ π_j/j)² + e^ρ Σ π_j/j²]`.
pub fn duration_third_moment(params: &QueueParams) -> f64 {
    let (theta, mu, rho) = (params.theta, params.mu, params.rho());
    let s1 = poisson_inverse_moment(rho, 1);
    let s2 = poisson_inverse_moment(rho, 2);
    6.0 * rho.exp() / (theta * mu * mu) * ((2.0 * rho).exp() * s1 * s1 + rho.exp() * s2)
}

/// Smallest positive root of `z ↦ M(−z, c+1−z, ρ)`. The tail of `D_c`
/// decays like `e^{−μ z₁ t}`.
pub fn leading_root(params: &QueueParams, c: u64) -> Result<f64> {
    let rho = params.rho();
    let f = |z: f64| kummer_m(-z, c as f64 + 1.0 - z, rho);
    let pole = c as f64 + 1.0;
    let mut lo = 0.0;
    let mut f_lo = f(lo)?;
    let mut i = 1;
    loop {
        let hi = ROOT_SCAN_STEP * i as f64;
        if hi >= pole - 1e-9 {
            return Err(Error::Numeric(format!(
                "no sign change of M(-z, {pole}-z, {rho}) on (0, {pole})"
            )));
        }
        let f_hi = f(hi)?;
        if f_hi == 0.0 {
            return Ok(hi);
        }
        if f_lo.signum() != f_hi.signum() {
            return find_root(|z| f(z).unwrap_or(f64::NAN), &RootSpec::new(lo, hi, DEFAULT_ROOT_TOL)?);
        }
        lo = hi;
        f_lo = f_hi;
        i += 1;
    }
}

/// `Σ_{j=0}^c E[D_j]`: mean time for the queue to climb from 0 to `c+1`.
pub fn first_passage_mean_sum(params: &QueueParams, c: u64) -> f64 {
    (0..=c).map(|j| mean_duration(params, j)).sum()
}

/// The queue length process, one jump at a time.
#[derive(Debug, Clone)]
pub struct MmInfProcess {
    params: QueueParams,
    state: u64,
    time: f64,
}

impl MmInfProcess {
    pub fn new(params: QueueParams, start: u64) -> Self {
        Self {
            params,
            state: start,
            time: 0.0,
        }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances one jump; returns the holding time and whether it was an
    /// arrival.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (f64, bool) {
        let up = self.params.theta;
        let total = up + self.params.mu * self.state as f64;
        let dt = Exp::new(total).expect("positive rate").sample(rng);
        let arrival = rng.random::<f64>() * total < up;
        self.time += dt;
        if arrival {
            self.state += 1;
        } else {
            self.state -= 1;
        }
        (dt, arrival)
    }
}

/// Simulates one excursion above `c` with the default step cap.
pub fn simulate_queue_excursion<R: Rng + ?Sized>(params: &QueueParams, c: u64, rng: &mut R) -> Result<QueueExcursion> {
    simulate_queue_excursion_capped(params, c, DEFAULT_STEP_CAP, rng)
}

pub fn simulate_queue_excursion_capped<R: Rng + ?Sized>(
    params: &QueueParams,
    c: u64,
    step_cap: u64,
    rng: &mut R,
) -> Result<QueueExcursion> {
    let mut q = MmInfProcess::new(*params, c + 1);
    let (mut area, mut arrivals, mut top, mut steps) = (0.0, 0u64, c + 1, 0u64);
    while q.state() > c {
        if steps >= step_cap {
            return Err(Error::Runtime(format!("excursion exceeded {step_cap} jumps")));
        }
        let excess = (q.state() - c) as f64;
        let (dt, arrival) = q.step(rng);
        area += excess * dt;
        steps += 1;
        if arrival {
            arrivals += 1;
            top = top.max(q.state());
        }
    }
    Ok(QueueExcursion {
        duration: q.time(),
        height: top - c,
        area,
        arrivals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::stream;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    fn q(theta: f64, mu: f64) -> QueueParams {
        QueueParams::new(theta, mu).unwrap()
    }

    #[test]
    fn transient_values() {
        let p = q(1.0, 1.0);
        for conv in [TransientConvention::ServiceRate, TransientConvention::AsPrinted] {
            assert_eq!(transient_pmf(&p, 0.0, 0, conv).unwrap(), 1.0);
            assert_eq!(transient_pmf(&p, 0.0, 2, conv).unwrap(), 0.0);
            assert_relative_eq!(
                transient_pmf(&p, 1.0, 0, conv).unwrap(),
                (-(1.0 - (-1.0f64).exp())).exp(),
                max_relative = 1e-14
            );
        }
        let p = q(3.0, 2.0);
        assert_relative_eq!(
            transient_pmf(&p, 1e3, 2, TransientConvention::ServiceRate).unwrap(),
            poisson_pmf_unchecked(1.5, 2),
            max_relative = 1e-14
        );
        let s: f64 = (0..100)
            .map(|c| transient_pmf(&p, 0.7, c, TransientConvention::ServiceRate).unwrap())
            .sum();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn means() {
        let p = q(1.0, 1.0);
        assert_relative_eq!(mean_duration(&p, 0), E - 1.0, max_relative = 1e-14);
        assert_relative_eq!(mean_area(&p, 0), E, max_relative = 1e-13);
        assert_relative_eq!(mean_arrivals(&p, 0), E - 1.0, max_relative = 1e-14);
        let p = q(2.0, 3.0);
        for c in 0..20 {
            assert!((mean_arrivals(&p, c) - p.theta() * mean_duration(&p, c)).abs() < 1e-12);
        }
        assert_relative_eq!(
            mean_duration(&p, 0),
            ((2.0f64 / 3.0).exp() - 1.0) / 2.0,
            max_relative = 1e-13
        );
        let ratio = mean_duration(&q(1.0, 1.0), 80) * 81.0;
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn i_integral_values() {
        assert_relative_eq!(i_integral(0, 1.0, 0.0).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(
            i_integral(0, 1.0, 1.0).unwrap(),
            1.0 - (-1.0f64).exp(),
            max_relative = 1e-12
        );
        // Beta(c+1, α) at β = 0.
        for (c, a) in [(2u64, 0.5), (3, 2.5), (0, 0.1)] {
            let b = (ln_factorial(c) + ln_gamma(a) - ln_gamma(c as f64 + a + 1.0)).exp();
            assert_relative_eq!(i_integral(c, a, 0.0).unwrap(), b, max_relative = 1e-10);
        }
        assert!(i_integral(0, 0.0, 1.0).is_err());
        assert!(i_integral(0, -1.0, 1.0).is_err());
    }

    #[test]
    fn transform_at_zero_and_slope() {
        let p = q(2.0, 3.0);
        for c in 0..=3 {
            assert_eq!(duration_lt(&p, c, 0.0).unwrap(), 1.0);
            let h = 1e-6;
            let slope = (duration_lt(&p, c, h).unwrap() - 1.0) / h;
            let m = mean_duration(&p, c);
            assert!(((-slope) / m - 1.0).abs() < 1e-4, "c={c} slope={slope} mean={m}");
        }
    }

    #[test]
    fn other_convention_misses_the_mean() {
        let p = q(2.0, 3.0);
        let h = 1e-6;
        let slope = (duration_lt_with(&p, 0, h, LtConvention::MuZ).unwrap() - 1.0) / h;
        assert!(((-slope) / mean_duration(&p, 0) - 1.0).abs() > 0.5);
    }

    #[test]
    fn joint_transform_reductions() {
        let p = q(1.0, 1.0);
        assert_eq!(joint_lt(&p, 0, 0.0, 0.0, 0.0).unwrap(), 1.0);
        for x in [0.3, 1.0, 2.0] {
            let j = joint_lt(&p, 0, x, 0.0, 0.0).unwrap();
            assert!((j - duration_lt(&p, 0, x).unwrap()).abs() < 1e-8);
        }
        let h = 1e-6;
        let dy = (joint_lt(&p, 0, 0.0, h, 0.0).unwrap() - 1.0) / h;
        assert!((-dy / mean_arrivals(&p, 0) - 1.0).abs() < 1e-4);
        assert!(joint_lt(&p, 0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn moments() {
        let p = q(1.0, 1.0);
        let (s, i) = duration_second_moment_both(&p).unwrap();
        assert!((s - i).abs() < 1e-9 * s);
        let var = duration_second_moment(&p).unwrap() - (E - 1.0).powi(2);
        assert_relative_eq!(var, 4.212_366_497_959, max_relative = 1e-11);
        let m3 = duration_third_moment(&p);
        assert_relative_eq!(m3, 47.026_794_606_76, max_relative = 1e-10);
        let m2 = duration_second_moment(&p).unwrap();
        assert!(m3.cbrt() >= m2.sqrt() && m2.sqrt() >= E - 1.0);
    }

    #[test]
    fn root() {
        let z = leading_root(&q(1.0, 1.0), 0).unwrap();
        assert!((z - 0.450_265_027_496).abs() < 1e-9, "{z}");
        for c in 0..4 {
            let z = leading_root(&q(1.5, 1.0), c).unwrap();
            assert!(z > 0.0 && z < c as f64 + 1.0);
        }
    }

    #[test]
    fn passage_sum() {
        let p = q(1.0, 1.0);
        assert_eq!(first_passage_mean_sum(&p, 0), mean_duration(&p, 0));
        let s: Vec<f64> = (0..20).map(|c| first_passage_mean_sum(&p, c)).collect();
        assert!(s.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn excursion_sanity() {
        let mut rng = stream(6, 0);
        let p = q(1.0, 2.0);
        for c in 0..3 {
            for _ in 0..1000 {
                let e = simulate_queue_excursion(&p, c, &mut rng).unwrap();
                assert!(e.duration > 0.0 && e.area >= 0.0 && e.height >= 1);
                if e.arrivals == 0 {
                    assert_eq!(e.height, 1);
                    assert!((e.area - e.duration).abs() < 1e-12);
                }
            }
        }
        assert!(matches!(
            simulate_queue_excursion_capped(&q(100.0, 1.0), 0, 2, &mut rng),
            Err(Error::Runtime(_))
        ));
    }
}
