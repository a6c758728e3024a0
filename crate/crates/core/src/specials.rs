//! Special functions and the shared numerical kernels used by every analytic
//! routine in the crate: Poisson probabilities, harmonic numbers, Kummer's
//! confluent hypergeometric function `M(a, b, z)`, the exponential integral
//! `E1`, adaptive Gauss–Kronrod quadrature and bracketed root finding.
//!
//! Everything here is a pure function of its arguments.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

pub const DEFAULT_ABS_TOL: f64 = 1e-10;
pub const DEFAULT_REL_TOL: f64 = 1e-8;
pub const DEFAULT_ROOT_TOL: f64 = 1e-10;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Kummer series stops once this many consecutive terms are negligible.
const KUMMER_QUIET_TERMS: usize = 3;
const KUMMER_REL_TOL: f64 = 1e-16;
const KUMMER_MAX_TERMS: usize = 10_000;

/// Factorials up to 20! are exact in `u64`; beyond that everything is done in
/// log space.
const EXACT_FACTORIAL_MAX: u64 = 20;

fn exact_factorial(n: u64) -> f64 {
    debug_assert!(n <= EXACT_FACTORIAL_MAX);
    (1..=n).product::<u64>() as f64
}

/// `ln n!`.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= EXACT_FACTORIAL_MAX {
        exact_factorial(n).ln()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `ln (x)_n = ln Γ(x + n) − ln Γ(x)` for `x > 0`.
pub fn ln_rising(x: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if n <= 32 {
        return (0..n).map(|i| (x + i as f64).ln()).sum();
    }
    ln_gamma_ratio(x, n as f64, 0.0)
}

/// `ln Γ(x + a) − ln Γ(x + b)`, accurate even when `x` is so large that the
/// two log-gammas agree in most of their digits.
pub fn ln_gamma_ratio(x: f64, a: f64, b: f64) -> f64 {
    if x < 1e5 {
        return ln_gamma(x + a) - ln_gamma(x + b);
    }
    // Difference of the Stirling series; the Bernoulli-polynomial terms
    // B_{n+1}(a) - B_{n+1}(b) enter with alternating signs.
    let b2 = |s: f64| s * s - s + 1.0 / 6.0;
    let b3 = |s: f64| s * s * s - 1.5 * s * s + 0.5 * s;
    let b4 = |s: f64| s.powi(4) - 2.0 * s.powi(3) + s * s - 1.0 / 30.0;
    (a - b) * x.ln() + (b2(a) - b2(b)) / (2.0 * x) - (b3(a) - b3(b)) / (6.0 * x * x)
        + (b4(a) - b4(b)) / (12.0 * x * x * x)
}

/// Poisson(`rho`) probability of `c`.
pub fn poisson_pmf(rho: f64, c: u64) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return domain(format!("Poisson mean must be positive and finite, got {rho}"));
    }
    Ok(poisson_pmf_unchecked(rho, c))
}

pub(crate) fn poisson_pmf_unchecked(rho: f64, c: u64) -> f64 {
    if c <= EXACT_FACTORIAL_MAX {
        (-rho).exp() * rho.powi(c as i32) / exact_factorial(c)
    } else {
        ln_poisson_pmf(rho, c).exp()
    }
}

pub(crate) fn ln_poisson_pmf(rho: f64, c: u64) -> f64 {
    -rho + c as f64 * rho.ln() - ln_factorial(c)
}

/// `h_k = 1 + 1/2 + ... + 1/k`.
pub fn harmonic(k: u64) -> Result<f64> {
    if k == 0 {
        return domain("harmonic number needs k >= 1");
    }
    Ok(harmonic_unchecked(k))
}

pub(crate) fn harmonic_unchecked(k: u64) -> f64 {
    // Summed from the small end.
    (1..=k).rev().map(|i| 1.0 / i as f64).sum()
}

/// `Σ_{m≥1} m^power · ρ^m c!/(c+m)!`, i.e. `Σ_{j>c} (j-c)^power π_j / π_c`
/// for Poisson(`rho`) probabilities `π_j`. Only `power ∈ {0, 1}` is needed.
///
/// The terms decay factorially; summation stops once a geometric bound on
/// the remainder drops below `1e-17` of the partial sum.
pub(crate) fn poisson_tail_ratio(rho: f64, c: u64, power: u32) -> f64 {
    let weight = |m: f64| if power == 0 { 1.0 } else { m.powi(power as i32) };
    let mut term = 1.0;
    let mut sum = 0.0;
    let mut m = 1u64;
    loop {
        term *= rho / (c + m) as f64;
        let w = weight(m as f64);
        sum += w * term;
        // Ratio of the next weighted term to this one, bounded for all later m.
        let q = rho / (c + m + 1) as f64 * weight((m + 1) as f64) / w;
        if q < 0.5 {
            let bound = w * term * q / (1.0 - q);
            if bound <= 1e-17 * sum {
                break;
            }
        }
        m += 1;
        if m > 1_000_000 {
            break;
        }
    }
    sum
}

/// Kummer's confluent hypergeometric function `M(a, b, z) = Σ (a)_i/(b)_i z^i/i!`.
///
/// Summed directly for `z ≥ 0`; negative arguments go through Kummer's
/// transformation `M(a, b, z) = e^z M(b − a, b, −z)` so the series has no
/// cancellation. Accuracy is near machine precision for `|z| ≤ 50`.
pub fn kummer_m(a: f64, b: f64, z: f64) -> Result<f64> {
    if b <= 0.0 && b.fract() == 0.0 {
        return domain(format!("M(a, b, z) undefined for nonpositive integer b = {b}"));
    }
    if !(a.is_finite() && b.is_finite() && z.is_finite()) {
        return domain("M(a, b, z) needs finite arguments");
    }
    if z < 0.0 {
        Ok(z.exp() * kummer_series(b - a, b, -z)?)
    } else {
        kummer_series(a, b, z)
    }
}

fn kummer_series(a: f64, b: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut quiet = 0;
    for i in 0..KUMMER_MAX_TERMS {
        let fi = i as f64;
        term *= (a + fi) / (b + fi) * z / (fi + 1.0);
        sum += term;
        if term == 0.0 || term.abs() < KUMMER_REL_TOL * sum.abs() {
            quiet += 1;
            if quiet >= KUMMER_QUIET_TERMS {
                return Ok(sum);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::NotConverged {
        what: "Kummer series",
        estimate: sum,
        error_bound: term.abs(),
    })
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-s}/s ds` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return domain(format!("E1(x) diverges for x <= 0 (got {x})"));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x <= 1.0 {
        let mut sum = -x.ln() - EULER_GAMMA;
        let mut fact = 1.0;
        for i in 1..200 {
            let fi = i as f64;
            fact *= -x / fi;
            let del = -fact / fi;
            sum += del;
            if del.abs() < sum.abs() * f64::EPSILON {
                return Ok(sum);
            }
        }
        Ok(sum)
    } else {
        // Modified Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < f64::EPSILON {
                return Ok(h * (-x).exp());
            }
        }
        Err(Error::NotConverged {
            what: "E1 continued fraction",
            estimate: h * (-x).exp(),
            error_bound: f64::NAN,
        })
    }
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_depth: u32) -> Result<Self> {
        if !(abs_tol > 0.0) || !(rel_tol > 0.0) || max_depth < 1 {
            return domain("quadrature needs abs_tol > 0, rel_tol > 0, max_depth >= 1");
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_depth,
        })
    }

    /// Tight tolerances used internally where results feed other numerics.
    pub(crate) fn precise() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_depth: 60,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: DEFAULT_ABS_TOL,
            rel_tol: DEFAULT_REL_TOL,
            max_depth: 50,
        }
    }
}

/// `|f(t)| ≤ constant · e^{-rate·t}` beyond the lower limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub constant: f64,
    pub rate: f64,
}

/// Upper limit of integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Upper {
    Finite(f64),
    /// `+∞`, with an exponential envelope that certifies the truncation point.
    Infinite(TailBound),
}

impl TailBound {
    /// Point `T ≥ a` beyond which the tail integral is below `eps`.
    pub fn truncation_point(&self, a: f64, eps: f64) -> f64 {
        let t = (self.constant / (self.rate * eps)).ln() / self.rate;
        t.max(a)
    }
}

// Gauss–Kronrod 7/15 abscissae and weights.
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

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: u32,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for (j, &wg) in WG.iter().enumerate().take(3) {
        let jj = 2 * j + 1;
        let x = half * XGK[jj];
        let (f1, f2) = (f(center - x), f(center + x));
        fv1[jj] = f1;
        fv2[jj] = f2;
        res_g += wg * (f1 + f2);
        res_k += WGK[jj] * (f1 + f2);
        res_abs += WGK[jj] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let jj = 2 * j;
        let x = half * XGK[jj];
        let (f1, f2) = (f(center - x), f(center + x));
        fv1[jj] = f1;
        fv2[jj] = f2;
        res_k += WGK[jj] * (f1 + f2);
        res_abs += WGK[jj] * (f1.abs() + f2.abs());
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let h = half.abs();
    let value = res_k * half;
    res_abs *= h;
    res_asc *= h;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

const MAX_SEGMENTS: usize = 50_000;

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (value, error) = gauss_kronrod(f, a, b);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("integrand not finite on [{a}, {b}]")));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value,
        error,
        depth: 0,
    });
    loop {
        let total: f64 = heap.iter().map(|s| s.value).sum();
        let err: f64 = heap.iter().map(|s| s.error).sum();
        if err <= abs_tol.max(spec.rel_tol * total.abs()) {
            return Ok((total, err));
        }
        let worst = heap.pop().expect("heap never empties");
        if worst.depth >= spec.max_depth || heap.len() >= MAX_SEGMENTS {
            return Err(Error::NotConverged {
                what: "adaptive quadrature",
                estimate: total,
                error_bound: err,
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gauss_kronrod(f, lo, hi);
            if !value.is_finite() {
                return Err(Error::Numeric(format!("integrand not finite on [{lo}, {hi}]")));
            }
            heap.push(Segment {
                a: lo,
                b: hi,
                value,
                error,
                depth: worst.depth + 1,
            });
        }
    }
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, upper)`.
///
/// The returned value carries an estimated error at most
/// `max(abs_tol, rel_tol·|result|)`. For an infinite upper limit the range is
/// cut at the point where the caller's exponential envelope bounds the tail
/// by `abs_tol/2`, and the finite part is integrated to `abs_tol/2`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, upper: Upper, spec: &QuadratureSpec) -> Result<f64> {
    integrate_with_error(f, a, upper, spec).map(|(v, _)| v)
}

/// Like [`integrate`], also returning the error estimate (including the
/// certified truncation bound for infinite ranges).
pub fn integrate_with_error<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    upper: Upper,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    match upper {
        Upper::Finite(b) => adaptive(&f, a, b, spec.abs_tol, spec),
        Upper::Infinite(tail) => {
            if !(tail.rate > 0.0) || !(tail.constant >= 0.0) {
                return domain("tail bound needs rate > 0 and constant >= 0");
            }
            let half = 0.5 * spec.abs_tol;
            let t = tail.truncation_point(a, half);
            let cut = tail.constant / tail.rate * (-tail.rate * t).exp();
            let (v, e) = adaptive(&f, a, t, half, spec)?;
            Ok((v, e + cut))
        }
    }
}

/// Search bracket for [`find_root`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSpec {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl RootSpec {
    pub fn new(lo: f64, hi: f64, tol: f64) -> Result<Self> {
        if !(lo < hi) || !(tol > 0.0) {
            return domain(format!(
                "root bracket needs lo < hi and tol > 0 (got [{lo}, {hi}], tol {tol})"
            ));
        }
        Ok(Self { lo, hi, tol })
    }

    pub fn bracket(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, DEFAULT_ROOT_TOL)
    }
}

/// Brent's method on a sign-changing bracket. Interpolation steps that do
/// not shrink the bracket fast enough fall back to bisection, so the bracket
/// always converges to width `tol`.
pub fn find_root<F: Fn(f64) -> f64>(f: F, spec: &RootSpec) -> Result<f64> {
    let (mut a, mut b) = (spec.lo, spec.hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::Bracket {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..500 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * spec.tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(m) };
        fb = f(b);
    }
    Err(Error::NotConverged {
        what: "root finding",
        estimate: b,
        error_bound: (c - b).abs(),
    })
}
