//! Largest cycle of the continuous-time permutation, rescaled by e^{-t},
//! against its limit law exp(-θ E1(x)).

use cyclequeue::mc::{ks_gof, replicate};
use cyclequeue::tandem::{max_cycle_exact_cdf, max_cycle_limit_cdf, simulate_cycle_sizes};

fn main() -> cyclequeue::error::Result<()> {
    let (theta, t) = (1.0, 8.0);
    let scaled = replicate(5_000, 21, |_, rng| {
        let sizes = simulate_cycle_sizes(theta, t, u64::MAX, rng)?;
        Ok(sizes.into_iter().max().unwrap_or(0) as f64 * (-t).exp())
    })?;
    for x in [0.1, 0.5, 1.0, 2.0] {
        let m = (x * t.exp()).floor() as u64;
        let emp = scaled.iter().filter(|&&s| s <= x).count() as f64 / scaled.len() as f64;
        println!(
            "x={x:<4} limit {:.4}  exact at t {:.4}  simulated {emp:.4}",
            max_cycle_limit_cdf(theta, x)?,
            max_cycle_exact_cdf(theta, t, m)?
        );
    }
    let g = ks_gof(&scaled, |x| max_cycle_limit_cdf(theta, x).unwrap_or(0.0))?;
    println!("KS {:.4} (threshold {:.4})", g.statistic, g.threshold);
    Ok(())
}
