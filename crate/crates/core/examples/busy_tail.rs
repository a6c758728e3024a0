//! Busy periods of the M/G/∞ queue whose service is the time a new cycle
//! takes to grow past size k.

use cyclequeue::busy::*;
use cyclequeue::mc::{log_survival_slope, replicate};

fn main() -> cyclequeue::error::Result<()> {
    for k in 1..=4 {
        let p = MgParams::new(1.0, k)?;
        let tail = tail_asymptotics(&p)?;
        let var = busy_second_moment(&p)? - busy_mean(&p).powi(2);
        println!(
            "k={k}: mean {:.4}, var {var:.4}, P[D > t] ~ {:.4} e^(-{:.6} t)",
            busy_mean(&p),
            tail.alpha,
            tail.beta
        );
    }
    let p = MgParams::new(1.0, 2)?;
    let d = replicate(300_000, 41, |_, rng| Ok(simulate_busy_period(&p, rng)?.duration))?;
    println!(
        "k=2 simulated log-survival slope on [5, 15]: {:.4}",
        log_survival_slope(&d, 5.0, 15.0, 11)?
    );
    Ok(())
}
