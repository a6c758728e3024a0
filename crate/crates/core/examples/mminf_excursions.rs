//! Excursions of the M/M/∞ queue above a level: means, transform and the
//! exponential decay of the duration.

use cyclequeue::mc::{replicate, McEstimate};
use cyclequeue::mminf::*;

fn main() -> cyclequeue::error::Result<()> {
    let p = QueueParams::new(2.0, 1.0)?;
    for c in 0..4 {
        let ex = replicate(100_000, 30 + c, |_, rng| simulate_queue_excursion(&p, c, rng))?;
        let d: Vec<f64> = ex.iter().map(|e| e.duration).collect();
        let est = McEstimate::from_samples(&d, "")?;
        println!(
            "c={c}: E[D] {:.4} (sim {:.4} ± {:.4}), E[e^-D] {:.4}, decay rate {:.4}",
            mean_duration(&p, c),
            est.mean,
            est.stderr,
            duration_lt(&p, c, 1.0)?,
            p.mu() * leading_root(&p, c)?
        );
    }
    let (series, integral) = duration_second_moment_both(&p)?;
    println!("E[D0^2] series {series:.10} integral {integral:.10}");
    println!("E[D0^3] {:.6}", duration_third_moment(&p));
    Ok(())
}
