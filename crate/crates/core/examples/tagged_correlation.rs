//! Queue lengths seen by one tagged item as it moves down a tandem of
//! infinite-server stations.

use cyclequeue::mc::stream;
use cyclequeue::tagged::*;

fn main() -> cyclequeue::error::Result<()> {
    let k = 5;
    println!("correlation of what a tagged cycle sees at sizes j and k={k}:");
    for j in 1..k {
        println!("  j={j}: {:.6}", correlation(j, k)?);
    }
    let rates = vec![1.0, 4.0, 2.0];
    let p = TaggedParams::new(0.8, rates.clone())?;
    let est = tagged_moments_mc(&p, &[(1, 3)], 200_000, 20.0, 5, 20)?;
    println!(
        "rates {rates:?}: corr(L1, L3) interpolated {:.4}, simulated {:.4} ± {:.4}",
        lagrange_correlation(&rates, 1, 3)?,
        est[0].1.mean,
        est[0].1.stderr
    );
    let obs = simulate_tagged(&p, 5, 20.0, &mut stream(6, 0))?;
    write_observations_csv(&obs, p.stations(), std::io::stdout().lock())?;
    Ok(())
}
