//! Fraction of the first n steps during which a growing permutation has no
//! fixed points. Its mean settles but its spread does not shrink.

use cyclequeue::crp::{geometric_checkpoints, occupation_trajectory, CrpParams};
use cyclequeue::mc::{replicate, McEstimate};

fn main() -> cyclequeue::error::Result<()> {
    let p = CrpParams::new(1.0)?;
    let cps = geometric_checkpoints(100_000);
    let recs = replicate(2_000, 7, |_, rng| occupation_trajectory(&p, 0, 100_000, &cps, rng))?;
    println!("{:>8} {:>10} {:>10}", "n", "mean", "variance");
    for (i, n) in cps.iter().enumerate() {
        let xs: Vec<f64> = recs.iter().map(|r| r.checkpoints[i].1).collect();
        let m = McEstimate::from_samples(&xs, "")?;
        let v = McEstimate::variance_of(&xs, "")?;
        println!("{n:>8} {:>10.4} {:>10.4}", m.mean, v.mean);
    }
    println!("limit of the mean: {:.4}", (-1.0f64).exp());
    Ok(())
}
