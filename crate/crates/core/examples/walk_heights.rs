//! Heights and lengths of excursions of the singleton-count walk, and the
//! typical largest height over many excursions.

use cyclequeue::mc::{replicate, McEstimate};
use cyclequeue::walk::{
    height_moments, height_tail, max_height_cdf, mean_excursion_length, park_index, simulate_excursion, WalkParams,
};

fn main() -> cyclequeue::error::Result<()> {
    let p = WalkParams::new(1.0)?;
    let (mean, var) = height_moments(&p);
    let ex = replicate(200_000, 3, |_, rng| simulate_excursion(&p, 0, rng))?;
    let h: Vec<f64> = ex.iter().map(|e| e.height as f64).collect();
    let l: Vec<f64> = ex.iter().map(|e| e.length as f64).collect();
    println!(
        "height mean {mean:.5}, simulated {:.5}",
        McEstimate::from_samples(&h, "")?.mean
    );
    println!(
        "height var  {var:.5}, simulated {:.5}",
        McEstimate::variance_of(&h, "")?.mean
    );
    println!(
        "length mean {:.5}, simulated {:.5}",
        mean_excursion_length(&p, 0),
        McEstimate::from_samples(&l, "")?.mean
    );
    for hh in 0..6 {
        println!("P[H >= {}] = {:.6}", hh + 1, height_tail(&p, 0, hh));
    }
    let m = 10_000;
    let idx = park_index(m, &p)?;
    println!("index for {m} excursions: {idx}");
    for hh in (idx - 2).max(1)..=idx + 3 {
        println!("P[max height <= {hh}] = {:.4}", max_height_cdf(&p, m, hh as u64));
    }
    Ok(())
}
