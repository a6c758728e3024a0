//! Cycle-type law of a random permutation of 6 elements, exact and grown
//! one element at a time.

use std::collections::HashMap;

use cyclequeue::crp::{crp_step, cycles_pgf, ewens_pmf, partitions, CrpParams, CycleCounts};
use cyclequeue::mc::stream;

fn main() -> cyclequeue::error::Result<()> {
    let p = CrpParams::new(1.0)?;
    let n = 6;
    let mut rng = stream(1, 0);
    let mut seen: HashMap<CycleCounts, u64> = HashMap::new();
    let draws = 100_000;
    for _ in 0..draws {
        let mut s = CycleCounts::new();
        for _ in 0..n {
            crp_step(&mut s, &p, &mut rng);
        }
        *seen.entry(s).or_default() += 1;
    }
    println!("{:<20} {:>10} {:>10}", "counts c1..c6", "exact", "simulated");
    for s in partitions(n) {
        let freq = *seen.get(&s).unwrap_or(&0) as f64 / draws as f64;
        println!(
            "{:<20} {:>10.5} {:>10.5}",
            format!("{:?}", s.counts()),
            ewens_pmf(&s, &p)?,
            freq
        );
    }
    println!("P[one cycle] from the p.g.f. of the cycle count: {:.5}", {
        let h = 1e-6;
        (cycles_pgf(n, &p, h)? - cycles_pgf(n, &p, 0.0)?) / h
    });
    Ok(())
}
