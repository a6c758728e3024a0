//! The Monte Carlo harness on a toy problem: seeded parallel replicates,
//! a z-test, batch means and goodness of fit.

use cyclequeue::mc::*;
use rand::Rng;

fn main() -> cyclequeue::error::Result<()> {
    // E[U²] = 1/3.
    let est = estimate(1_000_000, 42, |rng| Ok(rng.random::<f64>().powi(2)))?;
    let z = z_test(&est, 1.0 / 3.0, 4.0);
    println!("{est:?}\nz-test pass: {}", z.pass);

    // Time-average of an on/off process with Exp(1) on and Exp(2) off periods.
    let mut rng = stream(42, 1);
    let mut acc = BatchAccumulator::new(0.0, 100_000.0, 40)?;
    let mut on = true;
    while acc.now() < acc.t_end() {
        let rate = if on { 1.0 } else { 2.0 };
        let len = -(1.0 - rng.random::<f64>()).ln() / rate;
        acc.push(on as u8 as f64, len);
        on = !on;
    }
    println!("fraction on: {:?} (exact 2/3)", acc.finish("on/off")?);

    let counts = histogram((0..10_000).map(|_| rng.random_range(0..6u64)));
    println!("fair die: {:?}", chi_square_gof(&counts, &[1.0 / 6.0; 6])?);
    Ok(())
}
