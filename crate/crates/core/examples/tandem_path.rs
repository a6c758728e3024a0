//! One path of the small-cycle counts in continuous time, written as CSV,
//! and the Poisson marginals at a fixed time.

use cyclequeue::crp::CycleCounts;
use cyclequeue::mc::{replicate, stream};
use cyclequeue::tandem::{simulate_tandem, transient_marginal_mean, TandemParams, TrackingMode};

fn main() -> cyclequeue::error::Result<()> {
    let p = TandemParams::new(1.0, 3)?;
    let mut rng = stream(11, 0);
    let path = simulate_tandem(&p, TrackingMode::Full, 1.5, &CycleCounts::new(), &mut rng)?;
    path.write_csv(std::io::stdout().lock())?;

    let t = 1.0;
    let ends = replicate(50_000, 12, |_, rng| {
        simulate_tandem(&p, TrackingMode::Open, t, &CycleCounts::new(), rng).map(|x| x.state_at(t).counts.clone())
    })?;
    for i in 1..=3 {
        let mean = ends.iter().map(|c| c[i - 1] as f64).sum::<f64>() / ends.len() as f64;
        println!(
            "E[C{i}({t})] = {:.4}, simulated {mean:.4}",
            transient_marginal_mean(&p, i, t)?
        );
    }
    Ok(())
}
