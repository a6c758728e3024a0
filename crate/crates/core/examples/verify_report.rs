//! Runs a command table in-process, as the binary does, and prints the
//! report.

use cyclequeue::cli::{run, Command, ExperimentConfig};
use cyclequeue::report::{all_pass, write_csv};

fn main() -> cyclequeue::error::Result<()> {
    let mut cfg = ExperimentConfig::new(Command::Mminf);
    cfg.seed = Some(42);
    cfg.n_reps = 20_000;
    let rows = run(&cfg)?;
    write_csv(&rows, std::io::stdout().lock())?;
    println!("all checks pass: {}", all_pass(&rows));
    Ok(())
}
