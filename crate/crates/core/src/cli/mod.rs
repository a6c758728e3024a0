//! Command-line front end: config parsing, dispatch and report output.

mod experiments;

use std::ffi::OsString;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::report::{self, ReportRow};

pub use experiments::quantities;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CYCLEQUEUE_THREADS";

pub const DEFAULT_THETA: f64 = 1.0;
pub const DEFAULT_N_REPS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Crp,
    Walk,
    Tandem,
    Mminf,
    Busy,
    Tagged,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Crp => "crp",
            Command::Walk => "walk",
            Command::Tandem => "tandem",
            Command::Mminf => "mminf",
            Command::Busy => "busy",
            Command::Tagged => "tagged",
            Command::Verify => "verify",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully resolved run: file values merged under command-line flags.
/// Unset optional values fall back to per-command defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub theta: f64,
    pub k: Option<u32>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    pub c: Option<u64>,
    pub t_end: Option<f64>,
    pub n_reps: u64,
    pub seed: Option<u64>,
    pub checkpoints: Option<Vec<u64>>,
    pub quantity: Option<String>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            theta: DEFAULT_THETA,
            k: None,
            mu: None,
            rho: None,
            c: None,
            t_end: None,
            n_reps: DEFAULT_N_REPS,
            seed: None,
            checkpoints: None,
            quantity: None,
            output: None,
        }
    }
}

/// Bad invocation or configuration; maps to exit status 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

#[derive(Debug, Parser)]
#[command(
    name = "cyclequeue",
    version,
    about = "Cycle counts of growing random permutations, their queueing embeddings, and Monte Carlo checks",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Discrete growth of a random permutation
    Crp(Flags),
    /// Walk of the singleton count
    Walk(Flags),
    /// Tandem of stations for cycle sizes 1..k in continuous time
    Tandem(Flags),
    /// Excursions of the M/M/∞ queue
    Mminf(Flags),
    /// Busy periods of the M/G/∞ queue of cycles of size at most k
    Busy(Flags),
    /// What a tagged arrival sees along the tandem
    Tagged(Flags),
    /// Every experiment with its default settings
    Verify(Flags),
}

#[derive(Debug, Args, Default)]
struct Flags {
    /// Cycle creation rate [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Degree (crp), number of stations (tandem, tagged) or largest size (busy)
    #[arg(long)]
    k: Option<u32>,
    /// Service rate (mminf) [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Load of the walk [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    /// Base level of excursions or occupation counts [default: 0]
    #[arg(long)]
    c: Option<u64>,
    /// Time horizon or path length
    #[arg(long = "t-end", allow_negative_numbers = true)]
    t_end: Option<f64>,
    /// Monte Carlo sample size [default: 100000]
    #[arg(long = "n-reps")]
    n_reps: Option<u64>,
    /// Master seed; required for anything simulated
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated degrees at which occupation fractions are recorded
    #[arg(long, value_delimiter = ',')]
    checkpoints: Option<Vec<u64>>,
    /// Which table to produce; see `quantities` per command [default: all]
    #[arg(long)]
    quantity: Option<String>,
    /// CSV report path; a JSON mirror is written next to it
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON file with any of the keys above; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<Command>,
    theta: Option<f64>,
    k: Option<u32>,
    mu: Option<f64>,
    rho: Option<f64>,
    c: Option<u64>,
    t_end: Option<f64>,
    n_reps: Option<u64>,
    seed: Option<u64>,
    checkpoints: Option<Vec<u64>>,
    quantity: Option<String>,
    output: Option<PathBuf>,
}

fn read_config_file(path: &Path) -> Result<FileConfig, UsageError> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: line {}: {e}", path.display(), e.line())))
}

/// Parses `argv` (program name first) and merges an optional config file.
/// Help and version requests come back as `Err` carrying clap's output.
pub fn parse_config<I, T>(args: I) -> Result<ExperimentConfig, ParseOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(ParseOutcome::Clap)?;
    let (command, flags) = match cli.command {
        Sub::Crp(f) => (Command::Crp, f),
        Sub::Walk(f) => (Command::Walk, f),
        Sub::Tandem(f) => (Command::Tandem, f),
        Sub::Mminf(f) => (Command::Mminf, f),
        Sub::Busy(f) => (Command::Busy, f),
        Sub::Tagged(f) => (Command::Tagged, f),
        Sub::Verify(f) => (Command::Verify, f),
    };
    merge(command, flags).map_err(ParseOutcome::Usage)
}

#[derive(Debug)]
pub enum ParseOutcome {
    Clap(clap::Error),
    Usage(UsageError),
}

fn merge(command: Command, flags: Flags) -> Result<ExperimentConfig, UsageError> {
    let file = match &flags.config {
        Some(p) => read_config_file(p)?,
        None => FileConfig::default(),
    };
    if let Some(fc) = file.command {
        if fc != command {
            return usage(format!("config file is for `{fc}` but the command is `{command}`"));
        }
    }
    let mut cfg = ExperimentConfig::new(command);
    cfg.theta = flags.theta.or(file.theta).unwrap_or(DEFAULT_THETA);
    cfg.k = flags.k.or(file.k);
    cfg.mu = flags.mu.or(file.mu);
    cfg.rho = flags.rho.or(file.rho);
    cfg.c = flags.c.or(file.c);
    cfg.t_end = flags.t_end.or(file.t_end);
    cfg.n_reps = flags.n_reps.or(file.n_reps).unwrap_or(DEFAULT_N_REPS);
    cfg.seed = flags.seed.or(file.seed);
    cfg.checkpoints = flags.checkpoints.or(file.checkpoints);
    cfg.quantity = flags.quantity.or(file.quantity);
    cfg.output = flags.output.or(file.output);
    validate(&cfg)?;
    Ok(cfg)
}

fn positive(name: &str, v: Option<f64>) -> Result<(), UsageError> {
    match v {
        Some(x) if !(x > 0.0) || !x.is_finite() => usage(format!("--{name} must be positive and finite, got {x}")),
        _ => Ok(()),
    }
}

/// Checks ranges, the quantity name and the seed requirement.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), UsageError> {
    positive("theta", Some(cfg.theta))?;
    positive("mu", cfg.mu)?;
    positive("rho", cfg.rho)?;
    positive("t-end", cfg.t_end)?;
    if cfg.n_reps < 2 {
        return usage("--n-reps must be at least 2");
    }
    if cfg.k == Some(0) {
        return usage("--k must be at least 1");
    }
    if let Some(cp) = &cfg.checkpoints {
        if cp.is_empty() || cp.contains(&0) || cp.windows(2).any(|w| w[0] >= w[1]) {
            return usage("--checkpoints must be increasing positive degrees");
        }
    }
    experiments::check_command_limits(cfg)?;
    let selected = experiments::select(cfg)?;
    if cfg.seed.is_none() && selected.iter().any(|q| q.needs_seed) {
        let names: Vec<&str> = selected.iter().filter(|q| q.needs_seed).map(|q| q.name).collect();
        return usage(format!(
            "--seed is required for simulated quantities ({})",
            names.join(", ")
        ));
    }
    Ok(())
}

/// Runs the configured experiment and returns its report rows.
pub fn run(cfg: &ExperimentConfig) -> crate::error::Result<Vec<ReportRow>> {
    experiments::run(cfg)
}

/// Writes the CSV to `out` (or to `cfg.output` with a JSON mirror).
pub fn emit(cfg: &ExperimentConfig, rows: &[ReportRow], out: &mut dyn Write) -> io::Result<()> {
    match &cfg.output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            report::write_csv(rows, &mut w)?;
            w.flush()?;
            let mut j = BufWriter::new(File::create(path.with_extension("json"))?);
            report::write_json(cfg.command.name(), rows, &mut j)?;
            j.flush()
        }
        None => report::write_csv(rows, out),
    }
}

fn configure_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| UsageError(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // A second initialisation in the same process is harmless.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Full program: parse, run, write. Returns the process exit status:
/// 0 when every checked row passes, 1 on failed checks or runtime errors,
/// 2 on usage errors.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    let cfg = match parse_config(args) {
        Ok(cfg) => cfg,
        Err(ParseOutcome::Clap(e)) => {
            let _ = e.print();
            return e.exit_code();
        }
        Err(ParseOutcome::Usage(e)) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let rows = match run(&cfg) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let stdout = io::stdout();
    if let Err(e) = emit(&cfg, &rows, &mut stdout.lock()) {
        eprintln!("error: cannot write report: {e}");
        return 1;
    }
    if report::all_pass(&rows) {
        0
    } else {
        for r in rows.iter().filter(|r| r.pass == Some(false)) {
            eprintln!("failed: {}", r.quantity);
        }
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<ExperimentConfig, ParseOutcome> {
        parse_config(std::iter::once("cyclequeue").chain(args.iter().copied()))
    }

    #[test]
    fn flags_and_defaults() {
        let cfg = parse(&["walk", "--rho", "2", "--quantity", "height-moments"]).unwrap();
        assert_eq!(cfg.command, Command::Walk);
        assert_eq!(cfg.rho, Some(2.0));
        assert_eq!(cfg.theta, 1.0);
        assert_eq!(cfg.n_reps, DEFAULT_N_REPS);
        let cfg = parse(&["crp", "--checkpoints", "10,100", "--seed", "3"]).unwrap();
        assert_eq!(cfg.checkpoints, Some(vec![10, 100]));
    }

    #[test]
    fn usage_failures() {
        assert!(matches!(parse(&[]), Err(ParseOutcome::Clap(_))));
        assert!(matches!(parse(&["busy", "--theta", "-1"]), Err(ParseOutcome::Usage(_))));
        assert!(matches!(
            parse(&["busy", "--quantity", "nope"]),
            Err(ParseOutcome::Usage(_))
        ));
        // Simulated quantities need a seed.
        assert!(matches!(parse(&["crp"]), Err(ParseOutcome::Usage(_))));
        assert!(parse(&["crp", "--quantity", "ewens"]).is_ok());
        assert!(parse(&["busy", "--quantity", "tail"]).is_ok());
    }
}
