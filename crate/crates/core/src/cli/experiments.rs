//! The tables behind each subcommand. Every quantity yields report rows with
//! exact values; simulated columns are filled when a seed is given.

use std::collections::HashMap;

use super::{usage, Command, ExperimentConfig, UsageError};
use crate::busy::{self, MgParams};
use crate::crp::{self, CrpParams, CycleCounts};
use crate::error::{Error, Result};
use crate::mc::{self, sub_seed, BatchAccumulator, GofResult, McEstimate};
use crate::mminf::{self, QueueParams};
use crate::report::{fmt_num, ReportRow};
use crate::specials::poisson_pmf;
use crate::tagged::{self, TaggedParams};
use crate::tandem::{self, SojournConfig, SojournStart, TandemParams, TandemProcess, TrackingMode};
use crate::walk::{self, WalkParams};

const N_SIGMAS: f64 = 4.0;
const N_BATCHES: usize = 100;
const EVENT_CAP: u64 = 100_000_000;

/// One selectable table of a command.
pub struct Quantity {
    pub name: &'static str,
    /// Whether the table is made only of simulated values.
    pub needs_seed: bool,
    run: fn(&Ctx) -> Result<Vec<ReportRow>>,
}

const fn q(name: &'static str, needs_seed: bool, run: fn(&Ctx) -> Result<Vec<ReportRow>>) -> Quantity {
    Quantity { name, needs_seed, run }
}

const CRP: &[Quantity] = &[
    q("ewens", false, crp_ewens),
    q("cycle-types", true, crp_cycle_types),
    q("occupation", true, crp_occupation),
];
const WALK: &[Quantity] = &[
    q("stationary", true, walk_stationary),
    q("excursion", false, walk_excursion),
    q("height-moments", false, walk_height_moments),
    q("height-tail", false, walk_height_tail),
    q("park", false, walk_park),
];
const TANDEM: &[Quantity] = &[
    q("marginals", true, tandem_marginals),
    q("derangement", true, tandem_derangement),
    q("pascal", false, tandem_pascal),
    q("max-cycle", true, tandem_max_cycle),
    q("sojourn", true, tandem_sojourn),
];
const MMINF: &[Quantity] = &[
    q("excursion", false, mminf_excursion),
    q("moments", false, mminf_moments),
    q("lt", false, mminf_lt),
];
const BUSY: &[Quantity] = &[
    q("moments", false, busy_moments),
    q("tail", false, busy_tail),
    q("dstar", false, busy_dstar),
];
const TAGGED: &[Quantity] = &[
    q("correlation", false, tagged_correlation),
    q("symmetry", false, tagged_symmetry),
];

const SUITE: [Command; 6] = [
    Command::Crp,
    Command::Walk,
    Command::Tandem,
    Command::Mminf,
    Command::Busy,
    Command::Tagged,
];

/// Quantities offered by `command`; `verify` runs all of the others.
pub fn quantities(command: Command) -> &'static [Quantity] {
    match command {
        Command::Crp => CRP,
        Command::Walk => WALK,
        Command::Tandem => TANDEM,
        Command::Mminf => MMINF,
        Command::Busy => BUSY,
        Command::Tagged => TAGGED,
        Command::Verify => &[],
    }
}

pub(super) fn select(cfg: &ExperimentConfig) -> std::result::Result<Vec<&'static Quantity>, UsageError> {
    if cfg.command == Command::Verify {
        if cfg.quantity.as_deref().is_some_and(|q| q != "all") {
            return usage("verify runs every quantity; --quantity is not accepted");
        }
        return Ok(SUITE.iter().flat_map(|&c| quantities(c)).collect());
    }
    let all = quantities(cfg.command);
    match cfg.quantity.as_deref() {
        None | Some("all") => Ok(all.iter().collect()),
        Some(name) => match all.iter().find(|q| q.name == name) {
            Some(q) => Ok(vec![q]),
            None => {
                let names: Vec<&str> = all.iter().map(|q| q.name).collect();
                usage(format!(
                    "unknown quantity `{name}` for {}; valid: all, {}",
                    cfg.command,
                    names.join(", ")
                ))
            }
        },
    }
}

pub(super) fn check_command_limits(cfg: &ExperimentConfig) -> std::result::Result<(), UsageError> {
    let k = cfg.k.unwrap_or(1);
    match cfg.command {
        Command::Crp if k > 20 => usage("crp: --k (degree) must be at most 20"),
        Command::Tandem if k > 50 => usage("tandem: --k must be at most 50"),
        Command::Tagged if !(2..=60).contains(&cfg.k.unwrap_or(2)) => usage("tagged: --k must lie in 2..=60"),
        Command::Busy if k > 1000 => usage("busy: --k must be at most 1000"),
        _ => Ok(()),
    }
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    if cfg.command != Command::Verify {
        return run_one(cfg, cfg.command, "");
    }
    let mut rows = Vec::new();
    for command in SUITE {
        let mut sub = ExperimentConfig::new(command);
        sub.theta = cfg.theta;
        sub.n_reps = cfg.n_reps;
        sub.seed = cfg.seed;
        rows.extend(run_one(&sub, command, &format!("{command}."))?);
    }
    Ok(rows)
}

fn run_one(cfg: &ExperimentConfig, command: Command, prefix: &str) -> Result<Vec<ReportRow>> {
    let mut cfg = cfg.clone();
    cfg.command = command;
    let selected = select(&cfg).map_err(|e| Error::Domain(e.0))?;
    let mut rows = Vec::new();
    for quantity in selected {
        let ctx = Ctx {
            cfg: &cfg,
            label: format!("{command}.{}", quantity.name),
        };
        for mut r in (quantity.run)(&ctx)? {
            r.quantity = format!("{prefix}{}", r.quantity);
            rows.push(r);
        }
    }
    Ok(rows)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    label: String,
}

impl Ctx<'_> {
    /// Seed for this quantity, derived from the master seed and its name so
    /// the same table gets the same numbers under `verify`.
    fn seed(&self) -> Option<u64> {
        self.cfg.seed.map(|s| sub_seed(s, &self.label))
    }

    fn seed_for(&self, part: &str) -> Option<u64> {
        self.cfg.seed.map(|s| sub_seed(s, &format!("{}.{part}", self.label)))
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed()
            .ok_or_else(|| Error::Domain(format!("{} needs a seed", self.label)))
    }

    fn n(&self) -> u64 {
        self.cfg.n_reps
    }

    fn theta(&self) -> f64 {
        self.cfg.theta
    }
}

fn exact(quantity: impl Into<String>, value: f64, target_ref: &str) -> ReportRow {
    ReportRow::analytic(quantity, value, target_ref)
}

fn gap(quantity: impl Into<String>, value: f64, tol: f64, target_ref: &str) -> ReportRow {
    exact(quantity, value, target_ref).with_pass(value.abs() <= tol)
}

fn versus(quantity: impl Into<String>, value: f64, est: &McEstimate, n_sigmas: f64, target_ref: &str) -> ReportRow {
    let pass = mc::z_test(est, value, n_sigmas).pass;
    exact(quantity, value, target_ref)
        .with_mc(est.mean, est.stderr)
        .with_pass(pass)
}

fn with_optional_mc(row: ReportRow, est: Option<&McEstimate>, n_sigmas: f64) -> ReportRow {
    match (est, row.analytic) {
        (Some(e), Some(v)) => row.with_mc(e.mean, e.stderr).with_pass(mc::z_test(e, v, n_sigmas).pass),
        _ => row,
    }
}

/// Goodness-of-fit row: the analytic column holds the critical value and
/// the simulated column the statistic.
fn gof(quantity: impl Into<String>, g: &GofResult, target_ref: &str) -> ReportRow {
    ReportRow {
        quantity: quantity.into(),
        analytic: Some(g.threshold),
        mc_mean: Some(g.statistic),
        mc_stderr: None,
        target_ref: target_ref.into(),
        pass: Some(g.pass),
    }
}

fn samples<F>(n: u64, seed: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut mc::Stream) -> Result<f64> + Sync,
{
    mc::replicate(n, seed, |_, rng| f(rng))
}

/// Frequency of an event with the standard error `√(p(1−p)/n)` of the
/// hypothesised probability `p`, usable when the event is too rare to be seen.
fn null_frequency(hits: &[f64], p: f64, provenance: String) -> Result<McEstimate> {
    let est = McEstimate::from_samples(hits, provenance)?;
    Ok(McEstimate {
        stderr: (p * (1.0 - p) / hits.len() as f64).sqrt(),
        ..est
    })
}

fn prov(seed: u64, n: u64) -> String {
    format!("chacha8 seed={seed} streams=0..{n}")
}

// ---- crp ----

fn crp_ewens(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = CrpParams::new(ctx.theta())?;
    let top = ctx.cfg.k.unwrap_or(8) as u64;
    let mut rows = Vec::new();
    for n in 1..=top {
        let total: f64 = crp::partitions(n)
            .iter()
            .map(|s| crp::ewens_pmf(s, &p))
            .sum::<Result<f64>>()?;
        rows.push(gap(
            format!("ewens_total_minus_one_n{n}"),
            total - 1.0,
            1e-10,
            "crp.ewens_formula",
        ));
    }
    Ok(rows)
}

fn crp_cycle_types(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let seed = ctx.require_seed()?;
    let p = CrpParams::new(ctx.theta())?;
    let n = ctx.cfg.k.unwrap_or(6) as u64;
    let parts = crp::partitions(n);
    let index: HashMap<&CycleCounts, usize> = parts.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let probs: Vec<f64> = parts.iter().map(|s| crp::ewens_pmf(s, &p)).collect::<Result<_>>()?;
    let hits = mc::replicate(ctx.n(), seed, |_, rng| {
        let mut s = CycleCounts::new();
        for _ in 0..n {
            crp::crp_step(&mut s, &p, rng);
        }
        index
            .get(&s)
            .copied()
            .ok_or_else(|| Error::Numeric(format!("simulated state {s} is not a partition of {n}")))
    })?;
    let mut observed = vec![0u64; parts.len()];
    for h in hits {
        observed[h] += 1;
    }
    let g = mc::chi_square_gof(&observed, &probs)?;
    Ok(vec![gof(
        format!("cycle_type_chi_square_n{n}"),
        &g,
        "crp.ewens_formula",
    )])
}

fn crp_occupation(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let seed = ctx.require_seed()?;
    let p = CrpParams::new(ctx.theta())?;
    let level = ctx.cfg.c.unwrap_or(0);
    let cps = ctx
        .cfg
        .checkpoints
        .clone()
        .unwrap_or_else(|| vec![1_000, 10_000, 100_000]);
    let n_max = *cps.last().expect("validated nonempty");
    let recs = mc::replicate(ctx.n(), seed, |_, rng| {
        crp::occupation_trajectory(&p, level, n_max, &cps, rng)
    })?;
    let limit = poisson_pmf(ctx.theta(), level)?;
    let mut rows = Vec::new();
    let mut variances = Vec::new();
    for (i, &n) in cps.iter().enumerate() {
        let xs: Vec<f64> = recs.iter().map(|r| r.checkpoints[i].1).collect();
        let m = McEstimate::from_samples(&xs, prov(seed, ctx.n()))?;
        rows.push(versus(
            format!("occupation_mean_c{level}_n{n}"),
            limit,
            &m,
            N_SIGMAS,
            "crp.occupation_mean_limit",
        ));
        let v = McEstimate::variance_of(&xs, prov(seed, ctx.n()))?;
        rows.push(ReportRow {
            quantity: format!("occupation_var_c{level}_n{n}"),
            analytic: None,
            mc_mean: Some(v.mean),
            mc_stderr: Some(v.stderr),
            target_ref: "crp.occupation_nonconvergence".into(),
            pass: None,
        });
        variances.push(v.mean);
    }
    if variances.len() >= 2 {
        let ratio = variances[variances.len() - 1] / variances[0];
        rows.push(ReportRow {
            quantity: format!("occupation_var_ratio_n{}_over_n{}", cps[cps.len() - 1], cps[0]),
            analytic: Some(0.5),
            mc_mean: Some(ratio),
            mc_stderr: None,
            target_ref: "crp.occupation_nonconvergence".into(),
            pass: Some(ratio > 0.5),
        });
    }
    Ok(rows)
}

// ---- walk ----

fn walk_params(ctx: &Ctx) -> Result<WalkParams> {
    WalkParams::new(ctx.cfg.rho.unwrap_or(1.0))
}

fn walk_stationary(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let seed = ctx.require_seed()?;
    let p = walk_params(ctx)?;
    let c = ctx.cfg.c.unwrap_or(0);
    let steps = ctx.cfg.t_end.unwrap_or(1e7).round() as u64;
    let mut rng = mc::stream(seed, 0);
    let mut chain = walk::WalkChain::new(p, c);
    let mut acc = BatchAccumulator::new(0.0, steps as f64, N_BATCHES)?;
    for _ in 0..steps {
        acc.push(if chain.state() == c { 1.0 } else { 0.0 }, 1.0);
        chain.step(&mut rng);
    }
    let est = acc.finish(format!("chacha8 seed={seed} stream=0 steps={steps}"))?;
    Ok(vec![versus(
        format!("stationary_pmf_c{c}"),
        walk::stationary_pmf(&p, c),
        &est,
        N_SIGMAS,
        "walk.stationary_law",
    )])
}

fn walk_excursion(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = walk_params(ctx)?;
    let c = ctx.cfg.c.unwrap_or(0);
    let lengths = match ctx.seed() {
        Some(seed) => Some(samples(ctx.n(), seed, |rng| {
            Ok(walk::simulate_excursion(&p, c, rng)?.length as f64)
        })?),
        None => None,
    };
    let mean = walk::mean_excursion_length(&p, c);
    let est = |xs: &[f64]| McEstimate::from_samples(xs, prov(ctx.seed().unwrap_or(0), ctx.n()));
    let mut rows = vec![with_optional_mc(
        exact(format!("mean_length_c{c}"), mean, "walk.excursion_length_mean"),
        lengths.as_deref().map(est).transpose()?.as_ref(),
        N_SIGMAS,
    )];
    if c == 0 {
        let half: Option<Vec<f64>> = lengths.map(|xs| xs.iter().map(|x| (x - 1.0) / 2.0).collect());
        rows.push(with_optional_mc(
            exact(
                "half_excess_length_mean",
                (mean - 1.0) / 2.0,
                "walk.excursion_length_mean",
            ),
            half.as_deref().map(est).transpose()?.as_ref(),
            N_SIGMAS,
        ));
        let var = half
            .as_deref()
            .map(|xs| McEstimate::variance_of(xs, prov(ctx.seed().unwrap_or(0), ctx.n())))
            .transpose()?;
        rows.push(with_optional_mc(
            exact(
                "half_excess_length_var",
                walk::var_excursion_length(&p) / 4.0,
                "walk.excursion_length_var",
            ),
            var.as_ref(),
            N_SIGMAS,
        ));
    }
    Ok(rows)
}

fn walk_height_moments(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = walk_params(ctx)?;
    let (mean, var) = walk::height_moments(&p);
    let (m_est, v_est) = match ctx.seed() {
        Some(seed) => {
            let hs = samples(ctx.n(), seed, |rng| {
                Ok(walk::simulate_excursion(&p, 0, rng)?.height as f64)
            })?;
            (
                Some(McEstimate::from_samples(&hs, prov(seed, ctx.n()))?),
                Some(McEstimate::variance_of(&hs, prov(seed, ctx.n()))?),
            )
        }
        None => (None, None),
    };
    Ok(vec![
        with_optional_mc(
            exact("height_mean", mean, "walk.height_moments"),
            m_est.as_ref(),
            N_SIGMAS,
        ),
        with_optional_mc(
            exact("height_var", var, "walk.height_moments"),
            v_est.as_ref(),
            N_SIGMAS,
        ),
    ])
}

fn walk_height_tail(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = walk_params(ctx)?;
    let c = ctx.cfg.c.unwrap_or(0);
    let mut rows = Vec::new();
    for h in 1..=10u64 {
        let tail = walk::height_tail(&p, c, h);
        let ruin = walk::ruin_probability(&p, c, c + 1, c + h + 1)?;
        let est = match ctx.seed_for(&format!("h{h}")) {
            Some(seed) => {
                let xs = samples(ctx.n(), seed, |rng| {
                    Ok(if walk::simulate_ruin(&p, c, c + 1, c + h + 1, rng)? {
                        1.0
                    } else {
                        0.0
                    })
                })?;
                Some(null_frequency(&xs, tail, prov(seed, ctx.n()))?)
            }
            None => None,
        };
        rows.push(with_optional_mc(
            exact(format!("height_tail_c{c}_h{h}"), tail, "walk.height_tail"),
            est.as_ref(),
            N_SIGMAS,
        ));
        rows.push(gap(
            format!("height_tail_minus_ruin_c{c}_h{h}"),
            tail - ruin,
            1e-12,
            "walk.ruin_probability",
        ));
    }
    Ok(rows)
}

fn walk_park(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = walk_params(ctx)?;
    let mut rows = Vec::new();
    for m in [10_000u64, 1_000_000] {
        let idx = walk::park_index(m, &p)?;
        rows.push(exact(
            format!("park_index_m{m}"),
            idx as f64,
            "walk.largest_height_index",
        ));
        // Window from one below to two above the index.
        let lo = (idx - 2).max(0) as u64;
        let prob = walk::max_height_cdf(&p, m, (idx + 2) as u64) - walk::max_height_cdf(&p, m, lo);
        rows.push(exact(
            format!("max_height_in_index_window_m{m}"),
            prob,
            "walk.largest_height_index",
        ));
    }
    Ok(rows)
}

// ---- tandem ----

fn tandem_params(ctx: &Ctx, default_k: u32) -> Result<TandemParams> {
    TandemParams::new(ctx.theta(), ctx.cfg.k.unwrap_or(default_k) as usize)
}

fn tandem_marginals(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = tandem_params(ctx, 3)?;
    let times = ctx.cfg.t_end.map(|t| vec![t]).unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let mut rows = Vec::new();
    for t in times {
        let seed = ctx
            .seed_for(&format!("t{}", fmt_num(t)))
            .ok_or_else(|| Error::Domain("tandem marginals need a seed".into()))?;
        let finals = mc::replicate(ctx.n(), seed, |_, rng| {
            let mut proc = TandemProcess::new(p, TrackingMode::Open, &CycleCounts::new())?;
            proc.advance_to(t, EVENT_CAP, rng)?;
            Ok((1..=p.k())
                .map(|i| proc.counts().get(i - 1).copied().unwrap_or(0))
                .collect::<Vec<u64>>())
        })?;
        let tt = fmt_num(t);
        let cols: Vec<Vec<f64>> = (0..p.k())
            .map(|i| finals.iter().map(|f| f[i] as f64).collect())
            .collect();
        for i in 1..=p.k() {
            let mean = tandem::transient_marginal_mean(&p, i, t)?;
            let est = McEstimate::from_samples(&cols[i - 1], prov(seed, ctx.n()))?;
            rows.push(versus(
                format!("count_mean_i{i}_t{tt}"),
                mean,
                &est,
                N_SIGMAS,
                "tandem.transient_poisson_law",
            ));
            let hist = mc::histogram(finals.iter().map(|f| f[i - 1]));
            let g = mc::chi_square_pmf(&hist, |c| poisson_pmf(mean, c).unwrap_or(0.0))?;
            rows.push(gof(
                format!("count_chi_square_i{i}_t{tt}"),
                &g,
                "tandem.transient_poisson_law",
            ));
        }
        for a in 1..=p.k() {
            for b in a + 1..=p.k() {
                let est = McEstimate::covariance_of(&cols[a - 1], &cols[b - 1], prov(seed, ctx.n()))?;
                rows.push(versus(
                    format!("count_cov_i{a}_i{b}_t{tt}"),
                    0.0,
                    &est,
                    N_SIGMAS,
                    "tandem.transient_independence",
                ));
            }
        }
    }
    Ok(rows)
}

fn tandem_derangement(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let seed = ctx.require_seed()?;
    let p = TandemParams::new(ctx.theta(), 1)?;
    let t_end = ctx.cfg.t_end.unwrap_or(100_000.0);
    let mut rng = mc::stream(seed, 0);
    let init = tandem::steady_state_initial(&p, &mut rng);
    let mut proc = TandemProcess::new(p, TrackingMode::Open, &init)?;
    let mut acc = BatchAccumulator::new(0.0, t_end, N_BATCHES)?;
    let mut last = 0.0;
    let mut value = if proc.counts().first().copied().unwrap_or(0) == 0 {
        1.0
    } else {
        0.0
    };
    while proc.step_until(t_end, &mut rng).is_some() {
        acc.push(value, proc.time() - last);
        last = proc.time();
        value = if proc.counts().first().copied().unwrap_or(0) == 0 {
            1.0
        } else {
            0.0
        };
    }
    acc.push(value, t_end - last);
    let est = acc.finish(format!("chacha8 seed={seed} stream=0 t_end={}", fmt_num(t_end)))?;
    Ok(vec![versus(
        "derangement_time_fraction",
        (-ctx.theta()).exp(),
        &est,
        N_SIGMAS,
        "tandem.derangement_limit",
    )])
}

fn tandem_pascal(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = TandemParams::new(ctx.theta(), 1)?;
    let mut rows = Vec::new();
    for t in [1.0, 2.0] {
        for z in [0.3, 0.5, 1.0] {
            let check = tandem::pascalisation_check(&p, t, z, 5_000)?;
            rows.push(gap(
                format!("pascal_residual_t{}_z{}", fmt_num(t), fmt_num(z)),
                check.residual,
                1e-8,
                "tandem.pascalisation",
            ));
        }
    }
    Ok(rows)
}

fn tandem_max_cycle(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let seed = ctx.require_seed()?;
    let theta = ctx.theta();
    let t = ctx.cfg.t_end.unwrap_or(8.0);
    let scale = (-t).exp();
    let xs = samples(ctx.n(), seed, |rng| {
        let sizes = tandem::simulate_cycle_sizes(theta, t, EVENT_CAP, rng)?;
        Ok(sizes.into_iter().max().unwrap_or(0) as f64 * scale)
    })?;
    let g = mc::ks_gof(&xs, |x| {
        tandem::max_cycle_limit_cdf(theta, x).unwrap_or(if x > 0.0 { 1.0 } else { 0.0 })
    })?;
    Ok(vec![gof(
        format!("max_cycle_ks_t{}", fmt_num(t)),
        &g,
        "tandem.largest_cycle_limit",
    )])
}

fn tandem_sojourn(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let seed = ctx.require_seed()?;
    let cases: [(&str, usize, Vec<u64>); 3] = [
        ("empty_k1", 1, vec![]),
        ("empty_k2", 2, vec![]),
        ("one_singleton_k2", 2, vec![1]),
    ];
    let mut rows = Vec::new();
    for (i, (name, k, counts)) in cases.into_iter().enumerate() {
        let p = TandemParams::new(ctx.theta(), k)?;
        let state = CycleCounts::from_counts(counts);
        let config = SojournConfig {
            nu: 10_000,
            n_samples: ctx.n().min(1_000_000) as usize,
            start: SojournStart::Pinned,
            max_attempts: 1,
        };
        let mut rng = mc::stream(seed, i as u64);
        let s = tandem::time_change_sojourn_check(&p, &state, &config, &mut rng)?;
        rows.push(ReportRow {
            quantity: format!("sojourn_ks_{name}"),
            analytic: Some(0.02),
            mc_mean: Some(s.ks_distance),
            mc_stderr: None,
            target_ref: "tandem.time_change_limit".into(),
            pass: Some(s.ks_distance < 0.02),
        });
    }
    Ok(rows)
}

// ---- mminf ----

fn queue_params(ctx: &Ctx) -> Result<QueueParams> {
    QueueParams::new(ctx.theta(), ctx.cfg.mu.unwrap_or(1.0))
}

fn mminf_excursion(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = queue_params(ctx)?;
    let c = ctx.cfg.c.unwrap_or(0);
    let sims = match ctx.seed() {
        Some(seed) => Some((
            seed,
            mc::replicate(ctx.n(), seed, |_, rng| mminf::simulate_queue_excursion(&p, c, rng))?,
        )),
        None => None,
    };
    let col = |f: &dyn Fn(&mminf::QueueExcursion) -> f64| -> Result<Option<McEstimate>> {
        sims.as_ref()
            .map(|(seed, ex)| McEstimate::from_samples(&ex.iter().map(f).collect::<Vec<_>>(), prov(*seed, ctx.n())))
            .transpose()
    };
    let (theta, mu) = (p.theta(), p.mu());
    let cf = c as f64;
    Ok(vec![
        with_optional_mc(
            exact(
                format!("duration_mean_c{c}"),
                mminf::mean_duration(&p, c),
                "mminf.excursion_means",
            ),
            col(&|e| e.duration)?.as_ref(),
            N_SIGMAS,
        ),
        with_optional_mc(
            exact(
                format!("area_mean_c{c}"),
                mminf::mean_area(&p, c),
                "mminf.excursion_means",
            ),
            col(&|e| e.area)?.as_ref(),
            N_SIGMAS,
        ),
        with_optional_mc(
            exact(
                format!("arrivals_mean_c{c}"),
                mminf::mean_arrivals(&p, c),
                "mminf.excursion_means",
            ),
            col(&|e| e.arrivals as f64)?.as_ref(),
            N_SIGMAS,
        ),
        with_optional_mc(
            exact(format!("wald_arrivals_gap_c{c}"), 0.0, "mminf.wald_identities"),
            col(&|e| e.arrivals as f64 - theta * e.duration)?.as_ref(),
            N_SIGMAS,
        ),
        with_optional_mc(
            exact(format!("wald_departures_gap_c{c}"), 0.0, "mminf.wald_identities"),
            col(&|e| e.arrivals as f64 + 1.0 - mu * (e.area + cf * e.duration))?.as_ref(),
            N_SIGMAS,
        ),
    ])
}

fn mminf_moments(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = queue_params(ctx)?;
    let mean = mminf::mean_duration(&p, 0);
    let (series, integral) = mminf::duration_second_moment_both(&p)?;
    let third = mminf::duration_third_moment(&p);
    let (var_est, third_est) = match ctx.seed() {
        Some(seed) => {
            let ds = samples(ctx.n(), seed, |rng| {
                Ok(mminf::simulate_queue_excursion(&p, 0, rng)?.duration)
            })?;
            let cubes: Vec<f64> = ds.iter().map(|d| d.powi(3)).collect();
            (
                Some(McEstimate::variance_of(&ds, prov(seed, ctx.n()))?),
                Some(McEstimate::from_samples(&cubes, prov(seed, ctx.n()))?),
            )
        }
        None => (None, None),
    };
    Ok(vec![
        with_optional_mc(
            exact("duration_var_c0", series - mean * mean, "mminf.busy_second_moment"),
            var_est.as_ref(),
            N_SIGMAS,
        ),
        gap(
            "second_moment_series_minus_integral",
            series - integral,
            1e-9 * series,
            "mminf.busy_second_moment",
        ),
        // Heavy upper tail: a wider band for the third moment.
        with_optional_mc(
            exact("duration_third_moment_c0", third, "mminf.busy_third_moment"),
            third_est.as_ref(),
            6.0,
        ),
    ])
}

fn mminf_lt(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = queue_params(ctx)?;
    let c = ctx.cfg.c.unwrap_or(0);
    let mut worst: f64 = 0.0;
    for cc in [0u64, 1, 2, 3, 5] {
        for (a, b) in [(0.3, 0.5), (1.0, 1.0), (2.5, 2.0), (5.0, 4.0)] {
            let (quad, kummer) = mminf::i_integral_both(cc, a, b)?;
            worst = worst.max((quad - kummer).abs() / kummer.abs());
        }
    }
    let mut rows = vec![
        exact(
            format!("leading_root_c{c}"),
            mminf::leading_root(&p, c)?,
            "mminf.leading_root",
        ),
        gap(
            "i_integral_quadrature_vs_kummer_max_rel_gap",
            worst,
            1e-8,
            "mminf.i_integral",
        ),
    ];
    let h = 1e-6;
    for cc in 0..=3u64 {
        let slope = (mminf::duration_lt(&p, cc, h)? - mminf::duration_lt(&p, cc, 0.0)?) / h;
        let target = mminf::mean_duration(&p, cc);
        rows.push(gap(
            format!("lt_slope_rel_err_c{cc}"),
            (-slope - target) / target,
            1e-4,
            "mminf.duration_lt",
        ));
    }
    Ok(rows)
}

// ---- busy ----

fn mg_params(ctx: &Ctx) -> Result<MgParams> {
    MgParams::new(ctx.theta(), ctx.cfg.k.unwrap_or(2))
}

fn busy_moments(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = mg_params(ctx)?;
    let k = p.k();
    let mean = busy::busy_mean(&p);
    let second = busy::busy_second_moment(&p)?;
    let (m_est, v_est) = match ctx.seed() {
        Some(seed) => {
            let ds = samples(ctx.n(), seed, |rng| Ok(busy::simulate_busy_period(&p, rng)?.duration))?;
            (
                Some(McEstimate::from_samples(&ds, prov(seed, ctx.n()))?),
                Some(McEstimate::variance_of(&ds, prov(seed, ctx.n()))?),
            )
        }
        None => (None, None),
    };
    Ok(vec![
        with_optional_mc(
            exact(format!("busy_mean_k{k}"), mean, "busy.mean"),
            m_est.as_ref(),
            N_SIGMAS,
        ),
        with_optional_mc(
            exact(format!("busy_var_k{k}"), second - mean * mean, "busy.second_moment"),
            v_est.as_ref(),
            N_SIGMAS,
        ),
    ])
}

fn busy_tail(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = mg_params(ctx)?;
    let k = p.k();
    let a = busy::tail_asymptotics(&p)?;
    let implied = busy::alpha_star_from_alpha(&p, a.alpha);
    let mut rows = vec![
        exact(format!("tail_beta_k{k}"), a.beta, "busy.tail_asymptotics"),
        exact(format!("tail_alpha_k{k}"), a.alpha, "busy.tail_asymptotics"),
        exact(format!("tail_alpha_star_k{k}"), a.alpha_star, "busy.tail_asymptotics"),
        gap(
            format!("alpha_star_rel_gap_k{k}"),
            (a.alpha_star - implied) / implied,
            1e-8,
            "busy.tail_asymptotics",
        ),
    ];
    if let Some(seed) = ctx.seed() {
        let ds = samples(ctx.n(), seed, |rng| Ok(busy::simulate_busy_period(&p, rng)?.duration))?;
        let n = ds.len();
        let t1 = mc::exceedance_level(&ds, n / 10);
        let t2 = mc::exceedance_level(&ds, (n / 200).max(20));
        let slope = mc::log_survival_slope(&ds, t1, t2, 20)?;
        rows.push(ReportRow {
            quantity: format!("tail_log_slope_k{k}"),
            analytic: Some(-a.beta),
            mc_mean: Some(slope),
            mc_stderr: None,
            target_ref: "busy.tail_asymptotics".into(),
            pass: Some((slope + a.beta).abs() <= 0.1 * a.beta),
        });
    }
    Ok(rows)
}

fn busy_dstar(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let p = mg_params(ctx)?;
    let k = p.k();
    let z = 1.0;
    let direct = busy::dstar_lt(&p, z)?;
    let via = busy::dstar_lt_from_duration(&p, z)?;
    let est = match ctx.seed() {
        Some(seed) => {
            let sampler = busy::DstarSampler::new(p);
            let xs = samples(ctx.n(), seed, |rng| Ok((-z * sampler.sample(rng)).exp()))?;
            Some(McEstimate::from_samples(&xs, prov(seed, ctx.n()))?)
        }
        None => None,
    };
    Ok(vec![
        with_optional_mc(
            exact(format!("dstar_lt_z1_k{k}"), direct, "busy.integrated_tail_transform"),
            est.as_ref(),
            N_SIGMAS,
        ),
        gap(
            format!("dstar_lt_route_gap_z1_k{k}"),
            direct - via,
            1e-8,
            "busy.integrated_tail_transform",
        ),
    ])
}

// ---- tagged ----

fn tagged_correlation(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let kk = ctx.cfg.k.unwrap_or(2) as usize;
    let p = TaggedParams::permutation(ctx.theta(), kk)?;
    let pairs: Vec<(usize, usize)> = (1..=kk).flat_map(|k| (1..k).map(move |j| (j, k))).collect();
    let mc_rows = match ctx.seed() {
        Some(seed) => Some(tagged::tagged_moments_mc(
            &p,
            &pairs,
            ctx.n() as usize,
            20.0,
            seed,
            N_BATCHES,
        )?),
        None => None,
    };
    let mut rows = Vec::new();
    for (i, &(j, k)) in pairs.iter().enumerate() {
        let corr = tagged::correlation(j, k)?;
        let cov = tagged::covariance(&p, j, k)?;
        let est = mc_rows.as_ref().map(|m| &m[i]);
        rows.push(with_optional_mc(
            exact(format!("cov_j{j}_k{k}"), cov, "tagged.covariance"),
            est.map(|e| &e.0),
            N_SIGMAS,
        ));
        rows.push(with_optional_mc(
            exact(format!("corr_j{j}_k{k}"), corr, "tagged.correlation"),
            est.map(|e| &e.1),
            N_SIGMAS,
        ));
        let lag = tagged::lagrange_correlation(p.rates(), j, k)?;
        rows.push(gap(
            format!("corr_lagrange_gap_j{j}_k{k}"),
            lag - corr,
            1e-9,
            "tagged.lagrange_identity",
        ));
        let bound = 0.5 * (j as f64 / k as f64).sqrt();
        rows.push(exact(format!("corr_bound_j{j}_k{k}"), bound, "tagged.correlation_bound").with_pass(corr < bound));
    }
    Ok(rows)
}

fn tagged_symmetry(ctx: &Ctx) -> Result<Vec<ReportRow>> {
    let top = ctx.cfg.k.unwrap_or(10).max(2) as usize;
    let p = TaggedParams::permutation(ctx.theta(), top)?;
    let mut worst: f64 = 0.0;
    for k in 2..=top {
        for j in 1..k {
            let a = tagged::covariance(&p, j, k)?;
            let b = tagged::covariance(&p, k - j, k)?;
            worst = worst.max((a - b).abs() / a);
        }
    }
    Ok(vec![gap(
        format!("cov_symmetry_max_rel_gap_k{top}"),
        worst,
        1e-12,
        "tagged.covariance_symmetry",
    )])
}
