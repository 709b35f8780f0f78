use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use robustlt_core::data::read_dataset;
use robustlt_core::metrics::w_inf_budget;
use robustlt_core::{class_counts, cpb_intensities, ClassProfile, LongTailSpec};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::output::{g6, Ctx};

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(clap::ArgGroup::new("profile").required(true).args(["counts", "data", "num_classes"])))]
pub struct ScheduleArgs {
    /// Per-class training counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<u64>>,
    /// Take the counts from a dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Build a long-tail profile with this many classes.
    #[arg(long, requires_all = ["base_count", "imbalance"])]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub base_count: Option<u64>,
    #[arg(long)]
    pub imbalance: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epoch shown in the `eps_at_t` column [default: last].
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long, default_value = "schedule.csv")]
    pub output: String,
}

pub fn run(args: &ScheduleArgs, ctx: &Ctx) -> Result<()> {
    let base = ctx.base_config()?;
    let counts = match (&args.counts, &args.data, args.num_classes) {
        (Some(c), _, _) => c.clone(),
        (_, Some(path), _) => read_dataset(path)?.class_counts(),
        (_, _, Some(n)) => class_counts(&LongTailSpec {
            num_classes: n,
            base_count: args.base_count.unwrap_or_default(),
            imbalance_ratio: args.imbalance.unwrap_or(1.0),
            seed: base.seed,
        })?,
        _ => unreachable!("clap requires one profile source"),
    };
    let profile = ClassProfile::from_counts(&counts)?;
    let mut cfg = base.schedule;
    cfg.eps = args.eps.unwrap_or(cfg.eps);
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.beta = args.beta.unwrap_or(cfg.beta);
    cfg.total_iterations = args.epochs.unwrap_or(cfg.total_iterations);
    let table = cpb_intensities(&profile, &cfg)?;
    let t = args.t.unwrap_or(cfg.total_iterations);
    if t == 0 {
        return Err(CliError::Usage("--t is 1-based".into()));
    }

    let mut csv = String::from("class,count,freq,K_y,eps_max,eps_at_t\n");
    for y in 0..profile.num_classes() {
        writeln!(
            csv,
            "{y},{},{:?},{:?},{:?},{:?}",
            counts[y],
            profile.frequencies()[y],
            profile.imbalance_ratios()[y],
            table.eps_max()[y],
            table.eps_at(t, y)
        )
        .unwrap();
    }
    let residual = w_inf_budget(&profile, table.eps_max()) - cfg.eps;
    if table.is_degenerate() {
        println!("warning: balanced profile with alpha > 0, every class uses eps");
    }
    println!(
        "classes={} eps={} alpha={} beta={} epochs={} t={}",
        profile.num_classes(),
        g6(cfg.eps),
        g6(cfg.alpha),
        g6(cfg.beta),
        cfg.total_iterations,
        t
    );
    println!("tau={}", g6(table.tau()));
    println!("budget residual={}", g6(residual));
    println!(
        "{:<6} {:<8} {:<12} {:<12} {:<12}",
        "class", "count", "eps_max", "eps_at_t", "K_y"
    );
    for y in 0..profile.num_classes() {
        println!(
            "{:<6} {:<8} {:<12} {:<12} {:<12}",
            y,
            counts[y],
            g6(table.eps_max()[y]),
            g6(table.eps_at(t, y)),
            g6(profile.imbalance_ratios()[y])
        );
    }

    let path = ctx.out_path(&args.output);
    ctx.write(&path, &csv)?;

    #[derive(Serialize)]
    struct Resolved {
        counts: Vec<u64>,
        eps: f64,
        alpha: f64,
        beta: f64,
        epochs: usize,
        t: usize,
        tau: f64,
        degenerate: bool,
    }
    let resolved = Resolved {
        counts,
        eps: cfg.eps,
        alpha: cfg.alpha,
        beta: cfg.beta,
        epochs: cfg.total_iterations,
        t,
        tau: table.tau(),
        degenerate: table.is_degenerate(),
    };
    ctx.manifest("schedule", &path, base.seed, &resolved, vec![path.clone()])?;
    Ok(())
}
