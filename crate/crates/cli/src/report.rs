use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use robustlt_core::metrics::{aggregate, robust_risk_from_accuracy, skew_decomposition};
use robustlt_core::train::{parse_history, HISTORY_HEADER};
use robustlt_core::ClassProfile;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::eval::EVAL_HEADER;
use crate::output::{g6, Ctx};

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Eval CSV or metric history of the reference run.
    #[arg(long)]
    pub baseline: PathBuf,
    /// Eval CSV or metric history of the compared run.
    #[arg(long)]
    pub candidate: PathBuf,
    /// Training counts; required when comparing histories.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<u64>>,
    #[arg(long, default_value = "report.csv")]
    pub output: String,
}

struct Metrics {
    nat: Vec<f64>,
    rob: Vec<f64>,
    counts: Option<Vec<u64>>,
}

fn parse_f64(path: &Path, line: usize, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Invalid(format!("{}:{line}: bad number `{v}`", path.display())))
}

/// Per-class accuracies from an eval CSV, or from the last epoch of a
/// metric history.
fn load(path: &Path) -> Result<Metrics> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let header = text.lines().next().unwrap_or_default().trim();
    if header == HISTORY_HEADER {
        let history = parse_history(&text)?;
        let last = history
            .last()
            .ok_or_else(|| CliError::Invalid(format!("{}: empty history", path.display())))?;
        return Ok(Metrics {
            nat: last.classes.iter().map(|c| c.nat_acc).collect(),
            rob: last.classes.iter().map(|c| c.rob_acc).collect(),
            counts: None,
        });
    }
    if header != EVAL_HEADER {
        return Err(CliError::Invalid(format!(
            "{}: header `{header}` is neither an eval CSV nor a metric history",
            path.display()
        )));
    }
    let mut m = Metrics {
        nat: Vec::new(),
        rob: Vec::new(),
        counts: Some(Vec::new()),
    };
    for (i, row) in text.lines().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 5 {
            return Err(CliError::Invalid(format!(
                "{}:{}: expected 5 columns, found {}",
                path.display(),
                i + 1,
                cols.len()
            )));
        }
        let count = cols[1].trim().parse().map_err(|_| {
            CliError::Invalid(format!(
                "{}:{}: bad count `{}`",
                path.display(),
                i + 1,
                cols[1]
            ))
        })?;
        m.counts
            .as_mut()
            .expect("eval rows carry counts")
            .push(count);
        m.nat.push(parse_f64(path, i + 1, cols[3])?);
        m.rob.push(parse_f64(path, i + 1, cols[4])?);
    }
    Ok(m)
}

pub fn run(args: &ReportArgs, ctx: &Ctx) -> Result<()> {
    let seed = ctx.seed()?;
    let base = load(&args.baseline)?;
    let cand = load(&args.candidate)?;
    if base.nat.len() != cand.nat.len() {
        return Err(CliError::Invalid(format!(
            "baseline has {} classes, candidate has {}",
            base.nat.len(),
            cand.nat.len()
        )));
    }
    let counts = match (&args.counts, &base.counts, &cand.counts) {
        (Some(c), _, _) => c.clone(),
        (None, Some(a), Some(b)) if a == b => a.clone(),
        (None, Some(_), Some(_)) => {
            return Err(CliError::Invalid(
                "baseline and candidate were trained on different counts".into(),
            ))
        }
        _ => {
            return Err(CliError::Usage(
                "--counts is required when comparing histories".into(),
            ))
        }
    };
    if counts.len() != base.nat.len() {
        return Err(CliError::Invalid(format!(
            "{} counts for {} classes",
            counts.len(),
            base.nat.len()
        )));
    }
    let profile = ClassProfile::from_counts(&counts)?;

    let summarize = |m: &Metrics| {
        let agg = aggregate(&m.nat, &m.rob, &profile);
        let skew = skew_decomposition(&robust_risk_from_accuracy(&m.rob), &profile).skew;
        let max = m.rob.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = m.rob.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut rows = vec![
            ("all_nat".to_string(), agg.all_nat),
            ("all_rob".to_string(), agg.all_rob),
            ("tail_nat".to_string(), agg.tail_nat),
            ("tail_rob".to_string(), agg.tail_rob),
            ("rob_gap".to_string(), max - min),
            ("skew".to_string(), skew),
        ];
        for y in 0..m.nat.len() {
            rows.push((format!("class{y}_nat"), m.nat[y]));
            rows.push((format!("class{y}_rob"), m.rob[y]));
        }
        rows
    };
    let a = summarize(&base);
    let b = summarize(&cand);

    let mut csv = String::from("metric,baseline,candidate,delta\n");
    println!(
        "{:<12} {:<12} {:<12} {:<12}",
        "metric", "baseline", "candidate", "delta"
    );
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        writeln!(csv, "{name},{x:?},{y:?},{:?}", y - x).unwrap();
        println!(
            "{:<12} {:<12} {:<12} {:<12}",
            name,
            g6(*x),
            g6(*y),
            g6(y - x)
        );
    }

    let path = ctx.out_path(&args.output);
    ctx.write(&path, &csv)?;

    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a ReportArgs,
        counts_resolved: &'a [u64],
    }
    let resolved = Resolved {
        args,
        counts_resolved: &counts,
    };
    ctx.manifest("report", &path, seed, &resolved, vec![path.clone()])?;
    Ok(())
}
