use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use robustlt_core::data::read_dataset;
use robustlt_core::metrics::aggregate;
use robustlt_core::{evaluate, AttackConfig, ClassProfile};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::output::{g6, Ctx};
use crate::train::ModelFile;

pub const EVAL_HEADER: &str = "class,train_count,test_count,nat_acc,rob_acc";

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    /// Model file written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Test set CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Attack radius [default: the training eps].
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// PGD step [default: eps / 4].
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Output CSV [default: `<model stem>_eval.csv` with `_model` dropped].
    #[arg(long)]
    pub output: Option<String>,
}

pub fn run(args: &EvalArgs, ctx: &Ctx) -> Result<()> {
    let seed = ctx.seed()?;
    let text = fs::read_to_string(&args.model).map_err(CliError::io(&args.model))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    let test = read_dataset(&args.data)?;
    let model = &file.model;
    if test.dim() != model.input_dim || test.num_classes != model.num_classes {
        return Err(CliError::Invalid(format!(
            "test set has dim {} and {} classes, model expects dim {} and {} classes",
            test.dim(),
            test.num_classes,
            model.input_dim,
            model.num_classes
        )));
    }
    let eps = args.eps.unwrap_or(file.config.schedule.eps);
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(CliError::Usage("--eps must be finite and >= 0".into()));
    }
    let attack = AttackConfig {
        steps: args.steps,
        base_step_size: args.step_size.unwrap_or(eps / 4.0),
        base_eps: eps,
        random_start: true,
        clip: file.config.clip,
    };
    let acc = evaluate(model, &test, &attack, eps, seed)?;

    let mut csv = format!("{EVAL_HEADER}\n");
    for y in 0..model.num_classes {
        writeln!(
            csv,
            "{y},{},{},{:?},{:?}",
            file.train_counts[y], acc.counts[y], acc.nat_acc[y], acc.rob_acc[y]
        )
        .unwrap();
    }
    let profile = ClassProfile::from_counts(&file.train_counts)?;
    let summary = aggregate(&acc.nat_acc, &acc.rob_acc, &profile);
    println!("eval eps={} steps={} seed={seed}", g6(eps), args.steps);
    println!(
        "all: nat {} rob {}   tail: nat {} rob {}",
        g6(summary.all_nat),
        g6(summary.all_rob),
        g6(summary.tail_nat),
        g6(summary.tail_rob)
    );

    let name = match &args.output {
        Some(o) => o.clone(),
        None => {
            let stem = args
                .model
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            format!("{}_eval.csv", stem.strip_suffix("_model").unwrap_or(&stem))
        }
    };
    let path = ctx.out_path(&name);
    ctx.write(&path, &csv)?;

    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a EvalArgs,
        eps_resolved: f64,
        attack: AttackConfig,
    }
    let resolved = Resolved {
        args,
        eps_resolved: eps,
        attack,
    };
    ctx.manifest("eval", &path, seed, &resolved, vec![path.clone()])?;
    Ok(())
}
