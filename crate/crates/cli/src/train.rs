use std::path::PathBuf;

use clap::Args;
use robustlt_core::data::read_dataset;
use robustlt_core::train::{history_csv, train_with};
use robustlt_core::{ClassifierModel, Enhance, LossTag, ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::output::{g6, Ctx};

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Training set CSV (with its `.meta` sidecar).
    #[arg(long)]
    pub data: PathBuf,
    /// `none` or `robustlt`.
    #[arg(long)]
    pub enhance: Option<Enhance>,
    /// `linear` or `mlp1`.
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Base loss, `AT` or `BSL`.
    #[arg(long)]
    pub base: Option<LossTag>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub attack_steps: Option<usize>,
    /// PGD step at full intensity [default: eps / 4].
    #[arg(long)]
    pub attack_step_size: Option<f64>,
    /// Any config key, e.g. `--set opt.momentum=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output stem [default: the enhance mode].
    #[arg(long)]
    pub name: Option<String>,
}

/// Trained weights with what is needed to evaluate and report on them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: ClassifierModel,
    pub train_counts: Vec<u64>,
    pub epochs: usize,
    pub config: TrainConfig,
}

fn resolve(args: &TrainArgs, ctx: &Ctx) -> Result<TrainConfig> {
    let mut cfg = ctx.base_config()?;
    let mut step_given = ctx.config_sets("attack.step_size");
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim()).map_err(CliError::Usage)?;
        step_given |= k.trim() == "attack.step_size";
    }
    if let Some(v) = args.enhance {
        cfg.enhance = v;
    }
    if let Some(v) = args.model {
        cfg.model = v;
    }
    if let Some(v) = args.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = args.base {
        cfg.base = v;
    }
    if let Some(v) = args.eps {
        cfg.schedule.eps = v;
    }
    if let Some(v) = args.alpha {
        cfg.schedule.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.schedule.beta = v;
    }
    if let Some(v) = args.epochs {
        cfg.schedule.total_iterations = v;
    }
    if let Some(v) = args.lr {
        cfg.opt.lr = v;
    }
    if let Some(v) = args.batch_size {
        cfg.opt.batch_size = v;
    }
    if let Some(v) = args.attack_steps {
        cfg.attack_steps = v;
    }
    match args.attack_step_size {
        Some(v) => cfg.attack_step_size = v,
        None if !step_given => cfg.attack_step_size = cfg.schedule.eps / 4.0,
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: &TrainArgs, ctx: &Ctx) -> Result<()> {
    let cfg = resolve(args, ctx)?;
    let data = read_dataset(&args.data)?;
    let name = args.name.clone().unwrap_or_else(|| cfg.enhance.to_string());
    let total = cfg.schedule.total_iterations;

    let state = train_with(&data, &cfg, |s| {
        let last = s.history.last().expect("one record per epoch");
        let n = last.classes.len() as f64;
        let rob = last.classes.iter().map(|c| c.rob_acc).sum::<f64>() / n;
        log::info!(
            "epoch {}/{total}: mean train rob acc {}",
            last.epoch,
            g6(rob)
        );
    })?;

    let history_path = ctx.out_path(&format!("{name}_history.csv"));
    ctx.write(&history_path, &history_csv(&state.history))?;
    let model_path = ctx.out_path(&format!("{name}_model.json"));
    let file = ModelFile {
        model: state.model,
        train_counts: state.train_counts,
        epochs: state.epoch,
        config: cfg.clone(),
    };
    ctx.write(&model_path, &(serde_json::to_string_pretty(&file)? + "\n"))?;

    if let Some(last) = state.history.last() {
        println!(
            "{:<6} {:<10} {:<10} {:<10} {:<10}",
            "class", "eps_t", "nat_acc", "rob_acc", "loss"
        );
        for (y, c) in last.classes.iter().enumerate() {
            println!(
                "{:<6} {:<10} {:<10} {:<10} {:<10}",
                y,
                g6(c.eps_t),
                g6(c.nat_acc),
                g6(c.rob_acc),
                g6(c.train_loss)
            );
        }
    }
    println!(
        "wrote {} and {}",
        model_path.display(),
        history_path.display()
    );

    #[derive(Serialize)]
    struct Resolved<'a> {
        data: &'a PathBuf,
        name: &'a str,
        #[serde(flatten)]
        config: &'a TrainConfig,
    }
    let resolved = Resolved {
        data: &args.data,
        name: &name,
        config: &cfg,
    };
    ctx.manifest(
        "train",
        &model_path,
        cfg.seed,
        &resolved,
        vec![model_path.clone(), history_path],
    )?;
    Ok(())
}
