use clap::Args;
use robustlt_core::data::{generate_balanced_test, generate_synthetic, write_dataset};
use robustlt_core::{GaussianTaskSpec, LongTailSpec};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::output::Ctx;

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 10)]
    pub num_classes: usize,
    /// Samples in the most frequent class.
    #[arg(long, default_value_t = 5000)]
    pub base_count: u64,
    /// Head-to-tail count ratio.
    #[arg(long, default_value_t = 100.0)]
    pub imbalance: f64,
    /// Feature dimension [default: 10, or d1 + d2].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Euclidean norm of the random class means.
    #[arg(long, default_value_t = 1.0)]
    pub mean_norm: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Binary robust/non-robust feature task: robust-feature mean.
    #[arg(long, requires_all = ["mu2", "d1", "d2"])]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub d1: Option<usize>,
    #[arg(long)]
    pub d2: Option<usize>,
    /// Per-class size of the balanced test set; 0 skips it.
    #[arg(long, default_value_t = 1000)]
    pub test_per_class: u64,
    /// Output stem: writes `<name>.csv` and `<name>_test.csv`.
    #[arg(long, default_value = "train")]
    pub name: String,
}

pub fn run(args: &GenDataArgs, ctx: &Ctx) -> Result<()> {
    let seed = ctx.seed()?;
    let task = match args.mu1 {
        Some(mu1) => {
            if args.num_classes != 2 {
                return Err(CliError::Usage("--mu1 needs --num-classes 2".into()));
            }
            let (d1, d2) = (args.d1.unwrap_or_default(), args.d2.unwrap_or_default());
            if args.dim.is_some_and(|d| d != d1 + d2) {
                return Err(CliError::Usage(format!(
                    "--dim must equal d1 + d2 = {}",
                    d1 + d2
                )));
            }
            Some(GaussianTaskSpec::new(
                mu1,
                args.mu2.unwrap_or_default(),
                d1,
                d2,
                args.sigma,
                args.imbalance,
            )?)
        }
        None => None,
    };
    let dim = task
        .as_ref()
        .map_or(args.dim.unwrap_or(10), GaussianTaskSpec::dim);
    let spec = LongTailSpec {
        num_classes: args.num_classes,
        base_count: args.base_count,
        imbalance_ratio: args.imbalance,
        seed,
    };
    let train = generate_synthetic(&spec, dim, args.mean_norm, args.sigma, task.as_ref())?;
    let train_path = ctx.out_path(&format!("{}.csv", args.name));
    write_dataset(&train, &train_path)?;
    let mut artifacts = vec![train_path.clone(), train_path.with_extension("meta")];
    println!(
        "train: {} samples, counts {:?}",
        train.len(),
        train.class_counts()
    );

    if args.test_per_class > 0 {
        let test = generate_balanced_test(&train, args.test_per_class, seed.wrapping_add(1));
        let test_path = ctx.out_path(&format!("{}_test.csv", args.name));
        write_dataset(&test, &test_path)?;
        println!(
            "test: {} samples, {} per class",
            test.len(),
            args.test_per_class
        );
        artifacts.push(test_path.clone());
        artifacts.push(test_path.with_extension("meta"));
    }

    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a GenDataArgs,
        dim_resolved: usize,
        test_seed: u64,
    }
    let resolved = Resolved {
        args,
        dim_resolved: dim,
        test_seed: seed.wrapping_add(1),
    };
    ctx.manifest("gen-data", &train_path, seed, &resolved, artifacts)?;
    Ok(())
}
