//! Adversarial training with optional class-wise, epoch-weighted
//! intensities, and per-class evaluation under a PGD attack.
//!
//! One epoch of training:
//!
//! 1. look up `ε_y^(t)` for every class (constant `ε` without enhancement);
//! 2. for each minibatch, attack every sample at its class intensity with the
//!    step size scaled by `ε_y^(t) / ε`;
//! 3. take one SGD-with-momentum step on the base loss of the adversarial
//!    batch.
//!
//! Everything runs from one ChaCha stream seeded by the config, so a run is a
//! pure function of its inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{pgd_attack, AttackConfig};
use crate::data::Dataset;
use crate::model::{ClassifierModel, LossFn, LossTag, ModelError, ModelKind};
use crate::schedules::{
    cpb_intensities, ClassProfile, IntensityTable, ScheduleConfig, ScheduleError,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("history line {line}: {reason}")]
    BadHistory { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enhance {
    None,
    RobustLt,
}

impl std::str::FromStr for Enhance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "robustlt" => Ok(Self::RobustLt),
            _ => Err(format!("unknown enhancement `{s}` (none|robustlt)")),
        }
    }
}

impl std::fmt::Display for Enhance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::RobustLt => "robustlt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub hidden: usize,
    pub opt: OptimizerConfig,
    pub schedule: ScheduleConfig,
    pub attack_steps: usize,
    pub attack_step_size: f64,
    pub random_start: bool,
    pub clip: Option<(f64, f64)>,
    pub base: LossTag,
    pub enhance: Enhance,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Linear,
            hidden: 32,
            opt: OptimizerConfig::default(),
            schedule: ScheduleConfig {
                eps: 8.0 / 255.0,
                alpha: 0.3,
                beta: 0.4,
                total_iterations: 50,
            },
            attack_steps: 10,
            attack_step_size: 2.0 / 255.0,
            random_start: true,
            clip: None,
            base: LossTag::At,
            enhance: Enhance::None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn attack(&self) -> AttackConfig {
        AttackConfig {
            steps: self.attack_steps,
            base_step_size: self.attack_step_size,
            base_eps: self.schedule.eps,
            random_start: self.random_start,
            clip: self.clip,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.schedule.validate()?;
        let o = &self.opt;
        if !(o.lr.is_finite() && o.lr > 0.0) {
            return Err(TrainError::Config("opt.lr must be > 0".into()));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return Err(TrainError::Config("opt.momentum must lie in [0, 1)".into()));
        }
        if !(o.weight_decay.is_finite() && o.weight_decay >= 0.0) {
            return Err(TrainError::Config("opt.weight_decay must be >= 0".into()));
        }
        if o.batch_size == 0 {
            return Err(TrainError::Config("opt.batch_size must be positive".into()));
        }
        if self.attack_steps == 0 {
            return Err(TrainError::Config("attack.steps must be positive".into()));
        }
        if !(self.attack_step_size.is_finite() && self.attack_step_size > 0.0) {
            return Err(TrainError::Config("attack.step_size must be > 0".into()));
        }
        if self.model == ModelKind::Mlp1 && self.hidden == 0 {
            return Err(TrainError::Config(
                "model.hidden must be positive for mlp1".into(),
            ));
        }
        Ok(())
    }

    /// Applies `key=value` settings on top of `self`. Blank lines and
    /// `#` comments are skipped; unknown keys are errors.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), TrainError> {
        for (i, raw) in text.lines().enumerate() {
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| TrainError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse()
                .map_err(|_| format!("bad value `{v}` for `{key}`"))
        }
        match key {
            "model.kind" => self.model = value.parse()?,
            "model.hidden" => self.hidden = num(key, value)?,
            "opt.lr" => self.opt.lr = num(key, value)?,
            "opt.momentum" => self.opt.momentum = num(key, value)?,
            "opt.weight_decay" => self.opt.weight_decay = num(key, value)?,
            "opt.batch_size" => self.opt.batch_size = num(key, value)?,
            "sched.eps" => self.schedule.eps = num(key, value)?,
            "sched.alpha" => self.schedule.alpha = num(key, value)?,
            "sched.beta" => self.schedule.beta = num(key, value)?,
            "sched.epochs" => self.schedule.total_iterations = num(key, value)?,
            "attack.steps" => self.attack_steps = num(key, value)?,
            "attack.step_size" => self.attack_step_size = num(key, value)?,
            "attack.random_start" => self.random_start = num(key, value)?,
            "attack.clip" => {
                self.clip = match value {
                    "" | "none" => None,
                    v => {
                        let (lo, hi) = v
                            .split_once(',')
                            .ok_or_else(|| format!("attack.clip expects `lo,hi`, got `{v}`"))?;
                        Some((num(key, lo.trim())?, num(key, hi.trim())?))
                    }
                }
            }
            "base" => self.base = value.parse()?,
            "enhance" => self.enhance = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(format!("unknown config key `{other}`")),
        }
        Ok(())
    }

    /// All settings as `key=value` lines, readable by [`Self::apply_kv`].
    pub fn to_kv(&self) -> String {
        let clip = match self.clip {
            Some((lo, hi)) => format!("{lo:?},{hi:?}"),
            None => "none".into(),
        };
        format!(
            "model.kind={}\nmodel.hidden={}\nopt.lr={:?}\nopt.momentum={:?}\nopt.weight_decay={:?}\n\
             opt.batch_size={}\nsched.eps={:?}\nsched.alpha={:?}\nsched.beta={:?}\nsched.epochs={}\n\
             attack.steps={}\nattack.step_size={:?}\nattack.random_start={}\nattack.clip={clip}\n\
             base={}\nenhance={}\nseed={}\n",
            self.model,
            self.hidden,
            self.opt.lr,
            self.opt.momentum,
            self.opt.weight_decay,
            self.opt.batch_size,
            self.schedule.eps,
            self.schedule.alpha,
            self.schedule.beta,
            self.schedule.total_iterations,
            self.attack_steps,
            self.attack_step_size,
            self.random_start,
            self.base,
            self.enhance,
            self.seed,
        )
    }
}

/// Training metrics of one class in one epoch, measured on the minibatches
/// with the model as it was before each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassEpochMetrics {
    pub eps_t: f64,
    pub nat_acc: f64,
    pub rob_acc: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub classes: Vec<ClassEpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: ClassifierModel,
    pub epoch: usize,
    pub schedule: IntensityTable,
    pub seed: u64,
    pub train_counts: Vec<u64>,
    pub history: Vec<EpochRecord>,
}

/// Intensity table the trainer uses for `enhance`.
pub fn intensity_table(
    profile: &ClassProfile,
    cfg: &ScheduleConfig,
    enhance: Enhance,
) -> Result<IntensityTable, ScheduleError> {
    match enhance {
        Enhance::None => {
            cfg.validate()?;
            Ok(IntensityTable::constant(profile.num_classes(), *cfg))
        }
        Enhance::RobustLt => cpb_intensities(profile, cfg),
    }
}

/// Runs all epochs. `on_epoch` sees the state after each epoch.
pub fn train_with<F: FnMut(&TrainState)>(
    train_set: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainState, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    let counts = train_set.class_counts();
    let profile = ClassProfile::from_counts(&counts)?;
    let schedule = intensity_table(&profile, &cfg.schedule, cfg.enhance)?;
    let loss = LossFn::new(cfg.base, Some(&counts))?;
    let attack = cfg.attack();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = ClassifierModel::init(
        cfg.model,
        train_set.dim(),
        train_set.num_classes,
        cfg.hidden,
        &mut rng,
    )?;
    let mut state = TrainState {
        model,
        epoch: 0,
        schedule,
        seed: cfg.seed,
        train_counts: counts,
        history: Vec::new(),
    };

    let n_classes = train_set.num_classes;
    let n_params = state.model.num_params();
    let mut velocity = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for t in 1..=cfg.schedule.total_iterations {
        let eps_row = state.schedule.eps_row(t);
        order.shuffle(&mut rng);

        let mut seen = vec![0usize; n_classes];
        let mut nat_ok = vec![0usize; n_classes];
        let mut rob_ok = vec![0usize; n_classes];
        let mut loss_sum = vec![0.0; n_classes];

        for batch in order.chunks(cfg.opt.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &train_set.features[i];
                let y = train_set.labels[i];
                let x_adv = pgd_attack(&state.model, x, y, eps_row[y], &attack, &loss, &mut rng)?;
                seen[y] += 1;
                nat_ok[y] += usize::from(state.model.predict(x)? == y);
                rob_ok[y] += usize::from(state.model.predict(&x_adv)? == y);
                let (value, _) =
                    state
                        .model
                        .backward(&x_adv, y, &loss, Some((&mut grad, scale)))?;
                if !value.is_finite() {
                    return Err(TrainError::Diverged {
                        epoch: t,
                        loss: value,
                    });
                }
                loss_sum[y] += value;
            }
            let o = &cfg.opt;
            for ((p, v), g) in state.model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                let g = g + o.weight_decay * *p;
                *v = o.momentum * *v + g;
                *p -= o.lr * *v;
            }
            if let Some(bad) = state.model.params.iter().find(|p| !p.is_finite()) {
                return Err(TrainError::Diverged {
                    epoch: t,
                    loss: *bad,
                });
            }
        }

        let ratio = |ok: usize, n: usize| if n == 0 { 0.0 } else { ok as f64 / n as f64 };
        state.history.push(EpochRecord {
            epoch: t,
            classes: (0..n_classes)
                .map(|c| ClassEpochMetrics {
                    eps_t: eps_row[c],
                    nat_acc: ratio(nat_ok[c], seen[c]),
                    rob_acc: ratio(rob_ok[c], seen[c]),
                    train_loss: if seen[c] == 0 {
                        0.0
                    } else {
                        loss_sum[c] / seen[c] as f64
                    },
                })
                .collect(),
        });
        state.epoch = t;
        on_epoch(&state);
    }
    Ok(state)
}

pub fn train(train_set: &Dataset, cfg: &TrainConfig) -> Result<TrainState, TrainError> {
    train_with(train_set, cfg, |_| {})
}

/// Per-class accuracies on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub nat_acc: Vec<f64>,
    pub rob_acc: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Clean and PGD accuracy per class. The attack uses the same `eval_eps`
/// for every class; each sample draws its random start from its own
/// stream `(seed, index)`.
pub fn evaluate(
    model: &ClassifierModel,
    test_set: &Dataset,
    attack: &AttackConfig,
    eval_eps: f64,
    seed: u64,
) -> Result<ClassAccuracy, ModelError> {
    if !test_set.is_balanced() {
        log::warn!("evaluating on an unbalanced test set; accuracies are still per class");
    }
    let loss = LossFn::cross_entropy();
    let outcomes = (0..test_set.len())
        .into_par_iter()
        .map(|i| {
            let x = &test_set.features[i];
            let y = test_set.labels[i];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let nat = model.predict(x)? == y;
            let adv = pgd_attack(model, x, y, eval_eps, attack, &loss, &mut rng)?;
            let rob = model.predict(&adv)? == y;
            Ok((y, nat, rob))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;

    let n = test_set.num_classes;
    let mut counts = vec![0usize; n];
    let mut nat = vec![0usize; n];
    let mut rob = vec![0usize; n];
    for (y, a, b) in outcomes {
        counts[y] += 1;
        nat[y] += usize::from(a);
        rob[y] += usize::from(b);
    }
    let ratio = |ok: &[usize]| {
        ok.iter()
            .zip(&counts)
            .map(|(&k, &c)| if c == 0 { 0.0 } else { k as f64 / c as f64 })
            .collect()
    };
    Ok(ClassAccuracy {
        nat_acc: ratio(&nat),
        rob_acc: ratio(&rob),
        counts,
    })
}

pub const HISTORY_HEADER: &str = "epoch,class,eps_t,nat_acc,rob_acc,train_loss";

/// Metric history as CSV, one row per (epoch, class), full precision.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for rec in history {
        for (c, m) in rec.classes.iter().enumerate() {
            writeln!(
                out,
                "{},{c},{:?},{:?},{:?},{:?}",
                rec.epoch, m.eps_t, m.nat_acc, m.rob_acc, m.train_loss
            )
            .unwrap();
        }
    }
    out
}

pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<(), TrainError> {
    fs::write(path, history_csv(history)).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_history(text: &str) -> Result<Vec<EpochRecord>, TrainError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HISTORY_HEADER => {}
        _ => {
            return Err(TrainError::BadHistory {
                line: 1,
                reason: format!("expected header `{HISTORY_HEADER}`"),
            })
        }
    }
    let mut by_epoch: BTreeMap<usize, BTreeMap<usize, ClassEpochMetrics>> = BTreeMap::new();
    for (i, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let bad = |reason: String| TrainError::BadHistory { line, reason };
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad(format!("expected 6 columns, found {}", f.len())));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(format!("bad integer `{s}`")))
        };
        let real = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("bad number `{s}`")))
        };
        by_epoch.entry(int(f[0])?).or_default().insert(
            int(f[1])?,
            ClassEpochMetrics {
                eps_t: real(f[2])?,
                nat_acc: real(f[3])?,
                rob_acc: real(f[4])?,
                train_loss: real(f[5])?,
            },
        );
    }
    Ok(by_epoch
        .into_iter()
        .map(|(epoch, classes)| EpochRecord {
            epoch,
            classes: classes.into_values().collect(),
        })
        .collect())
}
