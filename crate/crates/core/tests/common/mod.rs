#![allow(dead_code)]

use rand::Rng;
use robustlt_core::data::{generate_balanced_test, generate_synthetic};
use robustlt_core::theory::BiasGeometry;
use robustlt_core::train::ClassAccuracy;
use robustlt_core::{
    evaluate, train, AttackConfig, ClassifierModel, Dataset, Enhance, GaussianTaskSpec,
    LinearHypothesis, LongTailSpec, LossFn, LossTag, ModelKind, ScheduleConfig, TrainConfig,
};

/// Random task with `0 < μ2 < μ1`.
pub fn random_task<R: Rng>(
    rng: &mut R,
    max_d: usize,
    sigma: (f64, f64),
    k: (f64, f64),
) -> GaussianTaskSpec {
    let mu2 = rng.random_range(0.05..1.0);
    let mu1 = mu2 + rng.random_range(0.05..1.5);
    let d1 = rng.random_range(1..=max_d);
    let d2 = rng.random_range(1..=max_d);
    let sigma = rng.random_range(sigma.0..sigma.1);
    let k = if k.0 == k.1 {
        k.0
    } else {
        rng.random_range(k.0..k.1)
    };
    GaussianTaskSpec::new(mu1, mu2, d1, d2, sigma, k).unwrap()
}

pub fn random_hypothesis<R: Rng>(
    rng: &mut R,
    task: &GaussianTaskSpec,
    bias: f64,
) -> LinearHypothesis {
    let w: Vec<f64> = (0..task.dim())
        .map(|_| rng.random_range(0.05..1.0))
        .collect();
    LinearHypothesis::new(w, bias, task.d1()).unwrap()
}

/// An admissible `(task, h, ε₊)` triple with `K > 1`, or `None` when the
/// draw has no admissible `ε₊ ≥ 0`.
pub fn admissible_triple<R: Rng>(rng: &mut R) -> Option<(GaussianTaskSpec, LinearHypothesis, f64)> {
    let task = random_task(rng, 5, (0.2, 1.5), (1.05, 50.0));
    let h = random_hypothesis(rng, &task, 0.0);
    let geom = BiasGeometry::from_task(&task, &h).unwrap();
    let bound = geom.a_point - geom.balance_gap();
    if bound <= 0.0 {
        return None;
    }
    let eps_plus = rng.random_range(0.0..0.95) * bound;
    Some((task, h, eps_plus))
}

/// Binary long-tail task used by the desk-scale experiments:
/// `K = 10`, `d = 10`, `μ1 = 1`, `μ2 = 0.2`, `σ = 0.5`, 2000 samples.
pub fn binary_task() -> GaussianTaskSpec {
    GaussianTaskSpec::new(1.0, 0.2, 5, 5, 0.5, 10.0).unwrap()
}

pub fn binary_train_set(seed: u64) -> Dataset {
    let task = binary_task();
    let spec = LongTailSpec {
        num_classes: 2,
        base_count: 1818,
        imbalance_ratio: 10.0,
        seed,
    };
    generate_synthetic(&spec, task.dim(), 1.0, task.sigma(), Some(&task)).unwrap()
}

pub const TRAIN_EPS: f64 = 0.1;
pub const EVAL_EPS: f64 = 0.3;
pub const EVAL_PER_CLASS: u64 = 5000;
pub const EVAL_SEED: u64 = 7;

pub fn binary_config(seed: u64, enhance: Enhance, alpha: f64, beta: f64) -> TrainConfig {
    let mut cfg = TrainConfig {
        model: ModelKind::Linear,
        base: LossTag::At,
        enhance,
        seed,
        schedule: ScheduleConfig {
            eps: TRAIN_EPS,
            alpha,
            beta,
            total_iterations: 50,
        },
        attack_steps: 10,
        attack_step_size: TRAIN_EPS / 4.0,
        ..TrainConfig::default()
    };
    cfg.opt.lr = 0.05;
    cfg.opt.batch_size = 128;
    cfg
}

/// Trains on the binary task and evaluates on a fresh balanced set.
pub fn binary_run(seed: u64, enhance: Enhance) -> ClassAccuracy {
    let train_set = binary_train_set(seed);
    let state = train(&train_set, &binary_config(seed, enhance, 0.3, 0.4)).unwrap();
    let test_set = generate_balanced_test(&train_set, EVAL_PER_CLASS, 10_000 + seed);
    evaluate(
        &state.model,
        &test_set,
        &AttackConfig::evaluation(EVAL_EPS),
        EVAL_EPS,
        EVAL_SEED,
    )
    .unwrap()
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, with a floor on the denominator.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2(&diff) / l2(a).max(l2(b)).max(1e-8)
}

/// Central differences of the loss w.r.t. the parameters.
pub fn fd_param_grad(
    model: &ClassifierModel,
    x: &[f64],
    y: usize,
    loss: &LossFn,
    h: f64,
) -> Vec<f64> {
    let mut m = model.clone();
    (0..m.params.len())
        .map(|i| {
            let p = m.params[i];
            m.params[i] = p + h;
            let up = m.loss(x, y, loss).unwrap();
            m.params[i] = p - h;
            let down = m.loss(x, y, loss).unwrap();
            m.params[i] = p;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central differences of the loss w.r.t. the input.
pub fn fd_input_grad(
    model: &ClassifierModel,
    x: &[f64],
    y: usize,
    loss: &LossFn,
    h: f64,
) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = model.loss(&xp, y, loss).unwrap();
            xp[i] = x[i] - h;
            let down = model.loss(&xp, y, loss).unwrap();
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Random model with non-zero biases.
pub fn random_model<R: Rng>(
    rng: &mut R,
    kind: ModelKind,
    d: usize,
    c: usize,
    hidden: usize,
) -> ClassifierModel {
    let mut m = ClassifierModel::init(kind, d, c, hidden, rng).unwrap();
    for p in m.params.iter_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    m
}

pub fn random_point<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}
