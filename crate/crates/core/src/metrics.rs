//! Evaluation aggregates and distribution-shift diagnostics.

use serde::{Deserialize, Serialize};

use crate::schedules::ClassProfile;

/// Fraction of classes, by ascending training count, reported as "tail".
pub const TAIL_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub per_class_nat: Vec<f64>,
    pub per_class_rob: Vec<f64>,
    pub all_nat: f64,
    pub all_rob: f64,
    pub tail_nat: f64,
    pub tail_rob: f64,
    pub tail_indices: Vec<usize>,
}

/// The `⌊0.8·|Y| + 0.5⌋` classes with the fewest training samples. Among
/// equal counts the higher class index is taken first.
pub fn tail_classes(profile: &ClassProfile) -> Vec<usize> {
    let n = profile.num_classes();
    let k = (TAIL_FRACTION * n as f64 + 0.5).floor() as usize;
    let counts = profile.counts();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)));
    let mut tail: Vec<usize> = order.into_iter().take(k).collect();
    tail.sort_unstable();
    tail
}

fn mean_of(values: &[f64], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
}

/// Macro averages over all classes and over the tail.
///
/// # Panics
///
/// If the accuracy vectors do not have one entry per profile class.
pub fn aggregate(
    per_class_nat: &[f64],
    per_class_rob: &[f64],
    profile: &ClassProfile,
) -> MetricRecord {
    let n = profile.num_classes();
    assert_eq!(per_class_nat.len(), n, "natural accuracy length");
    assert_eq!(per_class_rob.len(), n, "robust accuracy length");
    let all: Vec<usize> = (0..n).collect();
    let tail = tail_classes(profile);
    MetricRecord {
        per_class_nat: per_class_nat.to_vec(),
        per_class_rob: per_class_rob.to_vec(),
        all_nat: mean_of(per_class_nat, &all),
        all_rob: mean_of(per_class_rob, &all),
        tail_nat: mean_of(per_class_nat, &tail),
        tail_rob: mean_of(per_class_rob, &tail),
        tail_indices: tail,
    }
}

/// Balanced-minus-imbalanced robust risk, split per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewReport {
    pub per_class_rob_risk: Vec<f64>,
    pub head_class: usize,
    /// `(1/|Y| − P(y_i))·(R(y_i) − R(y_head))`; zero at the head class.
    pub terms: Vec<f64>,
    pub skew: f64,
}

/// `R(h, P̄) − R(h, P) = Σ_i (1/|Y| − P(y_i))·(R(y_i) − R(y_1))` with `y_1`
/// the most frequent class.
pub fn skew_decomposition(per_class_rob_risk: &[f64], profile: &ClassProfile) -> SkewReport {
    let n = profile.num_classes();
    assert_eq!(per_class_rob_risk.len(), n, "risk vector length");
    let head = profile.head_class();
    let uniform = 1.0 / n as f64;
    let terms: Vec<f64> = profile
        .frequencies()
        .iter()
        .zip(per_class_rob_risk)
        .enumerate()
        .map(|(i, (p, r))| {
            if i == head {
                0.0
            } else {
                (uniform - p) * (r - per_class_rob_risk[head])
            }
        })
        .collect();
    SkewReport {
        per_class_rob_risk: per_class_rob_risk.to_vec(),
        head_class: head,
        skew: terms.iter().sum(),
        terms,
    }
}

/// Empirical 0-1 robust risk per class.
pub fn robust_risk_from_accuracy(rob_acc: &[f64]) -> Vec<f64> {
    rob_acc.iter().map(|a| 1.0 - a).collect()
}

/// `Σ_y P(y)·ε_y`, the upper bound on the ∞-Wasserstein distance between
/// the clean and the adversarial training distributions.
pub fn w_inf_budget(profile: &ClassProfile, intensities: &[f64]) -> f64 {
    assert_eq!(intensities.len(), profile.num_classes(), "intensity length");
    profile
        .frequencies()
        .iter()
        .zip(intensities)
        .map(|(p, e)| p * e)
        .sum()
}
