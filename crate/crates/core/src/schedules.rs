//! Class-wise perturbation balancing and adversarial iteration weighting.
//!
//! Every class `y` gets a ceiling intensity
//!
//! ```text
//! ε_y = (1 − α)·ε + τ·√(log K_y)·ε,   τ = α / Σ_y' P(y')·√(log K_y')
//! ```
//!
//! which keeps the expected intensity `Σ_y P(y)·ε_y` equal to `ε`. During
//! training the ceiling is ramped in linearly over the first `βT` epochs:
//! `ε_y^(t) = min((t − 1)/(βT), 1)·ε_y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("class profile needs at least one class")]
    EmptyProfile,
    #[error("class {class} has zero samples")]
    EmptyClass { class: usize },
    #[error("invalid schedule parameter `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

/// Per-class training counts and the quantities derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    counts: Vec<u64>,
    frequencies: Vec<f64>,
    imbalance_ratios: Vec<f64>,
}

impl ClassProfile {
    pub fn from_counts(counts: &[u64]) -> Result<Self, ScheduleError> {
        if counts.is_empty() {
            return Err(ScheduleError::EmptyProfile);
        }
        if let Some(class) = counts.iter().position(|&n| n == 0) {
            return Err(ScheduleError::EmptyClass { class });
        }
        let total: u64 = counts.iter().sum();
        let n_max = *counts.iter().max().expect("non-empty");
        Ok(Self {
            counts: counts.to_vec(),
            frequencies: counts.iter().map(|&n| n as f64 / total as f64).collect(),
            imbalance_ratios: counts.iter().map(|&n| n_max as f64 / n as f64).collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `P(y) = n_y / N`.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// `K_y = n_max / n_y`.
    pub fn imbalance_ratios(&self) -> &[f64] {
        &self.imbalance_ratios
    }

    /// Index of the most frequent class (lowest index among ties).
    pub fn head_class(&self) -> usize {
        let n_max = self.counts.iter().max().copied().unwrap_or(0);
        self.counts.iter().position(|&n| n == n_max).unwrap_or(0)
    }

    pub fn is_balanced(&self) -> bool {
        self.imbalance_ratios.iter().all(|&k| k == 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Budget intensity `ε`.
    pub eps: f64,
    /// Weight of the class-dependent slope, in `[0, 1]`.
    pub alpha: f64,
    /// Fraction of epochs spent ramping up, in `[0, 1]`.
    pub beta: f64,
    /// Number of epochs `T`.
    pub total_iterations: usize,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |field, reason: &str| {
            Err(ScheduleError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad("eps", "must be finite and > 0");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta", "must lie in [0, 1]");
        }
        if self.total_iterations == 0 {
            return bad("total_iterations", "must be positive");
        }
        Ok(())
    }
}

/// Ceiling intensities per class plus the schedule that ramps them in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityTable {
    eps_max: Vec<f64>,
    tau: f64,
    degenerate: bool,
    cfg: ScheduleConfig,
}

impl IntensityTable {
    /// Constant `ε` for every class and epoch; the unenhanced baseline.
    pub fn constant(num_classes: usize, cfg: ScheduleConfig) -> Self {
        Self {
            eps_max: vec![cfg.eps; num_classes],
            tau: 0.0,
            degenerate: false,
            cfg: ScheduleConfig { beta: 0.0, ..cfg },
        }
    }

    /// `ε_y` for every class.
    pub fn eps_max(&self) -> &[f64] {
        &self.eps_max
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// True when the profile was balanced but `α > 0`, so the slope was
    /// undefined and the table fell back to a flat `ε`.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn config(&self) -> &ScheduleConfig {
        &self.cfg
    }

    /// `ε_y^(t)` for 1-based epoch `t`.
    pub fn eps_at(&self, t: usize, y: usize) -> f64 {
        self.eps_max[y] * aiw_weight(t, &self.cfg)
    }

    /// All class intensities at epoch `t`.
    pub fn eps_row(&self, t: usize) -> Vec<f64> {
        let w = aiw_weight(t, &self.cfg);
        self.eps_max.iter().map(|e| e * w).collect()
    }
}

/// Class-wise perturbation balancing.
///
/// A balanced profile with `α > 0` has no defined slope; in that case every
/// class gets `ε` and the table is flagged degenerate.
pub fn cpb_intensities(
    profile: &ClassProfile,
    cfg: &ScheduleConfig,
) -> Result<IntensityTable, ScheduleError> {
    cfg.validate()?;
    let roots: Vec<f64> = profile
        .imbalance_ratios()
        .iter()
        .map(|k| k.ln().sqrt())
        .collect();
    let denom: f64 = profile
        .frequencies()
        .iter()
        .zip(&roots)
        .map(|(p, r)| p * r)
        .sum();

    if cfg.alpha > 0.0 && denom == 0.0 {
        log::warn!(
            "degenerate balanced profile with alpha = {}: using flat eps",
            cfg.alpha
        );
        return Ok(IntensityTable {
            eps_max: vec![cfg.eps; profile.num_classes()],
            tau: 0.0,
            degenerate: true,
            cfg: *cfg,
        });
    }
    let tau = if cfg.alpha == 0.0 {
        0.0
    } else {
        cfg.alpha / denom
    };
    let eps = cfg.eps;
    let eps_max = roots
        .iter()
        .map(|r| (1.0 - cfg.alpha) * eps + tau * r * eps)
        .collect();
    Ok(IntensityTable {
        eps_max,
        tau,
        degenerate: false,
        cfg: *cfg,
    })
}

/// Warm-up weight `min((t − 1)/(βT), 1)` for 1-based epoch `t`; `β = 0`
/// means no warm-up.
pub fn aiw_weight(t: usize, cfg: &ScheduleConfig) -> f64 {
    debug_assert!(t >= 1, "epochs are 1-based");
    if cfg.beta == 0.0 {
        return 1.0;
    }
    let ramp = cfg.beta * cfg.total_iterations as f64;
    (t.saturating_sub(1) as f64 / ramp).min(1.0)
}

pub fn intensity_at(
    profile: &ClassProfile,
    cfg: &ScheduleConfig,
    t: usize,
    y: usize,
) -> Result<f64, ScheduleError> {
    Ok(cpb_intensities(profile, cfg)?.eps_at(t, y))
}

/// Balanced-class average of `ε_y^(t) + ε_y^(t+1)`, the computable bound on
/// how far the adversarial distribution moves between adjacent epochs.
pub fn adjacent_iteration_bound(table: &IntensityTable, t: usize) -> f64 {
    let now = aiw_weight(t, &table.cfg);
    let next = aiw_weight(t + 1, &table.cfg);
    let n = table.eps_max.len() as f64;
    table
        .eps_max
        .iter()
        .map(|e| e * now + e * next)
        .sum::<f64>()
        / n
}
