//! l∞ projected gradient ascent on the input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ClassifierModel, LossFn, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub steps: usize,
    /// Step size at the reference intensity `base_eps`.
    pub base_step_size: f64,
    /// Reference intensity; the step used at intensity `e` is
    /// `e / base_eps · base_step_size`.
    pub base_eps: f64,
    pub random_start: bool,
    /// Optional box the adversarial input is clipped to after projection.
    pub clip: Option<(f64, f64)>,
}

impl AttackConfig {
    /// Twenty steps of size `eps / 4`, the usual evaluation attack.
    pub fn evaluation(eps: f64) -> Self {
        Self {
            steps: 20,
            base_step_size: eps / 4.0,
            base_eps: eps,
            random_start: true,
            clip: None,
        }
    }

    pub fn step_size_for(&self, eps_t: f64) -> f64 {
        if self.base_eps > 0.0 {
            eps_t / self.base_eps * self.base_step_size
        } else {
            self.base_step_size
        }
    }
}

fn project(x_adv: &mut [f64], x: &[f64], eps: f64, clip: Option<(f64, f64)>) {
    for (a, &c) in x_adv.iter_mut().zip(x) {
        *a = a.clamp(c - eps, c + eps);
        if let Some((lo, hi)) = clip {
            *a = a.clamp(lo, hi);
        }
    }
}

/// Maximizes the loss of `model` at label `y` over the l∞ ball of radius
/// `eps_t` around `x`. The iterate is projected back into the ball after
/// every step; `eps_t = 0` returns `x` without touching `rng`.
pub fn pgd_attack<R: Rng>(
    model: &ClassifierModel,
    x: &[f64],
    y: usize,
    eps_t: f64,
    cfg: &AttackConfig,
    loss: &LossFn,
    rng: &mut R,
) -> Result<Vec<f64>, ModelError> {
    if eps_t <= 0.0 {
        model.forward(x)?;
        return Ok(x.to_vec());
    }
    let step = cfg.step_size_for(eps_t);
    let mut x_adv = x.to_vec();
    if cfg.random_start {
        for a in x_adv.iter_mut() {
            *a += rng.random_range(-eps_t..=eps_t);
        }
        project(&mut x_adv, x, eps_t, cfg.clip);
    }
    for _ in 0..cfg.steps {
        let g = model.input_gradient(&x_adv, y, loss)?;
        for (a, gi) in x_adv.iter_mut().zip(&g) {
            if *gi > 0.0 {
                *a += step;
            } else if *gi < 0.0 {
                *a -= step;
            }
        }
        project(&mut x_adv, x, eps_t, cfg.clip);
    }
    Ok(x_adv)
}
