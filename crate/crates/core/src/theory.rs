//! Exact analysis of the binary Gaussian task.
//!
//! Data are drawn as `x ~ N(y·θ, σ²I)` with labels `y ∈ {+1, −1}` and
//! `P(y = +1) = K·P(y = −1)`. The mean vector `θ` holds `d1` copies of the
//! robust-feature mean `μ1` followed by `d2` copies of the non-robust mean
//! `μ2`. Hypotheses are linear, `h(x) = sign(⟨w, x⟩ + b)`, with non-negative
//! weights of unit Euclidean norm.
//!
//! Everything here is closed form except [`monte_carlo_risk`] and
//! [`BiasGeometry::grid_search_bias`], which are sampling and search oracles
//! used to check the closed forms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::normal;

/// Tolerance on `‖w‖₂ = 1` for hypotheses.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Minimum sample count accepted by [`monte_carlo_risk`].
pub const MIN_MC_SAMPLES: usize = 10_000;

const MC_CHUNK: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("invalid task parameter `{field}`: {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),
    #[error("hypothesis has dimension {found} (d1 = {found_d1}) but the task has d = {expected} (d1 = {expected_d1})")]
    DimensionMismatch {
        expected: usize,
        expected_d1: usize,
        found: usize,
        found_d1: usize,
    },
    #[error("degenerate geometry: eps_plus + eps_minus = 2A = {two_a}")]
    DegenerateGeometry { two_a: f64 },
    #[error(
        "eps_plus = {eps_plus} is not admissible: it must be below {bound} (radicand {radicand})"
    )]
    NotAdmissible {
        eps_plus: f64,
        bound: f64,
        radicand: f64,
    },
    #[error("monte carlo needs at least {MIN_MC_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
}

pub type Result<T> = std::result::Result<T, TheoryError>;

/// Class label of the binary task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Label {
    /// Majority class, `y = +1`.
    Plus,
    /// Minority class, `y = −1`.
    Minus,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Plus => 1.0,
            Label::Minus => -1.0,
        }
    }
}

/// Parameters of the binary Gaussian task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianTaskSpec {
    mu1: f64,
    mu2: f64,
    d1: usize,
    d2: usize,
    sigma: f64,
    imbalance: f64,
}

impl GaussianTaskSpec {
    pub fn new(
        mu1: f64,
        mu2: f64,
        d1: usize,
        d2: usize,
        sigma: f64,
        imbalance: f64,
    ) -> Result<Self> {
        let bad = |field, reason: &str| {
            Err(TheoryError::InvalidSpec {
                field,
                reason: reason.to_string(),
            })
        };
        if !(mu2.is_finite() && mu2 > 0.0) {
            return bad("mu2", "must be finite and > 0");
        }
        if !(mu1.is_finite() && mu1 > mu2) {
            return bad("mu1", "must be finite and > mu2");
        }
        if d1 == 0 {
            return bad("d1", "must be positive");
        }
        if d2 == 0 {
            return bad("d2", "must be positive");
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return bad("sigma", "must be finite and > 0");
        }
        if !(imbalance.is_finite() && imbalance >= 1.0) {
            return bad("K", "must be finite and >= 1");
        }
        Ok(Self {
            mu1,
            mu2,
            d1,
            d2,
            sigma,
            imbalance,
        })
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Imbalance ratio `K = P(y = +1) / P(y = −1)`.
    pub fn imbalance(&self) -> f64 {
        self.imbalance
    }

    /// The class-mean direction `θ`.
    pub fn theta(&self) -> Vec<f64> {
        std::iter::repeat_n(self.mu1, self.d1)
            .chain(std::iter::repeat_n(self.mu2, self.d2))
            .collect()
    }

    /// Class prior `P(y)`.
    pub fn prior(&self, y: Label) -> f64 {
        match y {
            Label::Plus => self.imbalance / (1.0 + self.imbalance),
            Label::Minus => 1.0 / (1.0 + self.imbalance),
        }
    }
}

/// Linear hypothesis `sign(⟨w, x⟩ + b)` with `w ≥ 0` and `‖w‖₂ = 1`.
///
/// The first `d1` coordinates form the robust group G₁, the rest G₂.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearHypothesis {
    weights: Vec<f64>,
    bias: f64,
    d1: usize,
}

impl LinearHypothesis {
    /// Normalizes `weights` to unit Euclidean norm, then validates.
    pub fn new(weights: Vec<f64>, bias: f64, d1: usize) -> Result<Self> {
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(TheoryError::InvalidHypothesis(
                "weights must be finite and not all zero".into(),
            ));
        }
        let weights = weights.into_iter().map(|w| w / norm).collect();
        Self::from_normalized(weights, bias, d1)
    }

    /// Validates without normalizing; rejects weights whose norm is off.
    pub fn from_normalized(weights: Vec<f64>, bias: f64, d1: usize) -> Result<Self> {
        if weights.is_empty() || d1 == 0 || d1 >= weights.len() {
            return Err(TheoryError::InvalidHypothesis(format!(
                "need 0 < d1 < d, got d1 = {d1}, d = {}",
                weights.len()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(TheoryError::InvalidHypothesis(format!(
                "weight {i} = {w} is negative or not finite"
            )));
        }
        if !bias.is_finite() {
            return Err(TheoryError::InvalidHypothesis("bias is not finite".into()));
        }
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(TheoryError::InvalidHypothesis(format!(
                "‖w‖₂ = {norm}, expected 1"
            )));
        }
        Ok(Self { weights, bias, d1 })
    }

    /// Equal weight on every coordinate.
    pub fn uniform(d1: usize, d2: usize, bias: f64) -> Result<Self> {
        Self::new(vec![1.0; d1 + d2], bias, d1)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn with_bias(&self, bias: f64) -> Self {
        Self {
            bias,
            ..self.clone()
        }
    }

    /// `‖w_{G₁}‖₁`.
    pub fn l1_robust(&self) -> f64 {
        self.weights[..self.d1].iter().sum()
    }

    /// `‖w_{G₂}‖₁`.
    pub fn l1_non_robust(&self) -> f64 {
        self.weights[self.d1..].iter().sum()
    }

    /// `‖w‖₁`.
    pub fn l1(&self) -> f64 {
        self.l1_robust() + self.l1_non_robust()
    }

    fn check_against(&self, spec: &GaussianTaskSpec) -> Result<()> {
        if self.dim() != spec.dim() || self.d1 != spec.d1 {
            return Err(TheoryError::DimensionMismatch {
                expected: spec.dim(),
                expected_d1: spec.d1,
                found: self.dim(),
                found_d1: self.d1,
            });
        }
        Ok(())
    }
}

/// Standardized threshold and the probability `Φ(z)` it induces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalRisk {
    pub z: f64,
    pub risk: f64,
}

/// Class-conditional risk of `h` on class `y` under an l∞ adversary of
/// radius `eps`. `eps = 0` gives the natural risk.
pub fn conditional_risk(
    spec: &GaussianTaskSpec,
    h: &LinearHypothesis,
    y: Label,
    eps: f64,
) -> Result<ConditionalRisk> {
    h.check_against(spec)?;
    if !eps.is_finite() {
        return Err(TheoryError::InvalidSpec {
            field: "eps",
            reason: "must be finite".into(),
        });
    }
    let z = (-y.sign() * h.bias
        - (spec.mu1 - eps) * h.l1_robust()
        - (spec.mu2 - eps) * h.l1_non_robust())
        / spec.sigma;
    Ok(ConditionalRisk {
        z,
        risk: normal::cdf(z),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub z_nat_plus: f64,
    pub z_nat_minus: f64,
    pub z_rob_plus: f64,
    pub z_rob_minus: f64,
    pub nat_risk_plus: f64,
    pub nat_risk_minus: f64,
    pub rob_risk_plus: f64,
    pub rob_risk_minus: f64,
    /// `R_rob(−1) + K·R_rob(+1)`, proportional to the imbalanced robust risk.
    pub weighted_rob_risk: f64,
}

/// Natural and robust risks of both classes at a shared intensity.
pub fn risk_report(spec: &GaussianTaskSpec, h: &LinearHypothesis, eps: f64) -> Result<RiskReport> {
    let nat_plus = conditional_risk(spec, h, Label::Plus, 0.0)?;
    let nat_minus = conditional_risk(spec, h, Label::Minus, 0.0)?;
    let rob_plus = conditional_risk(spec, h, Label::Plus, eps)?;
    let rob_minus = conditional_risk(spec, h, Label::Minus, eps)?;
    Ok(RiskReport {
        z_nat_plus: nat_plus.z,
        z_nat_minus: nat_minus.z,
        z_rob_plus: rob_plus.z,
        z_rob_minus: rob_minus.z,
        nat_risk_plus: nat_plus.risk,
        nat_risk_minus: nat_minus.risk,
        rob_risk_plus: rob_plus.risk,
        rob_risk_minus: rob_minus.risk,
        weighted_rob_risk: rob_minus.risk + spec.imbalance * rob_plus.risk,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub n_samples: usize,
}

/// Sampling estimate of the class-conditional risk.
///
/// Each sample `x ~ N(yθ, σ²I)` is moved to the exact worst case of the
/// l∞ ball for a linear classifier, `δ = −y·eps·sign(w)`, and counted as an
/// error when `y(⟨w, x + δ⟩ + b) < 0`. Samples are drawn in fixed-size
/// chunks, each from its own ChaCha stream keyed by `(seed, chunk)`, so the
/// result does not depend on how chunks are scheduled.
pub fn monte_carlo_risk(
    spec: &GaussianTaskSpec,
    h: &LinearHypothesis,
    y: Label,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    h.check_against(spec)?;
    if n_samples < MIN_MC_SAMPLES {
        return Err(TheoryError::TooFewSamples(n_samples));
    }
    let ys = y.sign();
    let theta = spec.theta();
    let mean: Vec<f64> = theta.iter().map(|t| ys * t).collect();
    let delta: Vec<f64> = h
        .weights
        .iter()
        .map(|&w| if w > 0.0 { -ys * eps } else { 0.0 })
        .collect();
    let sigma = spec.sigma;
    let n_chunks = n_samples.div_ceil(MC_CHUNK);

    let errors: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let len = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
            let mut errors = 0u64;
            for _ in 0..len {
                let mut score = h.bias;
                for k in 0..mean.len() {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let x = mean[k] + sigma * noise;
                    score += h.weights[k] * (x + delta[k]);
                }
                if ys * score < 0.0 {
                    errors += 1;
                }
            }
            errors
        })
        .sum();

    let p = errors as f64 / n_samples as f64;
    Ok(MonteCarloEstimate {
        estimate: p,
        std_err: (p * (1.0 - p) / n_samples as f64).sqrt(),
        n_samples,
    })
}

/// Sign of the bias, which is also the sign of `R(h, −1) − R(h, +1)` for
/// both natural and robust risk at any shared intensity.
pub fn bias_sign_indicator(h: &LinearHypothesis) -> i8 {
    if h.bias > 0.0 {
        1
    } else if h.bias < 0.0 {
        -1
    } else {
        0
    }
}

/// The scalars the bias analysis depends on: the balance point
/// `A = (μ1‖w_{G₁}‖₁ + μ2‖w_{G₂}‖₁)/‖w‖₁`, `‖w‖₁`, `σ` and `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasGeometry {
    pub a_point: f64,
    pub l1_norm: f64,
    pub sigma: f64,
    pub imbalance: f64,
}

impl BiasGeometry {
    pub fn from_task(spec: &GaussianTaskSpec, h: &LinearHypothesis) -> Result<Self> {
        h.check_against(spec)?;
        let l1 = h.l1();
        Ok(Self {
            a_point: (spec.mu1 * h.l1_robust() + spec.mu2 * h.l1_non_robust()) / l1,
            l1_norm: l1,
            sigma: spec.sigma,
            imbalance: spec.imbalance,
        })
    }

    /// `√2·σ·‖w‖₁⁻¹·√(log K)`, the width of the balancing band.
    pub fn balance_gap(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.sigma / self.l1_norm * self.imbalance.ln().sqrt()
    }

    /// Robust threshold `Z_rob(y)` at bias `b` and class intensity `eps`.
    pub fn z_rob(&self, y: Label, bias: f64, eps: f64) -> f64 {
        (-y.sign() * bias + (eps - self.a_point) * self.l1_norm) / self.sigma
    }

    /// `Φ(Z_rob(−1)) + K·Φ(Z_rob(+1))` with class-wise intensities.
    pub fn weighted_robust_objective(&self, bias: f64, eps_plus: f64, eps_minus: f64) -> f64 {
        normal::cdf(self.z_rob(Label::Minus, bias, eps_minus))
            + self.imbalance * normal::cdf(self.z_rob(Label::Plus, bias, eps_plus))
    }

    /// Stationary point in `b` of [`Self::weighted_robust_objective`].
    pub fn optimal_bias(&self, eps_plus: f64, eps_minus: f64) -> Result<f64> {
        let a = self.a_point;
        let l1 = self.l1_norm;
        let gap = eps_plus + eps_minus - 2.0 * a;
        if gap.abs() <= 4.0 * f64::EPSILON * a.abs().max(1.0) {
            return Err(TheoryError::DegenerateGeometry { two_a: 2.0 * a });
        }
        let numerator = 2.0 * self.sigma * self.sigma * self.imbalance.ln()
            - (eps_plus - a).powi(2) * l1 * l1
            + (eps_minus - a).powi(2) * l1 * l1;
        let denominator = (-2.0 * eps_plus - 2.0 * eps_minus + 4.0 * a) * l1;
        Ok(numerator / denominator)
    }

    /// Minority intensity that makes the optimal bias vanish,
    /// `A − √((A − ε₊)² − 2σ²‖w‖₁⁻² log K)`.
    ///
    /// Evaluated as `ε₊ + c / (u + √(u² − c))` with `u = A − ε₊` and
    /// `c = 2σ²‖w‖₁⁻² log K`, which avoids the cancellation of the direct
    /// form; the result is kept inside `[ε₊, ε₊ + √c]` at the ulp level.
    pub fn balanced_eps_minus(&self, eps_plus: f64) -> Result<f64> {
        let gap = self.balance_gap();
        let bound = self.a_point - gap;
        let log_k = self.imbalance.ln();
        let u = self.a_point - eps_plus;
        let c = 2.0 * self.sigma * self.sigma * log_k / (self.l1_norm * self.l1_norm);
        let radicand = u * u - c;
        if eps_plus.partial_cmp(&bound) != Some(std::cmp::Ordering::Less) || radicand < 0.0 {
            return Err(TheoryError::NotAdmissible {
                eps_plus,
                bound,
                radicand,
            });
        }
        if log_k == 0.0 {
            return Ok(eps_plus);
        }
        let delta = (c / (u + radicand.sqrt())).min(gap);
        Ok(eps_plus + delta)
    }

    /// Two-stage grid minimization of the weighted robust objective over
    /// `b ∈ [−5σ‖w‖₁, 5σ‖w‖₁]`: a coarse pass of 2000 intervals, then a pass
    /// at `fine_step` around the best coarse point.
    pub fn grid_search_bias(&self, eps_plus: f64, eps_minus: f64, fine_step: f64) -> f64 {
        let half = 5.0 * self.sigma * self.l1_norm;
        let coarse_n = 2000usize;
        let coarse_step = 2.0 * half / coarse_n as f64;
        let objective = |b: f64| self.weighted_robust_objective(b, eps_plus, eps_minus);

        let argmin = |lo: f64, step: f64, n: usize| -> f64 {
            let mut best = (lo, f64::INFINITY);
            for i in 0..=n {
                let b = lo + step * i as f64;
                let v = objective(b);
                if v < best.1 {
                    best = (b, v);
                }
            }
            best.0
        };

        let coarse = argmin(-half, coarse_step, coarse_n);
        let lo = (coarse - coarse_step).max(-half);
        let hi = (coarse + coarse_step).min(half);
        let fine_n = ((hi - lo) / fine_step).ceil() as usize;
        argmin(lo, fine_step, fine_n)
    }
}

/// Optimal bias of the weighted robust objective for class intensities
/// `(eps_plus, eps_minus)`; the hypothesis bias itself is ignored.
pub fn optimal_bias(
    spec: &GaussianTaskSpec,
    h: &LinearHypothesis,
    eps_plus: f64,
    eps_minus: f64,
) -> Result<f64> {
    BiasGeometry::from_task(spec, h)?.optimal_bias(eps_plus, eps_minus)
}

/// Minority-class intensity that balances the two classes; errors with
/// [`TheoryError::NotAdmissible`] outside the admissible range of `eps_plus`.
pub fn balanced_eps_minus(
    spec: &GaussianTaskSpec,
    h: &LinearHypothesis,
    eps_plus: f64,
) -> Result<f64> {
    BiasGeometry::from_task(spec, h)?.balanced_eps_minus(eps_plus)
}

/// Intervals of intensities that are simultaneously robustness-improving and
/// class-balancing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibleRegion {
    pub a_point: f64,
    /// Open robustness interval `(μ2, μ1)`.
    pub rob_lo: f64,
    pub rob_hi: f64,
    /// Majority intensities must lie below this to admit a balancing `ε₋₁`.
    pub bal_plus_hi: f64,
    /// The balancing minority intensity, when `eps_plus` is admissible.
    pub bal_minus: Option<f64>,
    /// Bounds on the balancing minority intensity.
    pub minus_lo: f64,
    pub minus_hi: f64,
    /// `(μ2, bal_plus_hi)` when non-empty.
    pub intersection: Option<(f64, f64)>,
    pub eps_plus: f64,
    pub eps_plus_in_intersection: bool,
}

pub fn feasible_regions(
    spec: &GaussianTaskSpec,
    h: &LinearHypothesis,
    eps_plus: f64,
) -> Result<FeasibleRegion> {
    let geom = BiasGeometry::from_task(spec, h)?;
    let bal_plus_hi = geom.a_point - geom.balance_gap();
    let intersection = (bal_plus_hi > spec.mu2).then_some((spec.mu2, bal_plus_hi));
    let eps_plus_in_intersection =
        intersection.is_some_and(|(lo, hi)| eps_plus > lo && eps_plus < hi);
    Ok(FeasibleRegion {
        a_point: geom.a_point,
        rob_lo: spec.mu2,
        rob_hi: spec.mu1,
        bal_plus_hi,
        bal_minus: geom.balanced_eps_minus(eps_plus).ok(),
        minus_lo: eps_plus,
        minus_hi: eps_plus + geom.balance_gap(),
        intersection,
        eps_plus,
        eps_plus_in_intersection,
    })
}
