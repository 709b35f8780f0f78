//! Small differentiable classifiers with hand-written backpropagation, and
//! the two base losses (plain and balanced-softmax cross-entropy).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("input has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {label} out of range for {num_classes} classes")]
    BadLabel { label: usize, num_classes: usize },
    #[error("balanced softmax needs per-class counts")]
    MissingCounts,
    #[error("invalid counts: {0}")]
    BadCounts(String),
    #[error("invalid model shape: {0}")]
    BadShape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `Wx + b`.
    Linear,
    /// One ReLU hidden layer.
    Mlp1,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp1" => Ok(Self::Mlp1),
            other => Err(format!("unknown model kind `{other}` (linear|mlp1)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Mlp1 => "mlp1",
        })
    }
}

/// Classifier with all parameters in one flat vector.
///
/// Layout, row-major: `linear` is `W (C×d)` then `b (C)`; `mlp1` is
/// `W1 (H×d)`, `b1 (H)`, `W2 (C×H)`, `b2 (C)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl ClassifierModel {
    pub fn zeros(
        kind: ModelKind,
        input_dim: usize,
        num_classes: usize,
        hidden: usize,
    ) -> Result<Self, ModelError> {
        if input_dim == 0 || num_classes < 2 {
            return Err(ModelError::BadShape(format!(
                "need input_dim > 0 and at least 2 classes, got {input_dim} and {num_classes}"
            )));
        }
        if kind == ModelKind::Mlp1 && hidden == 0 {
            return Err(ModelError::BadShape(
                "mlp1 needs a positive hidden width".into(),
            ));
        }
        let hidden = if kind == ModelKind::Linear { 0 } else { hidden };
        let n = match kind {
            ModelKind::Linear => num_classes * input_dim + num_classes,
            ModelKind::Mlp1 => hidden * input_dim + hidden + num_classes * hidden + num_classes,
        };
        Ok(Self {
            kind,
            input_dim,
            num_classes,
            hidden,
            params: vec![0.0; n],
        })
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init<R: Rng>(
        kind: ModelKind,
        input_dim: usize,
        num_classes: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let mut model = Self::zeros(kind, input_dim, num_classes, hidden)?;
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in slice {
                *p = rng.random_range(-bound..bound);
            }
        };
        let (d, c, h) = (input_dim, num_classes, model.hidden);
        match kind {
            ModelKind::Linear => fill(&mut model.params[..c * d], d),
            ModelKind::Mlp1 => {
                fill(&mut model.params[..h * d], d);
                let w2 = h * d + h;
                fill(&mut model.params[w2..w2 + c * h], h);
            }
        }
        Ok(model)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ModelError> {
        if x.len() != self.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<(), ModelError> {
        if y >= self.num_classes {
            return Err(ModelError::BadLabel {
                label: y,
                num_classes: self.num_classes,
            });
        }
        Ok(())
    }

    fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        w.chunks_exact(x.len())
            .zip(b)
            .map(|(row, bias)| bias + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    /// Returns `(hidden activations, logits)`; the activations are empty for
    /// the linear kind.
    fn forward_parts(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, c, h) = (self.input_dim, self.num_classes, self.hidden);
        let p = &self.params;
        match self.kind {
            ModelKind::Linear => (Vec::new(), Self::affine(&p[..c * d], &p[c * d..], x)),
            ModelKind::Mlp1 => {
                let pre = Self::affine(&p[..h * d], &p[h * d..h * d + h], x);
                let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                let w2 = h * d + h;
                let logits = Self::affine(&p[w2..w2 + c * h], &p[w2 + c * h..], &act);
                (act, logits)
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_input(x)?;
        Ok(self.forward_parts(x).1)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ModelError> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Loss at `(x, y)`, its gradient w.r.t. the input, and, if
    /// `param_grad` is given, `scale ×` its gradient w.r.t. the parameters
    /// added into that buffer.
    pub fn backward(
        &self,
        x: &[f64],
        y: usize,
        loss: &LossFn,
        param_grad: Option<(&mut [f64], f64)>,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        self.check_input(x)?;
        self.check_label(y)?;
        let (act, logits) = self.forward_parts(x);
        let (value, dlogits) = loss.evaluate(&logits, y);
        let (d, c, h) = (self.input_dim, self.num_classes, self.hidden);
        let p = &self.params;

        let input_grad = match self.kind {
            ModelKind::Linear => {
                if let Some((g, scale)) = param_grad {
                    for k in 0..c {
                        let gk = scale * dlogits[k];
                        for j in 0..d {
                            g[k * d + j] += gk * x[j];
                        }
                        g[c * d + k] += gk;
                    }
                }
                let mut gx = vec![0.0; d];
                for k in 0..c {
                    for j in 0..d {
                        gx[j] += p[k * d + j] * dlogits[k];
                    }
                }
                gx
            }
            ModelKind::Mlp1 => {
                let w2 = h * d + h;
                let b2 = w2 + c * h;
                let mut dact = vec![0.0; h];
                for k in 0..c {
                    for i in 0..h {
                        dact[i] += p[w2 + k * h + i] * dlogits[k];
                    }
                }
                let dpre: Vec<f64> = dact
                    .iter()
                    .zip(&act)
                    .map(|(g, a)| if *a > 0.0 { *g } else { 0.0 })
                    .collect();
                if let Some((g, scale)) = param_grad {
                    for i in 0..h {
                        let gi = scale * dpre[i];
                        for j in 0..d {
                            g[i * d + j] += gi * x[j];
                        }
                        g[h * d + i] += gi;
                    }
                    for k in 0..c {
                        let gk = scale * dlogits[k];
                        for i in 0..h {
                            g[w2 + k * h + i] += gk * act[i];
                        }
                        g[b2 + k] += gk;
                    }
                }
                let mut gx = vec![0.0; d];
                for i in 0..h {
                    for j in 0..d {
                        gx[j] += p[i * d + j] * dpre[i];
                    }
                }
                gx
            }
        };
        Ok((value, input_grad))
    }

    /// Gradient of the loss w.r.t. the input.
    pub fn input_gradient(
        &self,
        x: &[f64],
        y: usize,
        loss: &LossFn,
    ) -> Result<Vec<f64>, ModelError> {
        Ok(self.backward(x, y, loss, None)?.1)
    }

    /// Loss value and gradient w.r.t. the flat parameter vector.
    pub fn param_gradient(
        &self,
        x: &[f64],
        y: usize,
        loss: &LossFn,
    ) -> Result<(f64, Vec<f64>), ModelError> {
        let mut g = vec![0.0; self.params.len()];
        let (value, _) = self.backward(x, y, loss, Some((&mut g, 1.0)))?;
        Ok((value, g))
    }

    pub fn loss(&self, x: &[f64], y: usize, loss: &LossFn) -> Result<f64, ModelError> {
        self.check_label(y)?;
        Ok(loss.evaluate(&self.forward(x)?, y).0)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossTag {
    /// Cross-entropy, as in standard adversarial training.
    #[serde(rename = "AT")]
    At,
    /// Balanced softmax: cross-entropy after adding `log n_y` to each logit.
    #[serde(rename = "BSL")]
    Bsl,
}

impl std::str::FromStr for LossTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "AT" => Ok(Self::At),
            "BSL" => Ok(Self::Bsl),
            _ => Err(format!("unknown base loss `{s}` (AT|BSL)")),
        }
    }
}

impl std::fmt::Display for LossTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::At => "AT",
            Self::Bsl => "BSL",
        })
    }
}

/// A base loss with its logit offsets resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct LossFn {
    tag: LossTag,
    offsets: Vec<f64>,
}

impl LossFn {
    pub fn new(tag: LossTag, counts: Option<&[u64]>) -> Result<Self, ModelError> {
        let offsets = match (tag, counts) {
            (LossTag::At, _) => Vec::new(),
            (LossTag::Bsl, None) => return Err(ModelError::MissingCounts),
            (LossTag::Bsl, Some(counts)) => {
                if counts.contains(&0) {
                    return Err(ModelError::BadCounts(
                        "every class needs a positive count".into(),
                    ));
                }
                counts.iter().map(|&n| (n as f64).ln()).collect()
            }
        };
        Ok(Self { tag, offsets })
    }

    pub fn cross_entropy() -> Self {
        Self {
            tag: LossTag::At,
            offsets: Vec::new(),
        }
    }

    pub fn tag(&self) -> LossTag {
        self.tag
    }

    /// Per-class logit offsets (`log n_y` for BSL, empty for AT).
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// `(−log softmax(z + offsets)_y, ∂/∂z)`.
    pub fn evaluate(&self, logits: &[f64], y: usize) -> (f64, Vec<f64>) {
        let shifted: Vec<f64> = if self.offsets.is_empty() {
            logits.to_vec()
        } else {
            logits
                .iter()
                .zip(&self.offsets)
                .map(|(z, o)| z + o)
                .collect()
        };
        let max = shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = shifted.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let value = sum.ln() + max - shifted[y];
        let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        grad[y] -= 1.0;
        (value, grad)
    }
}

/// Loss value and logit gradient of `tag` at `(logits, y)`.
pub fn base_loss(
    logits: &[f64],
    y: usize,
    tag: LossTag,
    counts: Option<&[u64]>,
) -> Result<(f64, Vec<f64>), ModelError> {
    if y >= logits.len() {
        return Err(ModelError::BadLabel {
            label: y,
            num_classes: logits.len(),
        });
    }
    let loss = LossFn::new(tag, counts)?;
    if tag == LossTag::Bsl && loss.offsets.len() != logits.len() {
        return Err(ModelError::BadCounts(format!(
            "{} counts for {} logits",
            loss.offsets.len(),
            logits.len()
        )));
    }
    Ok(loss.evaluate(logits, y))
}
