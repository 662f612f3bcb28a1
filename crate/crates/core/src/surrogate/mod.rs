//! Multi-layer perceptron failure classifier.

mod mlp;
mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{can_move, ConfigSchema, Direction, EnvConfiguration, MutationTarget};
pub use mlp::{BatchNorm, Dense, HiddenLayer, MlpArchitecture};
pub use train::{train, TrainingConfig};

pub const MODEL_VERSION: &str = "surrogate-v1";

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("feature width {got} does not match model input width {expected}")]
    Width { expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("unsupported model version {0:?}")]
    Version(String),
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Encoded configuration with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub failure: bool,
}

impl Sample {
    pub fn new(features: Vec<f64>, failure: bool) -> Self {
        Self { features, failure }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub seed: u64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Trained classifier. Inputs are standardized with training-set statistics
/// before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub version: String,
    pub architecture: MlpArchitecture,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub hidden: Vec<HiddenLayer>,
    pub output: Dense,
    pub metadata: TrainingMetadata,
}

/// Forward-pass intermediates needed for the input gradient.
struct Trace {
    bn_scale: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
    probs: [f64; 2],
}

impl SurrogateModel {
    pub fn input_width(&self) -> usize {
        self.architecture.input_width
    }

    fn check_width(&self, fv: &[f64]) -> Result<(), SurrogateError> {
        if fv.len() != self.input_width() {
            return Err(SurrogateError::Width {
                expected: self.input_width(),
                got: fv.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn standardize(&self, fv: &[f64]) -> Vec<f64> {
        fv.iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn trace(&self, fv: &[f64]) -> Trace {
        let mut x = self.standardize(fv);
        let mut bn_scale = Vec::with_capacity(self.hidden.len());
        let mut activations = Vec::with_capacity(self.hidden.len());
        let mut buf = Vec::new();
        for layer in &self.hidden {
            layer.dense.forward(&x, &mut buf);
            let scale = match &layer.batchnorm {
                Some(bn) => {
                    bn.inference(&mut buf);
                    (0..buf.len()).map(|j| bn.inference_scale(j)).collect()
                }
                None => vec![1.0; buf.len()],
            };
            x = buf.iter().map(|v| v.tanh()).collect();
            bn_scale.push(scale);
            activations.push(x.clone());
        }
        self.output.forward(&x, &mut buf);
        Trace {
            bn_scale,
            activations,
            probs: mlp::softmax2(&buf),
        }
    }

    pub(crate) fn probabilities_unchecked(&self, fv: &[f64]) -> [f64; 2] {
        self.trace(fv).probs
    }

    /// `[p(no failure), p(failure)]` in inference mode.
    pub fn predict_proba(&self, fv: &[f64]) -> Result<[f64; 2], SurrogateError> {
        self.check_width(fv)?;
        Ok(self.probabilities_unchecked(fv))
    }

    pub fn predict_failure(&self, fv: &[f64]) -> Result<f64, SurrogateError> {
        Ok(self.predict_proba(fv)?[1])
    }

    /// Exact gradient of the failure probability with respect to the raw
    /// (unstandardized) input.
    pub fn saliency(&self, fv: &[f64]) -> Result<Vec<f64>, SurrogateError> {
        self.check_width(fv)?;
        let t = self.trace(fv);
        let [p0, p1] = t.probs;
        // d p1 / d logits = p1·(e1 − p).
        let d_logits = [-p1 * p0, p1 * (1.0 - p1)];
        let mut g = self.output.backward_input(&d_logits);
        for (i, layer) in self.hidden.iter().enumerate().rev() {
            let d_pre: Vec<f64> = g
                .iter()
                .zip(&t.activations[i])
                .zip(&t.bn_scale[i])
                .map(|((d, a), s)| d * (1.0 - a * a) * s)
                .collect();
            g = layer.dense.backward_input(&d_pre);
        }
        Ok(g.iter()
            .zip(&self.input_scale)
            .map(|(d, s)| d / s)
            .collect())
    }

    pub(crate) fn is_finite(&self) -> bool {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        finite(&self.output.weights)
            && finite(&self.output.bias)
            && self.hidden.iter().all(|l| {
                finite(&l.dense.weights)
                    && finite(&l.dense.bias)
                    && l.batchnorm.as_ref().is_none_or(|b| {
                        finite(&b.gamma)
                            && finite(&b.beta)
                            && finite(&b.running_mean)
                            && b.running_var.iter().all(|v| v.is_finite() && *v >= 0.0)
                    })
            })
    }

    pub fn to_json_string(&self) -> Result<String, SurrogateError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self, SurrogateError> {
        let model: Self = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(SurrogateError::Version(model.version));
        }
        model.architecture.check()?;
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<(), SurrogateError> {
        let arch = &self.architecture;
        let bad = |m: &str| Err(SurrogateError::Malformed(m.to_string()));
        if self.input_mean.len() != arch.input_width || self.input_scale.len() != arch.input_width {
            return bad("input statistics width");
        }
        if self.input_scale.contains(&0.0) {
            return bad("zero input scale");
        }
        if self.hidden.len() != arch.hidden_layers {
            return bad("hidden layer count");
        }
        let mut width = arch.input_width;
        for l in &self.hidden {
            let d = &l.dense;
            if d.inputs != width
                || d.weights.len() != d.inputs * d.outputs
                || d.bias.len() != d.outputs
            {
                return bad("dense layer shape");
            }
            if l.batchnorm.is_some() != arch.use_batchnorm {
                return bad("batch normalization presence");
            }
            if let Some(bn) = &l.batchnorm {
                if [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                    .iter()
                    .any(|v| v.len() != d.outputs)
                {
                    return bad("batch normalization width");
                }
            }
            width = d.outputs;
        }
        let o = &self.output;
        if o.inputs != width || o.outputs != 2 || o.weights.len() != 2 * width || o.bias.len() != 2
        {
            return bad("output layer shape");
        }
        if !self.is_finite() {
            return bad("non-finite parameters");
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SurrogateError> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SurrogateError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

/// Parameter (and element within it) the gradient points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaliencyTarget {
    pub target: MutationTarget,
    pub direction: Direction,
    pub feature: usize,
}

/// Picks the feature with the largest absolute gradient (lowest index on
/// ties) and maps it to its parameter. Zero gradients point positive.
pub fn saliency_to_parameter(gradient: &[f64], schema: &ConfigSchema) -> SaliencyTarget {
    let mut feature = 0;
    for (i, g) in gradient.iter().enumerate() {
        if g.abs() > gradient[feature].abs() {
            feature = i;
        }
    }
    target_of_feature(
        feature,
        gradient.get(feature).copied().unwrap_or(0.0),
        schema,
    )
}

fn target_of_feature(feature: usize, g: f64, schema: &ConfigSchema) -> SaliencyTarget {
    let direction = if g < 0.0 {
        Direction::Negative
    } else {
        Direction::Positive
    };
    let span = schema
        .span_of_feature(feature)
        .or_else(|| schema.layout().first().copied())
        .expect("schema has at least one parameter");
    let element = (span.width > 1 && feature >= span.start).then(|| feature - span.start);
    SaliencyTarget {
        target: MutationTarget {
            param: span.param,
            element,
        },
        direction,
        feature,
    }
}

/// As [`saliency_to_parameter`], but walks features in decreasing `|g|`
/// (lowest index on ties) and returns the first whose directed step can
/// change `config`. Falls back to the plain choice when none can.
pub fn saliency_to_feasible_parameter(
    gradient: &[f64],
    schema: &ConfigSchema,
    config: &EnvConfiguration,
) -> SaliencyTarget {
    let mut order: Vec<usize> = (0..gradient.len()).collect();
    order.sort_by(|&a, &b| {
        gradient[b]
            .abs()
            .total_cmp(&gradient[a].abs())
            .then(a.cmp(&b))
    });
    for feature in order {
        let t = target_of_feature(feature, gradient[feature], schema);
        if can_move(schema, config, t.target, t.direction) {
            return t;
        }
    }
    saliency_to_parameter(gradient, schema)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    /// No positive predictions; precision reported as 0.
    pub precision_undefined: bool,
    /// No positive labels; recall reported as 0.
    pub recall_undefined: bool,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let mut c = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn precision_recall(&self) -> PrecisionRecall {
        let pp = self.tp + self.fp;
        let ap = self.tp + self.fn_;
        PrecisionRecall {
            precision: if pp == 0 {
                0.0
            } else {
                self.tp as f64 / pp as f64
            },
            recall: if ap == 0 {
                0.0
            } else {
                self.tp as f64 / ap as f64
            },
            precision_undefined: pp == 0,
            recall_undefined: ap == 0,
        }
    }
}

/// Class 1 is predicted when `p1 > threshold`.
pub fn precision_recall(
    model: &SurrogateModel,
    test_set: &[Sample],
    threshold: f64,
) -> Result<PrecisionRecall, SurrogateError> {
    if test_set.is_empty() {
        return Err(SurrogateError::Degenerate("empty test set".into()));
    }
    let mut predicted = Vec::with_capacity(test_set.len());
    for s in test_set {
        predicted.push(model.predict_failure(&s.features)? > threshold);
    }
    let actual: Vec<bool> = test_set.iter().map(|s| s.failure).collect();
    Ok(Confusion::from_predictions(&predicted, &actual).precision_recall())
}

pub const RECALL_FLOOR: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    /// No candidate reached the recall floor; the highest-recall one was taken.
    pub below_recall_floor: bool,
}

/// Highest precision among candidates with recall ≥ 0.10 (ties: higher
/// recall, then earlier); otherwise the highest recall. `None` when empty.
pub fn select_model(scores: &[(f64, f64)]) -> Option<Selection> {
    if scores.is_empty() {
        return None;
    }
    let mut best: Option<usize> = None;
    for (i, &(p, r)) in scores.iter().enumerate() {
        if r < RECALL_FLOOR {
            continue;
        }
        best = match best {
            Some(b) if (scores[b].0, scores[b].1) >= (p, r) => Some(b),
            _ => Some(i),
        };
    }
    if let Some(index) = best {
        return Some(Selection {
            index,
            below_recall_floor: false,
        });
    }
    let mut index = 0;
    for (i, &(_, r)) in scores.iter().enumerate() {
        if r > scores[index].1 {
            index = i;
        }
    }
    Some(Selection {
        index,
        below_recall_floor: true,
    })
}
