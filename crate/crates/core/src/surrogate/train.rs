use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{softmax2, BatchNorm, Dense, HiddenLayer, MlpArchitecture, BN_EPS, BN_MOMENTUM};
use super::{Sample, SurrogateError, SurrogateModel, TrainingMetadata, MODEL_VERSION};
use crate::dataset::ClassWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub class_weights: ClassWeights,
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl TrainingConfig {
    pub fn new(class_weights: ClassWeights, seed: u64) -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 64,
            class_weights,
            seed,
            patience: 20,
        }
    }

    fn check(&self) -> Result<(), SurrogateError> {
        let w = self.class_weights;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || self.batch_size == 0
            || self.patience == 0
        {
            return Err(SurrogateError::Config(
                "learning rate, batch size and patience must be positive".into(),
            ));
        }
        if !(w.w0 > 0.0 && w.w1 > 0.0 && w.w0.is_finite() && w.w1.is_finite()) {
            return Err(SurrogateError::Config(
                "class weights must be finite and positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-layer state kept from the training-mode forward pass.
struct LayerCache {
    input: Vec<Vec<f64>>,
    xhat: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
    activation: Vec<Vec<f64>>,
    mask: Vec<Vec<f64>>,
}

/// Weight and bias gradients, plus (gamma, beta) when batch norm is on.
type LayerGrads = (Vec<f64>, Vec<f64>, Option<(Vec<f64>, Vec<f64>)>);

struct Grads {
    hidden: Vec<LayerGrads>,
    output: (Vec<f64>, Vec<f64>),
}

fn standardization(samples: &[Sample], width: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len() as f64;
    let mut mean = vec![0.0; width];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(&s.features) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; width];
    for s in samples {
        for ((v, x), m) in var.iter_mut().zip(&s.features).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn init_model(arch: &MlpArchitecture, train: &[Sample], rng: &mut ChaCha8Rng) -> SurrogateModel {
    let (input_mean, input_scale) = standardization(train, arch.input_width);
    let mut hidden = Vec::with_capacity(arch.hidden_layers);
    let mut width = arch.input_width;
    for _ in 0..arch.hidden_layers {
        hidden.push(HiddenLayer {
            dense: Dense::init(width, arch.hidden_units, rng),
            batchnorm: arch
                .use_batchnorm
                .then(|| BatchNorm::new(arch.hidden_units)),
        });
        width = arch.hidden_units;
    }
    let output = Dense::init(width, 2, rng);
    SurrogateModel {
        version: MODEL_VERSION.to_string(),
        architecture: *arch,
        input_mean,
        input_scale,
        hidden,
        output,
        metadata: TrainingMetadata::default(),
    }
}

/// Weighted cross-entropy `Σ w_c·(−log p_c) / Σ w_c` in inference mode.
pub(crate) fn weighted_loss(
    model: &SurrogateModel,
    samples: &[Sample],
    weights: ClassWeights,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in samples {
        let p = model.probabilities_unchecked(&s.features);
        let w = weights.for_label(s.failure);
        let pc = if s.failure { p[1] } else { p[0] };
        num += w * -pc.max(f64::MIN_POSITIVE).ln();
        den += w;
    }
    num / den
}

fn train_step(
    model: &mut SurrogateModel,
    batch: &[&Sample],
    cfg: &TrainingConfig,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let b = batch.len();
    let dropout = model.architecture.effective_dropout();
    let keep = 1.0 - dropout;

    let mut current: Vec<Vec<f64>> = batch
        .iter()
        .map(|s| model.standardize(&s.features))
        .collect();
    let mut caches = Vec::with_capacity(model.hidden.len());
    for layer in &mut model.hidden {
        let input = current;
        let mut pre: Vec<Vec<f64>> = input
            .iter()
            .map(|x| {
                let mut out = Vec::new();
                layer.dense.forward(x, &mut out);
                out
            })
            .collect();
        let units = layer.dense.outputs;
        let mut xhat = Vec::new();
        let mut inv_std = Vec::new();
        if let Some(bn) = &mut layer.batchnorm {
            let mut mean = vec![0.0; units];
            for row in &pre {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= b as f64);
            let mut var = vec![0.0; units];
            for row in &pre {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= b as f64);
            inv_std = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            xhat = pre
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(j, v)| (v - mean[j]) * inv_std[j])
                        .collect::<Vec<_>>()
                })
                .collect();
            for (row, xh) in pre.iter_mut().zip(&xhat) {
                for j in 0..units {
                    row[j] = bn.gamma[j] * xh[j] + bn.beta[j];
                }
            }
            let unbiased = if b > 1 {
                b as f64 / (b as f64 - 1.0)
            } else {
                1.0
            };
            for j in 0..units {
                bn.running_mean[j] =
                    (1.0 - BN_MOMENTUM) * bn.running_mean[j] + BN_MOMENTUM * mean[j];
                bn.running_var[j] =
                    (1.0 - BN_MOMENTUM) * bn.running_var[j] + BN_MOMENTUM * var[j] * unbiased;
            }
        }
        let activation: Vec<Vec<f64>> = pre
            .iter()
            .map(|row| row.iter().map(|v| v.tanh()).collect())
            .collect();
        let mask: Vec<Vec<f64>> = activation
            .iter()
            .map(|row| {
                row.iter()
                    .map(|_| {
                        if dropout > 0.0 {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect();
        current = activation
            .iter()
            .zip(&mask)
            .map(|(a, m)| a.iter().zip(m).map(|(x, y)| x * y).collect())
            .collect();
        caches.push(LayerCache {
            input,
            xhat,
            inv_std,
            activation,
            mask,
        });
    }

    // Output layer and loss gradient.
    let total_w: f64 = batch
        .iter()
        .map(|s| cfg.class_weights.for_label(s.failure))
        .sum();
    let mut loss = 0.0;
    let mut d_logits = Vec::with_capacity(b);
    for (s, h) in batch.iter().zip(&current) {
        let mut logits = Vec::new();
        model.output.forward(h, &mut logits);
        let p = softmax2(&logits);
        let w = cfg.class_weights.for_label(s.failure) / total_w;
        let target = if s.failure { [0.0, 1.0] } else { [1.0, 0.0] };
        let pc = if s.failure { p[1] } else { p[0] };
        loss += w * -pc.max(f64::MIN_POSITIVE).ln();
        d_logits.push([w * (p[0] - target[0]), w * (p[1] - target[1])]);
    }

    let out = &model.output;
    let mut gw_out = vec![0.0; out.weights.len()];
    let mut gb_out = vec![0.0; 2];
    let mut d_current = Vec::with_capacity(b);
    for (dl, h) in d_logits.iter().zip(&current) {
        for o in 0..2 {
            gb_out[o] += dl[o];
            for (i, hv) in h.iter().enumerate() {
                gw_out[o * out.inputs + i] += dl[o] * hv;
            }
        }
        d_current.push(out.backward_input(dl));
    }

    let mut hidden_grads = Vec::with_capacity(model.hidden.len());
    for (layer, cache) in model.hidden.iter().zip(&caches).rev() {
        let units = layer.dense.outputs;
        // Through dropout and tanh.
        let mut d_pre: Vec<Vec<f64>> = d_current
            .iter()
            .zip(&cache.activation)
            .zip(&cache.mask)
            .map(|((d, a), m)| {
                (0..units)
                    .map(|j| d[j] * m[j] * (1.0 - a[j] * a[j]))
                    .collect()
            })
            .collect();
        let mut bn_grads = None;
        if let Some(bn) = &layer.batchnorm {
            let mut g_gamma = vec![0.0; units];
            let mut g_beta = vec![0.0; units];
            for (d, xh) in d_pre.iter().zip(&cache.xhat) {
                for j in 0..units {
                    g_gamma[j] += d[j] * xh[j];
                    g_beta[j] += d[j];
                }
            }
            let bf = b as f64;
            let mut sum_dxhat = vec![0.0; units];
            let mut sum_dxhat_xhat = vec![0.0; units];
            for (d, xh) in d_pre.iter().zip(&cache.xhat) {
                for j in 0..units {
                    let dxh = d[j] * bn.gamma[j];
                    sum_dxhat[j] += dxh;
                    sum_dxhat_xhat[j] += dxh * xh[j];
                }
            }
            for (d, xh) in d_pre.iter_mut().zip(&cache.xhat) {
                for j in 0..units {
                    let dxh = d[j] * bn.gamma[j];
                    d[j] = cache.inv_std[j] / bf
                        * (bf * dxh - sum_dxhat[j] - xh[j] * sum_dxhat_xhat[j]);
                }
            }
            bn_grads = Some((g_gamma, g_beta));
        }
        let dense = &layer.dense;
        let mut gw = vec![0.0; dense.weights.len()];
        let mut gb = vec![0.0; units];
        let mut d_input = Vec::with_capacity(b);
        for (d, x) in d_pre.iter().zip(&cache.input) {
            for o in 0..units {
                gb[o] += d[o];
                let row = &mut gw[o * dense.inputs..(o + 1) * dense.inputs];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += d[o] * xv;
                }
            }
            d_input.push(dense.backward_input(d));
        }
        hidden_grads.push((gw, gb, bn_grads));
        d_current = d_input;
    }
    hidden_grads.reverse();

    apply(
        model,
        &Grads {
            hidden: hidden_grads,
            output: (gw_out, gb_out),
        },
        cfg.learning_rate,
    );
    loss
}

fn apply(model: &mut SurrogateModel, grads: &Grads, lr: f64) {
    let step = |p: &mut [f64], g: &[f64]| p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
    for (layer, (gw, gb, bn)) in model.hidden.iter_mut().zip(&grads.hidden) {
        step(&mut layer.dense.weights, gw);
        step(&mut layer.dense.bias, gb);
        if let (Some(norm), Some((gg, gbeta))) = (&mut layer.batchnorm, bn) {
            step(&mut norm.gamma, gg);
            step(&mut norm.beta, gbeta);
        }
    }
    step(&mut model.output.weights, &grads.output.0);
    step(&mut model.output.bias, &grads.output.1);
}

/// Mini-batch gradient descent on class-weighted cross-entropy. The returned
/// model is the snapshot with the lowest validation loss (the last epoch when
/// the validation set is empty).
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    arch: &MlpArchitecture,
    cfg: &TrainingConfig,
) -> Result<SurrogateModel, SurrogateError> {
    arch.check()?;
    cfg.check()?;
    for s in train_set.iter().chain(val_set) {
        if s.features.len() != arch.input_width {
            return Err(SurrogateError::Width {
                expected: arch.input_width,
                got: s.features.len(),
            });
        }
    }
    if !(train_set.iter().any(|s| s.failure) && train_set.iter().any(|s| !s.failure)) {
        return Err(SurrogateError::Degenerate(
            "training set must contain both classes".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(arch, train_set, &mut rng);
    let mut train_losses = Vec::with_capacity(cfg.epochs);
    let mut val_losses = Vec::with_capacity(cfg.epochs);

    let initial_val =
        (!val_set.is_empty()).then(|| weighted_loss(&model, val_set, cfg.class_weights));
    let mut best = model.clone();
    let mut best_val = initial_val;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut weight_seen = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            if arch.use_batchnorm && chunk.len() < 2 {
                continue;
            }
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let w: f64 = batch
                .iter()
                .map(|s| cfg.class_weights.for_label(s.failure))
                .sum();
            let loss = train_step(&mut model, &batch, cfg, &mut rng);
            if !loss.is_finite() {
                return Err(SurrogateError::Diverged { epoch });
            }
            epoch_loss += loss * w;
            weight_seen += w;
        }
        epochs_run = epoch;
        train_losses.push(if weight_seen > 0.0 {
            epoch_loss / weight_seen
        } else {
            0.0
        });
        if !model.is_finite() {
            return Err(SurrogateError::Diverged { epoch });
        }

        if val_set.is_empty() {
            best = model.clone();
            best_epoch = epoch;
            continue;
        }
        let val = weighted_loss(&model, val_set, cfg.class_weights);
        if !val.is_finite() {
            return Err(SurrogateError::Diverged { epoch });
        }
        val_losses.push(val);
        if best_val.is_none_or(|b| val < b) {
            best_val = Some(val);
            best = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    best.metadata = TrainingMetadata {
        epochs_run,
        best_epoch,
        best_val_loss: best_val,
        seed: cfg.seed,
        train_loss: train_losses,
        val_loss: val_losses,
    };
    Ok(best)
}
