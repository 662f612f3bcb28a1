use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SurrogateError;

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Layer sizes and regularization of the failure classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_width: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub dropout_p: f64,
    pub use_batchnorm: bool,
}

impl MlpArchitecture {
    /// 32 units per layer, batch normalization, dropout 0.5.
    pub fn new(input_width: usize, hidden_layers: usize) -> Result<Self, SurrogateError> {
        let arch = Self {
            input_width,
            hidden_layers,
            hidden_units: 32,
            dropout_p: 0.5,
            use_batchnorm: true,
        };
        arch.check()?;
        Ok(arch)
    }

    pub fn check(&self) -> Result<(), SurrogateError> {
        if self.input_width == 0 || self.hidden_units == 0 {
            return Err(SurrogateError::Architecture(
                "widths must be positive".into(),
            ));
        }
        if !(1..=4).contains(&self.hidden_layers) {
            return Err(SurrogateError::Architecture(format!(
                "hidden layer count {} outside [1, 4]",
                self.hidden_layers
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(SurrogateError::Architecture(format!(
                "dropout {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }

    /// Dropout is disabled for single-hidden-layer networks.
    pub fn effective_dropout(&self) -> f64 {
        if self.hidden_layers == 1 {
            0.0
        } else {
            self.dropout_p
        }
    }
}

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Uniform fan-in initialization in `±sqrt(6 / fan_in)`, zero bias.
    pub(crate) fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub(crate) fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(dot + self.bias[o]);
        }
    }

    /// `Wᵀ g`.
    pub(crate) fn backward_input(&self, g: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, go) in g.iter().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (d, w) in dx.iter_mut().zip(row) {
                *d += w * go;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub(crate) fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }

    /// Per-unit multiplier applied in inference mode.
    pub(crate) fn inference_scale(&self, j: usize) -> f64 {
        self.gamma[j] / (self.running_var[j] + BN_EPS).sqrt()
    }

    pub(crate) fn inference(&self, a: &mut [f64]) {
        for (j, x) in a.iter_mut().enumerate() {
            *x = (*x - self.running_mean[j]) * self.inference_scale(j) + self.beta[j];
        }
    }
}

/// Dense → (batch norm) → tanh → (dropout, training only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub dense: Dense,
    pub batchnorm: Option<BatchNorm>,
}

pub(crate) fn softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}
