use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Episode, ExecutionError, Sut, Trajectory};
use crate::config::{encode, generate_random, ConfigSchema, EnvConfiguration};

const CALIBRATION_SAMPLES: usize = 20_000;
const CALIBRATION_SEED: u64 = 0x5eed_ca11;
pub const TRAJECTORY_STEPS: usize = 20;

/// Analytic system under test. With features `x` rescaled to `[0, 1]` by the
/// schema's nominal bounds, the score is
///
/// `g(x) = Σ w_i·x_i + pair_weight·x_a·x_b`
///
/// with `w_i = cos(2.4·i)` unless weights are given. An episode fails iff
/// `g(x) > threshold`, flipped with probability `noise` using one
/// `random_bool` draw from a ChaCha8 stream seeded with the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub pair: (usize, usize),
    pub pair_weight: f64,
    /// `None` calibrates the threshold so that `failure_rate` of uniformly
    /// generated configurations fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub failure_rate: f64,
    pub noise: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            weights: None,
            pair: (0, 1),
            pair_weight: 1.5,
            threshold: None,
            failure_rate: 0.06,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSut {
    schema: ConfigSchema,
    params: SyntheticParams,
    weights: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    threshold: f64,
}

impl SyntheticSut {
    pub fn new(schema: ConfigSchema, params: SyntheticParams) -> Result<Self, ExecutionError> {
        let width = schema.encoded_width();
        let weights = match &params.weights {
            Some(w) if w.len() != width => {
                return Err(ExecutionError::InvalidConfig(format!(
                    "{} weights for {width} features",
                    w.len()
                )))
            }
            Some(w) => w.clone(),
            None => (0..width).map(|i| (2.4 * i as f64).cos()).collect(),
        };
        let finite = weights.iter().all(|w| w.is_finite())
            && params.pair_weight.is_finite()
            && params.threshold.is_none_or(|t| !t.is_nan());
        if !finite || params.pair.0 >= width || params.pair.1 >= width {
            return Err(ExecutionError::InvalidConfig(
                "synthetic parameters out of range".into(),
            ));
        }
        if !(0.0..=1.0).contains(&params.noise) || !(0.0..=1.0).contains(&params.failure_rate) {
            return Err(ExecutionError::InvalidConfig(
                "noise and failure rate must lie in [0, 1]".into(),
            ));
        }
        let bounds = schema.feature_bounds();
        let mut sut = Self {
            schema,
            params,
            weights,
            bounds,
            threshold: 0.0,
        };
        sut.threshold = match sut.params.threshold {
            Some(t) => t,
            None => sut.calibrate()?,
        };
        Ok(sut)
    }

    fn calibrate(&self) -> Result<f64, ExecutionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SEED);
        let mut scores = Vec::with_capacity(CALIBRATION_SAMPLES);
        for _ in 0..CALIBRATION_SAMPLES {
            scores.push(self.score(&generate_random(&self.schema, &mut rng)?));
        }
        scores.sort_by(f64::total_cmp);
        let keep = ((1.0 - self.params.failure_rate) * CALIBRATION_SAMPLES as f64).floor() as usize;
        Ok(match keep {
            0 => f64::NEG_INFINITY,
            k if k >= CALIBRATION_SAMPLES => f64::INFINITY,
            // Midpoint between the last passing and first failing score.
            k => 0.5 * (scores[k - 1] + scores[k]),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn normalized(&self, config: &EnvConfiguration) -> Vec<f64> {
        let fv = encode(&self.schema, config).expect("configuration matches schema");
        fv.0.iter()
            .zip(&self.bounds)
            .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    /// `g(x)` for a configuration.
    pub fn score(&self, config: &EnvConfiguration) -> f64 {
        let x = self.normalized(config);
        let linear: f64 = self.weights.iter().zip(&x).map(|(w, v)| w * v).sum();
        linear + self.params.pair_weight * x[self.params.pair.0] * x[self.params.pair.1]
    }

    /// Noise-free verdict.
    pub fn fails(&self, config: &EnvConfiguration) -> bool {
        self.score(config) > self.threshold
    }

    /// Two-channel decay: `(m·e^{-t/5}, m·cos(π·t·(1 + x_a)/10))` where `m`
    /// is the margin `g − threshold` (clamped when the threshold is infinite).
    fn trajectory(&self, config: &EnvConfiguration) -> Trajectory {
        let margin = (self.score(config) - self.threshold).clamp(-1e6, 1e6);
        let xa = self.normalized(config)[self.params.pair.0];
        let samples = (0..TRAJECTORY_STEPS)
            .map(|t| {
                let t = t as f64;
                vec![
                    margin * (-t / 5.0).exp(),
                    margin * (std::f64::consts::PI * t * (1.0 + xa) / 10.0).cos(),
                ]
            })
            .collect();
        Trajectory { samples }
    }
}

impl Sut for SyntheticSut {
    fn schema(&self) -> &ConfigSchema {
        &self.schema
    }

    fn is_deterministic(&self) -> bool {
        self.params.noise == 0.0
    }

    fn episode(
        &mut self,
        config: &EnvConfiguration,
        seed: u64,
        _run: usize,
    ) -> Result<Episode, ExecutionError> {
        let mut failure = self.fails(config);
        if self.params.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            failure ^= rng.random_bool(self.params.noise);
        }
        Ok(Episode {
            failure,
            trajectory: self.trajectory(config),
        })
    }
}
