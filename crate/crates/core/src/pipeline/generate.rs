use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::config::{generate_random, ConfigSchema};
use crate::dataset::{InteractionDataset, Record};
use crate::executor::{execute_all, SutDescriptor};
use crate::search::derive_seeds;

/// Relabels episodes in the leading `fraction` of the log as failures with
/// probability `probability`, imitating an agent's early training phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelNoise {
    pub fraction: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub count: usize,
    pub runs_per_config: usize,
    pub seed: u64,
    pub label_noise: Option<LabelNoise>,
}

/// Executes `count` random configurations and logs their verdicts as
/// episodes `0..count`.
pub fn generate_dataset(
    descriptor: &SutDescriptor,
    schema: &ConfigSchema,
    spec: &DatasetSpec,
) -> Result<InteractionDataset, PipelineError> {
    if spec.count == 0 {
        return Err(PipelineError::Degenerate(
            "a dataset needs at least one episode".into(),
        ));
    }
    if spec.runs_per_config == 0 {
        return Err(PipelineError::Invalid(
            "runs per configuration must be at least 1".into(),
        ));
    }
    if let Some(n) = spec.label_noise {
        if !(0.0..=1.0).contains(&n.fraction) || !(0.0..=1.0).contains(&n.probability) {
            return Err(PipelineError::Invalid(
                "label noise fraction and probability must lie in [0, 1]".into(),
            ));
        }
    }
    let [config_seed, exec_seed, noise_seed] = derive_seeds(spec.seed, 3)[..] else {
        unreachable!()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config_seed);
    let configs = (0..spec.count)
        .map(|_| generate_random(schema, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes = execute_all(
        descriptor,
        schema,
        &configs,
        spec.runs_per_config,
        exec_seed,
    )?;
    if let Some(bad) = outcomes.iter().find(|o| o.valid_runs() == 0) {
        let reason = bad
            .invalid
            .first()
            .map(|r| r.error.clone())
            .unwrap_or_default();
        return Err(PipelineError::Sut(format!(
            "every run of a configuration failed: {reason}"
        )));
    }

    let early = spec
        .label_noise
        .map_or(0, |n| (n.fraction * spec.count as f64).floor() as usize);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let records = configs
        .into_iter()
        .zip(&outcomes)
        .enumerate()
        .map(|(i, (config, outcome))| {
            let mut failure = outcome.is_failure();
            if i < early {
                let q = spec.label_noise.map_or(0.0, |n| n.probability);
                failure |= noise_rng.random_bool(q);
            }
            Record {
                episode: i as u64,
                config,
                failure,
            }
        })
        .collect();
    Ok(InteractionDataset::new(schema, records)?)
}
