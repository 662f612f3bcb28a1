//! Failure search over configuration space with a surrogate fitness.

mod campaign;
mod genetic;
mod hill;

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{
    encode, generate_random, mutate_directed, mutate_random, validate, ConfigSchema,
    EnvConfiguration, SchemaError,
};
use crate::surrogate::{saliency_to_feasible_parameter, SaliencyTarget, SurrogateModel};

pub use campaign::{
    derive_seeds, run_campaign, Algorithm, CampaignEntry, CampaignResult, MutationKind, SeedKind,
    StrategyParams, StrategySpec,
};
pub use genetic::{genetic_search, GaConfig};
pub use hill::hill_climb;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("failure seeding requested with an empty failure pool")]
    EmptyFailurePool,
    #[error("saliency mutation requires a fitness backed by a differentiable model")]
    SaliencyUnavailable,
    #[error("invalid search settings: {0}")]
    Settings(String),
    #[error("campaign file: {0}")]
    Format(String),
}

/// Objective to maximize. Implementations must be deterministic and safe to
/// share across threads.
pub trait Fitness: Sync {
    fn fitness(&self, config: &EnvConfiguration) -> f64;

    /// Most influential parameter for the current prediction, when the
    /// fitness is differentiable.
    fn saliency_target(&self, _config: &EnvConfiguration) -> Option<SaliencyTarget> {
        None
    }
}

impl<F: Fn(&EnvConfiguration) -> f64 + Sync> Fitness for F {
    fn fitness(&self, config: &EnvConfiguration) -> f64 {
        self(config)
    }
}

/// Failure probability predicted by a trained classifier.
pub struct SurrogateFitness<'a> {
    model: &'a SurrogateModel,
    schema: &'a ConfigSchema,
}

impl<'a> SurrogateFitness<'a> {
    pub fn new(model: &'a SurrogateModel, schema: &'a ConfigSchema) -> Result<Self, SearchError> {
        if model.input_width() != schema.encoded_width() {
            return Err(SearchError::Settings(format!(
                "model input width {} does not match schema width {}",
                model.input_width(),
                schema.encoded_width()
            )));
        }
        Ok(Self { model, schema })
    }

    fn features(&self, config: &EnvConfiguration) -> Vec<f64> {
        encode(self.schema, config)
            .expect("configuration matches schema")
            .0
    }
}

impl Fitness for SurrogateFitness<'_> {
    fn fitness(&self, config: &EnvConfiguration) -> f64 {
        self.model
            .predict_failure(&self.features(config))
            .expect("width checked at construction")
    }

    fn saliency_target(&self, config: &EnvConfiguration) -> Option<SaliencyTarget> {
        let g = self.model.saliency(&self.features(config)).ok()?;
        Some(saliency_to_feasible_parameter(&g, self.schema, config))
    }
}

/// Per-configuration search allowance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "amount", rename_all = "kebab-case")]
pub enum SearchBudget {
    FitnessEvaluations(u64),
    WallClockSeconds(f64),
}

impl SearchBudget {
    pub fn check(&self) -> Result<(), SearchError> {
        let ok = match *self {
            SearchBudget::FitnessEvaluations(n) => n > 0,
            SearchBudget::WallClockSeconds(s) => s > 0.0 && s.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SearchError::Settings(
                "budget amount must be positive".into(),
            ))
        }
    }

    pub fn is_evaluation_count(&self) -> bool {
        matches!(self, SearchBudget::FitnessEvaluations(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedStrategy<'a> {
    Random,
    /// Training failures, already filtered.
    Failure(&'a [EnvConfiguration]),
}

impl SeedStrategy<'_> {
    fn check(&self) -> Result<(), SearchError> {
        match self {
            SeedStrategy::Failure([]) => Err(SearchError::EmptyFailurePool),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationStrategy {
    Random,
    Saliency,
}

/// Result of one search invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: EnvConfiguration,
    /// `None` when nothing was evaluated.
    pub fitness: Option<f64>,
    pub evaluations: u64,
    /// Completed iterations (hill climbing) or generations (GA).
    pub iterations: usize,
    /// Configurations generated from scratch (sampling).
    pub generated: usize,
    /// Incumbent fitness (hill climbing) or best-of-population fitness (GA)
    /// after each completed iteration; the first entry is the starting point.
    pub trace: Vec<f64>,
    /// The budget did not allow a single evaluation.
    pub budget_insufficient: bool,
    pub all_evaluated_valid: bool,
}

/// Budget meter and call counter around a fitness function.
struct Evaluator<'a, F: Fitness + ?Sized> {
    fitness: &'a F,
    schema: &'a ConfigSchema,
    budget: SearchBudget,
    started: Instant,
    used: u64,
    all_valid: bool,
}

impl<'a, F: Fitness + ?Sized> Evaluator<'a, F> {
    fn new(fitness: &'a F, schema: &'a ConfigSchema, budget: SearchBudget) -> Self {
        Self {
            fitness,
            schema,
            budget,
            started: Instant::now(),
            used: 0,
            all_valid: true,
        }
    }

    fn has_budget(&self) -> bool {
        match self.budget {
            SearchBudget::FitnessEvaluations(n) => self.used < n,
            SearchBudget::WallClockSeconds(s) => {
                s > 0.0 && self.started.elapsed() < Duration::from_secs_f64(s.min(1e9))
            }
        }
    }

    fn evaluate(&mut self, config: &EnvConfiguration) -> f64 {
        self.used += 1;
        if !validate(self.schema, config).is_ok_and(|v| v.is_ok()) {
            self.all_valid = false;
        }
        self.fitness.fitness(config)
    }

    fn saliency(&self, config: &EnvConfiguration) -> Result<SaliencyTarget, SearchError> {
        self.fitness
            .saliency_target(config)
            .ok_or(SearchError::SaliencyUnavailable)
    }

    fn mutate<R: Rng + ?Sized>(
        &self,
        config: &EnvConfiguration,
        strategy: MutationStrategy,
        rng: &mut R,
    ) -> Result<EnvConfiguration, SearchError> {
        Ok(match strategy {
            MutationStrategy::Random => mutate_random(self.schema, config, rng),
            MutationStrategy::Saliency => {
                let t = self.saliency(config)?;
                mutate_directed(self.schema, config, t.target, t.direction, rng)
            }
        })
    }

    fn finish(&self, best: EnvConfiguration, fitness: Option<f64>) -> SearchOutcome {
        SearchOutcome {
            best,
            fitness,
            evaluations: self.used,
            iterations: 0,
            generated: 0,
            trace: Vec::new(),
            budget_insufficient: fitness.is_none(),
            all_evaluated_valid: self.all_valid,
        }
    }
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Best-of-M baseline: random configurations until the budget runs out,
/// keeping the first one with the highest fitness.
pub fn sampling_search<F: Fitness + ?Sized, R: Rng + ?Sized>(
    fitness: &F,
    schema: &ConfigSchema,
    budget: SearchBudget,
    rng: &mut R,
) -> Result<SearchOutcome, SearchError> {
    let mut eval = Evaluator::new(fitness, schema, budget);
    let mut best: Option<(EnvConfiguration, f64)> = None;
    let mut generated = 0;
    while eval.has_budget() {
        let candidate = generate_random(schema, rng)?;
        generated += 1;
        let f = eval.evaluate(&candidate);
        if best.as_ref().is_none_or(|(_, b)| f > *b) {
            best = Some((candidate, f));
        }
    }
    let mut outcome = match best {
        Some((config, f)) => eval.finish(config, Some(f)),
        None => {
            generated = 1;
            eval.finish(generate_random(schema, rng)?, None)
        }
    };
    outcome.generated = generated;
    Ok(outcome)
}

/// Plain random baseline; the fitness is never consulted.
pub fn random_search<R: Rng + ?Sized>(
    schema: &ConfigSchema,
    rng: &mut R,
) -> Result<EnvConfiguration, SearchError> {
    Ok(generate_random(schema, rng)?)
}
