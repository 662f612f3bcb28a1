use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::PipelineError;
use crate::config::{ConfigSchema, EnvConfiguration};
use crate::dataset::InteractionDataset;
use crate::executor::{execute_all, ExecutionOutcome, SutDescriptor};
use crate::search::{
    derive_seeds, run_campaign, CampaignResult, MutationKind, SearchBudget, StrategySpec,
    SurrogateFitness,
};
use crate::surrogate::SurrogateModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub strategy: StrategySpec,
    /// Configurations selected per repetition.
    pub count: usize,
    pub budget: SearchBudget,
    pub repetitions: usize,
    pub runs_per_config: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub index: usize,
    pub campaign: CampaignResult,
    pub outcomes: Vec<ExecutionOutcome>,
}

impl Repetition {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.is_failure()).count()
    }
}

/// Failures of the dataset after dropping its earliest `filter_fraction`.
pub fn failure_pool(
    dataset: &InteractionDataset,
    filter_fraction: f64,
) -> Result<Vec<EnvConfiguration>, PipelineError> {
    Ok(dataset
        .filter_initial(filter_fraction)?
        .failures()
        .cloned()
        .collect())
}

/// Runs `repetitions` independent campaigns and executes every selected
/// configuration on the system under test.
pub fn run_repetitions(
    spec: &SearchSpec,
    schema: &ConfigSchema,
    descriptor: &SutDescriptor,
    model: Option<&SurrogateModel>,
    pool: &[EnvConfiguration],
) -> Result<Vec<Repetition>, PipelineError> {
    if spec.repetitions == 0 || spec.count == 0 || spec.runs_per_config == 0 {
        return Err(PipelineError::Invalid(
            "repetitions, campaign size and runs per configuration must be positive".into(),
        ));
    }
    let needs_model =
        spec.strategy.needs_fitness() || spec.strategy.mutation == MutationKind::Saliency;
    let fitness = match model {
        Some(m) => Some(SurrogateFitness::new(m, schema)?),
        None if needs_model => {
            return Err(PipelineError::Invalid(format!(
                "strategy {} needs a surrogate model",
                spec.strategy.label()
            )))
        }
        None => None,
    };
    let constant = |_: &EnvConfiguration| 0.0;
    derive_seeds(spec.master_seed, spec.repetitions)
        .into_iter()
        .enumerate()
        .map(|(index, seed)| {
            let [campaign_seed, exec_seed] = derive_seeds(seed, 2)[..] else {
                unreachable!()
            };
            let campaign = match &fitness {
                Some(f) => run_campaign(
                    &spec.strategy,
                    spec.count,
                    f,
                    schema,
                    spec.budget,
                    pool,
                    campaign_seed,
                )?,
                None => run_campaign(
                    &spec.strategy,
                    spec.count,
                    &constant,
                    schema,
                    spec.budget,
                    pool,
                    campaign_seed,
                )?,
            };
            let outcomes = execute_all(
                descriptor,
                schema,
                &campaign.configs(),
                spec.runs_per_config,
                exec_seed,
            )?;
            log::info!(
                "{} repetition {index}: {} failures",
                spec.strategy.label(),
                outcomes.iter().filter(|o| o.is_failure()).count()
            );
            Ok(Repetition {
                index,
                campaign,
                outcomes,
            })
        })
        .collect()
}

/// Execution results of one repetition, tagged with the strategy that
/// proposed them.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeFile {
    pub strategy: String,
    pub repetition: usize,
    pub outcomes: Vec<ExecutionOutcome>,
}

impl OutcomeFile {
    pub fn new(strategy: &StrategySpec, repetition: &Repetition) -> Self {
        Self {
            strategy: strategy.label(),
            repetition: repetition.index,
            outcomes: repetition.outcomes.clone(),
        }
    }

    pub fn to_json(&self, schema: &ConfigSchema) -> Result<Value, PipelineError> {
        let outcomes = self
            .outcomes
            .iter()
            .map(|o| o.to_json(schema))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(json!({
            "strategy": self.strategy,
            "schema": schema.name(),
            "repetition": self.repetition,
            "failures": self.outcomes.iter().filter(|o| o.is_failure()).count(),
            "outcomes": outcomes,
        }))
    }

    pub fn from_json(schema: &ConfigSchema, value: &Value) -> Result<Self, PipelineError> {
        let bad = |what: &str| {
            PipelineError::Invalid(format!("outcome file: missing or malformed `{what}`"))
        };
        let strategy = value
            .get("strategy")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("strategy"))?;
        let repetition = value
            .get("repetition")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("repetition"))?;
        if let Some(name) = value.get("schema").and_then(Value::as_str) {
            if name != schema.name() {
                return Err(PipelineError::Invalid(format!(
                    "outcome file was written for schema `{name}`, not `{}`",
                    schema.name()
                )));
            }
        }
        let outcomes = value
            .get("outcomes")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("outcomes"))?
            .iter()
            .map(|o| ExecutionOutcome::from_json(schema, o))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            strategy: strategy.to_string(),
            repetition: repetition as usize,
            outcomes,
        })
    }
}
