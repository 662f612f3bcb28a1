use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    genetic_search, hill_climb, random_search, sampling_search, Fitness, GaConfig,
    MutationStrategy, SearchBudget, SearchError, SearchOutcome, SeedStrategy,
};
use crate::config::{config_from_json, config_to_json, ConfigSchema, EnvConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    HillClimbing,
    Genetic,
    Sampling,
    Random,
}

pub type MutationKind = MutationStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedKind {
    Random,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    /// Hill-climbing neighborhood size.
    pub neighbors: usize,
    pub ga: GaConfig,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            neighbors: 4,
            ga: GaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub algo: Algorithm,
    pub mutation: MutationKind,
    pub seed_kind: SeedKind,
    pub params: StrategyParams,
}

impl StrategySpec {
    pub fn new(algo: Algorithm, mutation: MutationKind, seed_kind: SeedKind) -> Self {
        Self {
            algo,
            mutation,
            seed_kind,
            params: StrategyParams::default(),
        }
    }

    pub fn random() -> Self {
        Self::new(Algorithm::Random, MutationKind::Random, SeedKind::Random)
    }

    pub fn sampling() -> Self {
        Self::new(Algorithm::Sampling, MutationKind::Random, SeedKind::Random)
    }

    /// Short name such as `hc_sal+fail`, `ga_rnd`, `sampling`.
    pub fn label(&self) -> String {
        let algo = match self.algo {
            Algorithm::HillClimbing => "hc",
            Algorithm::Genetic => "ga",
            Algorithm::Sampling => return "sampling".into(),
            Algorithm::Random => return "random".into(),
        };
        let sal = if self.mutation == MutationKind::Saliency {
            "sal+"
        } else {
            ""
        };
        let seed = match self.seed_kind {
            SeedKind::Random => "rnd",
            SeedKind::Failure => "fail",
        };
        format!("{algo}_{sal}{seed}")
    }

    /// The eight hill-climbing and GA settings followed by sampling and random.
    pub fn all() -> Vec<Self> {
        let mut out = Vec::new();
        for algo in [Algorithm::HillClimbing, Algorithm::Genetic] {
            for mutation in [MutationKind::Random, MutationKind::Saliency] {
                for seed in [SeedKind::Random, SeedKind::Failure] {
                    out.push(Self::new(algo, mutation, seed));
                }
            }
        }
        out.push(Self::sampling());
        out.push(Self::random());
        out
    }

    pub fn needs_fitness(&self) -> bool {
        self.algo != Algorithm::Random
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignEntry {
    pub config: EnvConfiguration,
    /// Fitness at selection time; `None` for the random baseline.
    pub fitness: Option<f64>,
    pub evals_used: u64,
    pub seed: u64,
    pub budget_insufficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub strategy: StrategySpec,
    pub master_seed: u64,
    pub budget: SearchBudget,
    pub entries: Vec<CampaignEntry>,
    /// Wall time of the whole campaign; not written to the campaign file so
    /// that reruns stay byte-identical.
    pub elapsed_secs: f64,
}

impl CampaignResult {
    pub fn configs(&self) -> Vec<EnvConfiguration> {
        self.entries.iter().map(|e| e.config.clone()).collect()
    }

    pub fn to_json(&self, schema: &ConfigSchema) -> Result<Value, SearchError> {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                Ok(json!({
                    "config": config_to_json(schema, &e.config)?,
                    "fitness": e.fitness,
                    "evals_used": e.evals_used,
                    "seed": e.seed,
                    "budget_insufficient": e.budget_insufficient,
                }))
            })
            .collect::<Result<Vec<_>, SearchError>>()?;
        Ok(json!({
            "strategy": self.strategy,
            "schema": schema.name(),
            "master_seed": self.master_seed,
            "budget": self.budget,
            "entries": entries,
        }))
    }

    pub fn from_json(schema: &ConfigSchema, value: &Value) -> Result<Self, SearchError> {
        let field = |name: &str| {
            value
                .get(name)
                .ok_or_else(|| SearchError::Format(format!("missing `{name}`")))
        };
        let strategy: StrategySpec = parse(field("strategy")?, "strategy")?;
        let master_seed: u64 = parse(field("master_seed")?, "master_seed")?;
        let budget: SearchBudget = parse(field("budget")?, "budget")?;
        let raw = field("entries")?
            .as_array()
            .ok_or_else(|| SearchError::Format("`entries` must be an array".into()))?;
        let mut entries = Vec::with_capacity(raw.len());
        for e in raw {
            let config = config_from_json(schema, e.get("config").unwrap_or(&Value::Null))?;
            entries.push(CampaignEntry {
                config,
                fitness: e.get("fitness").and_then(Value::as_f64),
                evals_used: e.get("evals_used").and_then(Value::as_u64).unwrap_or(0),
                seed: e.get("seed").and_then(Value::as_u64).unwrap_or(0),
                budget_insufficient: e
                    .get("budget_insufficient")
                    .and_then(Value::as_bool)
                    .unwrap_or(false),
            });
        }
        Ok(Self {
            strategy,
            master_seed,
            budget,
            entries,
            elapsed_secs: 0.0,
        })
    }
}

fn parse<T: serde::de::DeserializeOwned>(v: &Value, what: &str) -> Result<T, SearchError> {
    serde_json::from_value(v.clone()).map_err(|e| SearchError::Format(format!("{what}: {e}")))
}

/// Per-invocation seeds drawn from the master stream.
pub fn derive_seeds(master_seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

fn run_one<F: Fitness + ?Sized>(
    spec: &StrategySpec,
    fitness: &F,
    schema: &ConfigSchema,
    budget: SearchBudget,
    pool: &[EnvConfiguration],
    seed: u64,
) -> Result<CampaignEntry, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeding = match spec.seed_kind {
        SeedKind::Random => SeedStrategy::Random,
        SeedKind::Failure => SeedStrategy::Failure(pool),
    };
    let outcome: SearchOutcome = match spec.algo {
        Algorithm::HillClimbing => hill_climb(
            fitness,
            schema,
            spec.params.neighbors,
            budget,
            seeding,
            spec.mutation,
            &mut rng,
        )?,
        Algorithm::Genetic => genetic_search(
            fitness,
            schema,
            &spec.params.ga,
            budget,
            seeding,
            spec.mutation,
            &mut rng,
        )?,
        Algorithm::Sampling => sampling_search(fitness, schema, budget, &mut rng)?,
        Algorithm::Random => {
            return Ok(CampaignEntry {
                config: random_search(schema, &mut rng)?,
                fitness: None,
                evals_used: 0,
                seed,
                budget_insufficient: false,
            })
        }
    };
    Ok(CampaignEntry {
        config: outcome.best,
        fitness: outcome.fitness,
        evals_used: outcome.evaluations,
        seed,
        budget_insufficient: outcome.budget_insufficient,
    })
}

/// Runs a strategy `count` times with independent RNG streams and a fresh
/// budget each time. Evaluation-count budgets run in parallel; wall-clock
/// budgets run one after another so each invocation gets its full allowance.
pub fn run_campaign<F: Fitness + ?Sized>(
    spec: &StrategySpec,
    count: usize,
    fitness: &F,
    schema: &ConfigSchema,
    budget: SearchBudget,
    failure_pool: &[EnvConfiguration],
    master_seed: u64,
) -> Result<CampaignResult, SearchError> {
    if count == 0 {
        return Err(SearchError::Settings(
            "campaign size must be at least 1".into(),
        ));
    }
    if spec.seed_kind == SeedKind::Failure
        && spec.algo != Algorithm::Random
        && spec.algo != Algorithm::Sampling
    {
        SeedStrategy::Failure(failure_pool).check()?;
    }
    let started = std::time::Instant::now();
    let seeds = derive_seeds(master_seed, count);
    let entries: Vec<CampaignEntry> = if budget.is_evaluation_count() {
        seeds
            .par_iter()
            .map(|&s| run_one(spec, fitness, schema, budget, failure_pool, s))
            .collect::<Result<_, _>>()?
    } else {
        seeds
            .iter()
            .map(|&s| run_one(spec, fitness, schema, budget, failure_pool, s))
            .collect::<Result<_, _>>()?
    };
    Ok(CampaignResult {
        strategy: *spec,
        master_seed,
        budget,
        entries,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}
