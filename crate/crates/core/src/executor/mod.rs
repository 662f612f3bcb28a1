//! Running systems under test on configurations.

mod external;
mod parking;
mod synthetic;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{
    config_from_json, config_to_json, validate, ConfigSchema, EnvConfiguration, SchemaError,
};

pub use external::{ExternalParams, ExternalSut};
pub use parking::{ParkingGeometry, ParkingScenario, ToyParkingParams, ToyParkingSut};
pub use synthetic::{SyntheticParams, SyntheticSut};

#[derive(Debug, Error)]
pub enum ExecutionError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("configuration is invalid: {0}")]
    InvalidConfig(String),
    #[error("could not start `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("run {run} timed out after {seconds} s; stderr: {stderr}")]
    Timeout {
        run: usize,
        seconds: f64,
        stderr: String,
    },
    #[error("protocol violation in run {run}: {message}; stderr: {stderr}")]
    Protocol {
        run: usize,
        message: String,
        stderr: String,
    },
    #[error("simulator exited during run {run}; stderr: {stderr}")]
    Exited { run: usize, stderr: String },
    #[error("this system under test does not accept schema `{0}`")]
    UnsupportedSchema(String),
    #[error("outcome file: {0}")]
    Format(String),
}

/// Time-ordered samples of equal width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    pub samples: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self, String> {
        let width = samples.first().map(Vec::len).ok_or("trajectory is empty")?;
        if width == 0 || samples.iter().any(|s| s.len() != width) {
            return Err("trajectory samples must share a positive width".into());
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err("trajectory contains non-finite values".into());
        }
        Ok(Self { samples })
    }

    pub fn timestep_count(&self) -> usize {
        self.samples.len()
    }

    pub fn width(&self) -> usize {
        self.samples[0].len()
    }
}

/// One episode's verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub failure: bool,
    pub trajectory: Trajectory,
}

pub trait Sut: Send {
    fn schema(&self) -> &ConfigSchema;

    /// Same configuration and seed always give the same episode.
    fn is_deterministic(&self) -> bool;

    /// `run` is the index within the current `execute` call, used in errors.
    fn episode(
        &mut self,
        config: &EnvConfiguration,
        seed: u64,
        run: usize,
    ) -> Result<Episode, ExecutionError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidRun {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionOutcome {
    pub config: EnvConfiguration,
    /// Runs requested.
    pub runs: usize,
    pub failures: usize,
    /// `failures / valid runs`; 0 when no run was valid.
    pub failure_probability: f64,
    /// One per valid run.
    pub trajectories: Vec<Trajectory>,
    /// One per requested run.
    pub seeds: Vec<u64>,
    /// Runs that crashed, timed out or broke protocol; excluded from the
    /// probability's denominator.
    pub invalid: Vec<InvalidRun>,
}

impl ExecutionOutcome {
    pub fn valid_runs(&self) -> usize {
        self.runs - self.invalid.len()
    }

    pub fn is_failure(&self) -> bool {
        is_failure(self)
    }

    pub fn to_json(&self, schema: &ConfigSchema) -> Result<Value, ExecutionError> {
        Ok(json!({
            "config": config_to_json(schema, &self.config)?,
            "runs": self.runs,
            "failures": self.failures,
            "failure_probability": self.failure_probability,
            "is_failure": self.is_failure(),
            "seeds": self.seeds,
            "trajectories": self.trajectories,
            "invalid": self.invalid,
        }))
    }

    pub fn from_json(schema: &ConfigSchema, value: &Value) -> Result<Self, ExecutionError> {
        let config = config_from_json(
            schema,
            value
                .get("config")
                .ok_or_else(|| ExecutionError::Format("missing `config`".into()))?,
        )?;
        let runs: usize = field(value, "runs")?;
        let failures: usize = field(value, "failures")?;
        let failure_probability: f64 = field(value, "failure_probability")?;
        let seeds: Vec<u64> = field(value, "seeds")?;
        let trajectories: Vec<Trajectory> = field(value, "trajectories")?;
        let invalid: Vec<InvalidRun> = field(value, "invalid")?;
        if seeds.len() != runs
            || trajectories.len() + invalid.len() != runs
            || failures > trajectories.len()
        {
            return Err(ExecutionError::Format("inconsistent run counts".into()));
        }
        Ok(Self {
            config,
            runs,
            failures,
            failure_probability,
            trajectories,
            seeds,
            invalid,
        })
    }
}

fn field<T: serde::de::DeserializeOwned>(value: &Value, key: &str) -> Result<T, ExecutionError> {
    let raw = value
        .get(key)
        .ok_or_else(|| ExecutionError::Format(format!("missing `{key}`")))?;
    serde_json::from_value(raw.clone()).map_err(|e| ExecutionError::Format(format!("`{key}`: {e}")))
}

/// Failure verdict over repeated runs: strictly more than half failed.
pub fn is_failure(outcome: &ExecutionOutcome) -> bool {
    outcome.failure_probability > 0.5
}

/// Runs `runs` episodes with seeds drawn from `rng`.
pub fn execute(
    sut: &mut dyn Sut,
    config: &EnvConfiguration,
    runs: usize,
    rng: &mut dyn RngCore,
) -> Result<ExecutionOutcome, ExecutionError> {
    let check = validate(sut.schema(), config)?;
    if !check.is_ok() {
        return Err(ExecutionError::InvalidConfig(check.violations.join(", ")));
    }
    let seeds: Vec<u64> = (0..runs).map(|_| rng.next_u64()).collect();
    let mut failures = 0;
    let mut trajectories = Vec::with_capacity(runs);
    let mut invalid = Vec::new();
    for (run, &seed) in seeds.iter().enumerate() {
        match sut.episode(config, seed, run) {
            Ok(ep) => {
                failures += ep.failure as usize;
                trajectories.push(ep.trajectory);
            }
            Err(e) => {
                log::warn!("run {run} invalid: {e}");
                invalid.push(InvalidRun {
                    run,
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    let valid = trajectories.len();
    Ok(ExecutionOutcome {
        config: config.clone(),
        runs,
        failures,
        failure_probability: if valid == 0 {
            0.0
        } else {
            failures as f64 / valid as f64
        },
        trajectories,
        seeds,
        invalid,
    })
}

/// Which system under test to build, with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SutDescriptor {
    SyntheticAnalytic(SyntheticParams),
    ToyParking(ToyParkingParams),
    ExternalProcess(ExternalParams),
}

impl SutDescriptor {
    pub fn is_deterministic(&self) -> bool {
        match self {
            SutDescriptor::SyntheticAnalytic(p) => p.noise == 0.0,
            SutDescriptor::ToyParking(_) => true,
            SutDescriptor::ExternalProcess(p) => p.deterministic,
        }
    }

    /// 1 for deterministic systems, 10 otherwise.
    pub fn default_runs(&self) -> usize {
        if self.is_deterministic() {
            1
        } else {
            10
        }
    }

    pub fn instantiate(&self, schema: &ConfigSchema) -> Result<Box<dyn Sut>, ExecutionError> {
        Ok(match self {
            SutDescriptor::SyntheticAnalytic(p) => {
                Box::new(SyntheticSut::new(schema.clone(), p.clone())?)
            }
            SutDescriptor::ToyParking(p) => Box::new(ToyParkingSut::new(schema.clone(), *p)?),
            SutDescriptor::ExternalProcess(p) => {
                Box::new(ExternalSut::new(schema.clone(), p.clone()))
            }
        })
    }
}

/// Executes every configuration with a per-configuration stream derived from
/// `master_seed`. Built-in systems run in parallel, one instance per worker;
/// an external process is reused sequentially.
pub fn execute_all(
    descriptor: &SutDescriptor,
    schema: &ConfigSchema,
    configs: &[EnvConfiguration],
    runs: usize,
    master_seed: u64,
) -> Result<Vec<ExecutionOutcome>, ExecutionError> {
    let seeds = crate::search::derive_seeds(master_seed, configs.len());
    let one = |sut: &mut dyn Sut, config: &EnvConfiguration, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        execute(sut, config, runs, &mut rng)
    };
    match descriptor {
        SutDescriptor::ExternalProcess(_) => {
            let mut sut = descriptor.instantiate(schema)?;
            configs
                .iter()
                .zip(&seeds)
                .map(|(c, &s)| one(sut.as_mut(), c, s))
                .collect()
        }
        _ => configs
            .par_iter()
            .zip(seeds.par_iter())
            .map_init(
                || descriptor.instantiate(schema),
                |sut, (c, &s)| match sut {
                    Ok(sut) => one(sut.as_mut(), c, s),
                    Err(e) => Err(ExecutionError::Format(e.to_string())),
                },
            )
            .collect(),
    }
}
