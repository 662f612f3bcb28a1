//! Configuration spaces: schemas, values, validity, encoding and the
//! variation operators used by search.

mod encode;
mod ops;
mod schema;
pub mod track;
mod validate;
mod value;

use thiserror::Error;

pub use encode::{config_from_json, config_to_json, decode, encode, FeatureVector};
pub use ops::{
    can_move, crossover_at, crossover_single_point, generate_random, generate_random_with_cap,
    mutate_directed, mutate_random, splice, Direction, MutationTarget, GENERATION_RETRIES,
    MUTATION_RETRIES,
};
pub use schema::{
    CommandRanges, CommandSteps, ConfigSchema, ConstraintSpec, FloatRange, IntRange, ParameterKind,
    ParameterSpec, PredicateRegistry, Span, ValuePredicate,
};
pub use validate::{validate, Validation};
pub use value::{Command, EnvConfiguration, ParameterValue, Provenance};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid schema: {0}")]
    Invalid(String),
    #[error("configuration does not match schema `{schema}`: {detail}")]
    Mismatch { schema: String, detail: String },
    #[error("random generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("malformed configuration: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ConfigSchema {
    /// Checks shape and validity of raw values and builds a configuration.
    pub fn configuration(
        &self,
        values: Vec<ParameterValue>,
    ) -> Result<EnvConfiguration, SchemaError> {
        let config = EnvConfiguration::from_parts(values, Provenance::Random);
        let v = validate(self, &config)?;
        if !v.is_ok() {
            return Err(SchemaError::Malformed(format!(
                "invalid configuration: {}",
                v.violations.join(", ")
            )));
        }
        Ok(config)
    }

    /// Builds a configuration without the validity check (shape is still
    /// checked). Useful for representing recorded data that predates a
    /// constraint.
    pub fn configuration_unchecked(
        &self,
        values: Vec<ParameterValue>,
    ) -> Result<EnvConfiguration, SchemaError> {
        let config = EnvConfiguration::from_parts(values, Provenance::Random);
        validate::check_shape(self, &config)?;
        Ok(config)
    }
}
