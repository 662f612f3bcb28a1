//! Interaction logs: `(episode, configuration, failed?)` records loaded from
//! JSON Lines, with prefix filtering, class weights and stratified splits.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{
    config_from_json, config_to_json, validate, ConfigSchema, EnvConfiguration, SchemaError,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("episode {episode}: invalid configuration ({violations})")]
    Validation { episode: u64, violations: String },
    #[error("degenerate dataset: {0}")]
    Degenerate(String),
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub episode: u64,
    pub config: EnvConfiguration,
    pub failure: bool,
}

/// Ordered records; episode indices strictly increase.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionDataset {
    records: Vec<Record>,
}

/// Per-class loss weights `(w0, w1)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        Self { w0: 1.0, w1: 1.0 }
    }

    pub fn for_label(&self, failure: bool) -> f64 {
        if failure {
            self.w1
        } else {
            self.w0
        }
    }
}

impl InteractionDataset {
    /// Builds a dataset from records, checking episode ordering and validity.
    pub fn new(schema: &ConfigSchema, records: Vec<Record>) -> Result<Self, DatasetError> {
        let mut last: Option<u64> = None;
        for r in &records {
            if last.is_some_and(|l| r.episode <= l) {
                return Err(DatasetError::Argument(format!(
                    "episode indices must strictly increase (episode {} follows {})",
                    r.episode,
                    last.unwrap()
                )));
            }
            last = Some(r.episode);
            let v = validate(schema, &r.config)?;
            if !v.is_ok() {
                return Err(DatasetError::Validation {
                    episode: r.episode,
                    violations: v.violations.join(", "),
                });
            }
        }
        Ok(Self { records })
    }

    pub fn load(path: impl AsRef<Path>, schema: &ConfigSchema) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)?;
        Self::read(BufReader::new(file), schema)
    }

    /// Parses JSON Lines `{"episode": i, "config": {...}, "failure": 0|1}`.
    pub fn read(reader: impl BufRead, schema: &ConfigSchema) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        let mut last: Option<u64> = None;
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |message: String| DatasetError::Parse {
                line: line_no,
                message,
            };
            let doc: Value = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            let episode = doc
                .get("episode")
                .and_then(Value::as_u64)
                .ok_or_else(|| parse("missing or non-integer `episode`".into()))?;
            let failure = match doc.get("failure") {
                Some(Value::Number(n)) if n.as_u64() == Some(0) => false,
                Some(Value::Number(n)) if n.as_u64() == Some(1) => true,
                Some(Value::Bool(b)) => *b,
                _ => return Err(parse("`failure` must be 0 or 1".into())),
            };
            if last.is_some_and(|l| episode <= l) {
                return Err(parse(format!(
                    "episode {episode} is not after episode {}",
                    last.unwrap()
                )));
            }
            last = Some(episode);
            let raw = doc
                .get("config")
                .ok_or_else(|| parse("missing `config`".into()))?;
            let config = config_from_json(schema, raw).map_err(|e| parse(e.to_string()))?;
            let v = validate(schema, &config)?;
            if !v.is_ok() {
                return Err(DatasetError::Validation {
                    episode,
                    violations: v.violations.join(", "),
                });
            }
            records.push(Record {
                episode,
                config,
                failure,
            });
        }
        Ok(Self { records })
    }

    pub fn write(&self, mut out: impl Write, schema: &ConfigSchema) -> Result<(), DatasetError> {
        for r in &self.records {
            let line = json!({
                "episode": r.episode,
                "config": config_to_json(schema, &r.config)?,
                "failure": u8::from(r.failure),
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.failure).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &EnvConfiguration> {
        self.records.iter().filter(|r| r.failure).map(|r| &r.config)
    }

    /// Drops the first `⌊fraction · N⌋` records.
    pub fn filter_initial(&self, fraction: f64) -> Result<Self, DatasetError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(DatasetError::Argument(format!(
                "filter fraction {fraction} outside [0, 1]"
            )));
        }
        let drop = (fraction * self.records.len() as f64).floor() as usize;
        Ok(self.drop_first(drop))
    }

    pub fn drop_first(&self, count: usize) -> Self {
        Self {
            records: self.records.iter().skip(count).cloned().collect(),
        }
    }

    /// Keeps records whose episode is at least `episode`.
    pub fn from_episode(&self, episode: u64) -> Self {
        Self {
            records: self
                .records
                .iter()
                .filter(|r| r.episode >= episode)
                .cloned()
                .collect(),
        }
    }

    fn subset(&self, mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        Self {
            records: idx.into_iter().map(|i| self.records[i].clone()).collect(),
        }
    }

    /// Stratified random split into `(train, validation, test)`. Each label
    /// stratum contributes `⌊fraction · n⌋` records to validation and test;
    /// the rounding residue stays in train. Split members keep file order.
    pub fn split(
        &self,
        val_fraction: f64,
        test_fraction: f64,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<(Self, Self, Self), DatasetError> {
        if val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0 {
            return Err(DatasetError::Argument(format!(
                "split fractions {val_fraction}/{test_fraction} must be >= 0 and sum below 1"
            )));
        }
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for label in [false, true] {
            let mut stratum: Vec<usize> = (0..self.records.len())
                .filter(|&i| self.records[i].failure == label)
                .collect();
            stratum.shuffle(rng);
            let n = stratum.len() as f64;
            let n_val = (val_fraction * n).floor() as usize;
            let n_test = (test_fraction * n).floor() as usize;
            val.extend_from_slice(&stratum[..n_val]);
            test.extend_from_slice(&stratum[n_val..n_val + n_test]);
            train.extend_from_slice(&stratum[n_val + n_test..]);
        }
        if (val_fraction > 0.0 && val.is_empty()) || (test_fraction > 0.0 && test.is_empty()) {
            return Err(DatasetError::Degenerate(format!(
                "{} records are too few to populate a {val_fraction}/{test_fraction} split",
                self.records.len()
            )));
        }
        Ok((self.subset(train), self.subset(val), self.subset(test)))
    }
}

/// `w_c = N / (2 · count_c)`.
pub fn class_weights(labels: &[bool]) -> Result<ClassWeights, DatasetError> {
    let n = labels.len() as f64;
    let ones = labels.iter().filter(|&&l| l).count() as f64;
    let zeros = n - ones;
    if ones == 0.0 || zeros == 0.0 {
        return Err(DatasetError::Degenerate(format!(
            "class weights need both classes ({zeros} non-failures, {ones} failures)"
        )));
    }
    Ok(ClassWeights {
        w0: n / (2.0 * zeros),
        w1: n / (2.0 * ones),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::config::{generate_random, ParameterValue};

    fn parking_record(episode: u64, goal: i64, failure: bool) -> Record {
        let schema = ConfigSchema::parking();
        let config = schema
            .configuration(vec![
                ParameterValue::Int(goal),
                ParameterValue::Float(0.0),
                ParameterValue::Set(BTreeSet::from([3, 5])),
                ParameterValue::Tuple(vec![0.0, 0.0]),
            ])
            .unwrap();
        Record {
            episode,
            config,
            failure,
        }
    }

    fn synthetic(n: usize, ones: usize, seed: u64) -> InteractionDataset {
        let schema = ConfigSchema::parking();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..n)
            .map(|i| Record {
                episode: i as u64,
                config: generate_random(&schema, &mut rng).unwrap(),
                failure: i % (n / ones.max(1)).max(1) == 0 && i / (n / ones.max(1)).max(1) < ones,
            })
            .collect();
        InteractionDataset::new(&schema, records).unwrap()
    }

    #[test]
    fn load_three_records() {
        let schema = ConfigSchema::parking();
        let ds = InteractionDataset::new(
            &schema,
            vec![
                parking_record(0, 1, false),
                parking_record(1, 2, true),
                parking_record(4, 20, false),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write(&mut buf, &schema).unwrap();
        let back = InteractionDataset::read(buf.as_slice(), &schema).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back, ds);
    }

    #[test]
    fn label_two_is_a_parse_error_at_its_line() {
        let schema = ConfigSchema::parking();
        let text = concat!(
            r#"{"episode":0,"config":{"goal_lane":1,"head_ego":0.0,"pvehicles":[],"pos_ego":[0.0,0.0]},"failure":0}"#,
            "\n",
            r#"{"episode":1,"config":{"goal_lane":1,"head_ego":0.0,"pvehicles":[],"pos_ego":[0.0,0.0]},"failure":2}"#,
            "\n"
        );
        match InteractionDataset::read(text.as_bytes(), &schema) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn constraint_violation_names_the_episode() {
        let schema = ConfigSchema::parking();
        let text = r#"{"episode":7,"config":{"goal_lane":5,"head_ego":0.0,"pvehicles":[5],"pos_ego":[0.0,0.0]},"failure":1}"#;
        match InteractionDataset::read(text.as_bytes(), &schema) {
            Err(DatasetError::Validation {
                episode,
                violations,
            }) => {
                assert_eq!(episode, 7);
                assert!(violations.contains("goal-not-in-pvehicles"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn filter_initial_drops_prefix() {
        let ds = synthetic(100, 10, 1);
        assert_eq!(ds.filter_initial(0.05).unwrap().len(), 95);
        assert_eq!(ds.filter_initial(0.30).unwrap().len(), 70);
        assert_eq!(ds.filter_initial(0.0).unwrap(), ds);
        assert!(ds.filter_initial(1.5).is_err());
        let f = ds.filter_initial(0.30).unwrap();
        assert_eq!(f.records()[0].episode, 30);
    }

    #[test]
    fn class_weight_examples() {
        let mut labels = vec![false; 90];
        labels.extend(vec![true; 10]);
        let w = class_weights(&labels).unwrap();
        assert!((w.w0 - 0.5556).abs() < 1e-4);
        assert!((w.w1 - 5.0).abs() < 1e-4);

        let balanced: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        assert_eq!(
            class_weights(&balanced).unwrap(),
            ClassWeights { w0: 1.0, w1: 1.0 }
        );

        assert!(matches!(
            class_weights(&[true; 5]),
            Err(DatasetError::Degenerate(_))
        ));
    }

    #[test]
    fn split_sizes_and_stratification() {
        let ds = synthetic(1000, 100, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (train, val, test) = ds.split(0.2, 0.1, &mut rng).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (700, 200, 100));
        let ones = |d: &InteractionDataset| d.labels().iter().filter(|&&l| l).count();
        assert_eq!(ones(&val), 20);
        assert_eq!(ones(&test), 10);
        assert_eq!(ones(&train), 70);

        let (t, v, s) = ds.split(0.0, 0.0, &mut rng).unwrap();
        assert_eq!(t, ds);
        assert!(v.is_empty() && s.is_empty());
    }

    #[test]
    fn split_of_tiny_dataset_is_degenerate() {
        let ds = synthetic(4, 1, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            ds.split(0.1, 0.1, &mut rng),
            Err(DatasetError::Degenerate(_))
        ));
    }
}
