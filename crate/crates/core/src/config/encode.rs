use std::collections::BTreeSet;

use serde_json::{Map, Value};

use super::schema::{ConfigSchema, ParameterKind};
use super::validate::check_shape;
use super::value::{Command, EnvConfiguration, ParameterValue, Provenance};
use super::SchemaError;

/// Fixed-width numeric encoding of a configuration. The span of each
/// parameter is given by [`ConfigSchema::layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Scalars copied in order, index sets one-hot (member `j` at offset `j-1`),
/// tuples and vectors flattened, command lists as `[ids.., values..]`.
pub fn encode(
    schema: &ConfigSchema,
    config: &EnvConfiguration,
) -> Result<FeatureVector, SchemaError> {
    check_shape(schema, config)?;
    let mut out = Vec::with_capacity(schema.encoded_width());
    for (p, v) in schema.parameters().iter().zip(config.values()) {
        match (&p.kind, v) {
            (_, ParameterValue::Int(x)) => out.push(*x as f64),
            (_, ParameterValue::Float(x)) => out.push(*x),
            (ParameterKind::IndexSet { universe, .. }, ParameterValue::Set(s)) => {
                let base = out.len();
                out.resize(base + universe, 0.0);
                for &m in s {
                    if m >= 1 && m <= *universe {
                        out[base + m - 1] = 1.0;
                    }
                }
            }
            (_, ParameterValue::Tuple(xs)) | (_, ParameterValue::Vector(xs)) => {
                out.extend_from_slice(xs)
            }
            (_, ParameterValue::Commands(pairs)) => {
                out.extend(pairs.iter().map(|(c, _)| c.id() as f64));
                out.extend(pairs.iter().map(|(_, v)| *v));
            }
            _ => unreachable!("shape checked"),
        }
    }
    Ok(FeatureVector(out))
}

/// Inverse of [`encode`] on exact encodings. One-hot entries must be exactly
/// 0 or 1, integer features and command ids must be integral.
pub fn decode(schema: &ConfigSchema, features: &[f64]) -> Result<EnvConfiguration, SchemaError> {
    if features.len() != schema.encoded_width() {
        return Err(SchemaError::Mismatch {
            schema: schema.name().to_string(),
            detail: format!(
                "expected {} features, got {}",
                schema.encoded_width(),
                features.len()
            ),
        });
    }
    let mut values = Vec::with_capacity(schema.parameters().len());
    for (p, span) in schema.parameters().iter().zip(schema.layout()) {
        let xs = &features[span.start..span.start + span.width];
        let malformed =
            |what: &str| SchemaError::Malformed(format!("parameter `{}`: {what}", p.name));
        let v = match &p.kind {
            ParameterKind::DiscreteInt { .. } => {
                if xs[0].fract() != 0.0 {
                    return Err(malformed("non-integral feature"));
                }
                ParameterValue::Int(xs[0] as i64)
            }
            ParameterKind::ContinuousFloat { .. } => ParameterValue::Float(xs[0]),
            ParameterKind::IndexSet { .. } => {
                let mut set = BTreeSet::new();
                for (i, &x) in xs.iter().enumerate() {
                    if x == 1.0 {
                        set.insert(i + 1);
                    } else if x != 0.0 {
                        return Err(malformed("one-hot entry is not 0 or 1"));
                    }
                }
                ParameterValue::Set(set)
            }
            ParameterKind::FloatTuple { .. } => ParameterValue::Tuple(xs.to_vec()),
            ParameterKind::PerturbationVector { .. } => ParameterValue::Vector(xs.to_vec()),
            ParameterKind::CommandValueList { length, .. } => {
                let mut pairs = Vec::with_capacity(*length);
                for i in 0..*length {
                    let id = xs[i];
                    let c = if id.fract() == 0.0 && (0.0..=3.0).contains(&id) {
                        Command::from_id(id as u8)
                    } else {
                        None
                    }
                    .ok_or_else(|| malformed("bad command id"))?;
                    pairs.push((c, xs[length + i]));
                }
                ParameterValue::Commands(pairs)
            }
        };
        values.push(v);
    }
    Ok(EnvConfiguration::from_parts(values, Provenance::Random))
}

/// JSON object keyed by parameter name, in schema order.
pub fn config_to_json(
    schema: &ConfigSchema,
    config: &EnvConfiguration,
) -> Result<Value, SchemaError> {
    check_shape(schema, config)?;
    let mut map = Map::new();
    for (p, v) in schema.parameters().iter().zip(config.values()) {
        let json = match v {
            ParameterValue::Int(x) => Value::from(*x),
            ParameterValue::Float(x) => Value::from(*x),
            ParameterValue::Set(s) => Value::from(s.iter().copied().collect::<Vec<_>>()),
            ParameterValue::Tuple(xs) | ParameterValue::Vector(xs) => Value::from(xs.clone()),
            ParameterValue::Commands(pairs) => Value::Array(
                pairs
                    .iter()
                    .map(|(c, v)| Value::Array(vec![Value::from(c.as_str()), Value::from(*v)]))
                    .collect(),
            ),
        };
        map.insert(p.name.clone(), json);
    }
    Ok(Value::Object(map))
}

/// Parses a configuration object. Shape is checked; validity is not.
pub fn config_from_json(
    schema: &ConfigSchema,
    json: &Value,
) -> Result<EnvConfiguration, SchemaError> {
    let obj = json
        .as_object()
        .ok_or_else(|| SchemaError::Malformed("configuration must be a JSON object".into()))?;
    if let Some(extra) = obj.keys().find(|k| schema.index_of(k).is_none()) {
        return Err(SchemaError::Malformed(format!(
            "unknown parameter `{extra}`"
        )));
    }
    let mut values = Vec::with_capacity(schema.parameters().len());
    for p in schema.parameters() {
        let malformed =
            |what: &str| SchemaError::Malformed(format!("parameter `{}`: {what}", p.name));
        let raw = obj.get(&p.name).ok_or_else(|| malformed("missing"))?;
        let floats = |raw: &Value| -> Result<Vec<f64>, SchemaError> {
            raw.as_array()
                .ok_or_else(|| malformed("expected an array"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| malformed("expected numbers")))
                .collect()
        };
        let v = match &p.kind {
            ParameterKind::DiscreteInt { .. } => ParameterValue::Int(
                raw.as_i64()
                    .ok_or_else(|| malformed("expected an integer"))?,
            ),
            ParameterKind::ContinuousFloat { .. } => {
                ParameterValue::Float(raw.as_f64().ok_or_else(|| malformed("expected a number"))?)
            }
            ParameterKind::IndexSet { .. } => {
                let arr = raw
                    .as_array()
                    .ok_or_else(|| malformed("expected an array"))?;
                let mut set = BTreeSet::new();
                for m in arr {
                    let m = m
                        .as_u64()
                        .ok_or_else(|| malformed("expected non-negative integers"))?;
                    set.insert(m as usize);
                }
                ParameterValue::Set(set)
            }
            ParameterKind::FloatTuple { ranges, .. } => {
                let xs = floats(raw)?;
                if xs.len() != ranges.len() {
                    return Err(malformed("wrong tuple length"));
                }
                ParameterValue::Tuple(xs)
            }
            ParameterKind::PerturbationVector { base, .. } => {
                let xs = floats(raw)?;
                if xs.len() != base.len() {
                    return Err(malformed("wrong vector length"));
                }
                ParameterValue::Vector(xs)
            }
            ParameterKind::CommandValueList { length, .. } => {
                let arr = raw
                    .as_array()
                    .ok_or_else(|| malformed("expected an array"))?;
                if arr.len() != *length {
                    return Err(malformed("wrong number of pairs"));
                }
                let mut pairs = Vec::with_capacity(*length);
                for pair in arr {
                    let pair = pair
                        .as_array()
                        .filter(|a| a.len() == 2)
                        .ok_or_else(|| malformed("pairs are [command, value]"))?;
                    let c: Command = pair[0]
                        .as_str()
                        .ok_or_else(|| malformed("command must be a string"))?
                        .parse()
                        .map_err(|e: String| malformed(&e))?;
                    let v = pair[1]
                        .as_f64()
                        .ok_or_else(|| malformed("value must be a number"))?;
                    pairs.push((c, v));
                }
                ParameterValue::Commands(pairs)
            }
        };
        values.push(v);
    }
    Ok(EnvConfiguration::from_parts(values, Provenance::Random))
}
