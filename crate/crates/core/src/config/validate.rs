use super::schema::{ConfigSchema, ConstraintSpec};
use super::track::curve_angles;
use super::value::{Command, EnvConfiguration, ParameterValue};
use super::SchemaError;

/// Outcome of a validity check. Violations are listed with per-parameter
/// range checks first (schema order), then constraints in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub violations: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Errors only on arity/kind mismatch.
pub(crate) fn check_shape(
    schema: &ConfigSchema,
    config: &EnvConfiguration,
) -> Result<(), SchemaError> {
    let values = config.values();
    if values.len() != schema.parameters().len() {
        return Err(SchemaError::Mismatch {
            schema: schema.name().to_string(),
            detail: format!(
                "expected {} values, got {}",
                schema.parameters().len(),
                values.len()
            ),
        });
    }
    for (p, v) in schema.parameters().iter().zip(values) {
        if !p.kind.shape_matches(v) {
            return Err(SchemaError::Mismatch {
                schema: schema.name().to_string(),
                detail: format!(
                    "parameter `{}` expects a {} value",
                    p.name,
                    p.kind.kind_name()
                ),
            });
        }
    }
    Ok(())
}

pub fn validate(
    schema: &ConfigSchema,
    config: &EnvConfiguration,
) -> Result<Validation, SchemaError> {
    check_shape(schema, config)?;
    let values = config.values();
    let mut violations = Vec::new();
    for (p, v) in schema.parameters().iter().zip(values) {
        if !p.kind.in_range(v) {
            violations.push(format!("{}-range", p.name));
        }
    }
    let get = |name: &str| &values[schema.index_of(name).expect("checked at schema build")];
    for c in schema.constraints() {
        let holds = match c {
            ConstraintSpec::NotMember { scalar, set, .. } => match (get(scalar), get(set)) {
                (ParameterValue::Int(x), ParameterValue::Set(s)) => {
                    *x < 1 || !s.contains(&(*x as usize))
                }
                _ => false,
            },
            ConstraintSpec::StartsEndsWith { param, command, .. } => match get(param) {
                ParameterValue::Commands(p) => {
                    p.first().map(|x| x.0) == Some(*command)
                        && p.last().map(|x| x.0) == Some(*command)
                }
                _ => false,
            },
            ConstraintSpec::DyFollowedByTurn { param, .. } => match get(param) {
                ParameterValue::Commands(p) => p
                    .iter()
                    .enumerate()
                    .filter(|(_, (c, _))| *c == Command::DY)
                    .all(|(i, _)| p.get(i + 1).is_some_and(|(n, _)| n.is_turn())),
                _ => false,
            },
            ConstraintSpec::MinCurves {
                param,
                count,
                min_largest_angle,
                ..
            } => match get(param) {
                ParameterValue::Commands(p) => {
                    let angles = curve_angles(p);
                    angles.len() >= *count && angles.iter().any(|a| a.abs() >= *min_largest_angle)
                }
                _ => false,
            },
            ConstraintSpec::MaxRotationAngle {
                param, max_angle, ..
            } => match get(param) {
                ParameterValue::Commands(p) => {
                    curve_angles(p).iter().all(|a| a.abs() <= *max_angle)
                }
                _ => false,
            },
            ConstraintSpec::Predicate {
                param, predicate, ..
            } => {
                let f = schema
                    .predicates()
                    .get(predicate)
                    .expect("checked at schema build");
                f(get(param))
            }
        };
        if !holds {
            violations.push(c.name().to_string());
        }
    }
    Ok(Validation { violations })
}

/// Shape check plus validity in one boolean.
pub(crate) fn is_valid(schema: &ConfigSchema, config: &EnvConfiguration) -> bool {
    validate(schema, config).map(|v| v.is_ok()).unwrap_or(false)
}
