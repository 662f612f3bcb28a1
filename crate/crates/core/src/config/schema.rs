use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::track;
use super::value::ParameterValue;
use super::SchemaError;

/// Inclusive integer interval, serialized as `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange(pub i64, pub i64);

impl IntRange {
    pub fn low(&self) -> i64 {
        self.0
    }

    pub fn high(&self) -> i64 {
        self.1
    }

    pub fn contains(&self, v: i64) -> bool {
        self.0 <= v && v <= self.1
    }
}

/// Real interval, serialized as `[low, high]`. Whether the upper end is
/// closed depends on the owning parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloatRange(pub f64, pub f64);

impl FloatRange {
    pub fn low(&self) -> f64 {
        self.0
    }

    pub fn high(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, v: f64) -> bool {
        self.0 <= v && v <= self.1
    }
}

/// Value ranges for each command of a command-value list. `S`, `L` and `R`
/// carry integral road-unit counts; `DY` carries a per-unit rotation angle in
/// degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRanges {
    pub straight: FloatRange,
    pub turn: FloatRange,
    pub dy: FloatRange,
}

/// Step distributions used by the command-value mutation operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandSteps {
    #[serde(default = "default_dy_step")]
    pub dy: FloatRange,
    #[serde(default = "default_unit_step")]
    pub units: IntRange,
}

impl Default for CommandSteps {
    fn default() -> Self {
        Self {
            dy: default_dy_step(),
            units: default_unit_step(),
        }
    }
}

fn default_dy_step() -> FloatRange {
    FloatRange(0.0, 50.0)
}

fn default_unit_step() -> IntRange {
    IntRange(1, 20)
}

fn default_set_count() -> IntRange {
    IntRange(1, 3)
}

fn default_set_shift() -> IntRange {
    IntRange(1, 20)
}

/// The kind of a parameter, together with its bounds and the step
/// distributions its mutation operators draw from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParameterKind {
    /// Integer in an inclusive range; mutated by `± step`.
    DiscreteInt { range: IntRange, step: IntRange },
    /// Real number in `[low, high]` (or `[low, high)` when `high_exclusive`).
    ContinuousFloat {
        range: FloatRange,
        #[serde(default)]
        high_exclusive: bool,
        step: FloatRange,
    },
    /// Subset of `{1, .., universe}`, encoded one-hot.
    IndexSet {
        universe: usize,
        /// How many members an add/remove or shift mutation touches.
        #[serde(default = "default_set_count")]
        count: IntRange,
        /// Shift amount for member-index mutation.
        #[serde(default = "default_set_shift")]
        shift: IntRange,
        /// Cardinality drawn by random generation; defaults to `[0, universe]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial_size: Option<IntRange>,
    },
    /// Fixed-length tuple of reals with per-coordinate inclusive ranges.
    FloatTuple {
        ranges: Vec<FloatRange>,
        step: FloatRange,
    },
    /// Vector of reals that must stay within `[base - m, base + m]`.
    PerturbationVector { base: Vec<f64>, half_width: f64 },
    /// Fixed-length list of `(command, value)` pairs.
    CommandValueList {
        length: usize,
        ranges: CommandRanges,
        #[serde(default)]
        steps: CommandSteps,
    },
}

impl ParameterKind {
    /// Number of features this parameter occupies in the encoding.
    pub fn encoded_width(&self) -> usize {
        match self {
            ParameterKind::DiscreteInt { .. } | ParameterKind::ContinuousFloat { .. } => 1,
            ParameterKind::IndexSet { universe, .. } => *universe,
            ParameterKind::FloatTuple { ranges, .. } => ranges.len(),
            ParameterKind::PerturbationVector { base, .. } => base.len(),
            ParameterKind::CommandValueList { length, .. } => 2 * length,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ParameterKind::DiscreteInt { .. } => "discrete-int",
            ParameterKind::ContinuousFloat { .. } => "continuous-float",
            ParameterKind::IndexSet { .. } => "index-set",
            ParameterKind::FloatTuple { .. } => "float-tuple",
            ParameterKind::PerturbationVector { .. } => "perturbation-vector",
            ParameterKind::CommandValueList { .. } => "command-value-list",
        }
    }

    fn check(&self, name: &str) -> Result<(), SchemaError> {
        let bad = |what: &str| Err(SchemaError::Invalid(format!("parameter `{name}`: {what}")));
        let float_ok = |r: &FloatRange| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        match self {
            ParameterKind::DiscreteInt { range, step } => {
                if range.0 > range.1 {
                    return bad("empty range");
                }
                if step.0 < 0 || step.0 > step.1 {
                    return bad("step range must be non-negative and non-empty");
                }
            }
            ParameterKind::ContinuousFloat {
                range,
                high_exclusive,
                step,
            } => {
                if !float_ok(range) || (*high_exclusive && range.0 >= range.1) {
                    return bad("empty range");
                }
                if !float_ok(step) || step.0 < 0.0 {
                    return bad("step range must be non-negative and non-empty");
                }
            }
            ParameterKind::IndexSet {
                universe,
                count,
                shift,
                initial_size,
            } => {
                if *universe == 0 {
                    return bad("universe size must be at least 1");
                }
                if count.0 < 1 || count.0 > count.1 || shift.0 < 0 || shift.0 > shift.1 {
                    return bad("invalid mutation counts");
                }
                if let Some(s) = initial_size {
                    if s.0 < 0 || s.0 > s.1 || s.0 as usize > *universe {
                        return bad("invalid initial size range");
                    }
                }
            }
            ParameterKind::FloatTuple { ranges, step } => {
                if ranges.is_empty() || !ranges.iter().all(float_ok) {
                    return bad("empty coordinate range");
                }
                if !float_ok(step) || step.0 < 0.0 {
                    return bad("invalid step range");
                }
            }
            ParameterKind::PerturbationVector { base, half_width } => {
                if base.is_empty() || !base.iter().all(|b| b.is_finite()) {
                    return bad("base values must be finite and non-empty");
                }
                if !(half_width.is_finite() && *half_width >= 0.0) {
                    return bad("half-width must be >= 0");
                }
            }
            ParameterKind::CommandValueList {
                length,
                ranges,
                steps,
            } => {
                if *length < 2 {
                    return bad("command lists need at least two pairs");
                }
                if ![ranges.straight, ranges.turn, ranges.dy]
                    .iter()
                    .all(float_ok)
                {
                    return bad("empty command value range");
                }
                if !float_ok(&steps.dy) || steps.units.0 < 0 || steps.units.0 > steps.units.1 {
                    return bad("invalid command steps");
                }
            }
        }
        Ok(())
    }

    /// Whether `value` has the right shape for this kind (ranges not checked).
    pub(crate) fn shape_matches(&self, value: &ParameterValue) -> bool {
        match (self, value) {
            (ParameterKind::DiscreteInt { .. }, ParameterValue::Int(_)) => true,
            (ParameterKind::ContinuousFloat { .. }, ParameterValue::Float(_)) => true,
            (ParameterKind::IndexSet { .. }, ParameterValue::Set(_)) => true,
            (ParameterKind::FloatTuple { ranges, .. }, ParameterValue::Tuple(v)) => {
                v.len() == ranges.len()
            }
            (ParameterKind::PerturbationVector { base, .. }, ParameterValue::Vector(v)) => {
                v.len() == base.len()
            }
            (ParameterKind::CommandValueList { length, .. }, ParameterValue::Commands(v)) => {
                v.len() == *length
            }
            _ => false,
        }
    }

    /// Per-parameter range check.
    pub(crate) fn in_range(&self, value: &ParameterValue) -> bool {
        match (self, value) {
            (ParameterKind::DiscreteInt { range, .. }, ParameterValue::Int(v)) => {
                range.contains(*v)
            }
            (
                ParameterKind::ContinuousFloat {
                    range,
                    high_exclusive,
                    ..
                },
                ParameterValue::Float(v),
            ) => {
                v.is_finite()
                    && *v >= range.0
                    && if *high_exclusive {
                        *v < range.1
                    } else {
                        *v <= range.1
                    }
            }
            (ParameterKind::IndexSet { universe, .. }, ParameterValue::Set(s)) => {
                s.iter().all(|&m| m >= 1 && m <= *universe)
            }
            (ParameterKind::FloatTuple { ranges, .. }, ParameterValue::Tuple(v)) => v
                .iter()
                .zip(ranges)
                .all(|(x, r)| x.is_finite() && r.contains(*x)),
            (ParameterKind::PerturbationVector { base, half_width }, ParameterValue::Vector(v)) => {
                v.iter()
                    .zip(base)
                    .all(|(x, b)| x.is_finite() && (x - b).abs() <= *half_width + 1e-12)
            }
            (ParameterKind::CommandValueList { ranges, .. }, ParameterValue::Commands(v)) => {
                v.iter().all(|(c, x)| {
                    let r = ranges.for_command(*c);
                    x.is_finite() && r.contains(*x) && (c.is_dy() || x.fract() == 0.0)
                })
            }
            _ => false,
        }
    }
}

impl CommandRanges {
    pub fn for_command(&self, c: super::Command) -> FloatRange {
        use super::Command;
        match c {
            Command::S => self.straight,
            Command::L | Command::R => self.turn,
            Command::DY => self.dy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParameterKind,
}

/// Declarative cross-parameter validity rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum ConstraintSpec {
    /// Integer parameter `scalar` must not be a member of index-set `set`.
    NotMember {
        name: String,
        scalar: String,
        set: String,
    },
    /// Command list must start and end with `command`.
    StartsEndsWith {
        name: String,
        param: String,
        command: super::Command,
    },
    /// Every `DY` must be immediately followed by `L` or `R`.
    DyFollowedByTurn { name: String, param: String },
    /// At least `count` curves, and at least one whose rotation reaches
    /// `min_largest_angle` degrees.
    MinCurves {
        name: String,
        param: String,
        count: usize,
        #[serde(default)]
        min_largest_angle: f64,
    },
    /// No curve may rotate by more than `max_angle` degrees.
    MaxRotationAngle {
        name: String,
        param: String,
        max_angle: f64,
    },
    /// Delegates to a predicate registered on the schema under `predicate`.
    Predicate {
        name: String,
        param: String,
        predicate: String,
    },
}

impl ConstraintSpec {
    pub fn name(&self) -> &str {
        match self {
            ConstraintSpec::NotMember { name, .. }
            | ConstraintSpec::StartsEndsWith { name, .. }
            | ConstraintSpec::DyFollowedByTurn { name, .. }
            | ConstraintSpec::MinCurves { name, .. }
            | ConstraintSpec::MaxRotationAngle { name, .. }
            | ConstraintSpec::Predicate { name, .. } => name,
        }
    }

    fn referenced(&self) -> Vec<&str> {
        match self {
            ConstraintSpec::NotMember { scalar, set, .. } => vec![scalar, set],
            ConstraintSpec::StartsEndsWith { param, .. }
            | ConstraintSpec::DyFollowedByTurn { param, .. }
            | ConstraintSpec::MinCurves { param, .. }
            | ConstraintSpec::MaxRotationAngle { param, .. }
            | ConstraintSpec::Predicate { param, .. } => vec![param],
        }
    }
}

/// A user-supplied validity check over one parameter value.
pub type ValuePredicate = Arc<dyn Fn(&ParameterValue) -> bool + Send + Sync>;

/// Named predicates available to `predicate` constraints.
#[derive(Clone, Default)]
pub struct PredicateRegistry {
    predicates: BTreeMap<String, ValuePredicate>,
}

impl PredicateRegistry {
    /// Registry holding the built-in predicates (`no-self-intersection`).
    pub fn with_builtins() -> Self {
        let mut reg = Self::default();
        reg.register(
            "no-self-intersection",
            Arc::new(|v: &ParameterValue| match v {
                ParameterValue::Commands(pairs) => !track::self_intersects(pairs),
                _ => false,
            }),
        );
        reg
    }

    pub fn register(&mut self, name: impl Into<String>, predicate: ValuePredicate) {
        self.predicates.insert(name.into(), predicate);
    }

    pub fn get(&self, name: &str) -> Option<&ValuePredicate> {
        self.predicates.get(name)
    }
}

impl fmt::Debug for PredicateRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.predicates.keys()).finish()
    }
}

/// Where one parameter lives inside the encoded feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub param: usize,
    pub start: usize,
    pub width: usize,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    name: String,
    parameters: Vec<ParameterSpec>,
    #[serde(default)]
    constraints: Vec<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crossover_retries: Option<usize>,
}

const PARKING_JSON: &str = include_str!("../../schemas/parking.schema.json");
const PERTURBATION_JSON: &str = include_str!("../../schemas/perturbation.schema.json");
const TRACKGEN_JSON: &str = include_str!("../../schemas/trackgen.schema.json");

/// Immutable description of a configuration space.
#[derive(Debug, Clone)]
pub struct ConfigSchema {
    name: String,
    parameters: Vec<ParameterSpec>,
    constraints: Vec<ConstraintSpec>,
    crossover_retries: Option<usize>,
    predicates: PredicateRegistry,
    layout: Vec<Span>,
    width: usize,
}

impl ConfigSchema {
    pub fn new(
        name: impl Into<String>,
        parameters: Vec<ParameterSpec>,
        constraints: Vec<ConstraintSpec>,
    ) -> Result<Self, SchemaError> {
        Self::with_predicates(
            name,
            parameters,
            constraints,
            PredicateRegistry::with_builtins(),
        )
    }

    pub fn with_predicates(
        name: impl Into<String>,
        parameters: Vec<ParameterSpec>,
        constraints: Vec<ConstraintSpec>,
        predicates: PredicateRegistry,
    ) -> Result<Self, SchemaError> {
        let name = name.into();
        if parameters.is_empty() {
            return Err(SchemaError::Invalid("schema declares no parameters".into()));
        }
        let mut seen = HashSet::new();
        for p in &parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(SchemaError::Invalid(format!(
                    "duplicate parameter `{}`",
                    p.name
                )));
            }
            p.kind.check(&p.name)?;
        }
        let mut layout = Vec::with_capacity(parameters.len());
        let mut start = 0;
        for (i, p) in parameters.iter().enumerate() {
            let width = p.kind.encoded_width();
            layout.push(Span {
                param: i,
                start,
                width,
            });
            start += width;
        }
        let schema = Self {
            name,
            parameters,
            constraints,
            crossover_retries: None,
            predicates,
            layout,
            width: start,
        };
        schema.check_constraints()?;
        Ok(schema)
    }

    fn check_constraints(&self) -> Result<(), SchemaError> {
        for c in &self.constraints {
            for r in c.referenced() {
                if self.index_of(r).is_none() {
                    return Err(SchemaError::Invalid(format!(
                        "constraint `{}` references undeclared parameter `{r}`",
                        c.name()
                    )));
                }
            }
            let kind_of = |n: &str| &self.parameters[self.index_of(n).unwrap()].kind;
            let ok = match c {
                ConstraintSpec::NotMember { scalar, set, .. } => {
                    matches!(kind_of(scalar), ParameterKind::DiscreteInt { .. })
                        && matches!(kind_of(set), ParameterKind::IndexSet { .. })
                }
                ConstraintSpec::StartsEndsWith { param, .. }
                | ConstraintSpec::DyFollowedByTurn { param, .. }
                | ConstraintSpec::MinCurves { param, .. }
                | ConstraintSpec::MaxRotationAngle { param, .. } => {
                    matches!(kind_of(param), ParameterKind::CommandValueList { .. })
                }
                ConstraintSpec::Predicate { predicate, .. } => {
                    if self.predicates.get(predicate).is_none() {
                        return Err(SchemaError::Invalid(format!(
                            "constraint `{}` uses unregistered predicate `{predicate}`",
                            c.name()
                        )));
                    }
                    true
                }
            };
            if !ok {
                return Err(SchemaError::Invalid(format!(
                    "constraint `{}` applied to a parameter of the wrong kind",
                    c.name()
                )));
            }
        }
        Ok(())
    }

    /// Overrides how many cut points crossover tries before falling back to
    /// the parents.
    pub fn with_crossover_retries(mut self, retries: usize) -> Self {
        self.crossover_retries = Some(retries.max(1));
        self
    }

    pub fn from_json_str(json: &str) -> Result<Self, SchemaError> {
        Self::from_json_str_with(json, PredicateRegistry::with_builtins())
    }

    pub fn from_json_str_with(
        json: &str,
        predicates: PredicateRegistry,
    ) -> Result<Self, SchemaError> {
        let doc: SchemaDoc = serde_json::from_str(json)?;
        let mut schema =
            Self::with_predicates(doc.name, doc.parameters, doc.constraints, predicates)?;
        if let Some(r) = doc.crossover_retries {
            schema = schema.with_crossover_retries(r);
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let doc = SchemaDoc {
            name: self.name.clone(),
            parameters: self.parameters.clone(),
            constraints: self.constraints.clone(),
            crossover_retries: self.crossover_retries,
        };
        serde_json::to_string_pretty(&doc).expect("schema serializes")
    }

    /// Goal lane, heading, parked vehicles and ego position of the parking lot.
    pub fn parking() -> Self {
        Self::from_json_str(PARKING_JSON).expect("bundled parking schema is valid")
    }

    /// Joint position/velocity perturbations around a rest pose.
    pub fn perturbation() -> Self {
        Self::from_json_str(PERTURBATION_JSON).expect("bundled perturbation schema is valid")
    }

    /// Twelve-pair road track command grammar.
    pub fn trackgen() -> Self {
        Self::from_json_str(TRACKGEN_JSON).expect("bundled trackgen schema is valid")
    }

    /// Looks up a bundled schema by name (`parking`, `perturbation`, `trackgen`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "parking" => Some(Self::parking()),
            "perturbation" => Some(Self::perturbation()),
            "trackgen" => Some(Self::trackgen()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parameters(&self) -> &[ParameterSpec] {
        &self.parameters
    }

    pub fn constraints(&self) -> &[ConstraintSpec] {
        &self.constraints
    }

    pub fn predicates(&self) -> &PredicateRegistry {
        &self.predicates
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    pub fn layout(&self) -> &[Span] {
        &self.layout
    }

    /// Total encoded width.
    pub fn encoded_width(&self) -> usize {
        self.width
    }

    /// The span containing feature `feature`.
    pub fn span_of_feature(&self, feature: usize) -> Option<Span> {
        self.layout
            .iter()
            .copied()
            .find(|s| feature >= s.start && feature < s.start + s.width)
    }

    /// Crossover positions: schema parameters, or the pairs of a schema whose
    /// only parameter is a command-value list.
    pub fn crossover_positions(&self) -> usize {
        match self.pairwise_crossover() {
            Some(len) => len,
            None => self.parameters.len(),
        }
    }

    pub(crate) fn pairwise_crossover(&self) -> Option<usize> {
        match self.parameters.as_slice() {
            [ParameterSpec {
                kind: ParameterKind::CommandValueList { length, .. },
                ..
            }] => Some(*length),
            _ => None,
        }
    }

    /// Cut points crossover draws before giving up; 10 for command-list
    /// schemas, 1 otherwise, unless overridden.
    pub fn crossover_retries(&self) -> usize {
        self.crossover_retries
            .unwrap_or(if self.pairwise_crossover().is_some() {
                10
            } else {
                1
            })
    }

    /// Nominal `(low, high)` per encoded feature.
    pub fn feature_bounds(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.width);
        for p in &self.parameters {
            match &p.kind {
                ParameterKind::DiscreteInt { range, .. } => {
                    out.push((range.0 as f64, range.1 as f64))
                }
                ParameterKind::ContinuousFloat { range, .. } => out.push((range.0, range.1)),
                ParameterKind::IndexSet { universe, .. } => {
                    out.extend((0..*universe).map(|_| (0.0, 1.0)))
                }
                ParameterKind::FloatTuple { ranges, .. } => {
                    out.extend(ranges.iter().map(|r| (r.0, r.1)))
                }
                ParameterKind::PerturbationVector { base, half_width } => {
                    out.extend(base.iter().map(|b| (b - half_width, b + half_width)))
                }
                ParameterKind::CommandValueList { length, ranges, .. } => {
                    out.extend((0..*length).map(|_| (0.0, 3.0)));
                    let lo = ranges.straight.0.min(ranges.turn.0).min(ranges.dy.0);
                    let hi = ranges.straight.1.max(ranges.turn.1).max(ranges.dy.1);
                    out.extend((0..*length).map(|_| (lo, hi)));
                }
            }
        }
        out
    }
}
