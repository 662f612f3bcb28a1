use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use super::schema::{ConfigSchema, FloatRange, IntRange, ParameterKind};
use super::validate::{check_shape, is_valid};
use super::value::{Command, EnvConfiguration, ParameterValue, Provenance};
use super::SchemaError;

/// Attempts `generate_random` makes before giving up.
pub const GENERATION_RETRIES: usize = 1000;
/// Fresh draws a mutation makes before returning its input unchanged.
pub const MUTATION_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(self) -> i64 {
        match self {
            Direction::Positive => 1,
            Direction::Negative => -1,
        }
    }

    pub fn from_sign(x: f64) -> Self {
        if x < 0.0 {
            Direction::Negative
        } else {
            Direction::Positive
        }
    }
}

/// The parameter a directed mutation changes, and optionally the feature
/// offset within that parameter's span (the one-hot slot of an index set,
/// the coordinate of a tuple or vector, the id/value slot of a command list).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MutationTarget {
    pub param: usize,
    pub element: Option<usize>,
}

impl MutationTarget {
    pub fn param(param: usize) -> Self {
        Self {
            param,
            element: None,
        }
    }
}

fn uniform(rng: &mut (impl Rng + ?Sized), r: FloatRange) -> f64 {
    if r.0 >= r.1 {
        r.0
    } else {
        rng.random_range(r.0..r.1)
    }
}

fn uniform_int(rng: &mut (impl Rng + ?Sized), r: IntRange) -> i64 {
    rng.random_range(r.0..=r.1)
}

fn integral(rng: &mut (impl Rng + ?Sized), r: FloatRange) -> f64 {
    let lo = r.0.ceil() as i64;
    let hi = r.1.floor() as i64;
    if lo >= hi {
        lo as f64
    } else {
        rng.random_range(lo..=hi) as f64
    }
}

fn coin_sign(rng: &mut (impl Rng + ?Sized)) -> i64 {
    if rng.random_bool(0.5) {
        1
    } else {
        -1
    }
}

fn random_value(kind: &ParameterKind, rng: &mut (impl Rng + ?Sized)) -> ParameterValue {
    match kind {
        ParameterKind::DiscreteInt { range, .. } => ParameterValue::Int(uniform_int(rng, *range)),
        ParameterKind::ContinuousFloat {
            range,
            high_exclusive,
            ..
        } => {
            let x = if *high_exclusive || range.0 == range.1 {
                uniform(rng, *range)
            } else {
                rng.random_range(range.0..=range.1)
            };
            ParameterValue::Float(x)
        }
        ParameterKind::IndexSet {
            universe,
            initial_size,
            ..
        } => {
            let size_range = initial_size.unwrap_or(IntRange(0, *universe as i64));
            let size = (uniform_int(rng, size_range) as usize).min(*universe);
            let set: BTreeSet<usize> = sample(rng, *universe, size)
                .into_iter()
                .map(|i| i + 1)
                .collect();
            ParameterValue::Set(set)
        }
        ParameterKind::FloatTuple { ranges, .. } => {
            ParameterValue::Tuple(ranges.iter().map(|r| rng.random_range(r.0..=r.1)).collect())
        }
        ParameterKind::PerturbationVector { base, half_width } => ParameterValue::Vector(
            base.iter()
                .map(|b| {
                    if *half_width > 0.0 {
                        b + rng.random_range(-half_width..=*half_width)
                    } else {
                        *b
                    }
                })
                .collect(),
        ),
        ParameterKind::CommandValueList { length, ranges, .. } => {
            // Straight ends; the middle is a mix of straights and DY+turn curves.
            let mut pairs = Vec::with_capacity(*length);
            pairs.push((Command::S, integral(rng, ranges.straight)));
            let mut remaining = length.saturating_sub(2);
            while remaining > 0 {
                if remaining >= 2 && rng.random_bool(0.6) {
                    pairs.push((Command::DY, uniform(rng, ranges.dy)));
                    let turn = if rng.random_bool(0.5) {
                        Command::L
                    } else {
                        Command::R
                    };
                    pairs.push((turn, integral(rng, ranges.turn)));
                    remaining -= 2;
                } else {
                    pairs.push((Command::S, integral(rng, ranges.straight)));
                    remaining -= 1;
                }
            }
            if *length >= 2 {
                pairs.push((Command::S, integral(rng, ranges.straight)));
            }
            ParameterValue::Commands(pairs)
        }
    }
}

/// Rejection-samples a valid configuration.
pub fn generate_random(
    schema: &ConfigSchema,
    rng: &mut (impl Rng + ?Sized),
) -> Result<EnvConfiguration, SchemaError> {
    generate_random_with_cap(schema, GENERATION_RETRIES, rng)
}

pub fn generate_random_with_cap(
    schema: &ConfigSchema,
    cap: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<EnvConfiguration, SchemaError> {
    for _ in 0..cap {
        let values = schema
            .parameters()
            .iter()
            .map(|p| random_value(&p.kind, rng))
            .collect();
        let config = EnvConfiguration::from_parts(values, Provenance::Random);
        if is_valid(schema, &config) {
            return Ok(config);
        }
    }
    Err(SchemaError::GenerationFailed { attempts: cap })
}

/// One draw of the kind-specific operator. `dir` fixes the step sign;
/// `element` fixes the slot inside the parameter.
fn perturb<R: Rng + ?Sized>(
    kind: &ParameterKind,
    value: &ParameterValue,
    element: Option<usize>,
    dir: Option<Direction>,
    rng: &mut R,
) -> ParameterValue {
    let sign = |rng: &mut R| match dir {
        Some(d) => d.sign(),
        None => coin_sign(rng),
    };
    match (kind, value) {
        (ParameterKind::DiscreteInt { step, .. }, ParameterValue::Int(x)) => {
            let s = sign(rng);
            ParameterValue::Int(x + s * uniform_int(rng, *step))
        }
        (ParameterKind::ContinuousFloat { step, .. }, ParameterValue::Float(x)) => {
            let s = sign(rng) as f64;
            ParameterValue::Float(x + s * uniform(rng, *step))
        }
        (
            ParameterKind::IndexSet {
                universe,
                count,
                shift,
                ..
            },
            ParameterValue::Set(set),
        ) => {
            let mut set = set.clone();
            if let (Some(offset), Some(d)) = (element, dir) {
                match d {
                    Direction::Positive => set.insert(offset + 1),
                    Direction::Negative => set.remove(&(offset + 1)),
                };
                return ParameterValue::Set(set);
            }
            let add_remove = dir.is_some() || rng.random_bool(0.5);
            let n = uniform_int(rng, *count).max(0) as usize;
            if add_remove {
                let add = match dir {
                    Some(d) => d == Direction::Positive,
                    None => rng.random_bool(0.5),
                };
                let pool: Vec<usize> = if add {
                    (1..=*universe).filter(|m| !set.contains(m)).collect()
                } else {
                    set.iter().copied().collect()
                };
                let picked: Vec<usize> = sample(rng, pool.len(), n.min(pool.len()))
                    .into_iter()
                    .map(|i| pool[i])
                    .collect();
                for m in picked {
                    if add {
                        set.insert(m);
                    } else {
                        set.remove(&m);
                    }
                }
            } else {
                let members: Vec<usize> = set.iter().copied().collect();
                let picked: Vec<usize> = sample(rng, members.len(), n.min(members.len()))
                    .into_iter()
                    .map(|i| members[i])
                    .collect();
                let mut moved = Vec::with_capacity(picked.len());
                for &m in &picked {
                    set.remove(&m);
                    let s = coin_sign(rng);
                    let to = m as i64 + s * uniform_int(rng, *shift);
                    // Out-of-universe targets land on 0, which fails the range check.
                    moved.push(to.max(0) as usize);
                }
                set.extend(moved);
            }
            ParameterValue::Set(set)
        }
        (ParameterKind::FloatTuple { step, .. }, ParameterValue::Tuple(xs)) => {
            let mut xs = xs.clone();
            match element {
                Some(i) if i < xs.len() => {
                    let s = sign(rng) as f64;
                    xs[i] += s * uniform(rng, *step);
                }
                _ => {
                    for x in xs.iter_mut() {
                        let s = sign(rng) as f64;
                        *x += s * uniform(rng, *step);
                    }
                }
            }
            ParameterValue::Tuple(xs)
        }
        (ParameterKind::PerturbationVector { half_width, .. }, ParameterValue::Vector(xs)) => {
            let mut xs = xs.clone();
            let i = match element {
                Some(i) if i < xs.len() => i,
                _ => rng.random_range(0..xs.len()),
            };
            let s = sign(rng) as f64;
            xs[i] += s * uniform(rng, FloatRange(0.0, *half_width));
            ParameterValue::Vector(xs)
        }
        (
            ParameterKind::CommandValueList { length, steps, .. },
            ParameterValue::Commands(pairs),
        ) => {
            let mut pairs = pairs.clone();
            let (pair, change_command) = match element {
                Some(e) if e < *length => (e, true),
                Some(e) if e < 2 * length => (e - length, false),
                _ => {
                    let pair = rng.random_range(0..*length);
                    let change_command = dir.is_none() && rng.random_bool(0.5);
                    (pair, change_command)
                }
            };
            let (c, v) = pairs[pair];
            if change_command {
                let swapped = match c {
                    Command::L => Command::R,
                    Command::R => Command::L,
                    other => other,
                };
                pairs[pair] = (swapped, v);
            } else {
                let s = sign(rng) as f64;
                let delta = if c.is_dy() {
                    uniform(rng, steps.dy)
                } else {
                    uniform_int(rng, steps.units) as f64
                };
                pairs[pair] = (c, v + s * delta);
            }
            ParameterValue::Commands(pairs)
        }
        _ => value.clone(),
    }
}

fn mutate_with<R: Rng + ?Sized>(
    schema: &ConfigSchema,
    config: &EnvConfiguration,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> (usize, ParameterValue),
) -> EnvConfiguration {
    if check_shape(schema, config).is_err() {
        return config.clone();
    }
    for _ in 0..MUTATION_RETRIES {
        let (param, value) = draw(rng);
        if &value == config.value(param) {
            continue;
        }
        let candidate = config.replace(param, value, Provenance::Mutated);
        if is_valid(schema, &candidate) {
            return candidate;
        }
    }
    config.clone()
}

/// Changes one uniformly chosen parameter with its kind-specific operator.
/// Invalid or no-op draws are retried; after [`MUTATION_RETRIES`] the input
/// is returned unchanged.
pub fn mutate_random<R: Rng + ?Sized>(
    schema: &ConfigSchema,
    config: &EnvConfiguration,
    rng: &mut R,
) -> EnvConfiguration {
    let params = schema.parameters();
    mutate_with(schema, config, rng, |rng| {
        let i = rng.random_range(0..params.len());
        (
            i,
            perturb(&params[i].kind, config.value(i), None, None, rng),
        )
    })
}

/// Like [`mutate_random`] with the parameter and step sign fixed. For index
/// sets a positive direction adds the targeted member (or random members when
/// no slot is given) and a negative one removes.
pub fn mutate_directed<R: Rng + ?Sized>(
    schema: &ConfigSchema,
    config: &EnvConfiguration,
    target: MutationTarget,
    direction: Direction,
    rng: &mut R,
) -> EnvConfiguration {
    let params = schema.parameters();
    if target.param >= params.len() {
        return config.clone();
    }
    let kind = &params[target.param].kind;
    mutate_with(schema, config, rng, |rng| {
        (
            target.param,
            perturb(
                kind,
                config.value(target.param),
                target.element,
                Some(direction),
                rng,
            ),
        )
    })
}

/// Whether a directed step on `target` can change `config` at all: a set
/// member cannot be added twice or removed when absent, and a scalar or
/// tuple coordinate cannot step past the bound it already sits on.
pub fn can_move(
    schema: &ConfigSchema,
    config: &EnvConfiguration,
    target: MutationTarget,
    direction: Direction,
) -> bool {
    let Some(param) = schema.parameters().get(target.param) else {
        return false;
    };
    let up = direction == Direction::Positive;
    let open = |x: f64, low: f64, high: f64| if up { x < high } else { x > low };
    match (&param.kind, config.value(target.param)) {
        (ParameterKind::DiscreteInt { range, .. }, ParameterValue::Int(x)) => {
            open(*x as f64, range.low() as f64, range.high() as f64)
        }
        (ParameterKind::ContinuousFloat { range, .. }, ParameterValue::Float(x)) => {
            open(*x, range.low(), range.high())
        }
        (ParameterKind::IndexSet { .. }, ParameterValue::Set(set)) => match target.element {
            Some(offset) => set.contains(&(offset + 1)) != up,
            None => true,
        },
        (ParameterKind::FloatTuple { ranges, .. }, ParameterValue::Tuple(xs)) => {
            match target.element {
                Some(i) if i < xs.len() && i < ranges.len() => {
                    open(xs[i], ranges[i].low(), ranges[i].high())
                }
                _ => true,
            }
        }
        _ => true,
    }
}

fn swap_at(
    schema: &ConfigSchema,
    a: &EnvConfiguration,
    b: &EnvConfiguration,
    cut: usize,
) -> (EnvConfiguration, EnvConfiguration) {
    if schema.pairwise_crossover().is_some() {
        let (ParameterValue::Commands(pa), ParameterValue::Commands(pb)) = (a.value(0), b.value(0))
        else {
            unreachable!("shape checked");
        };
        let c1: Vec<_> = pa[..cut].iter().chain(&pb[cut..]).copied().collect();
        let c2: Vec<_> = pb[..cut].iter().chain(&pa[cut..]).copied().collect();
        return (
            EnvConfiguration::from_parts(vec![ParameterValue::Commands(c1)], Provenance::Crossover),
            EnvConfiguration::from_parts(vec![ParameterValue::Commands(c2)], Provenance::Crossover),
        );
    }
    let (va, vb) = (a.values(), b.values());
    let c1 = va[..cut].iter().chain(&vb[cut..]).cloned().collect();
    let c2 = vb[..cut].iter().chain(&va[cut..]).cloned().collect();
    (
        EnvConfiguration::from_parts(c1, Provenance::Crossover),
        EnvConfiguration::from_parts(c2, Provenance::Crossover),
    )
}

/// Swaps suffixes at a fixed cut in `[1, positions - 1]`. Returns the parents
/// unchanged when either child is invalid or the cut is out of range.
pub fn crossover_at(
    schema: &ConfigSchema,
    a: &EnvConfiguration,
    b: &EnvConfiguration,
    cut: usize,
) -> Result<(EnvConfiguration, EnvConfiguration), SchemaError> {
    check_shape(schema, a)?;
    check_shape(schema, b)?;
    let positions = schema.crossover_positions();
    if cut == 0 || cut >= positions {
        return Ok((a.clone(), b.clone()));
    }
    let (c1, c2) = swap_at(schema, a, b, cut);
    if is_valid(schema, &c1) && is_valid(schema, &c2) {
        Ok((c1, c2))
    } else {
        Ok((a.clone(), b.clone()))
    }
}

/// Single-point crossover with a uniformly drawn cut. Up to
/// [`ConfigSchema::crossover_retries`] cuts are tried; if none gives two valid
/// children the parents are returned.
pub fn crossover_single_point(
    schema: &ConfigSchema,
    a: &EnvConfiguration,
    b: &EnvConfiguration,
    rng: &mut (impl Rng + ?Sized),
) -> Result<(EnvConfiguration, EnvConfiguration), SchemaError> {
    check_shape(schema, a)?;
    check_shape(schema, b)?;
    let positions = schema.crossover_positions();
    if positions < 2 {
        return Ok((a.clone(), b.clone()));
    }
    for _ in 0..schema.crossover_retries() {
        let cut = rng.random_range(1..positions);
        let (c1, c2) = swap_at(schema, a, b, cut);
        if is_valid(schema, &c1) && is_valid(schema, &c2) {
            return Ok((c1, c2));
        }
    }
    Ok((a.clone(), b.clone()))
}

/// The raw cut-and-swap step underneath the crossover operators: children
/// take `a`'s positions before `cut` and `b`'s from `cut` on (and vice
/// versa). Children are not validity-checked.
pub fn splice(
    schema: &ConfigSchema,
    a: &EnvConfiguration,
    b: &EnvConfiguration,
    cut: usize,
) -> Result<(EnvConfiguration, EnvConfiguration), SchemaError> {
    check_shape(schema, a)?;
    check_shape(schema, b)?;
    let positions = schema.crossover_positions();
    if cut > positions {
        return Err(SchemaError::Mismatch {
            schema: schema.name().to_string(),
            detail: format!("cut {cut} outside [0, {positions}]"),
        });
    }
    Ok(swap_at(schema, a, b, cut))
}
