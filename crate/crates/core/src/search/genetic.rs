use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    Evaluator, Fitness, MutationStrategy, SearchBudget, SearchError, SearchOutcome, SeedStrategy,
};
use crate::config::{crossover_single_point, generate_random, ConfigSchema, EnvConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub crossover_rate: f64,
    /// Share of the population copied unchanged; at least one individual.
    pub elite_fraction: f64,
    /// Reseed every this many generations.
    pub reseed_period: usize,
    /// Share of the worst individuals replaced at reseeding.
    pub reseed_fraction: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            crossover_rate: 0.75,
            elite_fraction: 0.10,
            reseed_period: 5,
            reseed_fraction: 0.20,
        }
    }
}

impl GaConfig {
    pub fn check(&self) -> Result<(), SearchError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.population_size < 2 {
            return Err(SearchError::Settings(
                "population size must be at least 2".into(),
            ));
        }
        if !unit(self.crossover_rate) || !unit(self.elite_fraction) || !unit(self.reseed_fraction) {
            return Err(SearchError::Settings("GA rates must lie in [0, 1]".into()));
        }
        if self.reseed_period == 0 {
            return Err(SearchError::Settings(
                "reseed period must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.population_size as f64).floor() as usize)
            .clamp(1, self.population_size)
    }

    /// Never touches the elite slots.
    pub fn reseed_count(&self) -> usize {
        ((self.reseed_fraction * self.population_size as f64).ceil() as usize)
            .min(self.population_size - self.elite_count())
    }
}

type Individual = (EnvConfiguration, f64);

fn draw_seed<R: Rng + ?Sized>(
    schema: &ConfigSchema,
    seed: SeedStrategy<'_>,
    rng: &mut R,
) -> Result<EnvConfiguration, SearchError> {
    Ok(match seed {
        SeedStrategy::Random => generate_random(schema, rng)?,
        SeedStrategy::Failure(pool) => pool[rng.random_range(0..pool.len())].clone(),
    })
}

fn initial_population<R: Rng + ?Sized>(
    schema: &ConfigSchema,
    size: usize,
    seed: SeedStrategy<'_>,
    rng: &mut R,
) -> Result<Vec<EnvConfiguration>, SearchError> {
    match seed {
        SeedStrategy::Failure(pool) if pool.len() >= size => Ok(sample(rng, pool.len(), size)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect()),
        _ => (0..size).map(|_| draw_seed(schema, seed, rng)).collect(),
    }
}

/// Binary tournament; the first drawn wins ties.
fn tournament<'p, R: Rng + ?Sized>(population: &'p [Individual], rng: &mut R) -> &'p Individual {
    let a = &population[rng.random_range(0..population.len())];
    let b = &population[rng.random_range(0..population.len())];
    if b.1 > a.1 {
        b
    } else {
        a
    }
}

/// Indices sorted by descending fitness, stable.
fn ranking(population: &[Individual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| population[b].1.total_cmp(&population[a].1));
    order
}

fn best_of(population: &[Individual]) -> &Individual {
    &population[ranking(population)[0]]
}

/// Generational GA with elitism, binary tournament selection, single-point
/// crossover, mutation, keep-best-two replacement and periodic reseeding of
/// the worst individuals. Returns the best individual seen.
pub fn genetic_search<F: Fitness + ?Sized, R: Rng + ?Sized>(
    fitness: &F,
    schema: &ConfigSchema,
    cfg: &GaConfig,
    budget: SearchBudget,
    seed: SeedStrategy<'_>,
    mutation: MutationStrategy,
    rng: &mut R,
) -> Result<SearchOutcome, SearchError> {
    cfg.check()?;
    seed.check()?;
    let size = cfg.population_size;
    let initial = initial_population(schema, size, seed, rng)?;
    let mut eval = Evaluator::new(fitness, schema, budget);

    let mut population: Vec<Individual> = Vec::with_capacity(size);
    for config in &initial {
        if !eval.has_budget() {
            break;
        }
        let f = eval.evaluate(config);
        population.push((config.clone(), f));
    }
    if population.len() < size {
        let outcome = match population.is_empty() {
            true => eval.finish(initial[0].clone(), None),
            false => {
                let (best, f) = best_of(&population).clone();
                let mut o = eval.finish(best, Some(f));
                o.trace = vec![f];
                o
            }
        };
        return Ok(outcome);
    }

    let mut best: Individual = best_of(&population).clone();
    let mut trace = vec![best.1];
    let mut generation = 0;

    'search: while eval.has_budget() {
        let order = ranking(&population);
        let mut next: Vec<Individual> = order[..cfg.elite_count()]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        while next.len() < size {
            let pe1 = tournament(&population, rng).clone();
            let pe2 = tournament(&population, rng).clone();
            let (mut oe1, mut oe2) = (pe1.0.clone(), pe2.0.clone());
            if rng.random::<f64>() < cfg.crossover_rate {
                (oe1, oe2) = crossover_single_point(schema, &oe1, &oe2, rng)?;
            }
            let oe1 = eval.mutate(&oe1, mutation, rng)?;
            let oe2 = eval.mutate(&oe2, mutation, rng)?;
            let mut family = vec![pe1, pe2];
            for child in [oe1, oe2] {
                if !eval.has_budget() {
                    break 'search;
                }
                let f = eval.evaluate(&child);
                if f > best.1 {
                    best = (child.clone(), f);
                }
                family.push((child, f));
            }
            for i in ranking(&family).into_iter().take(size - next.len()).take(2) {
                next.push(family[i].clone());
            }
        }
        population = next;
        generation += 1;

        if generation % cfg.reseed_period == 0 {
            let order = ranking(&population);
            for &slot in order.iter().rev().take(cfg.reseed_count()) {
                if !eval.has_budget() {
                    break 'search;
                }
                let fresh = draw_seed(schema, seed, rng)?;
                let f = eval.evaluate(&fresh);
                if f > best.1 {
                    best = (fresh.clone(), f);
                }
                population[slot] = (fresh, f);
            }
        }
        trace.push(best_of(&population).1);
    }

    let mut outcome = eval.finish(best.0, Some(best.1));
    outcome.iterations = generation;
    outcome.trace = trace;
    Ok(outcome)
}
