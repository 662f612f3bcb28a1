use rand::Rng;

use super::{
    argmax, Evaluator, Fitness, MutationStrategy, SearchError, SearchOutcome, SeedStrategy,
};
use crate::config::{generate_random, mutate_directed, mutate_random, ConfigSchema};

/// Hill climbing from a random or training-failure start. Each iteration
/// evaluates the incumbent and `neighbors` mutants of it, then moves to the
/// first best one, so ties keep the incumbent. Runs until the budget is
/// spent; a partially evaluated neighborhood still takes part in the move.
pub fn hill_climb<F: Fitness + ?Sized, R: Rng + ?Sized>(
    fitness: &F,
    schema: &ConfigSchema,
    neighbors: usize,
    budget: super::SearchBudget,
    seed: SeedStrategy<'_>,
    mutation: MutationStrategy,
    rng: &mut R,
) -> Result<SearchOutcome, SearchError> {
    if neighbors == 0 {
        return Err(SearchError::Settings(
            "neighborhood size must be at least 1".into(),
        ));
    }
    seed.check()?;
    let mut current = match seed {
        SeedStrategy::Random => generate_random(schema, rng)?,
        SeedStrategy::Failure(pool) => pool[rng.random_range(0..pool.len())].clone(),
    };
    let mut eval = Evaluator::new(fitness, schema, budget);
    let mut current_fitness = None;
    let mut trace = Vec::new();
    let mut iterations = 0;

    while eval.has_budget() {
        let f0 = eval.evaluate(&current);
        if trace.is_empty() {
            trace.push(f0);
        }
        let directed = match mutation {
            MutationStrategy::Saliency => Some(eval.saliency(&current)?),
            MutationStrategy::Random => None,
        };
        let mut candidates = vec![current.clone()];
        let mut scores = vec![f0];
        for _ in 0..neighbors {
            if !eval.has_budget() {
                break;
            }
            let neighbor = match directed {
                Some(t) => mutate_directed(schema, &current, t.target, t.direction, rng),
                None => mutate_random(schema, &current, rng),
            };
            scores.push(eval.evaluate(&neighbor));
            candidates.push(neighbor);
        }
        let j = argmax(&scores);
        current = candidates.swap_remove(j);
        current_fitness = Some(scores[j]);
        trace.push(scores[j]);
        iterations += 1;
    }

    let mut outcome = eval.finish(current, current_fitness);
    outcome.iterations = iterations;
    outcome.trace = trace;
    Ok(outcome)
}
