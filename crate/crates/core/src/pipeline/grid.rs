use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::config::{encode, ConfigSchema};
use crate::dataset::{class_weights, InteractionDataset};
use crate::search::derive_seeds;
use crate::surrogate::{
    precision_recall, select_model, train, MlpArchitecture, Sample, SurrogateModel, TrainingConfig,
};

pub const DEFAULT_FILTERS: [f64; 9] = [0.05, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80];
pub const DEFAULT_LAYERS: [usize; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Fractions of the earliest episodes dropped before training.
    pub filters: Vec<f64>,
    pub layers: Vec<usize>,
    pub seeds_per_cell: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub hidden_units: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            filters: DEFAULT_FILTERS.to_vec(),
            layers: DEFAULT_LAYERS.to_vec(),
            seeds_per_cell: 10,
            val_fraction: 0.2,
            test_fraction: 0.1,
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 64,
            patience: 20,
            hidden_units: 32,
            threshold: 0.5,
            seed: 0,
        }
    }
}

/// One training run of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub filter: f64,
    pub layers: usize,
    pub repetition: usize,
    pub seed: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub val_loss: Option<f64>,
    /// Why the run produced no model.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub model: SurrogateModel,
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the chosen run.
    pub selected: usize,
    pub below_recall_floor: bool,
}

fn samples(schema: &ConfigSchema, data: &InteractionDataset) -> Result<Vec<Sample>, PipelineError> {
    data.records()
        .iter()
        .map(|r| Ok(Sample::new(encode(schema, &r.config)?.0, r.failure)))
        .collect()
}

type RunResult = Result<(SurrogateModel, f64, f64), String>;

fn run_cell(
    dataset: &InteractionDataset,
    schema: &ConfigSchema,
    spec: &GridSpec,
    filter: f64,
    layers: usize,
    seed: u64,
) -> Result<RunResult, PipelineError> {
    let filtered = dataset.filter_initial(filter)?;
    let mut split_rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_set, val_set, test_set) =
        match filtered.split(spec.val_fraction, spec.test_fraction, &mut split_rng) {
            Ok(parts) => parts,
            Err(e) => return Ok(Err(e.to_string())),
        };
    let weights = match class_weights(&train_set.labels()) {
        Ok(w) => w,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let mut arch = MlpArchitecture::new(schema.encoded_width(), layers)?;
    arch.hidden_units = spec.hidden_units;
    let mut cfg = TrainingConfig::new(weights, seed);
    cfg.epochs = spec.epochs;
    cfg.learning_rate = spec.learning_rate;
    cfg.batch_size = spec.batch_size;
    cfg.patience = spec.patience;
    let model = match train(
        &samples(schema, &train_set)?,
        &samples(schema, &val_set)?,
        &arch,
        &cfg,
    ) {
        Ok(m) => m,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let pr = match precision_recall(&model, &samples(schema, &test_set)?, spec.threshold) {
        Ok(pr) => pr,
        Err(e) => return Ok(Err(e.to_string())),
    };
    Ok(Ok((model, pr.precision, pr.recall)))
}

/// Trains every (filter, layer count, repetition) combination on its own
/// stratified split and keeps the run preferred by the selection rule.
/// Runs that cannot train are recorded as skipped.
pub fn train_grid(
    dataset: &InteractionDataset,
    schema: &ConfigSchema,
    spec: &GridSpec,
) -> Result<GridResult, PipelineError> {
    if spec.filters.is_empty() || spec.layers.is_empty() || spec.seeds_per_cell == 0 {
        return Err(PipelineError::Invalid("the training grid is empty".into()));
    }
    if spec.filters.iter().any(|f| !(0.0..1.0).contains(f)) {
        return Err(PipelineError::Invalid(
            "filter levels must lie in [0, 1)".into(),
        ));
    }
    let seeds = derive_seeds(spec.seed, spec.seeds_per_cell);
    let mut plan = Vec::new();
    for &filter in &spec.filters {
        for &layers in &spec.layers {
            for (repetition, &seed) in seeds.iter().enumerate() {
                plan.push((filter, layers, repetition, seed));
            }
        }
    }
    let runs: Vec<RunResult> = plan
        .par_iter()
        .map(|&(filter, layers, _, seed)| run_cell(dataset, schema, spec, filter, layers, seed))
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::with_capacity(plan.len());
    let mut candidates = Vec::new();
    let mut models = Vec::new();
    for (&(filter, layers, repetition, seed), run) in plan.iter().zip(runs) {
        let mut cell = GridCell {
            filter,
            layers,
            repetition,
            seed,
            precision: None,
            recall: None,
            val_loss: None,
            skipped: None,
        };
        match run {
            Ok((model, precision, recall)) => {
                cell.precision = Some(precision);
                cell.recall = Some(recall);
                cell.val_loss = model.metadata.best_val_loss;
                candidates.push((cells.len(), (precision, recall)));
                models.push(model);
            }
            Err(reason) => {
                log::warn!("filter {filter}, {layers} layers, run {repetition} skipped: {reason}");
                cell.skipped = Some(reason);
            }
        }
        cells.push(cell);
    }
    let scores: Vec<(f64, f64)> = candidates.iter().map(|c| c.1).collect();
    let Some(choice) = select_model(&scores) else {
        return Err(PipelineError::Degenerate(
            "every grid cell was degenerate".into(),
        ));
    };
    Ok(GridResult {
        model: models.swap_remove(choice.index),
        cells,
        selected: candidates[choice.index].0,
        below_recall_floor: choice.below_recall_floor,
    })
}
