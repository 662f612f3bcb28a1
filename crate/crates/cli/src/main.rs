//! Command-line front end: generate interaction logs, train the surrogate
//! grid, run search campaigns against a system under test and compare the
//! failures they find.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use failsearch::analysis::DEFAULT_K_MAX;
use failsearch::config::ConfigSchema;
use failsearch::dataset::InteractionDataset;
use failsearch::executor::{ExternalParams, SutDescriptor, SyntheticParams, ToyParkingParams};
use failsearch::pipeline::{
    analyze_outcomes, comparison_table, failure_pool, generate_dataset, read_json, run_repetitions,
    train_grid, write_atomic, write_json, DatasetSpec, GridSpec, LabelNoise, OutcomeFile,
    PipelineError, RunManifest, SearchSpec, ALPHA, DEFAULT_FILTERS, DEFAULT_LAYERS,
};
use failsearch::search::{Algorithm, MutationKind, SearchBudget, SeedKind, StrategySpec};
use failsearch::surrogate::SurrogateModel;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "failsearch",
    version,
    about = "Surrogate-guided failure search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute random configurations and log their verdicts as JSON Lines.
    GenDataset(GenDatasetArgs),
    /// Train the (filter level x hidden layers) grid and keep the best model.
    Train(TrainArgs),
    /// Run search campaigns and execute the selected configurations.
    Search(SearchArgs),
    /// Compare failures and their diversity across outcome files.
    Analyze(AnalyzeArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in schema name (parking, perturbation, trackgen) or a schema JSON file.
    #[arg(long, default_value = "parking")]
    schema: String,
    /// Master seed; every output is a function of it and the inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for outputs and the run manifest.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Clone)]
struct SutArgs {
    /// System under test: `synthetic`, `parking` or `exec:<command line>`.
    #[arg(long, default_value = "synthetic")]
    sut: String,
    /// Executions per configuration; defaults to 1 for deterministic systems and 10 otherwise.
    #[arg(long)]
    runs_per_config: Option<usize>,
    /// Verdict flip probability of the synthetic system.
    #[arg(long, default_value_t = 0.0)]
    sut_noise: f64,
    /// Per-run timeout for an external simulator, in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    /// Declare an external simulator deterministic.
    #[arg(long)]
    deterministic: bool,
}

impl SutArgs {
    fn descriptor(&self) -> Result<SutDescriptor, PipelineError> {
        match self.sut.as_str() {
            "synthetic" => Ok(SutDescriptor::SyntheticAnalytic(SyntheticParams {
                noise: self.sut_noise,
                ..SyntheticParams::default()
            })),
            "parking" => Ok(SutDescriptor::ToyParking(ToyParkingParams::default())),
            other => match other.strip_prefix("exec:") {
                Some(cmd) if !cmd.trim().is_empty() => {
                    Ok(SutDescriptor::ExternalProcess(ExternalParams {
                        command: cmd.split_whitespace().map(String::from).collect(),
                        timeout_secs: self.timeout,
                        deterministic: self.deterministic,
                    }))
                }
                _ => Err(PipelineError::Invalid(format!(
                    "unknown system under test `{other}`; use synthetic, parking or exec:<command>"
                ))),
            },
        }
    }

    fn runs(&self, descriptor: &SutDescriptor) -> usize {
        self.runs_per_config
            .unwrap_or_else(|| descriptor.default_runs())
    }
}

#[derive(Args)]
struct GenDatasetArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sut: SutArgs,
    /// Number of episodes.
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Leading fraction of episodes subject to early-phase label noise.
    #[arg(long, default_value_t = 0.0)]
    noise_fraction: f64,
    /// Probability that an early episode is relabeled as a failure.
    #[arg(long, default_value_t = 0.0)]
    noise_probability: f64,
    /// Output file; defaults to `<out-dir>/dataset.jsonl`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated filter levels (fractions of earliest episodes dropped).
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FILTERS)]
    filters: Vec<f64>,
    /// Comma-separated hidden layer counts.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LAYERS)]
    layers: Vec<usize>,
    /// Training runs per grid cell.
    #[arg(long, default_value_t = 10)]
    seeds_per_cell: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Model file; defaults to `<out-dir>/model.json`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Hc,
    Ga,
    Sampling,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    Random,
    Saliency,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedArg {
    Random,
    Failure,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    sut: SutArgs,
    /// Surrogate model; required by every strategy except random.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Interaction log; required for failure seeding.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "hc")]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value = "random")]
    mutation: MutationArg,
    #[arg(long, value_enum, default_value = "random")]
    seed_strategy: SeedArg,
    /// Earliest fraction of the log ignored when collecting seed failures.
    #[arg(long, default_value_t = 0.30)]
    filter_fraction: f64,
    /// Configurations selected per repetition.
    #[arg(long = "T", default_value_t = 100)]
    t: usize,
    /// Per-configuration budget: `<N>e` fitness evaluations or `<S>s` seconds.
    #[arg(long, default_value = "500e", value_parser = parse_budget)]
    budget: SearchBudget,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    /// Hill-climbing neighborhood size.
    #[arg(long, default_value_t = 4)]
    neighbors: usize,
    /// Genetic algorithm population size.
    #[arg(long, default_value_t = 50)]
    population: usize,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Outcome files written by `search`.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    clustering_runs: usize,
    /// Largest cluster count tried when choosing k.
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    k_max: usize,
    /// Significance level for the comparison table.
    #[arg(long, default_value_t = ALPHA)]
    alpha: f64,
}

fn parse_budget(text: &str) -> Result<SearchBudget, String> {
    let text = text.trim();
    let budget = if let Some(n) = text.strip_suffix('e') {
        SearchBudget::FitnessEvaluations(n.parse().map_err(|e| format!("`{text}`: {e}"))?)
    } else if let Some(s) = text.strip_suffix('s') {
        SearchBudget::WallClockSeconds(s.parse().map_err(|e| format!("`{text}`: {e}"))?)
    } else {
        return Err(format!("`{text}`: expected `<N>e` or `<seconds>s`"));
    };
    budget.check().map_err(|e| e.to_string())?;
    Ok(budget)
}

fn load_schema(spec: &str) -> Result<ConfigSchema, PipelineError> {
    match ConfigSchema::builtin(spec) {
        Some(schema) => Ok(schema),
        None => Ok(ConfigSchema::load(spec)?),
    }
}

fn load_dataset(path: &Path, schema: &ConfigSchema) -> Result<InteractionDataset, PipelineError> {
    Ok(InteractionDataset::load(path, schema)?)
}

fn load_model(path: &Path) -> Result<SurrogateModel, PipelineError> {
    Ok(SurrogateModel::load(path)?)
}

fn gen_dataset(args: GenDatasetArgs) -> Result<(), PipelineError> {
    let schema = load_schema(&args.common.schema)?;
    let descriptor = args.sut.descriptor()?;
    let spec = DatasetSpec {
        count: args.count,
        runs_per_config: args.sut.runs(&descriptor),
        seed: args.common.seed,
        label_noise: (args.noise_fraction > 0.0).then_some(LabelNoise {
            fraction: args.noise_fraction,
            probability: args.noise_probability,
        }),
    };
    let dataset = generate_dataset(&descriptor, &schema, &spec)?;
    let path = args
        .output
        .unwrap_or_else(|| args.common.out_dir.join("dataset.jsonl"));
    let mut bytes = Vec::new();
    dataset.write(&mut bytes, &schema)?;
    write_atomic(&path, &bytes)?;
    let failures = dataset.labels().iter().filter(|&&l| l).count();
    println!(
        "{} episodes, {failures} failures -> {}",
        dataset.len(),
        path.display()
    );

    let mut manifest = RunManifest::new(
        "gen-dataset",
        args.common.seed,
        json!({ "schema": schema.name(), "sut": descriptor, "spec": spec }),
    );
    manifest.outputs.push(path);
    manifest.write(&args.common.out_dir)?;
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), PipelineError> {
    let schema = load_schema(&args.common.schema)?;
    let dataset = load_dataset(&args.dataset, &schema)?;
    let spec = GridSpec {
        filters: args.filters,
        layers: args.layers,
        seeds_per_cell: args.seeds_per_cell,
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        seed: args.common.seed,
        ..GridSpec::default()
    };
    let result = train_grid(&dataset, &schema, &spec)?;
    let model_path = args
        .output
        .unwrap_or_else(|| args.common.out_dir.join("model.json"));
    let metrics_path = args.common.out_dir.join("grid-metrics.json");
    let text = result.model.to_json_string()?;
    write_atomic(&model_path, text.as_bytes())?;
    write_json(
        &metrics_path,
        &json!({
            "selected": result.selected,
            "below_recall_floor": result.below_recall_floor,
            "cells": result.cells,
        }),
    )?;
    let chosen = &result.cells[result.selected];
    println!(
        "{} runs ({} skipped); selected filter {} with {} layers: precision {:.3}, recall {:.3} -> {}",
        result.cells.len(),
        result.cells.iter().filter(|c| c.skipped.is_some()).count(),
        chosen.filter,
        chosen.layers,
        chosen.precision.unwrap_or(0.0),
        chosen.recall.unwrap_or(0.0),
        model_path.display()
    );
    if result.below_recall_floor {
        log::warn!("no run reached the recall floor; the highest-recall model was kept");
    }

    let mut manifest = RunManifest::new(
        "train",
        args.common.seed,
        json!({ "schema": schema.name(), "dataset": args.dataset, "grid": spec }),
    );
    manifest.outputs.extend([model_path, metrics_path]);
    manifest.write(&args.common.out_dir)?;
    Ok(())
}

fn search(args: SearchArgs) -> Result<(), PipelineError> {
    let schema = load_schema(&args.common.schema)?;
    let descriptor = args.sut.descriptor()?;
    let algo = match args.algo {
        AlgoArg::Hc => Algorithm::HillClimbing,
        AlgoArg::Ga => Algorithm::Genetic,
        AlgoArg::Sampling => Algorithm::Sampling,
        AlgoArg::Random => Algorithm::Random,
    };
    let mutation = match args.mutation {
        MutationArg::Random => MutationKind::Random,
        MutationArg::Saliency => MutationKind::Saliency,
    };
    let seed_kind = match args.seed_strategy {
        SeedArg::Random => SeedKind::Random,
        SeedArg::Failure => SeedKind::Failure,
    };
    let mut strategy = match algo {
        Algorithm::Sampling => StrategySpec::sampling(),
        Algorithm::Random => StrategySpec::random(),
        _ => StrategySpec::new(algo, mutation, seed_kind),
    };
    strategy.params.neighbors = args.neighbors;
    strategy.params.ga.population_size = args.population;

    let model = args.model.as_deref().map(load_model).transpose()?;
    let pool = match (&args.dataset, strategy.seed_kind) {
        (Some(path), SeedKind::Failure) => {
            failure_pool(&load_dataset(path, &schema)?, args.filter_fraction)?
        }
        (None, SeedKind::Failure) => {
            return Err(PipelineError::Invalid(
                "failure seeding needs --dataset".into(),
            ))
        }
        _ => Vec::new(),
    };
    let spec = SearchSpec {
        strategy,
        count: args.t,
        budget: args.budget,
        repetitions: args.repetitions,
        runs_per_config: args.sut.runs(&descriptor),
        master_seed: args.common.seed,
    };
    let repetitions = run_repetitions(&spec, &schema, &descriptor, model.as_ref(), &pool)?;

    let label = strategy.label();
    let dir = args.common.out_dir.join(&label);
    let mut outputs = Vec::new();
    for rep in &repetitions {
        let campaign_path = dir.join(format!("campaign-{}.json", rep.index));
        let outcome_path = dir.join(format!("outcomes-{}.json", rep.index));
        write_json(&campaign_path, &rep.campaign.to_json(&schema)?)?;
        write_json(
            &outcome_path,
            &OutcomeFile::new(&strategy, rep).to_json(&schema)?,
        )?;
        println!(
            "{label} repetition {}: {} failures of {}",
            rep.index,
            rep.failures(),
            rep.outcomes.len()
        );
        outputs.extend([campaign_path, outcome_path]);
    }

    let mut manifest = RunManifest::new(
        &format!("search-{label}"),
        args.common.seed,
        json!({
            "schema": schema.name(),
            "sut": descriptor,
            "model": args.model,
            "dataset": args.dataset,
            "filter_fraction": args.filter_fraction,
            "spec": spec,
        }),
    );
    manifest.outputs = outputs;
    manifest.write(&args.common.out_dir)?;
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), PipelineError> {
    let schema = load_schema(&args.common.schema)?;
    let files = args
        .files
        .iter()
        .map(|p| OutcomeFile::from_json(&schema, &read_json(p)?))
        .collect::<Result<Vec<_>, _>>()?;
    let report = analyze_outcomes(
        &schema,
        &files,
        args.clustering_runs,
        args.k_max,
        args.common.seed,
    )?;
    let table = comparison_table(&report, args.alpha);
    print!("{table}");

    let out = &args.common.out_dir;
    let paths = [
        out.join("report.json"),
        out.join("report.csv"),
        out.join("comparison.txt"),
    ];
    write_json(&paths[0], &report)?;
    write_atomic(&paths[1], report.to_csv().as_bytes())?;
    write_atomic(&paths[2], table.as_bytes())?;

    let mut manifest = RunManifest::new(
        "analyze",
        args.common.seed,
        json!({
            "schema": schema.name(),
            "files": args.files,
            "clustering_runs": args.clustering_runs,
            "k_max": args.k_max,
            "alpha": args.alpha,
        }),
    );
    manifest.outputs = paths.to_vec();
    manifest.write(out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenDataset(a) => gen_dataset(a),
        Command::Train(a) => train(a),
        Command::Search(a) => search(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
