//! End-to-end workflows behind the command-line tool: dataset generation,
//! grid training, search repetitions and diversity analysis, plus the file
//! plumbing they share.

mod analyze;
mod generate;
mod grid;
mod repetitions;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::config::SchemaError;
use crate::dataset::DatasetError;
use crate::executor::ExecutionError;
use crate::search::SearchError;
use crate::surrogate::SurrogateError;

pub use analyze::{analyze_outcomes, approach_samples, comparison_table, ALPHA};
pub use generate::{generate_dataset, DatasetSpec, LabelNoise};
pub use grid::{train_grid, GridCell, GridResult, GridSpec, DEFAULT_FILTERS, DEFAULT_LAYERS};
pub use repetitions::{failure_pool, run_repetitions, OutcomeFile, Repetition, SearchSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Execution(#[from] ExecutionError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("system under test: {0}")]
    Sut(String),
}

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SUT: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;

impl PipelineError {
    /// 2 for invalid input or settings, 3 for simulator failures, 4 for
    /// data that cannot support the requested step.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Degenerate(_)
            | PipelineError::Dataset(DatasetError::Degenerate(_))
            | PipelineError::Surrogate(SurrogateError::Degenerate(_))
            | PipelineError::Search(SearchError::EmptyFailurePool)
            | PipelineError::Analysis(AnalysisError::Degenerate(_)) => EXIT_DEGENERATE,
            PipelineError::Sut(_) => EXIT_SUT,
            PipelineError::Execution(e) => match e {
                ExecutionError::Schema(_)
                | ExecutionError::InvalidConfig(_)
                | ExecutionError::UnsupportedSchema(_) => EXIT_VALIDATION,
                _ => EXIT_SUT,
            },
            _ => EXIT_VALIDATION,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json(path: &Path) -> Result<Value, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Record of one invocation: what ran, with which settings, and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    pub settings: Value,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, settings: Value) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            settings,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, PipelineError> {
        let path = out_dir.join(format!("manifest-{}.json", self.command));
        write_json(&path, self)?;
        Ok(path)
    }
}
