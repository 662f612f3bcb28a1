use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    coverage, entropy_normalized, mann_whitney_u, pad_trajectories, select_k, vargha_delaney_a12,
};
use super::{AnalysisError, ClusterModel, Magnitude};
use crate::executor::Trajectory;
use crate::search::derive_seeds;

pub const DEFAULT_CLUSTERING_RUNS: usize = 10;
pub const DEFAULT_K_MAX: usize = 30;

/// Failures found by one repetition of an approach: encoded failing
/// configurations and the trajectories they produced, index-aligned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RepetitionFailures {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Trajectory>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproachSamples {
    pub name: String,
    pub repetitions: Vec<RepetitionFailures>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Failures,
    InputCoverage,
    InputEntropy,
    OutputCoverage,
    OutputEntropy,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Failures,
        Metric::InputCoverage,
        Metric::InputEntropy,
        Metric::OutputCoverage,
        Metric::OutputEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Failures => "failures",
            Metric::InputCoverage => "input_coverage",
            Metric::InputEntropy => "input_entropy",
            Metric::OutputCoverage => "output_coverage",
            Metric::OutputEntropy => "output_entropy",
        }
    }
}

/// Means over repetitions; diversity values are `None` when unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachSummary {
    pub name: String,
    pub repetitions: usize,
    pub failures: f64,
    pub input_coverage: Option<f64>,
    pub input_entropy: Option<f64>,
    pub output_coverage: Option<f64>,
    pub output_entropy: Option<f64>,
    /// Per-repetition samples feeding the pairwise tests.
    pub samples: Vec<(Metric, Vec<f64>)>,
}

impl ApproachSummary {
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Failures => Some(self.failures),
            Metric::InputCoverage => self.input_coverage,
            Metric::InputEntropy => self.input_entropy,
            Metric::OutputCoverage => self.output_coverage,
            Metric::OutputEntropy => self.output_entropy,
        }
    }

    pub fn samples_of(&self, metric: Metric) -> Option<&[f64]> {
        self.samples
            .iter()
            .find(|(m, _)| *m == metric)
            .map(|(_, s)| s.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub first: String,
    pub second: String,
    pub metric: Metric,
    /// `None` when either side has fewer than two samples.
    pub p_value: Option<f64>,
    pub a12: f64,
    pub magnitude: Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub clustering_runs: usize,
    pub diversity_available: bool,
    pub total_failures: usize,
    /// `k*` of each clustering run.
    pub input_k_star: Vec<usize>,
    pub output_k_star: Vec<usize>,
    pub approaches: Vec<ApproachSummary>,
    pub pairwise: Vec<PairwiseComparison>,
}

impl DiversityReport {
    pub fn approach(&self, name: &str) -> Option<&ApproachSummary> {
        self.approaches.iter().find(|a| a.name == name)
    }

    pub fn comparison(
        &self,
        first: &str,
        second: &str,
        metric: Metric,
    ) -> Option<&PairwiseComparison> {
        self.pairwise
            .iter()
            .find(|c| c.first == first && c.second == second && c.metric == metric)
    }

    /// One row per approach with mean failures and diversity.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "approach,failures,input_coverage,input_entropy,output_coverage,output_entropy\n",
        );
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        for a in &self.approaches {
            out.push_str(&format!(
                "{},{:.4},{},{},{},{}\n",
                a.name,
                a.failures,
                cell(a.input_coverage),
                cell(a.input_entropy),
                cell(a.output_coverage),
                cell(a.output_entropy)
            ));
        }
        out
    }
}

/// Owner of each pooled point: (approach, repetition).
struct Pool {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    members: Vec<Vec<Vec<usize>>>,
}

fn pool(approaches: &[ApproachSamples]) -> Result<Pool, AnalysisError> {
    let mut inputs = Vec::new();
    let mut trajectories = Vec::new();
    let mut members = Vec::new();
    for approach in approaches {
        let mut reps = Vec::new();
        for rep in &approach.repetitions {
            if rep.inputs.len() != rep.outputs.len() {
                return Err(AnalysisError::Degenerate(format!(
                    "{}: {} inputs but {} trajectories",
                    approach.name,
                    rep.inputs.len(),
                    rep.outputs.len()
                )));
            }
            let start = inputs.len();
            inputs.extend(rep.inputs.iter().cloned());
            trajectories.extend(rep.outputs.iter().cloned());
            reps.push((start..inputs.len()).collect());
        }
        members.push(reps);
    }
    let outputs = if trajectories.is_empty() {
        Vec::new()
    } else {
        pad_trajectories(&trajectories)?
    };
    Ok(Pool {
        inputs,
        outputs,
        members,
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// (coverage, entropy) per approach and repetition; an empty repetition
/// scores 0 on both.
fn diversity_of(
    model: &ClusterModel,
    members: &[Vec<Vec<usize>>],
) -> Result<Vec<Vec<(f64, f64)>>, AnalysisError> {
    members
        .iter()
        .map(|reps| {
            reps.iter()
                .map(|subset| {
                    if subset.is_empty() {
                        Ok((0.0, 0.0))
                    } else {
                        Ok((coverage(model, subset)?, entropy_normalized(model, subset)?))
                    }
                })
                .collect()
        })
        .collect()
}

/// Clusters all failing inputs and, separately, all padded failure
/// trajectories across approaches, `clustering_runs` times with distinct
/// seeds, then scores each repetition's failures against the pooled
/// clusters. Scores are averaged over clustering runs before the per-pair
/// tests, which compare repetitions. `k` is swept up to `k_max`.
pub fn build_diversity_report(
    approaches: &[ApproachSamples],
    clustering_runs: usize,
    k_max: usize,
    seed: u64,
) -> Result<DiversityReport, AnalysisError> {
    if approaches.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if clustering_runs == 0 {
        return Err(AnalysisError::Degenerate(
            "clustering_runs must be positive".into(),
        ));
    }
    let pool = pool(approaches)?;
    let total_failures = pool.inputs.len();
    let diversity_available = total_failures >= 2;

    // [approach][repetition][metric] summed over clustering runs.
    let mut div: Vec<Vec<[f64; 4]>> = pool
        .members
        .iter()
        .map(|r| vec![[0.0; 4]; r.len()])
        .collect();
    let mut input_k_star = Vec::new();
    let mut output_k_star = Vec::new();
    if diversity_available {
        let seeds = derive_seeds(seed, 2 * clustering_runs);
        let runs: Vec<_> = (0..clustering_runs)
            .into_par_iter()
            .map(|r| -> Result<_, AnalysisError> {
                let input = select_k(&pool.inputs, 2, k_max, seeds[2 * r])?;
                let output = select_k(&pool.outputs, 2, k_max, seeds[2 * r + 1])?;
                Ok((
                    input.k_star,
                    output.k_star,
                    diversity_of(&input, &pool.members)?,
                    diversity_of(&output, &pool.members)?,
                ))
            })
            .collect::<Result<_, _>>()?;
        for (ik, ok, input, output) in runs {
            input_k_star.push(ik);
            output_k_star.push(ok);
            for (a, reps) in div.iter_mut().enumerate() {
                for (r, acc) in reps.iter_mut().enumerate() {
                    acc[0] += input[a][r].0;
                    acc[1] += input[a][r].1;
                    acc[2] += output[a][r].0;
                    acc[3] += output[a][r].1;
                }
            }
        }
    }

    let summaries: Vec<ApproachSummary> = approaches
        .iter()
        .zip(&div)
        .map(|(approach, reps)| {
            let failures: Vec<f64> = approach
                .repetitions
                .iter()
                .map(|r| r.inputs.len() as f64)
                .collect();
            let mut samples = vec![(Metric::Failures, failures.clone())];
            let mut means = [None; 4];
            if diversity_available {
                for (j, metric) in Metric::ALL[1..].iter().enumerate() {
                    let values: Vec<f64> = reps
                        .iter()
                        .map(|acc| acc[j] / clustering_runs as f64)
                        .collect();
                    means[j] = Some(mean(&values));
                    samples.push((*metric, values));
                }
            }
            ApproachSummary {
                name: approach.name.clone(),
                repetitions: approach.repetitions.len(),
                failures: mean(&failures),
                input_coverage: means[0],
                input_entropy: means[1],
                output_coverage: means[2],
                output_entropy: means[3],
                samples,
            }
        })
        .collect();

    let mut pairwise = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            for metric in Metric::ALL {
                let (Some(a), Some(b)) = (
                    summaries[i].samples_of(metric),
                    summaries[j].samples_of(metric),
                ) else {
                    continue;
                };
                if a.is_empty() || b.is_empty() {
                    continue;
                }
                let p_value = if a.len() >= 2 && b.len() >= 2 {
                    Some(mann_whitney_u(a, b)?.p_value)
                } else {
                    None
                };
                let a12 = vargha_delaney_a12(a, b)?;
                pairwise.push(PairwiseComparison {
                    first: summaries[i].name.clone(),
                    second: summaries[j].name.clone(),
                    metric,
                    p_value,
                    a12,
                    magnitude: Magnitude::of(a12),
                });
            }
        }
    }

    Ok(DiversityReport {
        clustering_runs,
        diversity_available,
        total_failures,
        input_k_star,
        output_k_star,
        approaches: summaries,
        pairwise,
    })
}
