use std::fmt::Write;

use super::{OutcomeFile, PipelineError};
use crate::analysis::{
    build_diversity_report, ApproachSamples, DiversityReport, Magnitude, Metric, RepetitionFailures,
};
use crate::config::{encode, ConfigSchema};

/// Significance level of the comparison table.
pub const ALPHA: f64 = 0.05;

/// Groups outcome files by strategy (first appearance order) and extracts
/// each repetition's failing inputs and the first valid trajectory of each.
pub fn approach_samples(
    schema: &ConfigSchema,
    files: &[OutcomeFile],
) -> Result<Vec<ApproachSamples>, PipelineError> {
    let mut grouped: Vec<(String, Vec<&OutcomeFile>)> = Vec::new();
    for file in files {
        match grouped.iter_mut().find(|(name, _)| *name == file.strategy) {
            Some((_, list)) => list.push(file),
            None => grouped.push((file.strategy.clone(), vec![file])),
        }
    }
    grouped
        .into_iter()
        .map(|(name, mut list)| {
            list.sort_by_key(|f| f.repetition);
            let repetitions = list
                .iter()
                .map(|file| {
                    let mut rep = RepetitionFailures::default();
                    for outcome in file.outcomes.iter().filter(|o| o.is_failure()) {
                        rep.inputs.push(encode(schema, &outcome.config)?.0);
                        rep.outputs.push(outcome.trajectories[0].clone());
                    }
                    Ok(rep)
                })
                .collect::<Result<_, PipelineError>>()?;
            Ok(ApproachSamples { name, repetitions })
        })
        .collect()
}

pub fn analyze_outcomes(
    schema: &ConfigSchema,
    files: &[OutcomeFile],
    clustering_runs: usize,
    k_max: usize,
    seed: u64,
) -> Result<DiversityReport, PipelineError> {
    if files.is_empty() {
        return Err(PipelineError::Invalid("no outcome files to analyze".into()));
    }
    let approaches = approach_samples(schema, files)?;
    Ok(build_diversity_report(
        &approaches,
        clustering_runs,
        k_max,
        seed,
    )?)
}

/// Plain-text table of per-approach means followed by pairwise tests.
/// `*` marks `p < alpha`; `L` marks a large effect size.
pub fn comparison_table(report: &DiversityReport, alpha: f64) -> String {
    let width = report
        .approaches
        .iter()
        .map(|a| a.name.len())
        .max()
        .unwrap_or(8)
        .max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "approach");
    for metric in Metric::ALL {
        let _ = write!(out, "  {:>15}", metric.name());
    }
    out.push('\n');
    for a in &report.approaches {
        let _ = write!(out, "{:<width$}", a.name);
        for metric in Metric::ALL {
            match a.mean(metric) {
                Some(v) => {
                    let _ = write!(out, "  {v:>15.4}");
                }
                None => {
                    let _ = write!(out, "  {:>15}", "N/A");
                }
            }
        }
        out.push('\n');
    }
    if !report.diversity_available {
        out.push_str("diversity unavailable: fewer than two failures in total\n");
    }
    if report.pairwise.is_empty() {
        return out;
    }
    let _ = writeln!(out, "\npairwise (* p < {alpha}, L large effect)");
    for c in &report.pairwise {
        let p = match c.p_value {
            Some(p) => format!("{p:.4}{}", if p < alpha { "*" } else { " " }),
            None => "N/A".to_string(),
        };
        let large = if c.magnitude == Magnitude::Large {
            " L"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{} vs {}  {:<15}  p={p:<8}  A12={:.3}{large}",
            c.first,
            c.second,
            c.metric.name(),
            c.a12
        );
    }
    out
}
