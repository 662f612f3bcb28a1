//! Failure diversity and comparative statistics.

mod cluster;
mod report;
mod stats;

use thiserror::Error;

pub use cluster::{
    kmeans, pad_trajectories, select_k, silhouette, silhouette_with, ClusterModel, DistanceMatrix,
    KMeansFit, ADOPTION_FACTOR, KMEANS_MAX_ITERATIONS, KMEANS_RESTARTS, KMEANS_TOLERANCE,
};
pub use report::{
    build_diversity_report, ApproachSamples, ApproachSummary, DiversityReport, Metric,
    PairwiseComparison, RepetitionFailures, DEFAULT_CLUSTERING_RUNS, DEFAULT_K_MAX,
};
pub use stats::{
    mann_whitney_u, mann_whitney_u_with, vargha_delaney_a12, Magnitude, MannWhitney, PValueMethod,
    EXACT_PAIR_LIMIT,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("k = {k} is outside [2, {points}]")]
    KOutOfRange { k: usize, points: usize },
    #[error("points or trajectories have mixed widths")]
    MixedWidths,
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("sample is empty")]
    EmptySample,
    #[error("point index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error("degenerate data: {0}")]
    Degenerate(String),
}

/// Per-cluster counts of the points in `subset`.
fn cluster_counts(model: &ClusterModel, subset: &[usize]) -> Result<Vec<usize>, AnalysisError> {
    let mut counts = vec![0; model.k_star];
    for &i in subset {
        let label = *model
            .assignments
            .get(i)
            .ok_or(AnalysisError::IndexOutOfRange(i))?;
        counts[label - 1] += 1;
    }
    Ok(counts)
}

/// Fraction of clusters holding at least one point of `subset`.
pub fn coverage(model: &ClusterModel, subset: &[usize]) -> Result<f64, AnalysisError> {
    let counts = cluster_counts(model, subset)?;
    Ok(counts.iter().filter(|&&c| c > 0).count() as f64 / model.k_star as f64)
}

/// Shannon entropy (base 2) of `subset` over the clusters, divided by
/// `log2(k*)`; 0 when there is a single cluster.
pub fn entropy_normalized(model: &ClusterModel, subset: &[usize]) -> Result<f64, AnalysisError> {
    if subset.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    let counts = cluster_counts(model, subset)?;
    Ok(normalized_entropy_of_counts(&counts))
}

pub fn normalized_entropy_of_counts(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if counts.len() < 2 || total == 0 {
        return 0.0;
    }
    let occupied: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    // Equal bins have entropy log2(bins) exactly; summing would drift by ulps.
    let h: f64 = if occupied.iter().all(|&c| c == occupied[0]) {
        (occupied.len() as f64).log2()
    } else {
        occupied
            .iter()
            .map(|&c| {
                let p = c as f64 / total as f64;
                -p * p.log2()
            })
            .sum()
    };
    (h / (counts.len() as f64).log2()).clamp(0.0, 1.0)
}
