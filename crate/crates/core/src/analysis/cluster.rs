use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::executor::Trajectory;

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITERATIONS: usize = 300;
pub const KMEANS_TOLERANCE: f64 = 1e-8;
/// A larger `k` must beat the best silhouette so far by this factor.
pub const ADOPTION_FACTOR: f64 = 1.2;

/// Flattens each trajectory timestep by timestep and zero-pads to the
/// longest one.
pub fn pad_trajectories(trajectories: &[Trajectory]) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let width = trajectories
        .first()
        .ok_or_else(|| AnalysisError::Degenerate("no trajectories".into()))?
        .width();
    if trajectories.iter().any(|t| t.width() != width) {
        return Err(AnalysisError::MixedWidths);
    }
    let longest = trajectories
        .iter()
        .map(Trajectory::timestep_count)
        .max()
        .unwrap_or(0)
        * width;
    Ok(trajectories
        .iter()
        .map(|t| {
            let mut flat: Vec<f64> = t.samples.iter().flatten().copied().collect();
            flat.resize(longest, 0.0);
            flat
        })
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// 0-based cluster per point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn plus_plus_init<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].clone());
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[Vec<f64>], centroids: &mut [Vec<f64>], labels: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        labels[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn recompute(points: &[Vec<f64>], labels: &[usize], k: usize, width: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; width]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, c) in sums.iter_mut().zip(counts) {
        s.iter_mut().for_each(|v| *v /= c.max(1) as f64);
    }
    sums
}

fn lloyd<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> KMeansFit {
    let width = points[0].len();
    let mut centroids = plus_plus_init(points, k, rng);
    let mut labels = assign(points, &centroids);
    repair_empty(points, &mut centroids, &mut labels);
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let next = recompute(points, &labels, k, width);
        let shift = next
            .iter()
            .zip(&centroids)
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = next;
        labels = assign(points, &centroids);
        repair_empty(points, &mut centroids, &mut labels);
        if shift < KMEANS_TOLERANCE {
            break;
        }
    }
    centroids = recompute(points, &labels, k, width);
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum();
    KMeansFit {
        assignments: labels,
        centroids,
        inertia,
    }
}

/// k-means++ with Lloyd refinement; best inertia over ten restarts.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut R,
) -> Result<KMeansFit, AnalysisError> {
    if k < 2 || k > points.len() {
        return Err(AnalysisError::KOutOfRange {
            k,
            points: points.len(),
        });
    }
    check_points(points)?;
    let mut best: Option<KMeansFit> = None;
    for _ in 0..KMEANS_RESTARTS {
        let fit = lloyd(points, k, rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn check_points(points: &[Vec<f64>]) -> Result<(), AnalysisError> {
    let width = points.first().map(Vec::len).unwrap_or(0);
    if points.iter().any(|p| p.len() != width) {
        return Err(AnalysisError::MixedWidths);
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(AnalysisError::Degenerate("non-finite coordinates".into()));
    }
    Ok(())
}

/// Condensed pairwise Euclidean distances.
pub struct DistanceMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                upper.push(sq_dist(&points[i], &points[j]).sqrt());
            }
        }
        Self { n, upper }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.upper[a * (2 * self.n - a - 1) / 2 + (b - a - 1)]
    }
}

/// Mean silhouette width; points in singleton clusters contribute 0.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64, AnalysisError> {
    check_points(points)?;
    silhouette_with(&DistanceMatrix::new(points), assignments)
}

pub fn silhouette_with(dist: &DistanceMatrix, assignments: &[usize]) -> Result<f64, AnalysisError> {
    let n = assignments.len();
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    assignments.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(AnalysisError::SingleCluster);
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] < 2 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += dist.get(i, j);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Clustering chosen by the ascending silhouette sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub points: Vec<Vec<f64>>,
    pub k_star: usize,
    /// Cluster label in `1..=k_star` for every input point, duplicates included.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub silhouette_by_k: Vec<(usize, f64)>,
    pub restarts: usize,
    pub distinct_points: usize,
}

/// Indices of first occurrences and, for each point, its distinct index.
fn collapse(points: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    let key = |p: &Vec<f64>| {
        p.iter()
            .map(|v| if *v == 0.0 { 0 } else { v.to_bits() })
            .collect::<Vec<u64>>()
    };
    order.sort_by(|&a, &b| key(&points[a]).cmp(&key(&points[b])).then(a.cmp(&b)));
    let mut rep_of = vec![usize::MAX; points.len()];
    let mut first_of_group = vec![0; points.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && key(&points[order[end]]) == key(&points[order[start]]) {
            end += 1;
        }
        let leader = order[start..end].iter().copied().min().unwrap();
        for &i in &order[start..end] {
            first_of_group[i] = leader;
        }
        start = end;
    }
    let mut distinct = Vec::new();
    for i in 0..points.len() {
        if first_of_group[i] == i {
            rep_of[i] = distinct.len();
            distinct.push(i);
        }
    }
    let map = (0..points.len())
        .map(|i| rep_of[first_of_group[i]])
        .collect();
    (distinct, map)
}

/// Sweeps `k` upward from `k_min`, adopting a larger `k` only when its
/// silhouette is at least 20% above the best so far. Duplicates are
/// collapsed before clustering and `k_max` is capped at the number of
/// distinct points; a single distinct point yields one cluster.
pub fn select_k(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
) -> Result<ClusterModel, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::Degenerate(format!(
            "{} points cannot be clustered",
            points.len()
        )));
    }
    check_points(points)?;
    let (distinct_idx, map) = collapse(points);
    let distinct: Vec<Vec<f64>> = distinct_idx.iter().map(|&i| points[i].clone()).collect();
    let k_min = k_min.max(2);
    let k_max = k_max.min(distinct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    if k_max < k_min {
        let centroid = recompute(&distinct, &vec![0; distinct.len()], 1, distinct[0].len());
        return Ok(ClusterModel {
            points: points.to_vec(),
            k_star: 1,
            assignments: vec![1; points.len()],
            centroids: centroid,
            silhouette_by_k: Vec::new(),
            restarts: KMEANS_RESTARTS,
            distinct_points: distinct.len(),
        });
    }

    let dist = DistanceMatrix::new(&distinct);
    let mut scores = Vec::new();
    let mut chosen: Option<(KMeansFit, f64)> = None;
    for k in k_min..=k_max {
        let fit = kmeans(&distinct, k, &mut rng)?;
        let s = silhouette_with(&dist, &fit.assignments)?;
        scores.push((k, s));
        let adopt = match &chosen {
            None => true,
            Some((_, best)) => s > *best && s >= best + (ADOPTION_FACTOR - 1.0) * best.abs(),
        };
        if adopt {
            chosen = Some((fit, s));
        }
    }
    let (fit, _) = chosen.expect("k_min ≤ k_max");
    Ok(ClusterModel {
        points: points.to_vec(),
        k_star: fit.centroids.len(),
        assignments: map.iter().map(|&d| fit.assignments[d] + 1).collect(),
        centroids: fit.centroids,
        silhouette_by_k: scores,
        restarts: KMEANS_RESTARTS,
        distinct_points: distinct.len(),
    })
}
