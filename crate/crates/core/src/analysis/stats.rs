use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::AnalysisError;

/// The exact null distribution is enumerated up to this many `n·m` pairs.
pub const EXACT_PAIR_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PValueMethod {
    /// Exact when `n·m ≤ 400`, normal approximation otherwise.
    #[default]
    Auto,
    Exact,
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// Statistic of the first sample.
    pub u: f64,
    /// Two-sided.
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks (1-based) of the pooled sample.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn check(a: &[f64], b: &[f64]) -> Result<(), AnalysisError> {
    if a.is_empty() || b.is_empty() {
        return Err(AnalysisError::EmptySample);
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(AnalysisError::Degenerate("NaN in sample".into()));
    }
    Ok(())
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, AnalysisError> {
    mann_whitney_u_with(a, b, PValueMethod::Auto)
}

pub fn mann_whitney_u_with(
    a: &[f64],
    b: &[f64],
    method: PValueMethod,
) -> Result<MannWhitney, AnalysisError> {
    check(a, b)?;
    let (n, m) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..n].iter().sum();
    let u = rank_sum - (n * (n + 1)) as f64 / 2.0;
    let exact = match method {
        PValueMethod::Auto => n * m <= EXACT_PAIR_LIMIT,
        PValueMethod::Exact => true,
        PValueMethod::Approximate => false,
    };
    let p_value = if exact {
        exact_p(&ranks, n, u)
    } else {
        approximate_p(&ranks, n, m, u)
    };
    Ok(MannWhitney { u, p_value, exact })
}

/// Counts, over all ways of drawing `n` of the pooled ranks, how many give a
/// statistic at least as far from `n·m/2` as the observed one. Ranks are
/// doubled so midranks stay integral.
fn exact_p(ranks: &[f64], n: usize, u: f64) -> f64 {
    let total = ranks.len();
    let m = total - n;
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[j][s]: subsets of size j with doubled rank sum s.
    let mut ways = vec![vec![0f64; max_sum + 1]; n + 1];
    ways[0][0] = 1.0;
    for &r in &doubled {
        for j in (1..=n).rev() {
            for s in (r..=max_sum).rev() {
                let add = ways[j - 1][s - r];
                if add != 0.0 {
                    ways[j][s] += add;
                }
            }
        }
    }
    let offset = (n * (n + 1)) as f64;
    let centre = (n * m) as f64;
    let observed = (2.0 * u - centre).abs();
    let mut extreme = 0.0;
    let mut all = 0.0;
    for (s, &w) in ways[n].iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        all += w;
        // 2U = doubled rank sum − n(n+1).
        let deviation = (s as f64 - offset - centre).abs();
        if deviation >= observed - 1e-9 {
            extreme += w;
        }
    }
    (extreme / all).min(1.0)
}

fn approximate_p(ranks: &[f64], n: usize, m: usize, u: f64) -> f64 {
    let total = (n + m) as f64;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    let (nf, mf) = (n as f64, m as f64);
    let variance = nf * mf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)).max(1.0));
    if variance <= 0.0 {
        return 1.0;
    }
    let deviation = ((u - nf * mf / 2.0).abs() - 0.5).max(0.0);
    let z = deviation / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    /// Classifies `|a12 − 0.5| + 0.5`.
    pub fn of(a12: f64) -> Self {
        let folded = (a12 - 0.5).abs() + 0.5;
        if folded < 0.56 {
            Magnitude::Negligible
        } else if folded < 0.64 {
            Magnitude::Small
        } else if folded < 0.71 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }
}

/// Probability that a draw from `a` exceeds one from `b`, ties counting half.
pub fn vargha_delaney_a12(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    check(a, b)?;
    let mut wins = 0.0;
    for x in a {
        for y in b {
            if x > y {
                wins += 1.0;
            } else if x == y {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (a.len() * b.len()) as f64)
}
