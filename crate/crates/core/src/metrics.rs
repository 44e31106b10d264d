//! Ranking metrics and run summaries.

use std::fmt;

use crate::error::{BianError, Result};

/// Area under the ROC curve via the Mann–Whitney statistic, ties counted
/// one half.
///
/// The statistic is accumulated as the integer `2U` from tie-averaged ranks
/// and divided once by `2·P·N`, so the result is bit-identical to counting
/// every positive/negative pair.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(BianError::Metric(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(BianError::Metric("NaN score".into()));
    }
    let p = labels.iter().filter(|&&l| l).count() as u128;
    let n = labels.len() as u128 - p;
    if p == 0 || n == 0 {
        return Err(BianError::Metric("AUROC is undefined without both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives; a tie block over 1-based ranks
    // lo..=hi gives each member rank (lo + hi) / 2.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let pos_in_block = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        let (lo, hi) = (start as u128 + 1, end as u128);
        twice_rank_sum += pos_in_block * (lo + hi);
        start = end;
    }
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

/// Mean and sample standard deviation (`n − 1` denominator; zero for a
/// single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Test AUROC of one experiment over its repeats.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub name: String,
    /// Per-run test AUROC, aligned with `seeds`.
    pub aurocs: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mean: f64,
    pub std: f64,
    /// `key=value` echo of the model configuration.
    pub config: String,
    pub config_hash: String,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn new(
        name: impl Into<String>,
        aurocs: Vec<f64>,
        seeds: Vec<u64>,
        config: String,
        config_hash: String,
        wall_clock_secs: f64,
    ) -> Self {
        let (mean, std) = mean_std(&aurocs);
        MetricsReport { name: name.into(), aurocs, seeds, mean, std, config, config_hash, wall_clock_secs }
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: test AUROC {:.4} ± {:.4} over {} run(s) [{:.1}s]",
            self.name,
            self.mean,
            self.std,
            self.aurocs.len(),
            self.wall_clock_secs
        )
    }
}
