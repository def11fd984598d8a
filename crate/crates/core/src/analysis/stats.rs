//! Pearson and Spearman correlation with two-sided p-values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::AnalysisError;
use crate::measure::Measure;

/// Largest sample for which the exact permutation test is allowed.
pub const MAX_PERMUTATION_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    #[default]
    TApproximation,
    /// Exhaustive permutation of one variable; only for n ≤ 10.
    Permutation,
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j share the mean of ranks i+1..=j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson's r, or `None` when either variable has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len(), "paired samples must have equal length");
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson on average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Two-sided p-value of a correlation coefficient under the t approximation.
pub fn t_test_p(r: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    if r.abs() >= 1.0 {
        return Some(0.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

fn permutations_visit(items: &mut Vec<f64>, k: usize, visit: &mut dyn FnMut(&[f64])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations_visit(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Exact two-sided permutation p-value: the share of orderings of `y` whose
/// |statistic| is at least the observed one.
pub fn permutation_p(x: &[f64], y: &[f64], statistic: fn(&[f64], &[f64]) -> Option<f64>) -> Option<f64> {
    if x.len() > MAX_PERMUTATION_N {
        return None;
    }
    let observed = statistic(x, y)?.abs();
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut ys = y.to_vec();
    permutations_visit(&mut ys, 0, &mut |perm| {
        total += 1;
        if statistic(x, perm).map(f64::abs).unwrap_or(0.0) >= observed - 1e-12 {
            hits += 1;
        }
    });
    Some(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson_r: Measure,
    pub spearman_rho: Measure,
    pub pearson_p: Measure,
    pub spearman_p: Measure,
    pub p_value_method: PValueMethod,
}

pub fn correlate_pairs(x: &[f64], y: &[f64], method: PValueMethod) -> Result<CorrelationReport, AnalysisError> {
    let n = x.len();
    if n != y.len() {
        return Err(AnalysisError::Unpaired { x: n, y: y.len() });
    }
    if n < 3 {
        return Err(AnalysisError::TooFewObservations { needed: 3, got: n });
    }
    if method == PValueMethod::Permutation && n > MAX_PERMUTATION_N {
        return Err(AnalysisError::PermutationTooLarge { n });
    }
    let undefined = || Measure::absent("zero variance in one variable");
    let measure = |v: Option<f64>| v.map(Measure::Value).unwrap_or_else(undefined);
    let r = pearson(x, y);
    let rho = spearman(x, y);
    let p = |stat: Option<f64>, f: fn(&[f64], &[f64]) -> Option<f64>| match (stat, method) {
        (None, _) => undefined(),
        (Some(s), PValueMethod::TApproximation) => measure(t_test_p(s, n)),
        (Some(_), PValueMethod::Permutation) => measure(permutation_p(x, y, f)),
    };
    Ok(CorrelationReport {
        n,
        pearson_r: measure(r),
        spearman_rho: measure(rho),
        pearson_p: p(r, pearson),
        spearman_p: p(rho, spearman),
        p_value_method: method,
    })
}

/// Correlate two per-segment score maps over their shared segment ids.
pub fn correlate(
    x: &BTreeMap<String, f64>,
    y: &BTreeMap<String, f64>,
    method: PValueMethod,
) -> Result<CorrelationReport, AnalysisError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .filter_map(|(k, &a)| y.get(k).map(|&b| (a, b)))
        .unzip();
    correlate_pairs(&xs, &ys, method)
}
