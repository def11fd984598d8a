//! Length-bucket robustness: micro scores within short/medium/long strata of
//! target length, and Spearman stability of model rankings across strata.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::spearman;
use super::AnalysisError;
use crate::corpus::{AnnotationSet, Corpus, Direction};
use crate::measure::Measure;
use crate::scoring::{micro_score, token_length, ResolvedSpans, ScoreOptions, WeightScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Short,
    Medium,
    Long,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Short, Bucket::Medium, Bucket::Long];
}

/// Nearest-rank percentile of a sorted sample: the value at rank ⌈p·n/100⌉.
pub fn nearest_rank(sorted: &[usize], percentile: usize) -> usize {
    assert!(!sorted.is_empty());
    let rank = (percentile * sorted.len()).div_ceil(100).max(1);
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketGroup {
    pub direction: Direction,
    pub model_id: String,
    pub n_segments: usize,
    pub micro_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScores {
    pub bucket: Bucket,
    pub n: usize,
    /// Sorted by `(direction, model_id)`; empty when the bucket is empty.
    pub groups: Vec<BucketGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRhos {
    pub short_medium: Measure,
    pub medium_long: Measure,
    pub short_long: Measure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankStability {
    pub per_direction: BTreeMap<Direction, PairRhos>,
    /// Unweighted means over directions where ρ is defined.
    pub means: PairRhos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    /// 33rd and 66th percentile cutoffs in target tokens.
    pub cutoffs: (usize, usize),
    pub buckets: Vec<BucketScores>,
    pub rank_stability: RankStability,
}

impl BucketReport {
    pub fn bucket(&self, b: Bucket) -> &BucketScores {
        &self.buckets[b as usize]
    }
}

pub fn assign_bucket(length: usize, cutoffs: (usize, usize)) -> Bucket {
    if length <= cutoffs.0 {
        Bucket::Short
    } else if length <= cutoffs.1 {
        Bucket::Medium
    } else {
        Bucket::Long
    }
}

pub fn length_buckets(
    corpus: &Corpus,
    sets: &[AnnotationSet],
    scheme: &WeightScheme,
    options: &ScoreOptions,
) -> Result<BucketReport, AnalysisError> {
    scheme.validate()?;
    let resolved = ResolvedSpans::new(sets, options.selection);
    let segments = resolved.in_scope(corpus, options.scope);
    if segments.len() < 3 {
        return Err(AnalysisError::TooFewObservations {
            needed: 3,
            got: segments.len(),
        });
    }
    let measured = options.execution.map(&segments, |seg| {
        let spans = resolved.spans(&seg.segment_id);
        (token_length(&seg.target_text), scheme.error_mass(spans.iter().copied()))
    });

    let mut lengths: Vec<usize> = measured.iter().map(|(l, _)| *l).collect();
    lengths.sort_unstable();
    let cutoffs = (nearest_rank(&lengths, 33), nearest_rank(&lengths, 66));

    let mut acc: [BTreeMap<(Direction, String), Vec<(f64, usize)>>; 3] = Default::default();
    let mut counts = [0usize; 3];
    for (seg, &(len, mass)) in segments.iter().zip(&measured) {
        let b = assign_bucket(len, cutoffs) as usize;
        counts[b] += 1;
        acc[b]
            .entry((seg.direction.clone(), seg.model_id.clone()))
            .or_default()
            .push((mass, len));
    }

    let mut buckets = Vec::with_capacity(3);
    for (b, groups) in Bucket::ALL.into_iter().zip(acc) {
        let groups = groups
            .into_iter()
            .map(|((direction, model_id), items)| {
                Ok(BucketGroup {
                    direction,
                    model_id,
                    n_segments: items.len(),
                    micro_score: micro_score(items)?,
                })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?;
        buckets.push(BucketScores {
            bucket: b,
            n: counts[b as usize],
            groups,
        });
    }

    let rank_stability = rank_stability(&buckets);
    Ok(BucketReport {
        cutoffs,
        buckets,
        rank_stability,
    })
}

fn rho_between(x: &BucketScores, y: &BucketScores, direction: &Direction) -> Measure {
    let scores = |b: &BucketScores| -> BTreeMap<String, f64> {
        b.groups
            .iter()
            .filter(|g| &g.direction == direction)
            .map(|g| (g.model_id.clone(), g.micro_score))
            .collect()
    };
    let sx = scores(x);
    let sy = scores(y);
    let (xs, ys): (Vec<f64>, Vec<f64>) = sx
        .iter()
        .filter_map(|(m, &a)| sy.get(m).map(|&b| (a, b)))
        .unzip();
    if xs.len() < 2 {
        return Measure::absent("fewer than 2 models in both buckets");
    }
    spearman(&xs, &ys)
        .map(Measure::Value)
        .unwrap_or_else(|| Measure::absent("constant scores in a bucket"))
}

fn mean_of(values: impl Iterator<Item = Measure>) -> Measure {
    let defined: Vec<f64> = values.filter_map(|m| m.value()).collect();
    if defined.is_empty() {
        Measure::absent("no direction with a defined rho")
    } else {
        Measure::Value(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Spearman ρ of model micro scores between every pair of buckets, per
/// direction, plus unweighted means across directions.
pub fn rank_stability(buckets: &[BucketScores]) -> RankStability {
    let find = |b: Bucket| buckets.iter().find(|s| s.bucket == b);
    let empty = |b| BucketScores {
        bucket: b,
        n: 0,
        groups: Vec::new(),
    };
    let short = find(Bucket::Short).cloned().unwrap_or_else(|| empty(Bucket::Short));
    let medium = find(Bucket::Medium).cloned().unwrap_or_else(|| empty(Bucket::Medium));
    let long = find(Bucket::Long).cloned().unwrap_or_else(|| empty(Bucket::Long));

    let mut directions: Vec<Direction> = buckets
        .iter()
        .flat_map(|b| b.groups.iter().map(|g| g.direction.clone()))
        .collect();
    directions.sort();
    directions.dedup();

    let per_direction: BTreeMap<Direction, PairRhos> = directions
        .into_iter()
        .map(|d| {
            let rhos = PairRhos {
                short_medium: rho_between(&short, &medium, &d),
                medium_long: rho_between(&medium, &long, &d),
                short_long: rho_between(&short, &long, &d),
            };
            (d, rhos)
        })
        .collect();
    let means = PairRhos {
        short_medium: mean_of(per_direction.values().map(|r| r.short_medium.clone())),
        medium_long: mean_of(per_direction.values().map(|r| r.medium_long.clone())),
        short_long: mean_of(per_direction.values().map(|r| r.short_long.clone())),
    };
    RankStability { per_direction, means }
}
