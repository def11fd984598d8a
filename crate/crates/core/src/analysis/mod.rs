//! Statistical analyses over scored and annotated corpora.

pub mod buckets;
pub mod distribution;
pub mod stats;

use thiserror::Error;

use crate::corpus::{AnnotationSet, Corpus, ErrorSpan};
use crate::scoring::{ResolvedSpans, ScoreError, SpanSelection};

pub use buckets::{length_buckets, rank_stability, Bucket, BucketReport, RankStability};
pub use distribution::{dashboard, error_distribution, model_attribution, DistributionTable, Level, ScopeFilter};
pub use stats::{correlate, correlate_pairs, pearson, spearman, CorrelationReport, PValueMethod};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("paired samples differ in length ({x} vs {y})")]
    Unpaired { x: usize, y: usize },
    #[error("exact permutation test is limited to n <= 10, got n = {n}")]
    PermutationTooLarge { n: usize },
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Spans that count under `selection`, in corpus order then annotation order.
pub fn selected_spans<'a>(
    corpus: &Corpus,
    sets: &'a [AnnotationSet],
    selection: SpanSelection,
) -> Vec<&'a ErrorSpan> {
    let resolved = ResolvedSpans::new(sets, selection);
    corpus
        .segments()
        .iter()
        .flat_map(|seg| resolved.spans(&seg.segment_id).iter().copied())
        .collect()
}
