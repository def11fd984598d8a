//! Pairwise inter-annotator agreement over doubly annotated segments.
//!
//! Detection is measured three ways: character-level F1 over the union of
//! annotated positions, overlap span F1 (one-to-one greedy matching, pairs
//! sharing at least `min_overlap` characters), and exact span F1 (matched
//! pairs with identical boundaries). Label agreement and Cohen's κ are then
//! computed over matched pairs for each labelling criterion.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationSet, ErrorSpan};
use crate::exec::Execution;
use crate::measure::Measure;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgreementError {
    #[error("annotation sets cover different segments; uncovered by one side: {}", .uncovered.join(", "))]
    CoverageMismatch { uncovered: Vec<String> },
    #[error("no segments were annotated by both `{a}` and `{b}`")]
    NoSharedItems { a: String, b: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgreementOptions {
    pub min_overlap: usize,
    pub execution: Execution,
}

impl Default for AgreementOptions {
    fn default() -> Self {
        AgreementOptions {
            min_overlap: 1,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "category")]
    Category,
    #[serde(rename = "severity")]
    Severity,
    #[serde(rename = "category+severity")]
    CategorySeverity,
    #[serde(rename = "fine_type")]
    FineType,
    #[serde(rename = "span+type+severity")]
    SpanTypeSeverity,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Category,
        Criterion::Severity,
        Criterion::CategorySeverity,
        Criterion::FineType,
        Criterion::SpanTypeSeverity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Category => "category",
            Criterion::Severity => "severity",
            Criterion::CategorySeverity => "category+severity",
            Criterion::FineType => "fine_type",
            Criterion::SpanTypeSeverity => "span+type+severity",
        }
    }

    /// The categorical label a span carries under this criterion.
    pub fn label(self, span: &ErrorSpan) -> String {
        match self {
            Criterion::Category => span.path.category.clone(),
            Criterion::Severity => span.severity.to_string(),
            Criterion::CategorySeverity => format!("{}|{}", span.path.category, span.severity),
            Criterion::FineType => span.path.to_string(),
            Criterion::SpanTypeSeverity => {
                format!("{}:{}|{}|{}", span.start, span.end, span.path, span.severity)
            }
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchedPair<'a> {
    pub a: &'a ErrorSpan,
    pub b: &'a ErrorSpan,
    pub overlap: usize,
}

impl MatchedPair<'_> {
    pub fn is_exact(&self) -> bool {
        self.a.start == self.b.start && self.a.end == self.b.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpanMatching<'a> {
    pub pairs: Vec<MatchedPair<'a>>,
    pub unmatched_a: Vec<&'a ErrorSpan>,
    pub unmatched_b: Vec<&'a ErrorSpan>,
}

impl<'a> SpanMatching<'a> {
    fn extend(&mut self, other: SpanMatching<'a>) {
        self.pairs.extend(other.pairs);
        self.unmatched_a.extend(other.unmatched_a);
        self.unmatched_b.extend(other.unmatched_b);
    }

    pub fn n_a(&self) -> usize {
        self.pairs.len() + self.unmatched_a.len()
    }

    pub fn n_b(&self) -> usize {
        self.pairs.len() + self.unmatched_b.len()
    }
}

/// Priority of a candidate pair; smaller sorts first.
pub fn pair_priority(a: &ErrorSpan, b: &ErrorSpan) -> (Reverse<usize>, bool, usize, usize, usize, usize) {
    let exact = a.start == b.start && a.end == b.end;
    (Reverse(a.overlap(b)), !exact, a.start, b.start, a.end, b.end)
}

/// Greedy one-to-one matching of two span lists from the same segment.
pub fn match_spans<'a>(a: &[&'a ErrorSpan], b: &[&'a ErrorSpan], min_overlap: usize) -> SpanMatching<'a> {
    let min_overlap = min_overlap.max(1);
    let mut candidates = Vec::new();
    for (i, sa) in a.iter().enumerate() {
        for (j, sb) in b.iter().enumerate() {
            if sa.overlap(sb) >= min_overlap {
                candidates.push((pair_priority(sa, sb), i, j));
            }
        }
    }
    candidates.sort_unstable();

    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        pairs.push(MatchedPair {
            a: a[i],
            b: b[j],
            overlap: a[i].overlap(b[j]),
        });
    }
    SpanMatching {
        pairs,
        unmatched_a: a.iter().zip(&used_a).filter(|(_, u)| !**u).map(|(s, _)| *s).collect(),
        unmatched_b: b.iter().zip(&used_b).filter(|(_, u)| !**u).map(|(s, _)| *s).collect(),
    }
}

fn check_coverage(a: &AnnotationSet, b: &AnnotationSet) -> Result<(), AgreementError> {
    let uncovered: Vec<String> = a
        .segments_covered
        .symmetric_difference(&b.segments_covered)
        .cloned()
        .collect();
    if uncovered.is_empty() {
        Ok(())
    } else {
        Err(AgreementError::CoverageMismatch { uncovered })
    }
}

fn grouped<'a>(set: &'a AnnotationSet, items: &[&String]) -> Vec<Vec<&'a ErrorSpan>> {
    let by_seg = set.by_segment();
    items
        .iter()
        .map(|id| by_seg.get(id.as_str()).cloned().unwrap_or_default())
        .collect()
}

/// Match every covered segment; segments are processed in id order.
pub fn match_sets<'a>(
    a: &'a AnnotationSet,
    b: &'a AnnotationSet,
    options: &AgreementOptions,
) -> Result<SpanMatching<'a>, AgreementError> {
    check_coverage(a, b)?;
    let items: Vec<&String> = a.segments_covered.iter().collect();
    let ga = grouped(a, &items);
    let gb = grouped(b, &items);
    let per_segment: Vec<(Vec<&ErrorSpan>, Vec<&ErrorSpan>)> = ga.into_iter().zip(gb).collect();
    let results = options
        .execution
        .map(&per_segment, |(sa, sb)| match_spans(sa, sb, options.min_overlap));
    let mut all = SpanMatching::default();
    for m in results {
        all.extend(m);
    }
    Ok(all)
}

/// True/false positive counts with `A` as hypothesis and `B` as reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl DetectionCounts {
    pub fn f1(&self) -> Measure {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            Measure::absent("no spans on either side")
        } else {
            Measure::Value(2.0 * self.tp as f64 / denom as f64)
        }
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

fn char_counts_for(a: &[&ErrorSpan], b: &[&ErrorSpan]) -> DetectionCounts {
    let len = a.iter().chain(b).map(|s| s.end).max().unwrap_or(0);
    let mut in_a = vec![false; len];
    let mut in_b = vec![false; len];
    for s in a {
        in_a[s.start..s.end].iter_mut().for_each(|x| *x = true);
    }
    for s in b {
        in_b[s.start..s.end].iter_mut().for_each(|x| *x = true);
    }
    let mut c = DetectionCounts::default();
    for (x, y) in in_a.into_iter().zip(in_b) {
        match (x, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            _ => {}
        }
    }
    c
}

/// Character-level counts pooled over all covered segments.
pub fn char_counts(
    a: &AnnotationSet,
    b: &AnnotationSet,
    execution: Execution,
) -> Result<DetectionCounts, AgreementError> {
    check_coverage(a, b)?;
    let items: Vec<&String> = a.segments_covered.iter().collect();
    let per_segment: Vec<_> = grouped(a, &items).into_iter().zip(grouped(b, &items)).collect();
    let counts = execution.map(&per_segment, |(sa, sb)| char_counts_for(sa, sb));
    Ok(counts.into_iter().fold(DetectionCounts::default(), |acc, c| DetectionCounts {
        tp: acc.tp + c.tp,
        fp: acc.fp + c.fp,
        fn_: acc.fn_ + c.fn_,
    }))
}

pub fn char_f1(a: &AnnotationSet, b: &AnnotationSet, execution: Execution) -> Result<Measure, AgreementError> {
    Ok(char_counts(a, b, execution)?.f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Overlap,
    Exact,
}

pub fn span_counts(matching: &SpanMatching<'_>, mode: MatchMode) -> DetectionCounts {
    let tp = match mode {
        MatchMode::Overlap => matching.pairs.len(),
        MatchMode::Exact => matching.pairs.iter().filter(|p| p.is_exact()).count(),
    };
    DetectionCounts {
        tp,
        fp: matching.n_a() - tp,
        fn_: matching.n_b() - tp,
    }
}

pub fn span_f1(
    mode: MatchMode,
    a: &AnnotationSet,
    b: &AnnotationSet,
    options: &AgreementOptions,
) -> Result<Measure, AgreementError> {
    Ok(span_counts(&match_sets(a, b, options)?, mode).f1())
}

/// Cohen's κ over paired categorical labels.
pub fn cohen_kappa<S: AsRef<str>>(pairs: &[(S, S)]) -> Measure {
    if pairs.is_empty() {
        return Measure::absent("no matched pairs");
    }
    let n = pairs.len() as f64;
    let mut marg_a: BTreeMap<&str, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&str, usize> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in pairs {
        let (x, y) = (x.as_ref(), y.as_ref());
        *marg_a.entry(x).or_default() += 1;
        *marg_b.entry(y).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg_a
        .iter()
        .map(|(k, &ca)| {
            let cb = marg_b.get(k).copied().unwrap_or(0);
            (ca as f64 / n) * (cb as f64 / n)
        })
        .sum();
    if p_e >= 1.0 {
        return Measure::absent("degenerate marginals: chance agreement is 1");
    }
    Measure::Value(((p_o - p_e) / (1.0 - p_e)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAgreement {
    pub n_pairs: usize,
    pub n_agree: usize,
    /// Agreeing pairs over matched pairs.
    pub matched_only: Measure,
    /// Agreeing pairs counted as true positives against all spans:
    /// `2·agree / (|A| + |B|)`.
    pub with_detection: Measure,
    pub kappa: Measure,
}

pub fn label_agreement(matching: &SpanMatching<'_>, criterion: Criterion) -> LabelAgreement {
    let labels: Vec<(String, String)> = matching
        .pairs
        .iter()
        .map(|p| (criterion.label(p.a), criterion.label(p.b)))
        .collect();
    let n_pairs = labels.len();
    let n_agree = labels.iter().filter(|(x, y)| x == y).count();
    let matched_only = if n_pairs == 0 {
        Measure::absent("no matched pairs")
    } else {
        Measure::Value(n_agree as f64 / n_pairs as f64)
    };
    let total = matching.n_a() + matching.n_b();
    let with_detection = if total == 0 {
        Measure::absent("no spans on either side")
    } else {
        Measure::Value(2.0 * n_agree as f64 / total as f64)
    };
    LabelAgreement {
        n_pairs,
        n_agree,
        matched_only,
        with_detection,
        kappa: cohen_kappa(&labels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub annotator_a: String,
    pub annotator_b: String,
    /// Doubly annotated segments.
    pub n_items: usize,
    pub n_spans_a: usize,
    pub n_spans_b: usize,
    pub n_matched: usize,
    pub min_overlap: usize,
    pub char_counts: DetectionCounts,
    pub char_f1: Measure,
    pub overlap_span_f1: Measure,
    pub exact_span_f1: Measure,
    pub labels: BTreeMap<Criterion, LabelAgreement>,
}

/// Full agreement suite over the segments both annotators reviewed.
pub fn agreement_report(
    a: &AnnotationSet,
    b: &AnnotationSet,
    options: &AgreementOptions,
) -> Result<AgreementReport, AgreementError> {
    let shared: BTreeSet<String> = a
        .segments_covered
        .intersection(&b.segments_covered)
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(AgreementError::NoSharedItems {
            a: a.annotator_id.clone(),
            b: b.annotator_id.clone(),
        });
    }
    let a = a.restricted_to(&shared);
    let b = b.restricted_to(&shared);
    let chars = char_counts(&a, &b, options.execution)?;
    let matching = match_sets(&a, &b, options)?;
    let labels = Criterion::ALL
        .into_iter()
        .map(|c| (c, label_agreement(&matching, c)))
        .collect();
    Ok(AgreementReport {
        annotator_a: a.annotator_id.clone(),
        annotator_b: b.annotator_id.clone(),
        n_items: shared.len(),
        n_spans_a: a.spans.len(),
        n_spans_b: b.spans.len(),
        n_matched: matching.pairs.len(),
        min_overlap: options.min_overlap.max(1),
        char_counts: chars,
        char_f1: chars.f1(),
        overlap_span_f1: span_counts(&matching, MatchMode::Overlap).f1(),
        exact_span_f1: span_counts(&matching, MatchMode::Exact).f1(),
        labels,
    })
}
