//! Severity-weighted quality scores.
//!
//! Per segment: `max(0, 100·(1 − Σ wᵢ / L))` where `wᵢ` is the span's severity
//! weight times the uniform type weight and `L` is the whitespace token count
//! of the target. Per group the micro score pools mass and length first:
//! `max(0, 100 − 100·ΣE / ΣL)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationSet, Corpus, Direction, ErrorSpan, Segment, Severity};
use crate::exec::Execution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("segment `{segment_id}` has a target of zero tokens and cannot be scored")]
    Unscorable { segment_id: String },
    #[error("cannot compute a micro score over an empty group")]
    EmptyGroup,
    #[error("invalid weight scheme: {0}")]
    InvalidWeights(String),
}

/// Severity weights and the uniform error-type weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightScheme {
    pub minor: f64,
    pub major: f64,
    pub critical: f64,
    pub type_weight: f64,
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme {
            minor: 1.0,
            major: 5.0,
            critical: 25.0,
            type_weight: 1.0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemeRepr {
    severity_weights: SeverityWeights,
    #[serde(default = "one")]
    type_weight: f64,
}

#[derive(Serialize, Deserialize)]
struct SeverityWeights {
    minor: f64,
    major: f64,
    critical: f64,
}

fn one() -> f64 {
    1.0
}

impl Serialize for WeightScheme {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SchemeRepr {
            severity_weights: SeverityWeights {
                minor: self.minor,
                major: self.major,
                critical: self.critical,
            },
            type_weight: self.type_weight,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WeightScheme {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = SchemeRepr::deserialize(deserializer)?;
        let scheme = WeightScheme {
            minor: r.severity_weights.minor,
            major: r.severity_weights.major,
            critical: r.severity_weights.critical,
            type_weight: r.type_weight,
        };
        scheme.validate().map_err(serde::de::Error::custom)?;
        Ok(scheme)
    }
}

impl WeightScheme {
    pub fn validate(&self) -> Result<(), ScoreError> {
        for (name, w) in [
            ("minor", self.minor),
            ("major", self.major),
            ("critical", self.critical),
            ("type_weight", self.type_weight),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(ScoreError::InvalidWeights(format!(
                    "{name} must be a finite non-negative number, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn severity_weight(&self, severity: Severity) -> f64 {
        match severity {
            Severity::Minor => self.minor,
            Severity::Major => self.major,
            Severity::Critical => self.critical,
        }
    }

    pub fn span_weight(&self, severity: Severity) -> f64 {
        self.severity_weight(severity) * self.type_weight
    }

    /// Error mass of a span list, accumulated in list order.
    pub fn error_mass<'a, I>(&self, spans: I) -> f64
    where
        I: IntoIterator<Item = &'a ErrorSpan>,
    {
        spans
            .into_iter()
            .fold(0.0, |acc, s| acc + self.span_weight(s.severity))
    }
}

/// Whitespace-delimited token count.
pub fn token_length(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Score from a precomputed mass and length.
pub fn score_from_mass(mass: f64, length: usize) -> f64 {
    (100.0 * (1.0 - mass / length as f64)).max(0.0)
}

pub fn segment_score<'a, I>(segment: &Segment, spans: I, scheme: &WeightScheme) -> Result<f64, ScoreError>
where
    I: IntoIterator<Item = &'a ErrorSpan>,
{
    let length = token_length(&segment.target_text);
    if length == 0 {
        return Err(ScoreError::Unscorable {
            segment_id: segment.segment_id.clone(),
        });
    }
    Ok(score_from_mass(scheme.error_mass(spans), length))
}

/// Micro score over `(error_mass, length)` pairs: sum first, divide once.
pub fn micro_score<I>(items: I) -> Result<f64, ScoreError>
where
    I: IntoIterator<Item = (f64, usize)>,
{
    let mut n = 0usize;
    let mut mass = 0.0;
    let mut length = 0usize;
    for (m, l) in items {
        n += 1;
        mass += m;
        length += l;
    }
    if n == 0 {
        return Err(ScoreError::EmptyGroup);
    }
    if length == 0 {
        return Err(ScoreError::Unscorable {
            segment_id: String::from("<group>"),
        });
    }
    Ok((100.0 - 100.0 * mass / length as f64).max(0.0))
}

/// Which annotator's spans count for a segment annotated more than once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanSelection {
    /// The lexicographically first annotator that reviewed the segment.
    #[default]
    PrimaryAnnotator,
    /// Every annotator's spans.
    Pooled,
}

/// Which segments enter the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Every corpus segment; unreviewed segments carry no spans.
    #[default]
    All,
    /// Only segments some annotator reviewed.
    Annotated,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreOptions {
    pub selection: SpanSelection,
    pub scope: Scope,
    pub execution: Execution,
}

/// Spans that count for each segment under a selection policy, plus the set
/// of segments anyone reviewed.
pub struct ResolvedSpans<'a> {
    pub by_segment: HashMap<&'a str, Vec<&'a ErrorSpan>>,
    pub covered: BTreeSet<&'a str>,
}

impl<'a> ResolvedSpans<'a> {
    pub fn new(sets: &'a [AnnotationSet], selection: SpanSelection) -> Self {
        let mut ordered: Vec<&AnnotationSet> = sets.iter().collect();
        ordered.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));

        let mut owner: HashMap<&str, &str> = HashMap::new();
        let mut covered = BTreeSet::new();
        for set in &ordered {
            for seg in &set.segments_covered {
                covered.insert(seg.as_str());
                owner.entry(seg.as_str()).or_insert(set.annotator_id.as_str());
            }
        }
        let mut by_segment: HashMap<&str, Vec<&ErrorSpan>> = HashMap::new();
        for set in &ordered {
            for span in &set.spans {
                let keep = match selection {
                    SpanSelection::Pooled => true,
                    SpanSelection::PrimaryAnnotator => {
                        owner.get(span.segment_id.as_str()) == Some(&set.annotator_id.as_str())
                    }
                };
                if keep {
                    covered.insert(span.segment_id.as_str());
                    by_segment.entry(span.segment_id.as_str()).or_default().push(span);
                }
            }
        }
        ResolvedSpans { by_segment, covered }
    }

    pub fn spans(&self, segment_id: &str) -> &[&'a ErrorSpan] {
        self.by_segment.get(segment_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Segments of `corpus` in scope, in corpus order.
    pub fn in_scope<'c>(&self, corpus: &'c Corpus, scope: Scope) -> Vec<&'c Segment> {
        corpus
            .segments()
            .iter()
            .filter(|s| scope == Scope::All || self.covered.contains(s.segment_id.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScore {
    pub score: f64,
    pub error_mass: f64,
    pub length: usize,
    pub n_spans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub direction: Direction,
    pub model_id: String,
    pub n_segments: usize,
    pub macro_mean: f64,
    pub micro_score: f64,
    pub error_mass: f64,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scheme: WeightScheme,
    pub selection: SpanSelection,
    pub scope: Scope,
    pub per_segment: BTreeMap<String, SegmentScore>,
    /// Sorted by `(direction, model_id)`.
    pub per_group: Vec<GroupScore>,
}

impl ScoreReport {
    pub fn group(&self, direction: &Direction, model_id: &str) -> Option<&GroupScore> {
        self.per_group
            .iter()
            .find(|g| &g.direction == direction && g.model_id == model_id)
    }
}

pub fn score_report(
    corpus: &Corpus,
    sets: &[AnnotationSet],
    scheme: &WeightScheme,
    options: &ScoreOptions,
) -> Result<ScoreReport, ScoreError> {
    scheme.validate()?;
    let resolved = ResolvedSpans::new(sets, options.selection);
    let segments = resolved.in_scope(corpus, options.scope);

    let scored = options.execution.try_map(&segments, |seg| {
        let spans = resolved.spans(&seg.segment_id);
        let length = token_length(&seg.target_text);
        let score = segment_score(seg, spans.iter().copied(), scheme)?;
        Ok::<_, ScoreError>(SegmentScore {
            score,
            error_mass: scheme.error_mass(spans.iter().copied()),
            length,
            n_spans: spans.len(),
        })
    })?;

    let mut groups: BTreeMap<(Direction, String), Vec<&SegmentScore>> = BTreeMap::new();
    for (seg, s) in segments.iter().zip(&scored) {
        groups
            .entry((seg.direction.clone(), seg.model_id.clone()))
            .or_default()
            .push(s);
    }
    let per_group = groups
        .into_iter()
        .map(|((direction, model_id), items)| {
            let n = items.len();
            let macro_mean = items.iter().map(|s| s.score).sum::<f64>() / n as f64;
            let micro = micro_score(items.iter().map(|s| (s.error_mass, s.length)))?;
            Ok(GroupScore {
                direction,
                model_id,
                n_segments: n,
                macro_mean,
                micro_score: micro,
                error_mass: items.iter().map(|s| s.error_mass).sum(),
                length: items.iter().map(|s| s.length).sum(),
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;

    let per_segment = segments
        .iter()
        .zip(scored)
        .map(|(seg, s)| (seg.segment_id.clone(), s))
        .collect();

    Ok(ScoreReport {
        scheme: *scheme,
        selection: options.selection,
        scope: options.scope,
        per_segment,
        per_group,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TaxonomyPath;

    fn seg(id: &str, target: &str) -> Segment {
        Segment {
            segment_id: id.into(),
            direction: Direction::new("ENG", "EGY"),
            dialect: None,
            model_id: "m".into(),
            source_text: "src".into(),
            target_text: target.into(),
            reference_text: None,
        }
    }

    fn span(seg: &str, severity: Severity) -> ErrorSpan {
        ErrorSpan {
            span_id: format!("{seg}-{severity}"),
            segment_id: seg.into(),
            annotator_id: "a".into(),
            start: 0,
            end: 1,
            path: TaxonomyPath::new("graphetics", Some("character-encoding"), None),
            severity,
            note: None,
        }
    }

    const TEN: &str = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10";

    #[test]
    fn token_length_examples() {
        assert_eq!(token_length("the cat sat"), 3);
        assert_eq!(token_length(""), 0);
        assert_eq!(token_length("  spaced \t out\n"), 2);
        // Five whitespace-separated words, punctuation attached.
        assert_eq!(token_length("يا إلهي، ما هذا؟ رائع!"), 5);
    }

    #[test]
    fn segment_score_examples() {
        let s = seg("s", TEN);
        let w = WeightScheme::default();
        assert_eq!(segment_score(&s, &[], &w).unwrap(), 100.0);
        assert_eq!(segment_score(&s, &[span("s", Severity::Major)], &w).unwrap(), 50.0);
        assert_eq!(segment_score(&s, &[span("s", Severity::Critical)], &w).unwrap(), 0.0);
    }

    #[test]
    fn zero_length_segment_is_unscorable() {
        let s = seg("s", " ");
        assert!(matches!(
            segment_score(&s, &[], &WeightScheme::default()),
            Err(ScoreError::Unscorable { .. })
        ));
    }

    #[test]
    fn micro_single_and_pair() {
        assert_eq!(micro_score([(5.0, 10)]).unwrap(), 50.0);
        // 25 / 20 = 1.25 → clamped, while the macro mean would be 50.
        assert_eq!(micro_score([(0.0, 10), (25.0, 10)]).unwrap(), 0.0);
        assert_eq!(micro_score(std::iter::empty()), Err(ScoreError::EmptyGroup));
    }

    #[test]
    fn weights_validated() {
        let bad = WeightScheme {
            major: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let json = r#"{"severity_weights":{"minor":1,"major":-5,"critical":25}}"#;
        assert!(serde_json::from_str::<WeightScheme>(json).is_err());
        let json = r#"{"severity_weights":{"minor":2,"major":5,"critical":10}}"#;
        let w: WeightScheme = serde_json::from_str(json).unwrap();
        assert_eq!((w.minor, w.critical, w.type_weight), (2.0, 10.0, 1.0));
    }

    #[test]
    fn report_without_annotations_is_all_hundred() {
        let corpus = Corpus::new(vec![seg("a", TEN), seg("b", "x y")]).unwrap();
        let r = score_report(&corpus, &[], &WeightScheme::default(), &ScoreOptions::default()).unwrap();
        assert!(r.per_segment.values().all(|s| s.score == 100.0));
        assert_eq!(r.per_group.len(), 1);
        assert_eq!(r.per_group[0].macro_mean, 100.0);
        assert_eq!(r.per_group[0].micro_score, 100.0);
    }

    #[test]
    fn primary_annotator_selection_avoids_double_count() {
        let corpus = Corpus::new(vec![seg("a", TEN)]).unwrap();
        let mut s1 = AnnotationSet::new("ann1", "LQM");
        s1.spans.push(span("a", Severity::Major));
        s1.segments_covered.insert("a".into());
        let mut s2 = AnnotationSet::new("ann2", "LQM");
        let mut sp = span("a", Severity::Major);
        sp.annotator_id = "ann2".into();
        s2.spans.push(sp);
        s2.segments_covered.insert("a".into());
        let sets = [s2, s1];
        let w = WeightScheme::default();
        let primary = score_report(&corpus, &sets, &w, &ScoreOptions::default()).unwrap();
        assert_eq!(primary.per_segment["a"].score, 50.0);
        let pooled = score_report(
            &corpus,
            &sets,
            &w,
            &ScoreOptions {
                selection: SpanSelection::Pooled,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(pooled.per_segment["a"].score, 0.0);
    }

    #[test]
    fn annotated_scope_filters_segments() {
        let corpus = Corpus::new(vec![seg("a", TEN), seg("b", TEN)]).unwrap();
        let mut set = AnnotationSet::new("ann", "LQM");
        set.segments_covered.insert("b".into());
        let r = score_report(
            &corpus,
            &[set],
            &WeightScheme::default(),
            &ScoreOptions {
                scope: Scope::Annotated,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.per_segment.keys().collect::<Vec<_>>(), ["b"]);
    }

    #[test]
    fn scheme_serializes_with_nested_weights() {
        let v = serde_json::to_value(WeightScheme::default()).unwrap();
        assert_eq!(v["severity_weights"]["critical"], 25.0);
        assert_eq!(v["type_weight"], 1.0);
    }
}
