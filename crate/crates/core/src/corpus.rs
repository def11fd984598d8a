//! Segments, error spans and their JSONL interchange format.
//!
//! Offsets are counted in Unicode scalar values over NFC-normalized text.
//! All texts are normalized when read, so an offset pair always addresses the
//! same substring no matter how the producer encoded combining marks.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::taxonomy::{PathError, TaxonomyPath, TaxonomySchema};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate segment id `{segment_id}`")]
    DuplicateSegment { line: usize, segment_id: String },
    #[error("line {line}: segment `{segment_id}` has an empty target text")]
    EmptyTarget { line: usize, segment_id: String },
    #[error("line {line}: unknown dialect `{value}`")]
    UnknownDialect { line: usize, value: String },
    #[error("line {line}: span `{span_id}` references unknown segment `{segment_id}`")]
    UnknownSegment {
        line: usize,
        span_id: String,
        segment_id: String,
    },
    #[error("line {line}: span `{span_id}` [{start}, {end}) is out of bounds for a target of {len} characters")]
    OutOfBounds {
        line: usize,
        span_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("line {line}: span `{span_id}` has an invalid taxonomy path: {source}")]
    InvalidPath {
        line: usize,
        span_id: String,
        source: PathError,
    },
    #[error("line {line}: span `{span_id}` path `{path}` stops above an annotatable node")]
    IncompletePath {
        line: usize,
        span_id: String,
        path: String,
    },
    #[error("line {line}: span `{span_id}` has unknown severity `{value}`")]
    UnknownSeverity {
        line: usize,
        span_id: String,
        value: String,
    },
    #[error("line {line}: span `{span_id}` span_text {found:?} does not match target substring {expected:?}")]
    SpanTextMismatch {
        line: usize,
        span_id: String,
        expected: String,
        found: String,
    },
    #[error("line {line}: duplicate span id `{span_id}`")]
    DuplicateSpan { line: usize, span_id: String },
}

impl CorpusError {
    pub fn line(&self) -> usize {
        match self {
            CorpusError::Malformed { line, .. }
            | CorpusError::DuplicateSegment { line, .. }
            | CorpusError::EmptyTarget { line, .. }
            | CorpusError::UnknownDialect { line, .. }
            | CorpusError::UnknownSegment { line, .. }
            | CorpusError::OutOfBounds { line, .. }
            | CorpusError::InvalidPath { line, .. }
            | CorpusError::IncompletePath { line, .. }
            | CorpusError::UnknownSeverity { line, .. }
            | CorpusError::SpanTextMismatch { line, .. }
            | CorpusError::DuplicateSpan { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dialect {
    Egyptian,
    Emirati,
    Jordanian,
    Mauritanian,
    Moroccan,
    Palestinian,
    Yemeni,
}

impl Dialect {
    pub const ALL: [Dialect; 7] = [
        Dialect::Egyptian,
        Dialect::Emirati,
        Dialect::Jordanian,
        Dialect::Mauritanian,
        Dialect::Moroccan,
        Dialect::Palestinian,
        Dialect::Yemeni,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Dialect::Egyptian => "EGY",
            Dialect::Emirati => "UAE",
            Dialect::Jordanian => "JOR",
            Dialect::Mauritanian => "MAU",
            Dialect::Moroccan => "MOR",
            Dialect::Palestinian => "PAL",
            Dialect::Yemeni => "YEM",
        }
    }
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dialect::ALL
            .into_iter()
            .find(|d| s == format!("{d:?}") || s.eq_ignore_ascii_case(d.code()))
            .ok_or_else(|| s.to_string())
    }
}

/// Translation direction, e.g. `EGY->ENG`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Direction {
    pub source: String,
    pub target: String,
}

impl Direction {
    pub fn new(source: &str, target: &str) -> Self {
        Direction {
            source: source.to_string(),
            target: target.to_string(),
        }
    }

    pub fn into_english(&self) -> bool {
        self.target.eq_ignore_ascii_case("ENG")
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.source, self.target)
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("->")
            .or_else(|| s.split_once('→'))
            .ok_or_else(|| format!("direction `{s}` is not of the form SRC->TGT"))?;
        if a.is_empty() || b.is_empty() {
            return Err(format!("direction `{s}` is not of the form SRC->TGT"));
        }
        Ok(Direction::new(a.trim(), b.trim()))
    }
}

impl Serialize for Direction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub segment_id: String,
    pub direction: Direction,
    pub dialect: Option<Dialect>,
    pub model_id: String,
    pub source_text: String,
    pub target_text: String,
    pub reference_text: Option<String>,
}

impl Segment {
    /// Target length in Unicode scalar values.
    pub fn target_chars(&self) -> usize {
        self.target_text.chars().count()
    }

    pub fn target_slice(&self, start: usize, end: usize) -> Option<&str> {
        char_slice(&self.target_text, start, end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Minor,
    Major,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Minor, Severity::Major, Severity::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Minor => "minor",
            Severity::Major => "major",
            Severity::Critical => "critical",
        }
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minor" => Ok(Severity::Minor),
            "major" => Ok(Severity::Major),
            "critical" => Ok(Severity::Critical),
            other => Err(other.to_string()),
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Serializes in the annotation record shape, with the path flattened into
/// `category`, `error_type` and `subcategory`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSpan {
    pub span_id: String,
    pub segment_id: String,
    pub annotator_id: String,
    /// Inclusive start, in scalar values.
    pub start: usize,
    /// Exclusive end, in scalar values.
    pub end: usize,
    #[serde(flatten)]
    pub path: TaxonomyPath,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ErrorSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of scalar values shared with `other`.
    pub fn overlap(&self, other: &ErrorSpan) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }
}

/// Everything one annotator produced for one taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotationSet {
    pub annotator_id: String,
    pub taxonomy_name: String,
    pub spans: Vec<ErrorSpan>,
    /// Segments the annotator reviewed, including error-free ones.
    pub segments_covered: BTreeSet<String>,
    /// Free-text per-segment comments (the interface's comment box).
    pub segment_notes: BTreeMap<String, String>,
}

impl AnnotationSet {
    pub fn new(annotator_id: &str, taxonomy_name: &str) -> Self {
        AnnotationSet {
            annotator_id: annotator_id.to_string(),
            taxonomy_name: taxonomy_name.to_string(),
            ..Default::default()
        }
    }

    pub fn spans_for<'a>(&'a self, segment_id: &'a str) -> impl Iterator<Item = &'a ErrorSpan> + 'a {
        self.spans.iter().filter(move |s| s.segment_id == segment_id)
    }

    /// Spans grouped by segment, in span order.
    pub fn by_segment(&self) -> HashMap<&str, Vec<&ErrorSpan>> {
        let mut map: HashMap<&str, Vec<&ErrorSpan>> = HashMap::new();
        for span in &self.spans {
            map.entry(span.segment_id.as_str()).or_default().push(span);
        }
        map
    }

    /// Restrict to the given segments.
    pub fn restricted_to(&self, segments: &BTreeSet<String>) -> AnnotationSet {
        AnnotationSet {
            annotator_id: self.annotator_id.clone(),
            taxonomy_name: self.taxonomy_name.clone(),
            spans: self
                .spans
                .iter()
                .filter(|s| segments.contains(&s.segment_id))
                .cloned()
                .collect(),
            segments_covered: self
                .segments_covered
                .intersection(segments)
                .cloned()
                .collect(),
            segment_notes: self
                .segment_notes
                .iter()
                .filter(|(k, _)| segments.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

/// Segments in file order with an id index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    segments: Vec<Segment>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(segments: Vec<Segment>) -> Result<Corpus, CorpusError> {
        let mut index = HashMap::with_capacity(segments.len());
        for (i, seg) in segments.iter().enumerate() {
            if index.insert(seg.segment_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateSegment {
                    line: i + 1,
                    segment_id: seg.segment_id.clone(),
                });
            }
        }
        Ok(Corpus { segments, index })
    }

    pub fn parse(source: &str) -> Result<Corpus, CorpusError> {
        Corpus::new(read_segments(source)?)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn get(&self, segment_id: &str) -> Option<&Segment> {
        self.index.get(segment_id).map(|&i| &self.segments[i])
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRecord {
    segment_id: String,
    source_lang: String,
    target_lang: String,
    dialect: Option<String>,
    model_id: String,
    source_text: String,
    target_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_text: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    span_id: Option<String>,
    segment_id: String,
    annotator_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subcategory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    severity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    #[serde(default, skip_serializing)]
    span_text: Option<String>,
}

impl AnnotationRecord {
    fn is_coverage(&self) -> bool {
        self.span_id.is_none()
            && self.start.is_none()
            && self.end.is_none()
            && self.category.is_none()
            && self.severity.is_none()
    }
}

/// NFC-normalize `s`.
pub fn nfc(s: &str) -> String {
    s.nfc().collect()
}

/// Number of Unicode scalar values in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring by scalar-value offsets `[start, end)`.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut boundaries = s
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(s.len()));
    let from = boundaries.nth(start)?;
    let to = if end == start {
        from
    } else {
        boundaries.nth(end - start - 1)?
    };
    Some(&s[from..to])
}

fn lines(source: &str) -> impl Iterator<Item = (usize, &str)> {
    source
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parse a segments JSONL document. Texts are NFC-normalized.
pub fn read_segments(source: &str) -> Result<Vec<Segment>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, text) in lines(source) {
        let rec: SegmentRecord = serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.segment_id.clone()) {
            return Err(CorpusError::DuplicateSegment {
                line,
                segment_id: rec.segment_id,
            });
        }
        let target_text = nfc(&rec.target_text);
        if target_text.split_whitespace().next().is_none() {
            return Err(CorpusError::EmptyTarget {
                line,
                segment_id: rec.segment_id,
            });
        }
        let dialect = match rec.dialect.as_deref() {
            None | Some("") => None,
            Some(d) => Some(
                d.parse::<Dialect>()
                    .map_err(|value| CorpusError::UnknownDialect { line, value })?,
            ),
        };
        out.push(Segment {
            segment_id: rec.segment_id,
            direction: Direction::new(&rec.source_lang, &rec.target_lang),
            dialect,
            model_id: rec.model_id,
            source_text: nfc(&rec.source_text),
            target_text,
            reference_text: rec.reference_text.as_deref().map(nfc),
        });
    }
    Ok(out)
}

fn to_record(seg: &Segment) -> SegmentRecord {
    SegmentRecord {
        segment_id: seg.segment_id.clone(),
        source_lang: seg.direction.source.clone(),
        target_lang: seg.direction.target.clone(),
        dialect: seg.dialect.map(|d| format!("{d:?}")),
        model_id: seg.model_id.clone(),
        source_text: seg.source_text.clone(),
        target_text: seg.target_text.clone(),
        reference_text: seg.reference_text.clone(),
    }
}

/// A segment in its JSONL record shape.
pub fn segment_record(seg: &Segment) -> serde_json::Value {
    serde_json::to_value(to_record(seg)).expect("segment record serializes")
}

pub fn write_segments(segments: &[Segment]) -> String {
    let mut out = String::new();
    for seg in segments {
        out.push_str(&serde_json::to_string(&to_record(seg)).expect("segment record serializes"));
        out.push('\n');
    }
    out
}

/// Validate one span against its segment and the schema.
pub fn check_span(span: &ErrorSpan, corpus: &Corpus, schema: &TaxonomySchema) -> Result<(), CorpusError> {
    check_span_at(0, span, corpus, schema)
}

fn check_span_at(
    line: usize,
    span: &ErrorSpan,
    corpus: &Corpus,
    schema: &TaxonomySchema,
) -> Result<(), CorpusError> {
    let seg = corpus
        .get(&span.segment_id)
        .ok_or_else(|| CorpusError::UnknownSegment {
            line,
            span_id: span.span_id.clone(),
            segment_id: span.segment_id.clone(),
        })?;
    let len = seg.target_chars();
    if span.start >= span.end || span.end > len {
        return Err(CorpusError::OutOfBounds {
            line,
            span_id: span.span_id.clone(),
            start: span.start,
            end: span.end,
            len,
        });
    }
    let check = schema
        .validate_path(&span.path)
        .map_err(|source| CorpusError::InvalidPath {
            line,
            span_id: span.span_id.clone(),
            source,
        })?;
    if !check.annotatable() {
        return Err(CorpusError::IncompletePath {
            line,
            span_id: span.span_id.clone(),
            path: span.path.to_string(),
        });
    }
    Ok(())
}

/// Parse an annotations JSONL document into one set per annotator, ordered
/// by annotator id. Spans keep file order within a set.
///
/// Besides span records, a line carrying only `segment_id`, `annotator_id`
/// and optionally `note` marks a segment as reviewed.
pub fn read_annotations(
    source: &str,
    corpus: &Corpus,
    schema: &TaxonomySchema,
) -> Result<Vec<AnnotationSet>, CorpusError> {
    let mut sets: BTreeMap<String, AnnotationSet> = BTreeMap::new();
    let mut span_ids = HashSet::new();
    for (line, text) in lines(source) {
        let rec: AnnotationRecord =
            serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
        let set = sets
            .entry(rec.annotator_id.clone())
            .or_insert_with(|| AnnotationSet::new(&rec.annotator_id, &schema.name));

        if rec.is_coverage() {
            if corpus.get(&rec.segment_id).is_none() {
                return Err(CorpusError::UnknownSegment {
                    line,
                    span_id: String::new(),
                    segment_id: rec.segment_id,
                });
            }
            set.segments_covered.insert(rec.segment_id.clone());
            if let Some(note) = rec.note {
                set.segment_notes.insert(rec.segment_id, note);
            }
            continue;
        }

        let missing = |field: &str| CorpusError::Malformed {
            line,
            message: format!("span record missing `{field}`"),
        };
        let span_id = rec.span_id.clone().ok_or_else(|| missing("span_id"))?;
        if !span_ids.insert(span_id.clone()) {
            return Err(CorpusError::DuplicateSpan { line, span_id });
        }
        let start = rec.start.ok_or_else(|| missing("start"))?;
        let end = rec.end.ok_or_else(|| missing("end"))?;
        let category = rec.category.clone().ok_or_else(|| missing("category"))?;
        let severity_raw = rec.severity.clone().ok_or_else(|| missing("severity"))?;
        let severity = severity_raw
            .parse::<Severity>()
            .map_err(|value| CorpusError::UnknownSeverity {
                line,
                span_id: span_id.clone(),
                value,
            })?;
        let span = ErrorSpan {
            span_id,
            segment_id: rec.segment_id.clone(),
            annotator_id: rec.annotator_id.clone(),
            start,
            end,
            path: TaxonomyPath {
                category,
                error_type: rec.error_type.clone(),
                subcategory: rec.subcategory.clone(),
            },
            severity,
            note: rec.note.clone(),
        };
        check_span_at(line, &span, corpus, schema)?;
        if let Some(found) = rec.span_text {
            let seg = corpus.get(&span.segment_id).expect("checked above");
            let expected = seg.target_slice(start, end).unwrap_or_default();
            if nfc(&found) != expected {
                return Err(CorpusError::SpanTextMismatch {
                    line,
                    span_id: span.span_id,
                    expected: expected.to_string(),
                    found,
                });
            }
        }
        set.segments_covered.insert(span.segment_id.clone());
        set.spans.push(span);
    }
    Ok(sets.into_values().collect())
}

/// Serialize annotation sets. Span records come first within each set,
/// followed by coverage records for reviewed segments that carry no spans
/// or a segment note.
pub fn write_annotations(sets: &[AnnotationSet]) -> String {
    let mut out = String::new();
    for set in sets {
        let mut with_spans = HashSet::new();
        for span in &set.spans {
            with_spans.insert(span.segment_id.as_str());
            let rec = AnnotationRecord {
                span_id: Some(span.span_id.clone()),
                segment_id: span.segment_id.clone(),
                annotator_id: span.annotator_id.clone(),
                start: Some(span.start),
                end: Some(span.end),
                category: Some(span.path.category.clone()),
                error_type: span.path.error_type.clone(),
                subcategory: span.path.subcategory.clone(),
                severity: Some(span.severity.as_str().to_string()),
                note: span.note.clone(),
                span_text: None,
            };
            push_line(&mut out, &rec);
        }
        for seg in &set.segments_covered {
            let note = set.segment_notes.get(seg);
            if with_spans.contains(seg.as_str()) && note.is_none() {
                continue;
            }
            let rec = AnnotationRecord {
                span_id: None,
                segment_id: seg.clone(),
                annotator_id: set.annotator_id.clone(),
                start: None,
                end: None,
                category: None,
                error_type: None,
                subcategory: None,
                severity: None,
                note: note.cloned(),
                span_text: None,
            };
            push_line(&mut out, &rec);
        }
    }
    out
}

fn push_line(out: &mut String, rec: &AnnotationRecord) {
    out.push_str(&serde_json::to_string(rec).expect("annotation record serializes"));
    out.push('\n');
}
