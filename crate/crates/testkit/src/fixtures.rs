//! Seeded random fixtures shared by the property suites and the acceptance run.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use lqm_core::{AnnotationSet, Corpus, Direction, ErrorSpan, Layer, Segment, Severity, TaxonomyPath, TaxonomySchema};

/// Mixed English and Arabic vocabulary, some with combining diacritics.
pub const WORDS: &[&str] = &[
    "the", "dog", "ran", "home", "quickly", "and", "then", "slept", "مرحبا", "كِتَابٌ", "إزيك", "يا", "صاحبي",
    "شو", "أخبارك", "café", "naïve", "été", "٣", "2024",
];

pub const SEVERITIES: [Severity; 3] = [Severity::Minor, Severity::Major, Severity::Critical];

pub fn sentence<R: Rng>(rng: &mut R, n_words: usize) -> String {
    (0..n_words)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn segment(id: &str, direction: Direction, model: &str, target: String) -> Segment {
    Segment {
        segment_id: id.to_string(),
        direction,
        dialect: None,
        model_id: model.to_string(),
        source_text: "src".to_string(),
        target_text: target,
        reference_text: None,
    }
}

/// Every annotatable path in the built-in LQM schema.
pub fn lqm_paths() -> Vec<TaxonomyPath> {
    let lqm = TaxonomySchema::lqm();
    let mut paths = lqm.enumerate_leaves(Layer::Diagnostic);
    paths.extend(lqm.enumerate_leaves(Layer::Lightweight));
    paths.sort();
    paths.dedup();
    paths
}

pub fn span(id: &str, segment_id: &str, annotator: &str, start: usize, end: usize, path: TaxonomyPath, severity: Severity) -> ErrorSpan {
    ErrorSpan {
        span_id: id.to_string(),
        segment_id: segment_id.to_string(),
        annotator_id: annotator.to_string(),
        start,
        end,
        path,
        severity,
        note: None,
    }
}

fn random_span<R: Rng>(rng: &mut R, id: String, seg: &Segment, annotator: &str, paths: &[TaxonomyPath]) -> ErrorSpan {
    let n = seg.target_text.chars().count();
    let start = rng.random_range(0..n);
    let end = rng.random_range(start + 1..=n.min(start + 12));
    span(
        &id,
        &seg.segment_id,
        annotator,
        start,
        end,
        paths.choose(rng).unwrap().clone(),
        *SEVERITIES.choose(rng).unwrap(),
    )
}

/// A scored segment with its spans.
#[derive(Debug, Clone)]
pub struct ScoringCase {
    pub segment: Segment,
    pub spans: Vec<ErrorSpan>,
}

impl ScoringCase {
    pub fn severities(&self) -> Vec<Severity> {
        self.spans.iter().map(|s| s.severity).collect()
    }
}

/// Target of 1 to 60 words with 0 to 6 random spans.
pub fn scoring_case<R: Rng>(rng: &mut R, index: usize, paths: &[TaxonomyPath]) -> ScoringCase {
    let words = rng.random_range(1..=60);
    let segment = segment(
        &format!("seg-{index:04}"),
        Direction::new("EGY", "ENG"),
        ["m1", "m2", "m3"].choose(rng).unwrap(),
        sentence(rng, words),
    );
    let n_spans = rng.random_range(0..=6);
    let spans = (0..n_spans)
        .map(|k| random_span(rng, format!("{index}-{k}"), &segment, "ann", paths))
        .collect();
    ScoringCase { segment, spans }
}

/// Two annotators over the same segments.
#[derive(Debug, Clone)]
pub struct DoubleAnnotation {
    pub corpus: Corpus,
    pub a: AnnotationSet,
    pub b: AnnotationSet,
}

impl DoubleAnnotation {
    /// Spans grouped per covered segment, in segment-id order.
    pub fn per_segment(&self) -> Vec<(Vec<&ErrorSpan>, Vec<&ErrorSpan>)> {
        fn group(set: &AnnotationSet) -> BTreeMap<&str, Vec<&ErrorSpan>> {
            let mut m: BTreeMap<&str, Vec<&ErrorSpan>> = BTreeMap::new();
            for s in &set.spans {
                m.entry(s.segment_id.as_str()).or_default().push(s);
            }
            m
        }
        let (ga, gb) = (group(&self.a), group(&self.b));
        self.a
            .segments_covered
            .iter()
            .map(|id| {
                (
                    ga.get(id.as_str()).cloned().unwrap_or_default(),
                    gb.get(id.as_str()).cloned().unwrap_or_default(),
                )
            })
            .collect()
    }
}

fn covering(annotator: &str, corpus: &Corpus) -> AnnotationSet {
    let mut set = AnnotationSet::new(annotator, "LQM");
    set.segments_covered = corpus.segments().iter().map(|s| s.segment_id.clone()).collect();
    set
}

/// One to three short segments, each side 0 to 5 spans per segment. B reuses,
/// shifts or invents spans so exact, partial and missing matches all occur.
pub fn double_annotation<R: Rng>(rng: &mut R, paths: &[TaxonomyPath]) -> DoubleAnnotation {
    let n_segments = rng.random_range(1..=3);
    let segments: Vec<Segment> = (0..n_segments)
        .map(|i| {
            let words = rng.random_range(3..=8);
            segment(&format!("s{i}"), Direction::new("ENG", "EGY"), "m", sentence(rng, words))
        })
        .collect();
    let corpus = Corpus::new(segments).unwrap();
    let mut a = covering("A", &corpus);
    let mut b = covering("B", &corpus);
    for seg in corpus.segments() {
        let n = seg.target_text.chars().count();
        let na = rng.random_range(0..=5);
        let mine: Vec<ErrorSpan> = (0..na)
            .map(|k| random_span(rng, format!("a-{}-{k}", seg.segment_id), seg, "A", paths))
            .collect();
        let nb = rng.random_range(0..=5);
        for k in 0..nb {
            let id = format!("b-{}-{k}", seg.segment_id);
            let mut s = match (rng.random_range(0..3), mine.get(k)) {
                (0, Some(src)) => src.clone(),
                (1, Some(src)) => {
                    let mut s = src.clone();
                    let start = s.start.saturating_sub(rng.random_range(0..=2));
                    let end = (s.end + rng.random_range(0..=2)).min(n);
                    s.start = start;
                    s.end = end;
                    if rng.random_bool(0.5) {
                        s.severity = *SEVERITIES.choose(rng).unwrap();
                    }
                    s
                }
                _ => random_span(rng, id.clone(), seg, "B", paths),
            };
            s.span_id = id;
            s.annotator_id = "B".into();
            b.spans.push(s);
        }
        a.spans.extend(mine);
    }
    DoubleAnnotation { corpus, a, b }
}

/// Width of the private character region each perturbation span lives in.
const REGION: usize = 30;

/// Identical A/B annotations whose spans sit in disjoint regions, so every
/// span has exactly one overlap partner on the other side.
pub fn mirrored_annotation<R: Rng>(rng: &mut R, paths: &[TaxonomyPath]) -> DoubleAnnotation {
    let k = rng.random_range(1..=5);
    let target = "x".repeat(REGION * k);
    let seg = segment("p", Direction::new("EGY", "ENG"), "m", target);
    let corpus = Corpus::new(vec![seg]).unwrap();
    let mut a = covering("A", &corpus);
    let mut b = covering("B", &corpus);
    for r in 0..k {
        let start = REGION * r + rng.random_range(5..=10);
        let end = REGION * r + rng.random_range(15..=25);
        let path = paths.choose(rng).unwrap().clone();
        let sev = *SEVERITIES.choose(rng).unwrap();
        a.spans.push(span(&format!("a{r}"), "p", "A", start, end, path.clone(), sev));
        b.spans.push(span(&format!("b{r}"), "p", "B", start, end, path, sev));
    }
    DoubleAnnotation { corpus, a, b }
}

/// Move one boundary of one B span by 1 to 3 characters, staying inside its
/// region and keeping the span non-empty.
pub fn shift_boundary<R: Rng>(rng: &mut R, fixture: &DoubleAnnotation) -> DoubleAnnotation {
    let mut out = fixture.clone();
    let i = rng.random_range(0..out.b.spans.len());
    let s = &mut out.b.spans[i];
    let delta = rng.random_range(1..=3);
    match (rng.random_bool(0.5), rng.random_bool(0.5)) {
        (true, true) => s.start -= delta,
        (true, false) => s.start += delta,
        (false, true) => s.end -= delta,
        (false, false) => s.end += delta,
    }
    out
}

/// A hypothesis/reference pair over a small vocabulary so that higher-order
/// n-gram matches and repeated tokens are common.
pub fn bleu_pair<R: Rng>(rng: &mut R) -> (Vec<String>, Vec<String>) {
    const VOCAB: &[&str] = &["a", "b", "c", "d", "e", "f", "g", "h"];
    let draw = |rng: &mut R, n: usize| -> Vec<String> {
        (0..n).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect()
    };
    let hyp_len = rng.random_range(1..=12);
    let hyp = draw(rng, hyp_len);
    let reference = if rng.random_bool(0.5) {
        let mut r = hyp.clone();
        for _ in 0..rng.random_range(0..=3) {
            let pos = rng.random_range(0..=r.len());
            match rng.random_range(0..3) {
                0 if !r.is_empty() => {
                    r.remove(pos.min(r.len() - 1));
                }
                1 => r.insert(pos, VOCAB.choose(rng).unwrap().to_string()),
                _ if pos < r.len() => r[pos] = VOCAB.choose(rng).unwrap().to_string(),
                _ => {}
            }
        }
        if r.is_empty() {
            r.push("a".into());
        }
        r
    } else {
        let n = rng.random_range(1..=12);
        draw(rng, n)
    };
    (hyp, reference)
}

/// A synthetic released-data stand-in: segments over several directions and
/// models with references, annotated by two annotators who share a third of
/// the segments. Returned as (segments JSONL, annotations JSONL).
pub fn pipeline_files<R: Rng>(rng: &mut R, n_segments: usize) -> (String, String) {
    let directions = [
        Direction::new("EGY", "ENG"),
        Direction::new("ENG", "EGY"),
        Direction::new("MOR", "ENG"),
        Direction::new("ENG", "MOR"),
    ];
    let models = ["gpt-4o", "command-r+", "jais", "llama-3", "gemini", "nllb"];
    let paths = lqm_paths();
    let segments: Vec<Segment> = (0..n_segments)
        .map(|i| {
            let words = rng.random_range(3..=30);
            let mut s = segment(
                &format!("seg-{i:05}"),
                directions[i % directions.len()].clone(),
                models[(i / directions.len()) % models.len()],
                sentence(rng, words),
            );
            s.reference_text = Some(sentence(rng, words));
            s
        })
        .collect();
    let corpus = Corpus::new(segments).unwrap();
    let mut sets = vec![AnnotationSet::new("ann-a", "LQM"), AnnotationSet::new("ann-b", "LQM")];
    for (i, seg) in corpus.segments().iter().enumerate() {
        let who: &[usize] = match i % 3 {
            0 => &[0, 1],
            1 => &[0],
            _ => &[1],
        };
        for &w in who {
            let set = &mut sets[w];
            set.segments_covered.insert(seg.segment_id.clone());
            for k in 0..rng.random_range(0..=3) {
                let id = format!("{}-{}-{k}", set.annotator_id, seg.segment_id);
                let annotator = set.annotator_id.clone();
                set.spans.push(random_span(rng, id, seg, &annotator, &paths));
            }
        }
    }
    (
        lqm_core::corpus::write_segments(corpus.segments()),
        lqm_core::corpus::write_annotations(&sets),
    )
}
