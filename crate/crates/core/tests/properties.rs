use proptest::prelude::*;
use rand::Rng;

use lqm_core::agreement::{agreement_report, AgreementOptions};
use lqm_core::analysis::buckets::{assign_bucket, length_buckets, Bucket};
use lqm_core::analysis::distribution::{error_distribution, model_attribution, Level, ScopeFilter};
use lqm_core::analysis::stats::spearman;
use lqm_core::analysis::selected_spans;
use lqm_core::bleu::{corpus_bleu_table, BleuItem};
use lqm_core::corpus::{read_annotations, read_segments, write_annotations, write_segments};
use lqm_core::scoring::{micro_score, score_report, segment_score, token_length, Scope, ScoreOptions, SpanSelection};
use lqm_core::taxonomy::load_taxonomy;
use lqm_core::{AnnotationSet, Corpus, Direction, Execution, Layer, Severity, TaxonomyPath, TaxonomySchema, WeightScheme};
use lqm_testkit::{fixtures, rng};

fn severity() -> impl Strategy<Value = Severity> {
    prop_oneof![Just(Severity::Minor), Just(Severity::Major), Just(Severity::Critical)]
}

fn case_from_seed(seed: u64) -> fixtures::ScoringCase {
    fixtures::scoring_case(&mut rng(seed), 0, &fixtures::lqm_paths())
}

/// A small multi-model corpus with one annotator covering every segment.
fn scored_corpus(seed: u64, n: usize) -> (Corpus, Vec<AnnotationSet>) {
    let paths = fixtures::lqm_paths();
    let mut r = rng(seed);
    let mut segments = Vec::new();
    let mut set = AnnotationSet::new("ann", "LQM");
    for i in 0..n {
        let mut c = fixtures::scoring_case(&mut r, i, &paths);
        if r.random_bool(0.5) {
            c.segment.direction = Direction::new("ENG", "SAU");
        }
        set.segments_covered.insert(c.segment.segment_id.clone());
        set.spans.extend(c.spans);
        segments.push(c.segment);
    }
    (Corpus::new(segments).unwrap(), vec![set])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn adding_a_span_never_raises_the_score(seed in any::<u64>(), extra in severity()) {
        let c = case_from_seed(seed);
        let scheme = WeightScheme::default();
        let before = segment_score(&c.segment, &c.spans, &scheme).unwrap();
        let mut more = c.spans.clone();
        let mut s = fixtures::span("extra", &c.segment.segment_id, "ann", 0, 1, fixtures::lqm_paths()[0].clone(), extra);
        s.severity = extra;
        more.push(s);
        let after = segment_score(&c.segment, &more, &scheme).unwrap();
        prop_assert!(after <= before);
    }

    #[test]
    fn raising_a_severity_never_raises_the_score(seed in any::<u64>()) {
        let c = case_from_seed(seed);
        prop_assume!(!c.spans.is_empty());
        let scheme = WeightScheme::default();
        let before = segment_score(&c.segment, &c.spans, &scheme).unwrap();
        let mut worse = c.spans.clone();
        for s in &mut worse {
            s.severity = Severity::Critical;
        }
        prop_assert!(segment_score(&c.segment, &worse, &scheme).unwrap() <= before);
    }

    #[test]
    fn scores_are_clamped_to_range(seed in any::<u64>(), minor in 0.0f64..50.0, major in 0.0f64..50.0, critical in 0.0f64..500.0) {
        let c = case_from_seed(seed);
        let scheme = WeightScheme { minor, major, critical, type_weight: 1.0 };
        let s = segment_score(&c.segment, &c.spans, &scheme).unwrap();
        prop_assert!((0.0..=100.0).contains(&s));
        let mass = scheme.error_mass(&c.spans);
        let len = token_length(&c.segment.target_text) as f64;
        prop_assert_eq!(s == 0.0, mass >= len);
    }

    #[test]
    fn micro_equals_macro_for_equal_unclamped_lengths(
        length in 30usize..80,
        masses in prop::collection::vec(0u32..6, 1..20),
    ) {
        let items: Vec<(f64, usize)> = masses.iter().map(|&m| (m as f64, length)).collect();
        let macro_mean = items.iter().map(|&(m, l)| 100.0 * (1.0 - m / l as f64)).sum::<f64>() / items.len() as f64;
        let micro = micro_score(items).unwrap();
        prop_assert!((micro - macro_mean).abs() < 1e-9, "{} vs {}", micro, macro_mean);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        xs in prop::collection::vec(-100.0f64..100.0, 3..30),
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let ys: Vec<f64> = xs.iter().map(|_| r.random_range(-1.0..1.0)).collect();
        let shift = xs.iter().cloned().fold(f64::INFINITY, f64::min).abs() + 1.0;
        let fx: Vec<f64> = xs.iter().map(|x| (x + shift).ln() * 3.0 - 7.0).collect();
        match (spearman(&xs, &ys), spearman(&fx, &ys)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn offsets_survive_a_write_read_round_trip(seed in any::<u64>()) {
        let c = case_from_seed(seed);
        let corpus = Corpus::new(vec![c.segment.clone()]).unwrap();
        let mut set = AnnotationSet::new("ann", "LQM");
        set.segments_covered.insert(c.segment.segment_id.clone());
        set.spans = c.spans.clone();
        let sets = vec![set];

        let reread_segments = read_segments(&write_segments(corpus.segments())).unwrap();
        prop_assert_eq!(reread_segments.as_slice(), corpus.segments());
        let corpus2 = Corpus::new(reread_segments).unwrap();
        let lqm = TaxonomySchema::lqm();
        let reread = read_annotations(&write_annotations(&sets), &corpus2, &lqm).unwrap();
        prop_assert_eq!(&reread, &sets);
        for (before, after) in sets[0].spans.iter().zip(&reread[0].spans) {
            prop_assert_eq!(
                corpus.get(&before.segment_id).unwrap().target_slice(before.start, before.end),
                corpus2.get(&after.segment_id).unwrap().target_slice(after.start, after.end)
            );
        }
    }

    #[test]
    fn accepted_annotatable_paths_are_leaves(a in 0usize..200, b in 0usize..200, c in 0usize..200, shape in 0u8..3) {
        let lqm = TaxonomySchema::lqm();
        let ids: Vec<&str> = lqm.nodes().iter().map(|n| n.id.as_str()).collect();
        let pick = |i: usize| ids[i % ids.len()];
        let path = match shape {
            0 => TaxonomyPath::new(pick(a), None, None),
            1 => TaxonomyPath::new(pick(a), Some(pick(b)), None),
            _ => TaxonomyPath::new(pick(a), Some(pick(b)), Some(pick(c))),
        };
        if let Ok(check) = lqm.validate_path(&path) {
            if check.diagnostic_complete {
                prop_assert!(lqm.enumerate_leaves(Layer::Diagnostic).contains(&path));
            }
            if check.lightweight_complete {
                prop_assert!(lqm.enumerate_leaves(Layer::Lightweight).contains(&path));
            }
        }
    }

    #[test]
    fn agreement_is_symmetric_and_exact_bounded_by_overlap(seed in any::<u64>()) {
        let fx = fixtures::double_annotation(&mut rng(seed), &fixtures::lqm_paths());
        let opts = AgreementOptions::default();
        let ab = agreement_report(&fx.a, &fx.b, &opts).unwrap();
        let ba = agreement_report(&fx.b, &fx.a, &opts).unwrap();
        prop_assert_eq!(&ab.char_f1, &ba.char_f1);
        prop_assert_eq!(&ab.overlap_span_f1, &ba.overlap_span_f1);
        prop_assert_eq!(&ab.exact_span_f1, &ba.exact_span_f1);
        if let (Some(e), Some(o)) = (ab.exact_span_f1.value(), ab.overlap_span_f1.value()) {
            prop_assert!(e <= o);
        }
    }

    #[test]
    fn distribution_rates_sum_to_one_hundred(seed in any::<u64>(), level in 0u8..3) {
        let (corpus, sets) = scored_corpus(seed, 40);
        let spans = selected_spans(&corpus, &sets, SpanSelection::PrimaryAnnotator);
        prop_assume!(!spans.is_empty());
        let level = [Level::Category, Level::ErrorType, Level::Subcategory][level as usize];
        let w = WeightScheme::default();
        let t = error_distribution(&corpus, &spans, &TaxonomySchema::lqm(), level, &ScopeFilter::default(), &w);
        prop_assert_eq!(t.rows.iter().map(|r| r.count).sum::<usize>(), spans.len());
        prop_assert!((t.rows.iter().map(|r| r.rate).sum::<f64>() - 100.0).abs() <= 0.05);
        prop_assert!((t.rows.iter().map(|r| r.weighted_rate).sum::<f64>() - 100.0).abs() <= 0.05);
        for table in model_attribution(&corpus, &spans, &ScopeFilter::default(), &w).values() {
            prop_assert!((table.rows.iter().map(|r| r.rate).sum::<f64>() - 100.0).abs() <= 0.05);
        }
    }

    #[test]
    fn length_buckets_partition_the_corpus(seed in any::<u64>()) {
        let (corpus, sets) = scored_corpus(seed, 60);
        let report = length_buckets(&corpus, &sets, &WeightScheme::default(), &ScoreOptions::default()).unwrap();
        let total: usize = report.buckets.iter().map(|b| b.n).sum();
        prop_assert_eq!(total, corpus.len());
        for b in &report.buckets {
            prop_assert_eq!(b.groups.iter().map(|g| g.n_segments).sum::<usize>(), b.n);
        }
        for seg in corpus.segments() {
            let bucket = assign_bucket(token_length(&seg.target_text), report.cutoffs);
            prop_assert!(Bucket::ALL.contains(&bucket));
        }
        prop_assert!(report.cutoffs.0 <= report.cutoffs.1);
    }

    #[test]
    fn bleu_group_means_ignore_item_order(seed in any::<u64>()) {
        let mut r = rng(seed);
        let mut items: Vec<BleuItem> = (0..30)
            .map(|i| {
                let (h, rf) = fixtures::bleu_pair(&mut r);
                BleuItem {
                    segment_id: format!("s{i}"),
                    direction: Direction::new("EGY", "ENG"),
                    model_id: format!("m{}", i % 3),
                    hypothesis: h,
                    reference: rf,
                }
            })
            .collect();
        let before = corpus_bleu_table(&items, "whitespace", Execution::Sequential).unwrap();
        items.reverse();
        items.rotate_left(seed as usize % 30);
        let after = corpus_bleu_table(&items, "whitespace", Execution::Sequential).unwrap();
        prop_assert_eq!(&before.per_segment, &after.per_segment);
        for (x, y) in before.per_group.iter().zip(&after.per_group) {
            prop_assert_eq!(x.n_segments, y.n_segments);
            prop_assert!((x.mean_bleu - y.mean_bleu).abs() <= 1e-9);
        }
    }

    #[test]
    fn sequential_and_parallel_agree(seed in any::<u64>()) {
        let (corpus, sets) = scored_corpus(seed, 50);
        let w = WeightScheme::default();
        let run = |execution| {
            let opts = ScoreOptions { selection: SpanSelection::Pooled, scope: Scope::All, execution };
            score_report(&corpus, &sets, &w, &opts).unwrap()
        };
        prop_assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
        let fx = fixtures::double_annotation(&mut rng(seed), &fixtures::lqm_paths());
        let agree = |execution| agreement_report(&fx.a, &fx.b, &AgreementOptions { min_overlap: 1, execution }).unwrap();
        prop_assert_eq!(agree(Execution::Sequential), agree(Execution::Parallel));
    }
}

#[test]
fn builtin_taxonomies_round_trip() {
    for schema in [TaxonomySchema::lqm(), TaxonomySchema::mqm()] {
        let text = schema.to_taxonomy_string();
        let again = load_taxonomy(&text).unwrap();
        assert_eq!(again, schema);
        assert_eq!(again.to_taxonomy_string(), text);
    }
}

proptest! {
    #[test]
    fn generated_taxonomies_round_trip(shape in prop::collection::vec(prop::collection::vec(0usize..4, 0..4), 1..5)) {
        let mut doc = String::from("name = \"T\"\nversion = \"1\"\n");
        for (i, kids) in shape.iter().enumerate() {
            doc += &format!("\n[[node]]\nid = \"c{i}\"\nlabel = \"Category {i}\"\ndepth = 1\n");
            for (j, &grand) in kids.iter().enumerate() {
                doc += &format!("\n[[node]]\nid = \"c{i}t{j}\"\nlabel = \"type {j}\"\ndepth = 2\nparent = \"c{i}\"\n");
                for k in 0..grand {
                    doc += &format!(
                        "\n[[node]]\nid = \"c{i}t{j}s{k}\"\nlabel = \"sub {k}\"\ndepth = 3\nparent = \"c{i}t{j}\"\ndefinition = \"d\"\n"
                    );
                }
            }
        }
        let schema = load_taxonomy(&doc).unwrap();
        let again = load_taxonomy(&schema.to_taxonomy_string()).unwrap();
        prop_assert_eq!(&again, &schema);
        let expected: usize = shape.iter().map(|k| 1 + k.len() + k.iter().sum::<usize>()).sum();
        prop_assert_eq!(schema.nodes().len(), expected);
    }
}
