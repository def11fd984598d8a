//! Library-level acceptance checks. Each returns a [`Verdict`] rather than
//! panicking so a runner can report every check, including failing ones.

use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::Rng;

use lqm_core::agreement::{agreement_report, cohen_kappa, AgreementOptions, Criterion};
use lqm_core::analysis::stats::{correlate_pairs, pearson, spearman, PValueMethod};
use lqm_core::bleu::bleu_from_tokens;
use lqm_core::scoring::{micro_score, score_report, segment_score, Scope, ScoreOptions, SpanSelection};
use lqm_core::{AnnotationSet, Corpus, Direction, Execution, Measure, Severity, WeightScheme};

use crate::fixtures::{self, ScoringCase};
use crate::oracle::{self, Weights};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, failures: Vec<String>, summary: String) -> Verdict {
        let passed = failures.is_empty();
        let detail = if passed {
            summary
        } else {
            let shown: Vec<&str> = failures.iter().take(3).map(String::as_str).collect();
            format!("{} failure(s); first: {}", failures.len(), shown.join(" | "))
        };
        Verdict {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

const EXECUTIONS: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

/// 500 random segments; the library score must equal the reference bit for
/// bit, and scoring all of them must take under a second.
pub fn formula_oracle(seed: u64) -> Verdict {
    let paths = fixtures::lqm_paths();
    let mut r = rng(seed);
    let cases: Vec<ScoringCase> = (0..500).map(|i| fixtures::scoring_case(&mut r, i, &paths)).collect();
    let scheme = WeightScheme::default();
    let mut failures = Vec::new();

    let started = Instant::now();
    let scores: Vec<f64> = cases
        .iter()
        .map(|c| segment_score(&c.segment, &c.spans, &scheme).expect("non-empty target"))
        .collect();
    let elapsed = started.elapsed();

    let mut clamped = 0;
    for (c, &got) in cases.iter().zip(&scores) {
        let want = oracle::segment_score(&c.severities(), &c.segment.target_text, Weights::default());
        if want == 0.0 {
            clamped += 1;
        }
        if got.to_bits() != want.to_bits() {
            failures.push(format!("{}: {got} != {want}", c.segment.segment_id));
        }
        if !(0.0..=100.0).contains(&got) {
            failures.push(format!("{}: {got} outside [0, 100]", c.segment.segment_id));
        }
    }

    let corpus = Corpus::new(cases.iter().map(|c| c.segment.clone()).collect()).unwrap();
    let mut set = AnnotationSet::new("ann", "LQM");
    set.segments_covered = cases.iter().map(|c| c.segment.segment_id.clone()).collect();
    set.spans = cases.iter().flat_map(|c| c.spans.clone()).collect();
    let sets = [set];
    for execution in EXECUTIONS {
        let options = ScoreOptions {
            selection: SpanSelection::PrimaryAnnotator,
            scope: Scope::All,
            execution,
        };
        let report = score_report(&corpus, &sets, &scheme, &options).unwrap();
        for (c, &want) in cases.iter().zip(&scores) {
            let got = report.per_segment[&c.segment.segment_id].score;
            if got.to_bits() != want.to_bits() {
                failures.push(format!("{:?} report {}: {got} != {want}", execution, c.segment.segment_id));
            }
        }
    }

    if elapsed >= Duration::from_secs(1) {
        failures.push(format!("took {elapsed:?}"));
    }
    Verdict::new(
        "formula oracle",
        failures,
        format!("500/500 bit-identical ({clamped} clamped), {elapsed:?}"),
    )
}

fn group(targets: &[&str], severities: &[Vec<Severity>]) -> (Vec<(Vec<Severity>, String)>, Vec<(f64, usize)>) {
    let scheme = WeightScheme::default();
    let items: Vec<(Vec<Severity>, String)> = targets
        .iter()
        .zip(severities)
        .map(|(t, s)| (s.clone(), t.to_string()))
        .collect();
    let pairs = items
        .iter()
        .map(|(sev, t)| {
            let mass: f64 = sev.iter().map(|&s| scheme.span_weight(s)).sum();
            (mass, lqm_core::scoring::token_length(t))
        })
        .collect();
    (items, pairs)
}

/// Hand-built groups: clamping separates micro from macro; equal lengths
/// without clamping make them coincide.
pub fn micro_vs_macro() -> Verdict {
    use Severity::*;
    let w = Weights::default();
    let mut failures = Vec::new();
    let mean = |xs: &[(Vec<Severity>, String)]| -> f64 {
        let scheme = WeightScheme::default();
        let total: f64 = xs
            .iter()
            .map(|(sev, t)| {
                let seg = fixtures::segment("s", Direction::new("EGY", "ENG"), "m", t.clone());
                let spans: Vec<_> = sev
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| fixtures::span(&k.to_string(), "s", "a", 0, 1, fixtures::lqm_paths()[0].clone(), s))
                    .collect();
                segment_score(&seg, &spans, &scheme).unwrap()
            })
            .sum();
        total / xs.len() as f64
    };

    // 2 words with a critical error clamps to 0; the 8-word clean segment
    // scores 100. Macro 50, micro max(0, 100 - 100·25/10) = 0.
    let (items, pairs) = group(&["a b", "a b c d e f g h"], &[vec![Critical], vec![]]);
    let micro = micro_score(pairs).unwrap();
    let macro_ = mean(&items);
    if macro_ != 50.0 || micro != 0.0 {
        failures.push(format!("clamped fixture: macro {macro_}, micro {micro}"));
    }
    if micro != oracle::micro(&items, w) || macro_ != oracle::macro_mean(&items, w) {
        failures.push("clamped fixture disagrees with reference".into());
    }

    // Clamp on one segment, different lengths: micro pools mass before the
    // clamp. 4 words + critical → 0; 20 words + minor → 95. Macro 47.5,
    // micro 100 - 100·26/24 < 0 → 0.
    let (items, pairs) = group(
        &["w w w w", "w w w w w w w w w w w w w w w w w w w w"],
        &[vec![Critical], vec![Minor]],
    );
    let micro = micro_score(pairs).unwrap();
    let macro_ = mean(&items);
    if macro_ != 47.5 || micro != 0.0 {
        failures.push(format!("mixed fixture: macro {macro_}, micro {micro}"));
    }

    // Equal lengths of 10 words, no clamp: both are 100 - 10·(1+5+0)/3 = 80.
    let ten = "a b c d e f g h i j";
    let (items, pairs) = group(&[ten, ten, ten], &[vec![Minor], vec![Major], vec![]]);
    let micro = micro_score(pairs).unwrap();
    let macro_ = mean(&items);
    if micro != macro_ || micro != 80.0 {
        failures.push(format!("equal-length fixture: macro {macro_}, micro {micro}"));
    }

    // Equal lengths, masses that do not divide evenly: still exact.
    let seven = "a b c d e f g";
    let (items, pairs) = group(&[seven; 4], &[vec![Minor], vec![Minor, Minor], vec![Major], vec![]]);
    let micro = micro_score(pairs).unwrap();
    let macro_ = mean(&items);
    if micro != macro_ {
        failures.push(format!("sevenths fixture: macro {macro_:e} != micro {micro:e}"));
    }

    Verdict::new(
        "micro vs macro",
        failures,
        "clamped: macro 50 / micro 0; equal-length unclamped: micro == macro exactly".into(),
    )
}

fn measure_eq(got: &Measure, want: Option<f64>) -> bool {
    match (got.value(), want) {
        (Some(g), Some(w)) => g == w,
        (None, None) => true,
        _ => false,
    }
}

/// Hand-built contingency tables with their closed-form κ.
pub fn kappa_tables() -> Vec<Vec<Vec<usize>>> {
    vec![
        vec![vec![40, 10], vec![10, 40]],
        vec![vec![20, 5], vec![10, 15]],
        vec![vec![45, 15], vec![25, 15]],
        vec![vec![25, 35], vec![5, 35]],
        vec![vec![0, 7], vec![9, 0]],
        vec![vec![10, 2, 3], vec![1, 12, 4], vec![0, 5, 8]],
        vec![vec![5, 0, 0, 1], vec![0, 6, 2, 0], vec![1, 0, 7, 0], vec![0, 2, 0, 9]],
    ]
}

/// Random double annotations against the exhaustive matcher, κ against
/// closed forms, and boundary perturbations.
pub fn iaa_oracle(seed: u64, fixtures_n: usize, perturbations: usize) -> Verdict {
    let paths = fixtures::lqm_paths();
    let mut r = rng(seed);
    let mut failures = Vec::new();

    for k in 0..fixtures_n {
        let fx = fixtures::double_annotation(&mut r, &paths);
        let per_segment = fx.per_segment();
        let all_a: Vec<_> = fx.a.spans.iter().collect();
        let all_b: Vec<_> = fx.b.spans.iter().collect();
        let (ctp, cfp, cfn) = oracle::char_counts(&all_a, &all_b);
        let [(otp, ofp, ofn), (etp, efp, efn)] = oracle::span_counts(&per_segment, 1);
        let execution = EXECUTIONS[k % 2];
        let options = AgreementOptions { min_overlap: 1, execution };
        let rep = agreement_report(&fx.a, &fx.b, &options).unwrap();
        let checks = [
            ("char", &rep.char_f1, oracle::f1(ctp, cfp, cfn)),
            ("overlap", &rep.overlap_span_f1, oracle::f1(otp, ofp, ofn)),
            ("exact", &rep.exact_span_f1, oracle::f1(etp, efp, efn)),
        ];
        for (name, got, want) in checks {
            if !measure_eq(got, want) {
                failures.push(format!("fixture {k} {name}: {got} vs {want:?}"));
            }
        }
        if rep.n_matched != otp {
            failures.push(format!("fixture {k}: {} matched vs {otp}", rep.n_matched));
        }
    }

    for t in kappa_tables() {
        let got = cohen_kappa(&oracle::table_pairs(&t)).value();
        let want = oracle::kappa_table(&t);
        let closed = (t.len() == 2).then(|| {
            oracle::kappa_2x2(t[0][0] as f64, t[0][1] as f64, t[1][0] as f64, t[1][1] as f64)
        });
        let ok = got.is_some_and(|g| (g - want).abs() <= 1e-12 && closed.is_none_or(|c| (g - c).abs() <= 1e-12));
        if !ok {
            failures.push(format!("kappa {t:?}: {got:?} vs {want}"));
        }
    }
    if cohen_kappa(&oracle::table_pairs(&[vec![40, 10], vec![10, 40]])).value().map(|k| (k - 0.6).abs() <= 1e-12) != Some(true) {
        failures.push("a=40,b=10,c=10,d=40 is not 0.6".into());
    }

    let options = AgreementOptions::default();
    let mut exact_drops = 0;
    for k in 0..perturbations {
        let base = fixtures::mirrored_annotation(&mut r, &paths);
        let moved = fixtures::shift_boundary(&mut r, &base);
        let before = agreement_report(&base.a, &base.b, &options).unwrap();
        let after = agreement_report(&moved.a, &moved.b, &options).unwrap();
        let v = |m: &Measure| m.value().unwrap_or(f64::NAN);
        if v(&after.exact_span_f1) < v(&before.exact_span_f1) {
            exact_drops += 1;
        } else {
            failures.push(format!("perturbation {k}: exact F1 did not drop"));
        }
        if after.overlap_span_f1 != before.overlap_span_f1 {
            failures.push(format!("perturbation {k}: overlap F1 changed"));
        }
        for c in Criterion::ALL {
            if c == Criterion::SpanTypeSeverity {
                continue;
            }
            if after.labels[&c].matched_only != before.labels[&c].matched_only {
                failures.push(format!("perturbation {k}: {c} agreement changed"));
            }
        }
    }

    Verdict::new(
        "IAA oracle",
        failures,
        format!(
            "{fixtures_n} fixtures match exhaustive matcher; {} kappa tables within 1e-12 (40/10/10/40 = 0.6); \
             {exact_drops}/{perturbations} boundary shifts lower exact F1 only",
            kappa_tables().len()
        ),
    )
}

/// 200 random token pairs against the brute-force counter, plus identity
/// and disjoint pairs.
pub fn bleu_oracle(seed: u64) -> Verdict {
    let mut r = rng(seed);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let (h, rf) = fixtures::bleu_pair(&mut r);
        let got = bleu_from_tokens(&h, &rf).unwrap().score;
        let hs: Vec<&str> = h.iter().map(String::as_str).collect();
        let rs: Vec<&str> = rf.iter().map(String::as_str).collect();
        let want = oracle::bleu(&hs, &rs);
        worst = worst.max((got - want).abs());
        if (got - want).abs() > 1e-9 {
            failures.push(format!("pair {k} {h:?} / {rf:?}: {got} vs {want}"));
        }
    }
    for n in 1..=10 {
        let s: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let got = bleu_from_tokens(&s, &s).unwrap().score;
        if got != 100.0 {
            failures.push(format!("identity of length {n}: {got}"));
        }
        let other: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
        let got = bleu_from_tokens(&s, &other).unwrap().score;
        if got != 0.0 {
            failures.push(format!("disjoint of length {n}: {got}"));
        }
    }
    Verdict::new(
        "BLEU oracle",
        failures,
        format!("200 pairs, max |diff| {worst:.1e}; identity = 100, disjoint = 0"),
    )
}

/// The fixed 10-point fixture. Reference values computed with
/// scipy.stats.pearsonr / spearmanr; ρ also follows by hand from Σd² = 18.
pub const FIXTURE_X: [f64; 10] = [62.5, 71.0, 55.25, 80.0, 90.5, 48.0, 66.0, 73.5, 59.0, 85.0];
pub const FIXTURE_Y: [f64; 10] = [20.1, 31.4, 18.9, 35.2, 41.0, 22.5, 25.3, 30.0, 21.7, 33.8];
pub const FIXTURE_PEARSON: f64 = 0.922_633_348_195_527_4;
pub const FIXTURE_SPEARMAN: f64 = 0.890_909_090_909_090_9;
pub const FIXTURE_PEARSON_P: f64 = 0.000_142_656_577_483_331_1;
pub const FIXTURE_SPEARMAN_P: f64 = 0.000_542_144_224_833_866_5;

fn monotone<R: Rng>(r: &mut R) -> (String, Box<dyn Fn(f64) -> f64>) {
    let a = r.random_range(0.1..10.0);
    let b = r.random_range(-50.0..50.0);
    let choices: [(&str, Box<dyn Fn(f64) -> f64>); 6] = [
        ("affine", Box::new(move |x| a * x + b)),
        ("cube", Box::new(|x: f64| x.powi(3))),
        ("exp", Box::new(|x: f64| (x / 40.0).exp())),
        ("log", Box::new(|x: f64| (x + 1.0).ln())),
        ("sqrt", Box::new(|x: f64| x.sqrt())),
        ("x+sin/2", Box::new(|x: f64| x + x.sin() / 2.0)),
    ];
    let idx = r.random_range(0..choices.len());
    let (name, f) = choices.into_iter().nth(idx).unwrap();
    (name.to_string(), f)
}

/// Spearman invariance under monotone transforms and the fixed fixture.
pub fn statistics(seed: u64) -> Verdict {
    let mut r = rng(seed);
    let mut failures = Vec::new();
    for k in 0..100 {
        let n = r.random_range(5..40);
        // Scores in [0, 100] with deliberate ties, like clamped segment scores.
        let x: Vec<f64> = (0..n)
            .map(|_| *[0.0, 100.0, r.random_range(0.0..100.0)].choose(&mut r).unwrap())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
        let (name, f) = monotone(&mut r);
        let fx: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        match (spearman(&x, &y), spearman(&fx, &y)) {
            (Some(a), Some(b)) if (a - b).abs() <= 1e-12 => {}
            (None, None) => {}
            (a, b) => failures.push(format!("transform {k} ({name}): {a:?} vs {b:?}")),
        }
    }

    let close = |got: Option<f64>, want: f64, tol: f64| got.is_some_and(|g| (g - want).abs() <= tol);
    if !close(pearson(&FIXTURE_X, &FIXTURE_Y), FIXTURE_PEARSON, 1e-9) {
        failures.push(format!("pearson {:?}", pearson(&FIXTURE_X, &FIXTURE_Y)));
    }
    if !close(spearman(&FIXTURE_X, &FIXTURE_Y), FIXTURE_SPEARMAN, 1e-9) {
        failures.push(format!("spearman {:?}", spearman(&FIXTURE_X, &FIXTURE_Y)));
    }
    let rep = correlate_pairs(&FIXTURE_X, &FIXTURE_Y, PValueMethod::TApproximation).unwrap();
    if !close(rep.pearson_p.value(), FIXTURE_PEARSON_P, 1e-9) || !close(rep.spearman_p.value(), FIXTURE_SPEARMAN_P, 1e-9) {
        failures.push(format!("p-values {} / {}", rep.pearson_p, rep.spearman_p));
    }
    Verdict::new(
        "statistics",
        failures,
        "100 monotone transforms leave rho unchanged (1e-12); 10-point fixture r, rho, p within 1e-9".into(),
    )
}

/// Every library-level check with the default sizes.
pub fn all(seed: u64) -> Vec<Verdict> {
    vec![
        formula_oracle(seed),
        micro_vs_macro(),
        iaa_oracle(seed, 2_000, 1_000),
        bleu_oracle(seed),
        statistics(seed),
    ]
}
