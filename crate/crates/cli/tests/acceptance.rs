//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.
//!
//! Set `LQM_RELEASED_DATA` to a directory holding the released
//! `segments.jsonl` and `annotations.jsonl` to run the dataset reproduction
//! checks; without it that criterion reports what replaces it.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use lqm_core::analysis::{length_buckets, selected_spans, Bucket};
use lqm_core::bleu::{corpus_bleu_table, read_bleu_items, TokenizerSpec};
use lqm_core::corpus::read_annotations;
use lqm_core::scoring::{score_report, SpanSelection};
use lqm_core::{Corpus, Direction, Execution, ScoreOptions, TaxonomySchema, WeightScheme};
use lqm_testkit::checks::{self, Verdict};

const SEED: u64 = 20_240_601;

/// LQM group scores by direction, in the column order of `MODELS`.
const MODELS: [&str; 6] = ["fanar9b", "commanda", "commandr7b", "gemma27b", "gemini25flash", "gemini25pro"];
const GROUP_SCORES: [(&str, [f64; 6]); 12] = [
    ("ENG->EGY", [49.90, 71.14, 35.89, 54.44, 65.23, 72.31]),
    ("ENG->MAU", [45.26, 41.87, 37.40, 19.62, 38.28, 40.90]),
    ("ENG->MOR", [6.46, 38.60, 17.00, 19.29, 51.53, 68.60]),
    ("ENG->PAL", [38.96, 59.89, 43.29, 51.91, 66.56, 67.14]),
    ("ENG->UAE", [78.32, 72.89, 21.94, 63.39, 82.10, 83.07]),
    ("EGY->ENG", [53.57, 60.88, 45.56, 68.69, 74.45, 75.89]),
    ("JOR->ENG", [65.27, 73.26, 58.22, 69.76, 72.27, 66.19]),
    ("MAU->ENG", [40.76, 56.38, 43.90, 61.45, 59.26, 63.88]),
    ("MOR->ENG", [40.98, 64.45, 51.50, 62.34, 72.15, 70.32]),
    ("PAL->ENG", [64.78, 73.18, 62.62, 72.89, 73.42, 79.47]),
    ("UAE->ENG", [43.85, 66.61, 45.08, 54.06, 62.65, 67.09]),
    ("YEM->ENG", [61.28, 62.90, 58.07, 67.00, 70.76, 73.41]),
];

fn model_key(model_id: &str) -> String {
    model_id.chars().filter(char::is_ascii_alphanumeric).collect::<String>().to_lowercase()
}

fn expect(failures: &mut Vec<String>, what: &str, got: f64, want: f64, tol: f64) {
    if (got - want).abs() > tol || got.is_nan() {
        failures.push(format!("{what}: got {got}, expected {want} (tolerance {tol})"));
    }
}

fn released_data(dir: &Path) -> Verdict {
    let name = "dataset reproduction";
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).map_err(|e| format!("{f}: {e}"));
    let loaded = (|| -> Result<(Corpus, Vec<lqm_core::AnnotationSet>), String> {
        let corpus = Corpus::parse(&read("segments.jsonl")?).map_err(|e| format!("segments.jsonl: {e}"))?;
        let sets = read_annotations(&read("annotations.jsonl")?, &corpus, &TaxonomySchema::lqm())
            .map_err(|e| format!("annotations.jsonl: {e}"))?;
        Ok((corpus, sets))
    })();
    let (corpus, sets) = match loaded {
        Ok(v) => v,
        Err(e) => return Verdict::new(name, vec![format!("released data does not load: {e}")], String::new()),
    };
    let mut failures = Vec::new();
    let spans = selected_spans(&corpus, &sets, SpanSelection::Pooled);
    expect(&mut failures, "total spans", spans.len() as f64, 6113.0, 0.0);
    let erroneous: BTreeSet<&str> = spans.iter().map(|s| s.segment_id.as_str()).collect();
    expect(&mut failures, "distinct erroneous segments", erroneous.len() as f64, 3495.0, 0.0);
    let interference = spans.iter().filter(|s| s.path.subcategory.as_deref() == Some("standardization-interference")).count();
    expect(&mut failures, "standardization interference", interference as f64, 904.0, 0.0);

    let options = ScoreOptions::default();
    match score_report(&corpus, &sets, &WeightScheme::default(), &options) {
        Ok(report) => {
            let egy: Direction = "EGY->ENG".parse().unwrap();
            let best_micro = report
                .per_group
                .iter()
                .filter(|g| g.direction == egy)
                .map(|g| g.micro_score)
                .fold(f64::NAN, f64::max);
            expect(&mut failures, "EGY->ENG best micro score", best_micro, 77.5, 1.0);
            for (dir, row) in GROUP_SCORES {
                let direction: Direction = dir.parse().unwrap();
                for (model, want) in MODELS.iter().zip(row) {
                    let got = report
                        .per_group
                        .iter()
                        .find(|g| g.direction == direction && model_key(&g.model_id) == *model);
                    match got {
                        Some(g) => expect(&mut failures, &format!("{dir} {model}"), g.macro_mean, want, 1.0),
                        None => failures.push(format!("{dir} {model}: group missing")),
                    }
                }
            }
        }
        Err(e) => failures.push(format!("scoring: {e}")),
    }
    match length_buckets(&corpus, &sets, &WeightScheme::default(), &options) {
        Ok(b) => {
            expect(&mut failures, "short cutoff", b.cutoffs.0 as f64, 14.0, 0.0);
            expect(&mut failures, "medium cutoff", b.cutoffs.1 as f64, 22.0, 0.0);
            for (bucket, n) in [(Bucket::Short, 1165.0), (Bucket::Medium, 1233.0), (Bucket::Long, 1080.0)] {
                expect(&mut failures, &format!("{bucket:?} size"), b.bucket(bucket).n as f64, n, 0.0);
            }
            let m = &b.rank_stability.means;
            for (what, got, want) in [
                ("mean rho short-medium", &m.short_medium, 0.71),
                ("mean rho medium-long", &m.medium_long, 0.71),
                ("mean rho short-long", &m.short_long, 0.62),
            ] {
                match got.value() {
                    Some(v) => expect(&mut failures, what, v, want, 0.02),
                    None => failures.push(format!("{what}: undefined")),
                }
            }
        }
        Err(e) => failures.push(format!("buckets: {e}")),
    }
    match read("segments.jsonl").and_then(|s| {
        read_bleu_items(&s, "target_text", &TokenizerSpec::whitespace()).map_err(|e| format!("bleu: {e}"))
    }) {
        Ok(items) => {
            let bleu = corpus_bleu_table(&items, "whitespace", Execution::default()).unwrap();
            let lqm = score_report(&corpus, &sets, &WeightScheme::default(), &options).unwrap();
            let y: BTreeMap<String, f64> = lqm.per_segment.iter().map(|(k, v)| (k.clone(), v.score)).collect();
            match lqm_core::analysis::correlate(&bleu.segment_scores(), &y, Default::default()) {
                Ok(c) => {
                    expect(&mut failures, "pearson r", c.pearson_r.value().unwrap_or(f64::NAN), 0.289, 0.02);
                    expect(&mut failures, "spearman rho", c.spearman_rho.value().unwrap_or(f64::NAN), 0.322, 0.02);
                }
                Err(e) => failures.push(format!("correlation: {e}")),
            }
        }
        Err(e) => failures.push(format!("correlation needs references: {e}")),
    }
    Verdict::new(name, failures, "released data reproduces counts, scores, buckets and correlation".into())
}

fn determinism_and_durability() -> Verdict {
    let name = "determinism & durability";
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let p = support::Pipeline::write(dir.path(), SEED, 600);
    let runs = match support::check_determinism(dir.path(), &p, 3) {
        Ok(n) => n,
        Err(e) => {
            failures.push(format!("determinism: {e}"));
            0
        }
    };
    let start = Instant::now();
    let data = dir.path().join("server-data");
    let kill = match support::kill_restart_cycles(&data, 1000, SEED) {
        Ok(s) => s,
        Err(e) => {
            failures.push(format!("durability: {e}"));
            Default::default()
        }
    };
    Verdict::new(
        name,
        failures,
        format!(
            "{runs} command lines byte-identical over 3 runs (parallel and sequential); {} kill -9/restart cycles of `lqm serve`, {} acknowledged writes all recovered, {} unanswered writes at kill accepted either way ({:.1}s)",
            kill.cycles,
            kill.acknowledged,
            kill.lost_replies,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    // Respect `cargo test -- --list` and name filters from the libtest CLI.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    if let Some(filter) = args.iter().find(|a| !a.starts_with('-')) {
        if !"acceptance".contains(filter.as_str()) {
            return ExitCode::SUCCESS;
        }
    }

    let mut verdicts = vec![checks::formula_oracle(SEED), checks::micro_vs_macro()];
    verdicts.push(match std::env::var_os("LQM_RELEASED_DATA") {
        Some(dir) => released_data(Path::new(&dir)),
        None => {
            let v = Verdict::new(
                "dataset reproduction",
                Vec::new(),
                "released annotation data not available (LQM_RELEASED_DATA unset); replaced by the property suites (formula, micro/macro, IAA, BLEU, statistics oracles and the proptest suite in lqm-core)".into(),
            );
            Verdict {
                detail: format!("REPLACED: {}", v.detail),
                ..v
            }
        }
    });
    verdicts.push(checks::iaa_oracle(SEED, 2_000, 1_000));
    verdicts.push(checks::bleu_oracle(SEED));
    verdicts.push(checks::statistics(SEED));
    verdicts.push(determinism_and_durability());

    println!("\nacceptance criteria");
    for v in &verdicts {
        println!("{v}");
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("{} of {} criteria passed\n", verdicts.len() - failed, verdicts.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
