use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde_json::json;

use lqm_core::agreement::{agreement_report, AgreementOptions};
use lqm_core::analysis::{
    correlate, dashboard, error_distribution, length_buckets, model_attribution, selected_spans, PValueMethod,
    ScopeFilter,
};
use lqm_core::bleu::{corpus_bleu_table, read_bleu_items, BleuReport, SubwordVocab, TokenizerMode, TokenizerSpec};
use lqm_core::corpus::{read_annotations, read_segments};
use lqm_core::render;
use lqm_core::scoring::{score_report, Scope, SpanSelection};
use lqm_core::taxonomy::load_taxonomy;
use lqm_core::{AnnotationSet, Corpus, Execution, ScoreOptions, TaxonomySchema, WeightScheme};

use crate::output::{emit, read, write_atomic};
use crate::{
    AnalyzeArgs, BleuArgs, ExportArgs, Failure, IaaArgs, Inputs, Output, Report, ScopeArg, ScoreArgs, Scoring,
    SelectionArg, ServeArgs, ValidateArgs,
};

fn execution(output: &Output) -> Execution {
    if output.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn taxonomy(spec: &str) -> Result<TaxonomySchema, Failure> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(schema) = TaxonomySchema::builtin(spec) {
            return Ok(schema);
        }
    }
    load_taxonomy(&read(path)?).map_err(|e| Failure::invalid(format!("{spec}: {e}")))
}

fn corpus(path: &Path) -> Result<Corpus, Failure> {
    let fail = |e: &dyn std::fmt::Display| Failure::invalid(format!("{}: {e}", path.display()));
    let segments = read_segments(&read(path)?).map_err(|e| fail(&e))?;
    Corpus::new(segments).map_err(|e| fail(&e))
}

fn annotations(path: &Path, corpus: &Corpus, schema: &TaxonomySchema) -> Result<Vec<AnnotationSet>, Failure> {
    read_annotations(&read(path)?, corpus, schema).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Taxonomy, corpus and annotations, loaded and validated before any work.
fn load(inputs: &Inputs, annotations_path: &Path) -> Result<(TaxonomySchema, Corpus, Vec<AnnotationSet>), Failure> {
    let schema = taxonomy(&inputs.taxonomy)?;
    let corpus = corpus(&inputs.segments)?;
    let sets = annotations(annotations_path, &corpus, &schema)?;
    Ok((schema, corpus, sets))
}

fn weights(scoring: &Scoring) -> Result<WeightScheme, Failure> {
    match &scoring.weights {
        None => Ok(WeightScheme::default()),
        Some(path) => serde_json::from_str(&read(path)?)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display()))),
    }
}

fn score_options(scoring: &Scoring, output: &Output) -> ScoreOptions {
    ScoreOptions {
        selection: match scoring.selection {
            SelectionArg::Primary => SpanSelection::PrimaryAnnotator,
            SelectionArg::Pooled => SpanSelection::Pooled,
        },
        scope: match scoring.scope {
            ScopeArg::All => Scope::All,
            ScopeArg::Annotated => Scope::Annotated,
        },
        execution: execution(output),
    }
}

pub fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let schema = taxonomy(&args.inputs.taxonomy)?;
    let corpus = corpus(&args.inputs.segments)?;
    let sets = match &args.annotations {
        Some(path) => annotations(path, &corpus, &schema)?,
        None => Vec::new(),
    };
    if let (Some(layer), Some(path)) = (args.layer, &args.annotations) {
        for set in &sets {
            for span in &set.spans {
                let complete = schema.validate_path(&span.path).is_ok_and(|c| c.complete_for(layer));
                if !complete {
                    return Err(Failure::invalid(format!(
                        "{}: span `{}` path `{}` is not complete for the {} layer",
                        path.display(),
                        span.span_id,
                        span.path,
                        serde_json::to_value(layer).expect("layer serializes").as_str().unwrap_or_default(),
                    )));
                }
            }
        }
    }
    let summary = json!({
        "taxonomy": schema.name,
        "segments": corpus.len(),
        "annotators": sets.iter().map(|s| json!({
            "annotator_id": s.annotator_id,
            "segments_covered": s.segments_covered.len(),
            "spans": s.spans.len(),
        })).collect::<Vec<_>>(),
    });
    emit(&args.output, &summary, |v| {
        let mut out = format!("ok: {} segments, taxonomy {}\n", v["segments"], schema.name);
        for s in &sets {
            out.push_str(&format!(
                "  {}: {} spans over {} segments\n",
                s.annotator_id,
                s.spans.len(),
                s.segments_covered.len()
            ));
        }
        out
    })
}

pub fn score(args: ScoreArgs) -> Result<(), Failure> {
    let (_, corpus, sets) = load(&args.inputs, &args.annotations)?;
    let scheme = weights(&args.scoring)?;
    let report = score_report(&corpus, &sets, &scheme, &score_options(&args.scoring, &args.output))
        .map_err(|e| Failure::invalid(format!("{}: {e}", args.inputs.segments.display())))?;
    emit(&args.output, &report, render::score_table)
}

pub fn iaa(args: IaaArgs) -> Result<(), Failure> {
    let [a, b] = args.annotators.as_slice() else {
        return Err(Failure::usage("--annotators takes exactly two ids, as A,B"));
    };
    if a == b {
        return Err(Failure::usage("--annotators must name two different annotators"));
    }
    if args.min_overlap == 0 {
        return Err(Failure::usage("--min-overlap must be at least 1"));
    }
    let (_, _, sets) = load(&args.inputs, &args.annotations)?;
    let find = |id: &str| {
        sets.iter().find(|s| s.annotator_id == id).ok_or_else(|| {
            Failure::invalid(format!("{}: no annotations by `{id}`", args.annotations.display()))
        })
    };
    let options = AgreementOptions {
        min_overlap: args.min_overlap,
        execution: execution(&args.output),
    };
    let report = agreement_report(find(a)?, find(b)?, &options)
        .map_err(|e| Failure::invalid(format!("{}: {e}", args.annotations.display())))?;
    emit(&args.output, &report, render::agreement_table)
}

fn tokenizer(spec: &str, lowercase: bool) -> Result<TokenizerSpec, Failure> {
    let mode = match spec {
        "whitespace" => TokenizerMode::Whitespace,
        "pretok" => TokenizerMode::Pretokenized,
        other => match other.strip_prefix("subword:") {
            Some(path) if !path.is_empty() => {
                let vocab = SubwordVocab::parse(&read(Path::new(path))?);
                if vocab.is_empty() {
                    return Err(Failure::invalid(format!("{path}: subword vocabulary is empty")));
                }
                TokenizerMode::Subword(vocab)
            }
            _ => {
                return Err(Failure::usage(format!(
                    "unknown tokenizer `{other}`; expected whitespace, pretok or subword:<vocab>"
                )))
            }
        },
    };
    Ok(TokenizerSpec { mode, lowercase })
}

pub fn bleu(args: BleuArgs) -> Result<(), Failure> {
    let tok = tokenizer(&args.tok, args.lowercase)?;
    let fail = |e: &dyn std::fmt::Display| Failure::invalid(format!("{}: {e}", args.segments.display()));
    let items = read_bleu_items(&read(&args.segments)?, &args.hyp_field, &tok).map_err(|e| fail(&e))?;
    if items.is_empty() {
        return Err(fail(&"no segments"));
    }
    let report = corpus_bleu_table(&items, &tok.name(), execution(&args.output)).map_err(|e| fail(&e))?;
    emit(&args.output, &report, render::bleu_table)
}

fn filtered(corpus: &Corpus, args: &AnalyzeArgs) -> Result<Corpus, Failure> {
    let filter = ScopeFilter {
        direction: args.direction.clone(),
        model_id: args.model.clone(),
        dialect: args
            .dialect
            .as_deref()
            .map(|d| d.parse().map_err(|v| Failure::usage(format!("unknown dialect `{v}`"))))
            .transpose()?,
        into_english: match (args.into_english, args.from_english) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        },
    };
    let kept = corpus.segments().iter().filter(|s| filter.accepts(s)).cloned().collect();
    Ok(Corpus::new(kept).expect("subset of a valid corpus"))
}

pub fn analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    if args.report == Report::Corr && args.bleu.is_none() {
        return Err(Failure::usage("--report corr needs --bleu <bleu.json>"));
    }
    let (schema, corpus, sets) = load(&args.inputs, &args.annotations)?;
    let scheme = weights(&args.scoring)?;
    let bleu: Option<BleuReport> = match &args.bleu {
        Some(path) => Some(
            serde_json::from_str(&read(path)?)
                .map_err(|e| Failure::invalid(format!("{}: not a BLEU report: {e}", path.display())))?,
        ),
        None => None,
    };
    let corpus = filtered(&corpus, &args)?;
    let options = score_options(&args.scoring, &args.output);
    let segments = args.inputs.segments.display().to_string();
    let fail = |e: &dyn std::fmt::Display| Failure::invalid(format!("{segments}: {e}"));
    let spans = selected_spans(&corpus, &sets, options.selection);
    let all = ScopeFilter::default();

    match args.report {
        Report::Dist => {
            let table = error_distribution(&corpus, &spans, &schema, args.level, &all, &scheme);
            emit(&args.output, &table, render::distribution_table)
        }
        Report::Attrib => {
            let tables = model_attribution(&corpus, &spans, &all, &scheme);
            emit(&args.output, &tables, |t| {
                t.iter()
                    .map(|(dir, table)| format!("{dir}\n{}", render::distribution_table(table)))
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Report::Dashboard => {
            let rows = dashboard(&corpus, &spans, &schema, &scheme);
            emit(&args.output, &rows, |r| render::dashboard_table(r))
        }
        Report::Buckets => {
            let report = length_buckets(&corpus, &sets, &scheme, &options).map_err(|e| fail(&e))?;
            emit(&args.output, &report, render::bucket_table)
        }
        Report::Corr => {
            let bleu = bleu.expect("checked above");
            let scores = score_report(&corpus, &sets, &scheme, &options).map_err(|e| fail(&e))?;
            let lqm: BTreeMap<String, f64> = scores.per_segment.iter().map(|(k, v)| (k.clone(), v.score)).collect();
            let method = if args.exact_p {
                PValueMethod::Permutation
            } else {
                PValueMethod::TApproximation
            };
            let report = correlate(&bleu.segment_scores(), &lqm, method).map_err(|e| fail(&e))?;
            emit(&args.output, &report, render::correlation_table)
        }
    }
}

pub fn export(args: ExportArgs) -> Result<(), Failure> {
    let dir = args.data_dir.join(&args.project);
    if !dir.join(lqm_server::store::META).exists() {
        return Err(Failure::invalid(format!(
            "{}: no project `{}`",
            args.data_dir.display(),
            args.project
        )));
    }
    let (state, _) = lqm_server::store::open_project(&dir, 0).map_err(|e| Failure::invalid(e.to_string()))?;
    let export = lqm_server::service::export_state(&state);
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Failure::invalid(format!("{}: {e}", args.out_dir.display())))?;
    write_atomic(&args.out_dir.join("segments.jsonl"), export.segments.as_bytes())?;
    write_atomic(&args.out_dir.join("annotations.jsonl"), export.annotations.as_bytes())
}

pub fn serve(args: ServeArgs) -> Result<(), Failure> {
    let config = lqm_server::ServerConfig {
        data_dir: args.data_dir,
        addr: args.addr,
        workers: args.workers,
        compact_every: args.compact_every,
    };
    let handle = lqm_server::start(&config).map_err(|e| Failure::invalid(e.to_string()))?;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "http://{}", handle.addr());
    let _ = stdout.flush();
    drop(stdout);
    handle.join();
    Ok(())
}
