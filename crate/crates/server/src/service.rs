//! Project operations independent of the HTTP transport.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use lqm_core::corpus::{read_annotations, read_segments, segment_record, write_annotations, write_segments};
use lqm_core::taxonomy::load_taxonomy;
use lqm_core::{AnnotationSet, Corpus, ErrorSpan, Layer, Severity, TaxonomyPath, TaxonomySchema};

use crate::error::ApiError;
use crate::model::{Assignment, Entry, ProjectMeta, ProjectState, RosterEntry};
use crate::store::{self, LogWriter, StoreError};

/// One open project: lock-free reads through `state`, writes serialized by
/// the log writer's mutex.
pub struct Project {
    state: ArcSwap<ProjectState>,
    writer: Mutex<LogWriter>,
}

impl Project {
    pub fn state(&self) -> Arc<ProjectState> {
        self.state.load_full()
    }

    /// Fold the log into a fresh snapshot now.
    pub fn compact(&self) -> std::io::Result<()> {
        let mut w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        w.compact(&self.state.load())
    }
}

/// All projects under one data directory.
pub struct Registry {
    root: PathBuf,
    compact_every: usize,
    projects: ArcSwap<HashMap<String, Arc<Project>>>,
    create_lock: Mutex<()>,
}

/// The two export files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Export {
    pub segments: String,
    pub annotations: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default)]
    client_token: Option<String>,
    #[serde(default)]
    taxonomy: Option<String>,
    #[serde(default)]
    taxonomy_source: Option<String>,
    #[serde(default = "diagnostic")]
    layer: Layer,
    segments: Vec<Value>,
    roster: Vec<RosterEntry>,
    #[serde(default)]
    assignment: Assignment,
    #[serde(default)]
    admin_token: Option<String>,
    #[serde(default)]
    annotations: Vec<Value>,
}

fn diagnostic() -> Layer {
    Layer::Diagnostic
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SaveRequest {
    expected_version: u64,
    #[serde(default)]
    spans: Vec<SpanInput>,
    #[serde(default)]
    note: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanInput {
    #[serde(default)]
    #[allow(dead_code)]
    span_id: Option<String>,
    #[serde(default)]
    segment_id: Option<String>,
    #[serde(default)]
    annotator_id: Option<String>,
    start: usize,
    end: usize,
    category: String,
    #[serde(default)]
    error_type: Option<String>,
    #[serde(default)]
    subcategory: Option<String>,
    severity: String,
    #[serde(default)]
    note: Option<String>,
    #[serde(default)]
    span_text: Option<String>,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed request body: {e}")))
}

fn jsonl(values: &[Value]) -> String {
    values
        .iter()
        .map(|v| serde_json::to_string(v).expect("value serializes") + "\n")
        .collect()
}

fn non_empty(note: Option<String>) -> Option<String> {
    note.filter(|n| !n.trim().is_empty())
}

/// Server-assigned span ids: unique per project and stable across exports.
fn span_id(segment_id: &str, annotator_id: &str, k: usize) -> String {
    format!("{segment_id}#{annotator_id}#{k}")
}

fn path_fits_layer(schema: &TaxonomySchema, path: &TaxonomyPath, layer: Layer) -> Result<(), String> {
    let check = schema.validate_path(path).map_err(|e| e.to_string())?;
    let fits = match layer {
        Layer::Lightweight => check.lightweight_complete && path.subcategory.is_none(),
        Layer::Diagnostic => check.diagnostic_complete,
    };
    if fits {
        Ok(())
    } else {
        Err(format!("path `{path}` is not a complete {layer:?} path").to_lowercase())
    }
}

fn entry_json(entry: Option<&Arc<Entry>>) -> Value {
    match entry {
        Some(e) => json!({ "version": e.version, "note": e.note, "spans": e.spans }),
        None => json!({ "version": 0, "note": null, "spans": [] }),
    }
}

fn check_token(meta: &ProjectMeta, annotator: &str, token: Option<&str>) -> Result<(), ApiError> {
    let token = token.ok_or_else(|| ApiError::Unauthorized("missing bearer token".into()))?;
    let entry = meta
        .annotator(annotator)
        .ok_or_else(|| ApiError::NotFound(format!("unknown annotator `{annotator}`")))?;
    if entry.token != token {
        return Err(ApiError::Forbidden(format!("token does not belong to `{annotator}`")));
    }
    Ok(())
}

fn check_project_token(meta: &ProjectMeta, token: Option<&str>) -> Result<(), ApiError> {
    let token = token.ok_or_else(|| ApiError::Unauthorized("missing bearer token".into()))?;
    let ok = meta.admin_token.as_deref() == Some(token) || meta.roster.iter().any(|r| r.token == token);
    if ok {
        Ok(())
    } else {
        Err(ApiError::Forbidden("token is not valid for this project".into()))
    }
}

impl Registry {
    /// Open every project under `root`, creating the directory if needed.
    /// Leftovers of interrupted creations are removed.
    pub fn open(root: &Path, compact_every: usize) -> Result<Registry, StoreError> {
        let io = |source| StoreError::Io {
            path: root.to_path_buf(),
            source,
        };
        fs::create_dir_all(root).map_err(io)?;
        let mut projects = HashMap::new();
        for dirent in fs::read_dir(root).map_err(io)? {
            let dirent = dirent.map_err(io)?;
            let name = dirent.file_name().to_string_lossy().into_owned();
            let path = dirent.path();
            if !path.is_dir() {
                continue;
            }
            if name.starts_with(".tmp-") {
                fs::remove_dir_all(&path).map_err(io)?;
                continue;
            }
            let (state, writer) = store::open_project(&path, compact_every)?;
            projects.insert(
                name,
                Arc::new(Project {
                    state: ArcSwap::from_pointee(state),
                    writer: Mutex::new(writer),
                }),
            );
        }
        Ok(Registry {
            root: root.to_path_buf(),
            compact_every,
            projects: ArcSwap::from_pointee(projects),
            create_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn project(&self, id: &str) -> Result<Arc<Project>, ApiError> {
        self.projects
            .load()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown project `{id}`")))
    }

    pub fn project_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.projects.load().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Create a project. Returns whether it was newly created and the
    /// response body. A repeated request with the same client token and the
    /// same payload returns the existing project.
    pub fn create(&self, body: &[u8]) -> Result<(bool, Value), ApiError> {
        let raw: Value = parse_json(body)?;
        let digest = hex_digest(&serde_json::to_vec(&raw).expect("value serializes"));
        let req: CreateRequest =
            serde_json::from_value(raw).map_err(|e| ApiError::BadRequest(format!("invalid project payload: {e}")))?;

        let _guard = self.create_lock.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(token) = &req.client_token {
            let existing = self
                .projects
                .load()
                .values()
                .map(|p| p.state())
                .find(|s| s.meta.client_token.as_deref() == Some(token.as_str()));
            if let Some(state) = existing {
                if state.meta.payload_digest == digest {
                    return Ok((false, created_body(&state, false)));
                }
                return Err(ApiError::Conflict(json!({
                    "error": "client token already used with a different payload",
                    "project_id": state.meta.project_id,
                })));
            }
        }

        let (meta, schema, corpus, entries) = self.validate_create(req, digest)?;
        let dest = store::create_project(&self.root, &meta, &schema, &corpus, &entries)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        let (state, writer) =
            store::open_project(&dest, self.compact_every).map_err(|e| ApiError::Internal(e.to_string()))?;
        let body = created_body(&state, true);
        let project = Arc::new(Project {
            state: ArcSwap::from_pointee(state),
            writer: Mutex::new(writer),
        });
        self.projects.rcu(|m| {
            let mut m = HashMap::clone(m);
            m.insert(meta.project_id.clone(), project.clone());
            m
        });
        Ok((true, body))
    }

    fn validate_create(
        &self,
        req: CreateRequest,
        digest: String,
    ) -> Result<(ProjectMeta, TaxonomySchema, Corpus, Vec<Entry>), ApiError> {
        let invalid = |msg: String| ApiError::Unprocessable(json!({ "error": msg }));
        if req.segments.is_empty() {
            return Err(invalid("segment list is empty".into()));
        }
        if req.roster.is_empty() {
            return Err(invalid("roster is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &req.roster {
            if r.annotator_id.is_empty() || r.token.is_empty() {
                return Err(invalid("roster entries need a non-empty annotator_id and token".into()));
            }
            if !seen.insert(r.annotator_id.as_str()) {
                return Err(invalid(format!("duplicate annotator `{}` in roster", r.annotator_id)));
            }
        }
        if !(0.0..=1.0).contains(&req.assignment.overlap) {
            return Err(invalid(format!("assignment overlap {} outside [0, 1]", req.assignment.overlap)));
        }
        let schema = match (&req.taxonomy_source, &req.taxonomy) {
            (Some(src), _) => load_taxonomy(src).map_err(|e| invalid(format!("taxonomy: {e}")))?,
            (None, name) => {
                let name = name.as_deref().unwrap_or("lqm");
                TaxonomySchema::builtin(name).ok_or_else(|| invalid(format!("unknown taxonomy `{name}`")))?
            }
        };
        let segments = read_segments(&jsonl(&req.segments)).map_err(|e| {
            ApiError::Unprocessable(json!({ "error": e.to_string(), "record": e.line() }))
        })?;
        let corpus = Corpus::new(segments).map_err(|e| invalid(e.to_string()))?;

        let mut entries = Vec::new();
        if !req.annotations.is_empty() {
            let sets = read_annotations(&jsonl(&req.annotations), &corpus, &schema).map_err(|e| {
                ApiError::Unprocessable(json!({ "error": e.to_string(), "record": e.line() }))
            })?;
            for set in sets {
                if !req.roster.iter().any(|r| r.annotator_id == set.annotator_id) {
                    return Err(invalid(format!("annotations by `{}`, who is not on the roster", set.annotator_id)));
                }
                let by_segment = set.by_segment();
                for seg in &set.segments_covered {
                    let spans = by_segment.get(seg.as_str()).cloned().unwrap_or_default();
                    let mut renumbered = Vec::with_capacity(spans.len());
                    for (k, s) in spans.into_iter().enumerate() {
                        path_fits_layer(&schema, &s.path, req.layer)
                            .map_err(|m| invalid(format!("span `{}`: {m}", s.span_id)))?;
                        let mut s = s.clone();
                        s.span_id = span_id(seg, &set.annotator_id, k + 1);
                        renumbered.push(s);
                    }
                    entries.push(Entry {
                        segment_id: seg.clone(),
                        annotator_id: set.annotator_id.clone(),
                        version: 1,
                        note: set.segment_notes.get(seg).cloned(),
                        spans: renumbered,
                    });
                }
            }
        }

        let project_id = match &req.client_token {
            Some(token) => format!("p{}", &hex_digest(format!("client-token:{token}").as_bytes())[..20]),
            None => format!("p{}", &hex_digest(&rand::random::<[u8; 16]>())[..20]),
        };
        let meta = ProjectMeta {
            project_id,
            client_token: req.client_token,
            payload_digest: digest,
            taxonomy_name: schema.name.clone(),
            layer: req.layer,
            roster: req.roster,
            assignment: req.assignment,
            admin_token: req.admin_token,
        };
        Ok((meta, schema, corpus, entries))
    }

    /// The first assigned segment the annotator has not saved yet.
    pub fn next(&self, project_id: &str, annotator: &str, token: Option<&str>) -> Result<Value, ApiError> {
        let state = self.project(project_id)?.state();
        check_token(&state.meta, annotator, token)?;
        let assigned = &state.assignments[annotator];
        let done = assigned
            .iter()
            .filter(|&&i| state.entry(&state.corpus.segments()[i].segment_id, annotator).is_some())
            .count();
        let next = assigned
            .iter()
            .enumerate()
            .find(|(_, &i)| state.entry(&state.corpus.segments()[i].segment_id, annotator).is_none());
        Ok(match next {
            None => json!({ "status": "complete", "assigned": assigned.len(), "done": done }),
            Some((pos, &i)) => {
                let seg = &state.corpus.segments()[i];
                json!({
                    "status": "assigned",
                    "position": pos + 1,
                    "assigned": assigned.len(),
                    "done": done,
                    "segment": segment_record(seg),
                    "version": 0,
                    "note": null,
                    "spans": [],
                })
            }
        })
    }

    /// Current state of one (segment, annotator) pair.
    pub fn annotation(
        &self,
        project_id: &str,
        segment_id: &str,
        annotator: &str,
        token: Option<&str>,
    ) -> Result<Value, ApiError> {
        let state = self.project(project_id)?.state();
        check_token(&state.meta, annotator, token)?;
        let seg = state
            .corpus
            .get(segment_id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown segment `{segment_id}`")))?;
        let mut body = entry_json(state.entry(segment_id, annotator));
        body["segment"] = segment_record(seg);
        Ok(body)
    }

    /// Replace the annotator's spans on a segment if `expected_version`
    /// matches. The write is durable before this returns.
    pub fn save(
        &self,
        project_id: &str,
        segment_id: &str,
        annotator: &str,
        token: Option<&str>,
        body: &[u8],
    ) -> Result<Value, ApiError> {
        let project = self.project(project_id)?;
        let snapshot = project.state();
        check_token(&snapshot.meta, annotator, token)?;
        let req: SaveRequest = parse_json(body)?;
        let seg = snapshot
            .corpus
            .get(segment_id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown segment `{segment_id}`")))?;
        if !snapshot.is_assigned(segment_id, annotator) {
            return Err(ApiError::Unprocessable(json!({
                "error": format!("segment `{segment_id}` is not assigned to `{annotator}`"),
            })));
        }

        let mut spans = Vec::with_capacity(req.spans.len());
        let mut problems = Vec::new();
        for (k, input) in req.spans.into_iter().enumerate() {
            match build_span(&snapshot, seg.segment_id.as_str(), annotator, k, input) {
                Ok(s) => spans.push(s),
                Err(message) => problems.push(json!({ "index": k, "error": message })),
            }
        }
        if !problems.is_empty() {
            return Err(ApiError::Unprocessable(json!({
                "error": "validation failed; nothing was stored",
                "problems": problems,
            })));
        }

        let mut writer = project.writer.lock().unwrap_or_else(|p| p.into_inner());
        let current = project.state.load_full();
        let version = current.version(segment_id, annotator);
        if version != req.expected_version {
            return Err(ApiError::Conflict(json!({
                "error": "version conflict",
                "expected_version": req.expected_version,
                "current": entry_json(current.entry(segment_id, annotator)),
            })));
        }
        let entry = Entry {
            segment_id: segment_id.to_string(),
            annotator_id: annotator.to_string(),
            version: version + 1,
            note: non_empty(req.note),
            spans,
        };
        writer
            .append(&entry)
            .map_err(|e| ApiError::Internal(format!("write failed: {e}")))?;
        let mut next = ProjectState::clone(&current);
        next.apply(entry.clone());
        let next = Arc::new(next);
        project.state.store(next.clone());
        // The entry is already durable in the log; a failed compaction only
        // delays folding it into the snapshot.
        let _ = writer.compact_if_due(&next);
        drop(writer);

        Ok(json!({
            "segment_id": entry.segment_id,
            "annotator_id": entry.annotator_id,
            "version": entry.version,
            "note": entry.note,
            "spans": entry.spans,
        }))
    }

    pub fn export(&self, project_id: &str, token: Option<&str>) -> Result<Export, ApiError> {
        let state = self.project(project_id)?.state();
        check_project_token(&state.meta, token)?;
        Ok(export_state(&state))
    }

    pub fn progress(&self, project_id: &str, token: Option<&str>) -> Result<Value, ApiError> {
        let state = self.project(project_id)?.state();
        check_project_token(&state.meta, token)?;
        let annotators: Vec<Value> = state
            .meta
            .roster
            .iter()
            .map(|r| {
                let assigned = &state.assignments[&r.annotator_id];
                let entries: Vec<&Arc<Entry>> = assigned
                    .iter()
                    .filter_map(|&i| state.entry(&state.corpus.segments()[i].segment_id, &r.annotator_id))
                    .collect();
                json!({
                    "annotator_id": r.annotator_id,
                    "assigned": assigned.len(),
                    "done": entries.len(),
                    "spans": entries.iter().map(|e| e.spans.len()).sum::<usize>(),
                    "flagged": entries.iter().filter(|e| e.note.is_some()).count(),
                })
            })
            .collect();
        Ok(json!({
            "project_id": state.meta.project_id,
            "n_segments": state.corpus.len(),
            "annotators": annotators,
        }))
    }
}

fn created_body(state: &ProjectState, created: bool) -> Value {
    json!({
        "project_id": state.meta.project_id,
        "created": created,
        "n_segments": state.corpus.len(),
        "taxonomy": state.meta.taxonomy_name,
        "layer": state.meta.layer,
        "roster": state.meta.roster.iter().map(|r| &r.annotator_id).collect::<Vec<_>>(),
        "assigned": state.assignments.iter().map(|(a, v)| (a.clone(), v.len())).collect::<BTreeMap<_, _>>(),
    })
}

fn build_span(state: &ProjectState, segment_id: &str, annotator: &str, k: usize, input: SpanInput) -> Result<ErrorSpan, String> {
    if input.segment_id.as_deref().is_some_and(|s| s != segment_id) {
        return Err(format!("span names segment `{}`", input.segment_id.unwrap_or_default()));
    }
    if input.annotator_id.as_deref().is_some_and(|a| a != annotator) {
        return Err(format!("span names annotator `{}`", input.annotator_id.unwrap_or_default()));
    }
    let severity: Severity = input
        .severity
        .parse()
        .map_err(|v| format!("unknown severity `{v}`"))?;
    let span = ErrorSpan {
        span_id: span_id(segment_id, annotator, k + 1),
        segment_id: segment_id.to_string(),
        annotator_id: annotator.to_string(),
        start: input.start,
        end: input.end,
        path: TaxonomyPath {
            category: input.category,
            error_type: input.error_type,
            subcategory: input.subcategory,
        },
        severity,
        note: non_empty(input.note),
    };
    lqm_core::corpus::check_span(&span, &state.corpus, &state.schema).map_err(|e| e.to_string())?;
    path_fits_layer(&state.schema, &span.path, state.meta.layer)?;
    if let Some(text) = input.span_text {
        let seg = state.corpus.get(segment_id).expect("segment checked by caller");
        let found = seg.target_slice(span.start, span.end).unwrap_or_default();
        if lqm_core::corpus::nfc(&text) != found {
            return Err(format!("span_text `{text}` does not match `{found}` at [{}, {})", span.start, span.end));
        }
    }
    Ok(span)
}

/// Segments in corpus order; annotations per annotator (sorted by id), spans
/// in corpus order.
pub fn export_state(state: &ProjectState) -> Export {
    let mut sets: BTreeMap<&str, AnnotationSet> = BTreeMap::new();
    for seg in state.corpus.segments() {
        for r in &state.meta.roster {
            if let Some(e) = state.entry(&seg.segment_id, &r.annotator_id) {
                let set = sets
                    .entry(r.annotator_id.as_str())
                    .or_insert_with(|| AnnotationSet::new(&r.annotator_id, &state.schema.name));
                set.segments_covered.insert(seg.segment_id.clone());
                if let Some(n) = &e.note {
                    set.segment_notes.insert(seg.segment_id.clone(), n.clone());
                }
                set.spans.extend(e.spans.iter().cloned());
            }
        }
    }
    let sets: Vec<AnnotationSet> = sets.into_values().collect();
    Export {
        segments: write_segments(state.corpus.segments()),
        annotations: write_annotations(&sets),
    }
}

/// Built-in taxonomy as a JSON tree, or its source text.
pub fn taxonomy(name: &str) -> Result<(Value, &'static str), ApiError> {
    let schema =
        TaxonomySchema::builtin(name).ok_or_else(|| ApiError::NotFound(format!("unknown taxonomy `{name}`")))?;
    let source = TaxonomySchema::builtin_source(name).expect("builtin has source");
    Ok((serde_json::to_value(schema.tree()).expect("tree serializes"), source))
}
