//! Harness shared by the CLI tests and the acceptance run: running the `lqm`
//! binary, repeated-run determinism, and kill-and-restart of `lqm serve`.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

pub fn lqm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lqm"))
}

pub fn run(args: &[&str]) -> Output {
    lqm().args(args).output().expect("lqm runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Synthetic pipeline inputs written into `dir`.
pub struct Pipeline {
    pub segments: PathBuf,
    pub annotations: PathBuf,
}

impl Pipeline {
    pub fn write(dir: &Path, seed: u64, n_segments: usize) -> Pipeline {
        let (segments, annotations) = lqm_testkit::fixtures::pipeline_files(&mut lqm_testkit::rng(seed), n_segments);
        let p = Pipeline {
            segments: dir.join("segments.jsonl"),
            annotations: dir.join("annotations.jsonl"),
        };
        std::fs::write(&p.segments, segments).unwrap();
        std::fs::write(&p.annotations, annotations).unwrap();
        p
    }
}

/// Every reporting command, as (name, args without --out).
fn commands(p: &Pipeline, bleu: &Path) -> Vec<(String, Vec<String>)> {
    let s = p.segments.display().to_string();
    let a = p.annotations.display().to_string();
    let base = |cmd: &str| vec![cmd.to_string(), "--segments".into(), s.clone(), "--annotations".into(), a.clone()];
    let mut out = vec![
        ("validate".to_string(), base("validate")),
        ("score".to_string(), base("score")),
        ("score-pooled".to_string(), [base("score"), vec!["--selection".into(), "pooled".into()]].concat()),
        ("iaa".to_string(), [base("iaa"), vec!["--annotators".into(), "ann-a,ann-b".into()]].concat()),
        ("bleu".to_string(), vec!["bleu".into(), "--segments".into(), s.clone()]),
    ];
    for report in ["dist", "attrib", "buckets", "dashboard", "corr"] {
        let mut args = [base("analyze"), vec!["--report".into(), report.into()]].concat();
        if report == "corr" {
            args.extend(["--bleu".into(), bleu.display().to_string()]);
        }
        out.push((format!("analyze-{report}"), args));
    }
    let tables: Vec<(String, Vec<String>)> = out
        .iter()
        .map(|(n, a)| (format!("{n}-table"), [a.clone(), vec!["--format".into(), "table".into()]].concat()))
        .collect();
    out.extend(tables);
    out
}

/// Run every command `runs` times (alternating parallel and sequential
/// execution) and require byte-identical output files. Returns the number
/// of distinct command lines checked.
pub fn check_determinism(dir: &Path, p: &Pipeline, runs: usize) -> Result<usize, String> {
    let bleu = dir.join("bleu-input.json");
    let o = run(&["bleu", "--segments", p.segments.to_str().unwrap(), "--out", bleu.to_str().unwrap()]);
    if !o.status.success() {
        return Err(format!("bleu failed: {}", stderr(&o)));
    }
    let cmds = commands(p, &bleu);
    for (name, args) in &cmds {
        let mut first: Option<Vec<u8>> = None;
        for r in 0..runs {
            let out = dir.join(format!("{name}-{r}.out"));
            let mut full = args.clone();
            full.extend(["--out".into(), out.display().to_string()]);
            if r % 2 == 1 {
                full.push("--sequential".into());
            }
            let o = lqm().args(&full).output().unwrap();
            if !o.status.success() {
                return Err(format!("{name}: exit {:?}: {}", o.status.code(), stderr(&o)));
            }
            let bytes = std::fs::read(&out).unwrap();
            match &first {
                None => first = Some(bytes),
                Some(f) if *f != bytes => return Err(format!("{name}: run {r} differs from run 0")),
                Some(_) => {}
            }
        }
    }
    Ok(cmds.len())
}

/// A running `lqm serve` child process.
pub struct ServeProcess {
    pub child: Child,
    pub base: String,
}

impl ServeProcess {
    pub fn start(data_dir: &Path, compact_every: usize) -> ServeProcess {
        let mut child = lqm()
            .args(["serve", "--data-dir"])
            .arg(data_dir)
            .args(["--addr", "127.0.0.1:0", "--workers", "8", "--compact-every"])
            .arg(compact_every.to_string())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("lqm serve starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        assert!(line.starts_with("http://"), "unexpected serve banner {line:?}");
        ServeProcess {
            child,
            base: line.trim().to_string(),
        }
    }

    /// SIGKILL: no shutdown code runs.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

fn agent() -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(Duration::from_secs(10)).build()
}

fn call(agent: &ureq::Agent, method: &str, url: &str, token: &str, body: Option<Value>) -> Result<(u16, Value), String> {
    let req = agent.request(method, url).set("Authorization", &format!("Bearer {token}"));
    let res = match body {
        Some(b) => req.send_json(b),
        None => req.call(),
    };
    let resp = match res {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => return Err(e.to_string()),
    };
    let status = resp.status();
    let v: Value = resp.into_json().map_err(|e| e.to_string())?;
    Ok((status, v))
}

const SEGMENTS: usize = 6;
const WRITERS: usize = 4;

fn writer(k: usize) -> String {
    format!("w{k}")
}

fn sid(i: usize) -> String {
    format!("seg-{i}")
}

/// What a key holds according to acknowledged replies, plus at most one
/// write whose reply was lost to the kill.
#[derive(Debug, Clone, Default)]
struct KeyModel {
    version: u64,
    spans: Vec<(u64, u64, String)>,
    in_flight: Option<(u64, Vec<(u64, u64, String)>)>,
}

fn span_shape(spans: &Value) -> Vec<(u64, u64, String)> {
    spans
        .as_array()
        .map(|a| {
            a.iter()
                .map(|s| {
                    (
                        s["start"].as_u64().unwrap_or(0),
                        s["end"].as_u64().unwrap_or(0),
                        s["severity"].as_str().unwrap_or_default().to_string(),
                    )
                })
                .collect()
        })
        .unwrap_or_default()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct KillSummary {
    pub cycles: usize,
    pub acknowledged: usize,
    pub lost_replies: usize,
}

/// Start `lqm serve`, hammer it with concurrent saves, SIGKILL it at a
/// random moment, restart, and check every acknowledged write is present.
/// Each writer thread owns one annotator, so its keys are never contended.
pub fn kill_restart_cycles(data_dir: &Path, cycles: usize, seed: u64) -> Result<KillSummary, String> {
    let mut rng = lqm_testkit::rng(seed);
    let mut summary = KillSummary::default();

    let first = ServeProcess::start(data_dir, 7);
    let roster: Vec<Value> = (0..WRITERS)
        .map(|k| json!({ "annotator_id": writer(k), "token": format!("t{k}") }))
        .collect();
    let segments: Vec<Value> = (0..SEGMENTS)
        .map(|i| {
            json!({
                "segment_id": sid(i), "source_lang": "EGY", "target_lang": "ENG", "dialect": "Egyptian",
                "model_id": "m", "source_text": "ازيك", "target_text": "one two three four five six seven",
            })
        })
        .collect();
    let (status, v) = call(
        &agent(),
        "POST",
        &format!("{}/projects", first.base),
        "",
        Some(json!({ "client_token": "kill-harness", "segments": segments, "roster": roster })),
    )?;
    if status != 201 && status != 200 {
        return Err(format!("create failed: {status} {v}"));
    }
    let pid = v["project_id"].as_str().unwrap().to_string();
    first.kill();

    let mut model: BTreeMap<(usize, usize), KeyModel> = BTreeMap::new();
    for cycle in 0..cycles {
        let compact_every = rng.random_range(1..10);
        let server = ServeProcess::start(data_dir, compact_every);
        let agent = agent();

        // Recovery check against the model.
        for w in 0..WRITERS {
            for s in 0..SEGMENTS {
                let url = format!("{}/projects/{pid}/segments/{}/annotations?annotator={}", server.base, sid(s), writer(w));
                let (status, v) = call(&agent, "GET", &url, &format!("t{w}"), None)?;
                if status != 200 {
                    return Err(format!("cycle {cycle}: GET {status} {v}"));
                }
                let got_version = v["version"].as_u64().unwrap();
                let got_spans = span_shape(&v["spans"]);
                let m = model.entry((w, s)).or_default();
                let acked = (m.version, m.spans.clone());
                let ok = (got_version, got_spans.clone()) == acked
                    || m.in_flight.as_ref().is_some_and(|f| *f == (got_version, got_spans.clone()));
                if !ok {
                    return Err(format!(
                        "cycle {cycle}: {}/{} holds v{got_version} {got_spans:?}, acknowledged v{} {:?}",
                        writer(w),
                        sid(s),
                        m.version,
                        m.spans
                    ));
                }
                m.version = got_version;
                m.spans = got_spans;
                m.in_flight = None;
            }
        }

        // Concurrent writers until the kill.
        let stop = Arc::new(AtomicBool::new(false));
        let handles: Vec<_> = (0..WRITERS)
            .map(|w| {
                let mut local: BTreeMap<usize, KeyModel> =
                    (0..SEGMENTS).map(|s| (s, model[&(w, s)].clone())).collect();
                let (base, pid, stop, agent) = (server.base.clone(), pid.clone(), stop.clone(), agent.clone());
                let mut rng = lqm_testkit::rng(seed ^ ((cycle as u64) << 8) ^ w as u64);
                thread::spawn(move || {
                    let mut acked = 0;
                    let mut lost = 0;
                    while !stop.load(Ordering::Relaxed) {
                        let s = rng.random_range(0..SEGMENTS);
                        let m = local.get_mut(&s).unwrap();
                        let n = rng.random_range(0..3);
                        let spans: Vec<Value> = (0..n)
                            .map(|_| {
                                let start = rng.random_range(0..20);
                                let severity = ["minor", "major", "critical"][rng.random_range(0..3)];
                                json!({
                                    "start": start, "end": start + rng.random_range(1..8),
                                    "category": "semantics", "error_type": "lexical-semantics",
                                    "subcategory": "named-entity",
                                    "severity": severity,
                                })
                            })
                            .collect();
                        let shape = span_shape(&Value::Array(spans.clone()));
                        let url = format!("{base}/projects/{pid}/segments/{}/annotations?annotator={}", sid(s), writer(w));
                        let body = json!({ "expected_version": m.version, "spans": spans });
                        match call(&agent, "PUT", &url, &format!("t{w}"), Some(body)) {
                            Ok((200, v)) => {
                                m.version = v["version"].as_u64().unwrap();
                                m.spans = span_shape(&v["spans"]);
                                acked += 1;
                            }
                            Ok((status, v)) => panic!("unexpected {status}: {v}"),
                            Err(_) => {
                                m.in_flight = Some((m.version + 1, shape));
                                lost += 1;
                                break;
                            }
                        }
                    }
                    (w, local, acked, lost)
                })
            })
            .collect();

        thread::sleep(Duration::from_micros(rng.random_range(0..20_000)));
        server.kill();
        stop.store(true, Ordering::Relaxed);
        for h in handles {
            let (w, local, acked, lost) = h.join().map_err(|_| format!("cycle {cycle}: writer panicked"))?;
            summary.acknowledged += acked;
            summary.lost_replies += lost;
            for (s, m) in local {
                model.insert((w, s), m);
            }
        }
        summary.cycles += 1;
    }
    Ok(summary)
}
