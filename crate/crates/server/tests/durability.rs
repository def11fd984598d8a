//! Randomized write/crash/recover cycles against a model of acknowledged
//! writes. A "crash" drops the registry without any shutdown step and then
//! damages the directory the way an interrupted process could.

mod common;

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use common::{project, span, tok};
use lqm_server::store::{LOG, SNAPSHOT};
use lqm_server::{ApiError, Registry};

const SEGMENTS: [&str; 4] = ["s0000", "s0001", "s0002", "s0003"];
const ANNOTATORS: [&str; 2] = ["r1", "r2"];

type Model = BTreeMap<(String, String), (u64, Value)>;

fn observed(reg: &Registry, pid: &str, sid: &str, who: &str) -> (u64, Value) {
    let v = reg.annotation(pid, sid, who, Some(&tok(who))).unwrap();
    (v["version"].as_u64().unwrap(), v["spans"].clone())
}

fn random_spans(rng: &mut ChaCha8Rng) -> Value {
    let n = rng.random_range(0..3);
    let sev = ["minor", "major", "critical"];
    Value::Array(
        (0..n)
            .map(|_| {
                let start = rng.random_range(0..4);
                span(start, start + rng.random_range(1..3), sev.choose(rng).unwrap())
            })
            .collect(),
    )
}

fn append(path: &Path, bytes: &[u8]) {
    let mut f = OpenOptions::new().append(true).open(path).unwrap();
    f.write_all(bytes).unwrap();
}

#[test]
fn acknowledged_writes_survive_random_crashes() {
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let pid = {
        let reg = Registry::open(root.path(), 3).unwrap();
        let body = serde_json::to_vec(&project(SEGMENTS.len(), &ANNOTATORS)).unwrap();
        reg.create(&body).unwrap().1["project_id"].as_str().unwrap().to_string()
    };
    let dir = root.path().join(&pid);
    let mut model: Model = BTreeMap::new();

    for cycle in 0..1000 {
        let reg = Registry::open(root.path(), rng.random_range(1..6)).unwrap();

        for sid in SEGMENTS {
            for who in ANNOTATORS {
                let expected = model.get(&(sid.into(), who.into())).cloned().unwrap_or((0, json!([])));
                assert_eq!(observed(&reg, &pid, sid, who), expected, "cycle {cycle}: {sid}/{who}");
            }
        }

        for _ in 0..rng.random_range(1..6) {
            let sid = *SEGMENTS.choose(&mut rng).unwrap();
            let who = *ANNOTATORS.choose(&mut rng).unwrap();
            let key = (sid.to_string(), who.to_string());
            let current = model.get(&key).map_or(0, |e| e.0);
            let stale = rng.random_bool(0.2) && current > 0;
            let expected_version = if stale { current - 1 } else { current };
            let spans = random_spans(&mut rng);
            let body = serde_json::to_vec(&json!({ "expected_version": expected_version, "spans": spans })).unwrap();
            match reg.save(&pid, sid, who, Some(&tok(who)), &body) {
                Ok(v) => {
                    assert!(!stale);
                    let stored = v["spans"].clone();
                    model.insert(key, (v["version"].as_u64().unwrap(), stored));
                }
                Err(ApiError::Conflict(_)) => assert!(stale),
                Err(e) => panic!("cycle {cycle}: {e}"),
            }
        }

        match rng.random_range(0..6) {
            // Plain kill.
            0 => drop(reg),
            // A write that never finished its line.
            1 => {
                drop(reg);
                append(&dir.join(LOG), br#"{"segment_id":"s0000","annotator_id":"r1","vers"#);
            }
            // Died while writing the temporary snapshot.
            2 => {
                drop(reg);
                fs::write(dir.join(format!(".{SNAPSHOT}.tmp")), b"{\"segment_id\":").unwrap();
            }
            // Snapshot published, log not yet truncated.
            3 => {
                let log_before = fs::read(dir.join(LOG)).unwrap();
                reg.project(&pid).unwrap().compact().unwrap();
                drop(reg);
                fs::write(dir.join(LOG), log_before).unwrap();
            }
            // Died while creating another project.
            4 => {
                drop(reg);
                let tmp = root.path().join(".tmp-pdeadbeef");
                fs::create_dir_all(&tmp).unwrap();
                fs::write(tmp.join("project.json"), b"{").unwrap();
            }
            // A complete line reached the disk but the client never got the
            // reply; recovery may expose it.
            _ => {
                let sid = *SEGMENTS.choose(&mut rng).unwrap();
                let who = *ANNOTATORS.choose(&mut rng).unwrap();
                let key = (sid.to_string(), who.to_string());
                let version = model.get(&key).map_or(0, |e| e.0) + 1;
                drop(reg);
                let line = json!({ "segment_id": sid, "annotator_id": who, "version": version, "spans": [] });
                append(&dir.join(LOG), format!("{line}\n").as_bytes());
                model.insert(key, (version, json!([])));
            }
        }
    }
    Registry::open(root.path(), 3).unwrap();
    assert!(!root.path().join(".tmp-pdeadbeef").exists());
}

#[test]
fn compaction_folds_the_log_into_the_snapshot() {
    let root = tempfile::tempdir().unwrap();
    let reg = Registry::open(root.path(), 2).unwrap();
    let body = serde_json::to_vec(&project(2, &["r1"])).unwrap();
    let pid = reg.create(&body).unwrap().1["project_id"].as_str().unwrap().to_string();
    let save = |v: u64| {
        let body = serde_json::to_vec(&json!({ "expected_version": v, "spans": [span(0, 2, "minor")] })).unwrap();
        reg.save(&pid, "s0000", "r1", Some("tok-r1"), &body).unwrap();
    };
    save(0);
    let dir = root.path().join(&pid);
    assert_eq!(fs::read_to_string(dir.join(LOG)).unwrap().lines().count(), 1);
    save(1);
    assert_eq!(fs::read_to_string(dir.join(LOG)).unwrap(), "");
    assert_eq!(fs::read_to_string(dir.join(SNAPSHOT)).unwrap().lines().count(), 1);
    drop(reg);
    let reg = Registry::open(root.path(), 2).unwrap();
    assert_eq!(observed(&reg, &pid, "s0000", "r1").0, 2);
}

#[test]
fn corrupt_complete_log_line_is_reported() {
    let root = tempfile::tempdir().unwrap();
    let pid = {
        let reg = Registry::open(root.path(), 0).unwrap();
        let body = serde_json::to_vec(&project(1, &["r1"])).unwrap();
        reg.create(&body).unwrap().1["project_id"].as_str().unwrap().to_string()
    };
    append(&root.path().join(&pid).join(LOG), b"not json\n");
    let err = Registry::open(root.path(), 0).err().unwrap().to_string();
    assert!(err.contains("log.jsonl:1"), "{err}");
}
