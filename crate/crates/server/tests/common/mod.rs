#![allow(dead_code)]

use serde_json::{json, Value};

use lqm_server::{start, ServerConfig, ServerHandle};

pub struct TestServer {
    pub dir: tempfile::TempDir,
    pub handle: Option<ServerHandle>,
    pub base: String,
}

impl TestServer {
    pub fn new() -> TestServer {
        let dir = tempfile::tempdir().unwrap();
        let mut s = TestServer {
            dir,
            handle: None,
            base: String::new(),
        };
        s.restart();
        s
    }

    pub fn restart(&mut self) {
        if let Some(h) = self.handle.take() {
            h.shutdown();
        }
        let config = ServerConfig {
            data_dir: self.dir.path().to_path_buf(),
            addr: "127.0.0.1:0".into(),
            workers: 4,
            compact_every: 5,
        };
        let handle = start(&config).unwrap();
        self.base = format!("http://{}", handle.addr());
        self.handle = Some(handle);
    }

    pub fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<&Value>) -> (u16, Value) {
        let (status, text) = self.call_raw(method, path, token, body);
        let v = serde_json::from_str(&text).unwrap_or(Value::String(text));
        (status, v)
    }

    pub fn call_raw(&self, method: &str, path: &str, token: Option<&str>, body: Option<&Value>) -> (u16, String) {
        let mut req = ureq::request(method, &format!("{}{}", self.base, path));
        if let Some(t) = token {
            req = req.set("Authorization", &format!("Bearer {t}"));
        }
        let res = match body {
            Some(b) => req.send_json(b.clone()),
            None => req.call(),
        };
        let resp = match res {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(e) => panic!("transport error: {e}"),
        };
        let status = resp.status();
        (status, resp.into_string().unwrap())
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            h.shutdown();
        }
    }
}

pub fn segment(i: usize) -> Value {
    let texts = ["the dog ran home quickly", "إزيك يا صاحبي عامل إيه", "Café is naïve and then slept"];
    json!({
        "segment_id": format!("s{i:04}"),
        "source_lang": "EGY",
        "target_lang": "ENG",
        "dialect": "Egyptian",
        "model_id": format!("m{}", i % 3),
        "source_text": "مرحبا",
        "target_text": texts[i % texts.len()],
    })
}

pub fn roster(names: &[&str]) -> Value {
    Value::Array(
        names
            .iter()
            .map(|n| json!({ "annotator_id": n, "token": format!("tok-{n}") }))
            .collect(),
    )
}

pub fn project(n: usize, names: &[&str]) -> Value {
    json!({
        "segments": (0..n).map(segment).collect::<Vec<_>>(),
        "roster": roster(names),
        "admin_token": "admin",
    })
}

pub fn span(start: usize, end: usize, severity: &str) -> Value {
    json!({
        "start": start,
        "end": end,
        "category": "semantics",
        "error_type": "lexical-semantics",
        "subcategory": "named-entity",
        "severity": severity,
    })
}

pub fn tok(name: &str) -> String {
    format!("tok-{name}")
}
