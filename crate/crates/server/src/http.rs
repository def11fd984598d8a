//! HTTP transport: routing, query parsing, bearer tokens.
//!
//! | method | path                                              |
//! |--------|---------------------------------------------------|
//! | POST   | `/projects`                                       |
//! | GET    | `/projects/{id}/next?annotator=`                  |
//! | GET    | `/projects/{id}/segments/{sid}/annotations?annotator=` |
//! | PUT    | `/projects/{id}/segments/{sid}/annotations?annotator=` |
//! | GET    | `/projects/{id}/export[?file=segments\|annotations]` |
//! | GET    | `/projects/{id}/progress`                         |
//! | GET    | `/taxonomies/{name}[?format=toml]`                |

use std::collections::HashMap;
use std::io::{self, Read};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use percent_encoding::percent_decode_str;
use serde_json::Value;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::error::ApiError;
use crate::service::{self, Registry};
use crate::store::StoreError;

const MAX_BODY: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub addr: String,
    pub workers: usize,
    /// Log entries between snapshot compactions; 0 disables compaction.
    pub compact_every: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            data_dir: PathBuf::from("lqm-data"),
            addr: "127.0.0.1:8080".into(),
            workers: 4,
            compact_every: 1000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot listen on {addr}: {message}")]
    Bind { addr: String, message: String },
}

/// A response ready to send.
#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: String,
}

impl Reply {
    fn json(status: u16, v: &Value) -> Reply {
        Reply {
            status,
            content_type: "application/json",
            body: serde_json::to_string(v).expect("value serializes"),
        }
    }

    fn text(content_type: &'static str, body: String) -> Reply {
        Reply {
            status: 200,
            content_type,
            body,
        }
    }
}

impl From<ApiError> for Reply {
    fn from(e: ApiError) -> Reply {
        Reply::json(e.status(), &e.body())
    }
}

fn bearer(header: Option<&str>) -> Option<&str> {
    let h = header?.trim();
    let (scheme, token) = h.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}

fn required<'a>(query: &'a HashMap<String, String>, key: &str) -> Result<&'a str, ApiError> {
    query
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| ApiError::BadRequest(format!("missing query parameter `{key}`")))
}

/// Route one request. Independent of the socket layer.
pub fn handle(registry: &Registry, method: &str, url: &str, authorization: Option<&str>, body: &[u8]) -> Reply {
    let (path, query) = url.split_once('?').unwrap_or((url, ""));
    let query: HashMap<String, String> = form_urlencoded::parse(query.as_bytes()).into_owned().collect();
    let parts: Vec<String> = path
        .trim_matches('/')
        .split('/')
        .map(|p| percent_decode_str(p).decode_utf8_lossy().into_owned())
        .collect();
    let parts: Vec<&str> = parts.iter().map(String::as_str).collect();
    let token = bearer(authorization);

    let result = (|| -> Result<Reply, ApiError> {
        match (method, parts.as_slice()) {
            ("POST", ["projects"]) => {
                let (created, v) = registry.create(body)?;
                Ok(Reply::json(if created { 201 } else { 200 }, &v))
            }
            ("GET", ["projects", id, "next"]) => {
                let annotator = required(&query, "annotator")?;
                Ok(Reply::json(200, &registry.next(id, annotator, token)?))
            }
            ("GET", ["projects", id, "segments", sid, "annotations"]) => {
                let annotator = required(&query, "annotator")?;
                Ok(Reply::json(200, &registry.annotation(id, sid, annotator, token)?))
            }
            ("PUT", ["projects", id, "segments", sid, "annotations"]) => {
                let annotator = required(&query, "annotator")?;
                Ok(Reply::json(200, &registry.save(id, sid, annotator, token, body)?))
            }
            ("GET", ["projects", id, "export"]) => {
                let export = registry.export(id, token)?;
                match query.get("file").map(String::as_str) {
                    None => Ok(Reply::json(
                        200,
                        &serde_json::json!({ "segments": export.segments, "annotations": export.annotations }),
                    )),
                    Some("segments") => Ok(Reply::text("application/x-ndjson", export.segments)),
                    Some("annotations") => Ok(Reply::text("application/x-ndjson", export.annotations)),
                    Some(other) => Err(ApiError::BadRequest(format!("unknown export file `{other}`"))),
                }
            }
            ("GET", ["projects", id, "progress"]) => Ok(Reply::json(200, &registry.progress(id, token)?)),
            ("GET", ["taxonomies", name]) => {
                let (tree, source) = service::taxonomy(name)?;
                match query.get("format").map(String::as_str) {
                    None | Some("json") => Ok(Reply::json(200, &tree)),
                    Some("toml") => Ok(Reply::text("application/toml", source.to_string())),
                    Some(other) => Err(ApiError::BadRequest(format!("unknown format `{other}`"))),
                }
            }
            (_, ["projects"])
            | (_, ["projects", _, "next" | "export" | "progress"])
            | (_, ["projects", _, "segments", _, "annotations"])
            | (_, ["taxonomies", _]) => Ok(Reply::json(405, &serde_json::json!({ "error": "method not allowed" }))),
            _ => Err(ApiError::NotFound(format!("no route for {method} {path}"))),
        }
    })();
    result.unwrap_or_else(Reply::from)
}

fn serve_one(registry: &Registry, mut request: Request) -> io::Result<()> {
    let method = match request.method() {
        Method::Get => "GET",
        Method::Post => "POST",
        Method::Put => "PUT",
        Method::Delete => "DELETE",
        _ => "OTHER",
    };
    let url = request.url().to_string();
    let auth = request
        .headers()
        .iter()
        .find(|h| h.field.equiv("Authorization"))
        .map(|h| h.value.as_str().to_string());
    let mut body = Vec::new();
    let reply = match request.as_reader().take(MAX_BODY + 1).read_to_end(&mut body) {
        Ok(_) if body.len() as u64 > MAX_BODY => Reply::from(ApiError::BadRequest("request body too large".into())),
        Ok(_) => handle(registry, method, &url, auth.as_deref(), &body),
        Err(e) => Reply::from(ApiError::BadRequest(format!("cannot read body: {e}"))),
    };
    let header = Header::from_bytes("Content-Type", format!("{}; charset=utf-8", reply.content_type))
        .expect("static header is valid");
    request.respond(Response::from_string(reply.body).with_status_code(reply.status).with_header(header))
}

/// A running server. Dropping it does not stop the workers; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    registry: Arc<Registry>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Stop accepting requests and wait for in-flight ones to finish.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    /// Block until the workers exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Open the data directory and start serving.
pub fn start(config: &ServerConfig) -> Result<ServerHandle, StartError> {
    let registry = Arc::new(Registry::open(&config.data_dir, config.compact_every)?);
    let server = Server::http(&config.addr).map_err(|e| StartError::Bind {
        addr: config.addr.clone(),
        message: e.to_string(),
    })?;
    let addr = server.server_addr().to_ip().ok_or_else(|| StartError::Bind {
        addr: config.addr.clone(),
        message: "not an IP listener".into(),
    })?;
    let server = Arc::new(server);
    let stop = Arc::new(AtomicBool::new(false));
    let workers = (0..config.workers.max(1))
        .map(|_| {
            let (server, registry, stop) = (server.clone(), registry.clone(), stop.clone());
            std::thread::spawn(move || loop {
                match server.recv() {
                    Ok(request) => {
                        let _ = serve_one(&registry, request);
                    }
                    Err(_) if stop.load(Ordering::SeqCst) => break,
                    Err(_) => continue,
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        addr,
        server,
        registry,
        stop,
        workers,
    })
}
