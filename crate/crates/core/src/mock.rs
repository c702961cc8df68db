//! Deterministic stand-ins for the chat and embedding endpoints.
//!
//! Chat replies are scripted: a rule matches on a substring of, or the
//! fingerprint (truncated SHA-256 hex) of, the final user message and replays
//! its response sequence, repeating the last entry. `prelude` statuses are
//! returned to the first requests regardless of content, which makes retry
//! behavior observable. Embeddings are a signed hash-bucketed bag of words.
//! Every request is logged; `GET /_log` returns the log as JSON.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockKind {
    Chat,
    Embed,
}

impl std::str::FromStr for MockKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chat" => Ok(MockKind::Chat),
            "embed" => Ok(MockKind::Embed),
            other => Err(format!("unknown mock kind `{other}` (expected chat or embed)")),
        }
    }
}

/// Reply to chat requests no rule matches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefaultReply {
    #[default]
    No,
    Yes,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockResponse {
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default)]
    pub content: Option<String>,
}

fn ok_status() -> u16 {
    200
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub fingerprint: Option<String>,
    pub responses: Vec<MockResponse>,
}

impl MockRule {
    fn matches(&self, message: &str, fingerprint: &str) -> bool {
        let by_text = self.contains.as_deref().is_none_or(|s| message.contains(s));
        let by_fp = self.fingerprint.as_deref().is_none_or(|f| f == fingerprint);
        by_text && by_fp && (self.contains.is_some() || self.fingerprint.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub prelude: Vec<u16>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: DefaultReply,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    /// Per-request embedding dimensions, overriding `dimension` for the
    /// first requests.
    #[serde(default)]
    pub dimensions: Vec<usize>,
}

fn default_dimension() -> usize {
    64
}

impl Default for MockScript {
    fn default() -> Self {
        MockScript {
            prelude: Vec::new(),
            rules: Vec::new(),
            default: DefaultReply::No,
            delay_ms: 0,
            dimension: default_dimension(),
            dimensions: Vec::new(),
        }
    }
}

impl MockScript {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let s = std::fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Rule answering the question containing `needle` with a verdict.
    pub fn answer(mut self, needle: &str, answer: &str, reason: &str) -> Self {
        self.rules.push(MockRule {
            contains: Some(needle.to_string()),
            fingerprint: None,
            responses: vec![MockResponse {
                status: 200,
                content: Some(crate::llm::answer_json(answer, reason)),
            }],
        });
        self
    }

    /// Rule replying with raw content.
    pub fn reply(mut self, needle: &str, content: &str) -> Self {
        self.rules.push(MockRule {
            contains: Some(needle.to_string()),
            fingerprint: None,
            responses: vec![MockResponse { status: 200, content: Some(content.to_string()) }],
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: usize,
    pub path: String,
    pub status: u16,
    pub fingerprint: String,
    /// Final user message (chat) or the number of inputs (embed).
    pub message: String,
    pub inputs: usize,
}

/// Truncated SHA-256 hex of a message; what `fingerprint` rules match on.
pub fn fingerprint(message: &str) -> String {
    hex::encode(&Sha256::digest(message.as_bytes())[..16])
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed bag-of-words projection into `dimension` buckets.
pub fn mock_embedding(text: &str, dimension: usize) -> Vec<f64> {
    let mut v = vec![0.0; dimension.max(1)];
    for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let h = fnv1a(&crate::thesaurus::fold_case(token));
        let bucket = (h % v.len() as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    v
}

struct MockState {
    kind: MockKind,
    script: MockScript,
    rule_hits: Mutex<HashMap<usize, usize>>,
    log: Mutex<Vec<LogEntry>>,
    log_file: Option<Mutex<File>>,
}

impl MockState {
    fn record(&self, mut entry: LogEntry) -> usize {
        let mut log = self.log.lock().expect("log lock");
        entry.seq = log.len();
        if let Some(f) = &self.log_file {
            let mut f = f.lock().expect("log file lock");
            let _ = writeln!(f, "{}", serde_json::to_string(&entry).expect("log entry"));
            let _ = f.flush();
        }
        log.push(entry);
        log.len() - 1
    }
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Bind and serve in the background. Fails if the address is in use.
    pub async fn start(
        kind: MockKind,
        script: MockScript,
        bind: SocketAddr,
        log_path: Option<PathBuf>,
    ) -> std::io::Result<MockServer> {
        let log_file = match log_path {
            Some(p) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?)),
            None => None,
        };
        let state = Arc::new(MockState {
            kind,
            script,
            rule_hits: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            log_file,
        });
        let listener = TcpListener::bind(bind).await?;
        let addr = listener.local_addr()?;
        let app = axum::Router::new().fallback(handle).with_state(state.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(MockServer { addr, state, shutdown: Some(tx), task: Some(task) })
    }

    /// Start on an ephemeral local port.
    pub async fn local(kind: MockKind, script: MockScript) -> std::io::Result<MockServer> {
        Self::start(kind, script, SocketAddr::from(([127, 0, 0, 1], 0)), None).await
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL for endpoint settings, e.g. `http://127.0.0.1:4000/v1`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn log(&self) -> Vec<LogEntry> {
        self.state.log.lock().expect("log lock").clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.log.lock().expect("log lock").len()
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }

    /// Serve until the process is stopped.
    pub async fn wait(mut self) {
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

fn error_response(status: u16) -> Response {
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (code, Json(json!({"error": {"message": format!("scripted status {status}")}}))).into_response()
}

async fn handle(State(state): State<Arc<MockState>>, method: Method, uri: Uri, body: Bytes) -> Response {
    let path = uri.path().to_string();
    if method == Method::GET {
        return match path.as_str() {
            "/_log" => Json(state.log.lock().expect("log lock").clone()).into_response(),
            "/_health" => "ok".into_response(),
            _ => StatusCode::NOT_FOUND.into_response(),
        };
    }
    let Ok(request) = serde_json::from_slice::<Value>(&body) else {
        return (StatusCode::BAD_REQUEST, "request body is not JSON").into_response();
    };
    if state.script.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(state.script.delay_ms)).await;
    }
    match state.kind {
        MockKind::Chat => chat_reply(&state, path, &request),
        MockKind::Embed => embed_reply(&state, path, &request),
    }
}

fn prelude_status(state: &MockState) -> Option<u16> {
    let seq = state.log.lock().expect("log lock").len();
    state.script.prelude.get(seq).copied().filter(|&s| s != 200)
}

fn chat_reply(state: &MockState, path: String, request: &Value) -> Response {
    let message = request["messages"]
        .as_array()
        .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_string();
    let fp = fingerprint(&message);
    let mut entry = LogEntry { seq: 0, path, status: 200, fingerprint: fp.clone(), message, inputs: 1 };

    if let Some(status) = prelude_status(state) {
        entry.status = status;
        state.record(entry);
        return error_response(status);
    }

    let scripted = state
        .script
        .rules
        .iter()
        .enumerate()
        .find(|(_, r)| r.matches(&entry.message, &fp))
        .map(|(i, rule)| {
            let mut hits = state.rule_hits.lock().expect("hits lock");
            let n = hits.entry(i).or_insert(0);
            let resp = rule.responses[(*n).min(rule.responses.len().saturating_sub(1))].clone();
            *n += 1;
            resp
        });
    let (status, content) = match scripted {
        Some(MockResponse { status, content }) => (status, content.unwrap_or_default()),
        None => {
            let content = match state.script.default {
                DefaultReply::No => crate::llm::answer_json("No", "unscripted request"),
                DefaultReply::Yes => crate::llm::answer_json("Yes", "unscripted request"),
                DefaultReply::Malformed => "I am not able to answer that.".to_string(),
            };
            (200, content)
        }
    };
    entry.status = status;
    state.record(entry);
    if status != 200 {
        return error_response(status);
    }
    Json(json!({
        "object": "chat.completion",
        "model": request["model"],
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

fn embed_reply(state: &MockState, path: String, request: &Value) -> Response {
    let inputs: Vec<String> = request["input"]
        .as_array()
        .map(|a| a.iter().map(|v| v.as_str().unwrap_or_default().to_string()).collect())
        .unwrap_or_default();
    let mut entry = LogEntry {
        seq: 0,
        path,
        status: 200,
        fingerprint: fingerprint(&inputs.join("\n")),
        message: String::new(),
        inputs: inputs.len(),
    };
    if let Some(status) = prelude_status(state) {
        entry.status = status;
        state.record(entry);
        return error_response(status);
    }
    let seq = state.record(entry);
    let dim = state.script.dimensions.get(seq).copied().unwrap_or(state.script.dimension);
    // Reversed on purpose: clients must re-sort by index.
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| json!({"object": "embedding", "index": i, "embedding": mock_embedding(t, dim)}))
        .collect();
    Json(json!({"object": "list", "model": request["model"], "data": data})).into_response()
}
