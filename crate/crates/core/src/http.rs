//! JSON-over-HTTP client shared by the chat and embedding endpoints: bounded
//! in-flight requests, a requests-per-minute throttle, and retries with
//! exponential backoff on transport errors, 429 and 5xx.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{Mutex, Semaphore};
use tokio::time::Instant;

use crate::error::EndpointError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointSettings {
    pub base_url: String,
    pub model: String,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub max_concurrency: usize,
    /// 0 disables throttling.
    pub requests_per_minute: u32,
    pub retry_base_ms: u64,
    pub retry_max_ms: u64,
    pub timeout_secs: u64,
}

impl Default for EndpointSettings {
    fn default() -> Self {
        EndpointSettings {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            max_retries: 3,
            max_concurrency: 8,
            requests_per_minute: 0,
            retry_base_ms: 500,
            retry_max_ms: 30_000,
            timeout_secs: 120,
        }
    }
}

/// Spaces request starts at least `60s / rpm` apart.
#[derive(Debug)]
struct Throttle {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl Throttle {
    fn new(rpm: u32) -> Self {
        let interval = (rpm > 0).then(|| Duration::from_secs_f64(60.0 / rpm as f64));
        Throttle { interval, next: Mutex::new(Instant::now()) }
    }

    async fn wait(&self) {
        let Some(interval) = self.interval else { return };
        let slot = {
            let mut next = self.next.lock().await;
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot
        };
        tokio::time::sleep_until(slot).await;
    }
}

#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    http: reqwest::Client,
    url: String,
    api_key: Option<String>,
    settings: EndpointSettings,
    permits: Arc<Semaphore>,
    throttle: Arc<Throttle>,
    requests: Arc<AtomicU64>,
}

/// Successful response plus how many retries it took.
#[derive(Debug, Clone)]
pub struct Reply {
    pub body: Value,
    pub retries: u32,
}

impl JsonEndpoint {
    /// `path` is appended to `settings.base_url`, e.g. `chat/completions`.
    pub fn new(settings: EndpointSettings, path: &str, api_key: Option<String>) -> Self {
        let url = format!("{}/{}", settings.base_url.trim_end_matches('/'), path);
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs.max(1)))
            .build()
            .expect("http client");
        JsonEndpoint {
            http,
            url,
            api_key: api_key.filter(|k| !k.is_empty()),
            permits: Arc::new(Semaphore::new(settings.max_concurrency.max(1))),
            throttle: Arc::new(Throttle::new(settings.requests_per_minute)),
            settings,
            requests: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn settings(&self) -> &EndpointSettings {
        &self.settings
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// HTTP requests issued so far, retries included.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn backoff(&self, retry: u32) -> Duration {
        let ms = self
            .settings
            .retry_base_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.settings.retry_max_ms);
        Duration::from_millis(ms)
    }

    pub async fn post(&self, body: &Value) -> Result<Reply, EndpointError> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let attempts = self.settings.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                tokio::time::sleep(self.backoff(attempt - 1)).await;
            }
            self.throttle.wait().await;
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut req = self.http.post(&self.url).json(body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send().await {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    log::debug!("{}: attempt {} failed: {last_error}", self.url, attempt + 1);
                    continue;
                }
            };
            let status = resp.status();
            let text = match resp.text().await {
                Ok(t) => t,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            if status.is_success() {
                let body = serde_json::from_str(&text)
                    .map_err(|e| EndpointError::Protocol(format!("invalid JSON body: {e}")))?;
                return Ok(Reply { body, retries: attempt });
            }
            if status.as_u16() == 429 || status.is_server_error() {
                last_error = format!("HTTP {status}");
                log::debug!("{}: attempt {} got {status}", self.url, attempt + 1);
                continue;
            }
            return Err(EndpointError::Rejected { status: status.as_u16(), body: text });
        }
        Err(EndpointError::Unavailable { attempts, last_error })
    }
}
