//! JSON-over-HTTP clients.
//!
//! ```text
//! GET  /info      -> {"kind": ..., "dim": E, "model": ...}
//! POST /embed     {"texts": [...]}                 -> {"vectors": [[...]], "dim": E}
//! POST /detect    {"image_b64": ..., "query": ...} -> {"boxes": [[x0,y0,x1,y1]], "scores": [...]}
//! POST /generate  {"prompt": ...}                  -> {"text": ...}
//! ```

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Detections, Detector, EmbeddingCache, EmbeddingProvider, ProgramGenerator, ProviderError, DEFAULT_BOX_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderEndpoint {
    pub base_url: String,
    /// Per-request timeout, seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// First backoff delay, milliseconds; doubles per retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    2
}
fn default_in_flight() -> usize {
    4
}
fn default_backoff() -> u64 {
    100
}

impl ProviderEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout: default_timeout(),
            retries: default_retries(),
            token: None,
            max_in_flight: default_in_flight(),
            backoff_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(ProviderError::Unavailable(format!("{}: timeout must be positive", self.base_url)));
        }
        if self.max_in_flight == 0 {
            return Err(ProviderError::Unavailable(format!("{}: max_in_flight must be positive", self.base_url)));
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path.trim_start_matches('/'))
    }
}

struct Gate {
    in_flight: Mutex<usize>,
    cv: Condvar,
    cap: usize,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.cap {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Retry(String),
    Fatal(ProviderError),
}

/// Shared request machinery: retries with exponential backoff and an in-flight cap.
pub struct HttpTransport {
    endpoint: ProviderEndpoint,
    agent: ureq::Agent,
    gate: Gate,
    attempts: AtomicUsize,
}

impl HttpTransport {
    pub fn new(endpoint: ProviderEndpoint) -> Result<Self, ProviderError> {
        endpoint.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout)))
            .http_status_as_error(false)
            .build()
            .into();
        let cap = endpoint.max_in_flight;
        Ok(Self { endpoint, agent, gate: Gate { in_flight: Mutex::new(0), cv: Condvar::new(), cap }, attempts: AtomicUsize::new(0) })
    }

    pub fn endpoint(&self) -> &ProviderEndpoint {
        &self.endpoint
    }

    /// Total HTTP attempts made so far, including retries.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::Relaxed)
    }

    fn once<T: DeserializeOwned>(&self, path: &str, body: Option<&serde_json::Value>) -> Result<T, Attempt> {
        self.attempts.fetch_add(1, Ordering::Relaxed);
        let url = self.endpoint.url(path);
        let auth = self.endpoint.token.as_ref().map(|t| format!("Bearer {t}"));
        let resp = match body {
            Some(b) => {
                let mut req = self.agent.post(&url);
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                req.send_json(b)
            }
            None => {
                let mut req = self.agent.get(&url);
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                req.call()
            }
        };
        let resp = resp.map_err(|e| Attempt::Retry(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp.into_body().read_to_string().map_err(|e| Attempt::Retry(format!("{url}: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(ProviderError::MalformedResponse(format!("{url}: {e}")))),
            408 | 429 | 500..=599 => Err(Attempt::Retry(format!("{url}: HTTP {status}"))),
            _ => Err(Attempt::Fatal(ProviderError::Unavailable(format!("{url}: HTTP {status}")))),
        }
    }

    pub fn request<T: DeserializeOwned>(&self, path: &str, body: Option<&serde_json::Value>) -> Result<T, ProviderError> {
        let _slot = self.gate.enter();
        let mut last = String::new();
        for attempt in 0..=self.endpoint.retries {
            if attempt > 0 {
                let delay = self.endpoint.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.once(path, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => last = msg,
            }
        }
        Err(ProviderError::Unavailable(format!("{} attempt(s) failed; last: {last}", self.endpoint.retries + 1)))
    }
}

#[derive(Debug, Clone, Deserialize)]
struct Info {
    #[serde(default)]
    #[allow(dead_code)]
    kind: String,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    model: String,
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f32>>,
    dim: usize,
}

/// Remote text embedder with a `(model, text)` cache.
pub struct HttpEmbedder {
    transport: HttpTransport,
    info: OnceLock<(String, usize)>,
    cache: EmbeddingCache,
    network_calls: AtomicUsize,
}

impl HttpEmbedder {
    pub fn new(endpoint: ProviderEndpoint) -> Result<Self, ProviderError> {
        Ok(Self { transport: HttpTransport::new(endpoint)?, info: OnceLock::new(), cache: EmbeddingCache::default(), network_calls: AtomicUsize::new(0) })
    }

    pub fn transport(&self) -> &HttpTransport {
        &self.transport
    }

    /// Embedding requests that reached the network (cache misses).
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    fn info(&self) -> Result<&(String, usize), ProviderError> {
        if let Some(i) = self.info.get() {
            return Ok(i);
        }
        let info: Info = self.transport.request("info", None)?;
        let dim = info.dim.ok_or_else(|| ProviderError::MalformedResponse("/info lacks dim".into()))?;
        let model = if info.model.is_empty() { self.transport.endpoint().base_url.clone() } else { info.model };
        Ok(self.info.get_or_init(|| (model, dim)))
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn model_id(&self) -> &str {
        self.info().map(|i| i.0.as_str()).unwrap_or("unknown")
    }

    fn dim(&self) -> Result<usize, ProviderError> {
        self.info().map(|i| i.1)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let (model, dim) = self.info()?.clone();
        let mut seen = std::collections::HashSet::new();
        let missing: Vec<String> =
            texts.iter().filter(|t| self.cache.get(&model, t).is_none() && seen.insert(t.as_str())).cloned().collect();
        if !missing.is_empty() {
            self.network_calls.fetch_add(1, Ordering::Relaxed);
            let reply: EmbedReply = self.transport.request("embed", Some(&json!({ "texts": missing })))?;
            if reply.vectors.len() != missing.len() {
                return Err(ProviderError::MalformedResponse(format!("{} vectors for {} texts", reply.vectors.len(), missing.len())));
            }
            if reply.dim != dim {
                return Err(ProviderError::DimensionMismatch { expected: dim, got: reply.dim });
            }
            for (t, v) in missing.iter().zip(reply.vectors) {
                if v.len() != dim {
                    return Err(ProviderError::DimensionMismatch { expected: dim, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(ProviderError::MalformedResponse("non-finite embedding entry".into()));
                }
                self.cache.insert(&model, t, v);
            }
        }
        Ok(texts.iter().map(|t| self.cache.get(&model, t).expect("filled above")).collect())
    }
}

#[derive(Deserialize)]
struct DetectReply {
    boxes: Vec<[f64; 4]>,
    scores: Vec<f64>,
}

pub struct HttpDetector {
    transport: HttpTransport,
    threshold: f64,
}

impl HttpDetector {
    pub fn new(endpoint: ProviderEndpoint) -> Result<Self, ProviderError> {
        Ok(Self { transport: HttpTransport::new(endpoint)?, threshold: DEFAULT_BOX_THRESHOLD })
    }

    /// Client-side floor applied on top of the service threshold.
    pub fn with_threshold(mut self, t: f64) -> Self {
        self.threshold = t;
        self
    }

    pub fn transport(&self) -> &HttpTransport {
        &self.transport
    }
}

impl Detector for HttpDetector {
    fn detect(&self, png: &[u8], query: &str) -> Result<Detections, ProviderError> {
        let b64 = base64::engine::general_purpose::STANDARD.encode(png);
        let reply: DetectReply = self.transport.request("detect", Some(&json!({ "image_b64": b64, "query": query })))?;
        if reply.boxes.len() != reply.scores.len() {
            return Err(ProviderError::MalformedResponse("boxes and scores differ in length".into()));
        }
        for b in &reply.boxes {
            if !(b.iter().all(|v| v.is_finite()) && b[0] < b[2] && b[1] < b[3]) {
                return Err(ProviderError::MalformedResponse(format!("degenerate box {b:?}")));
            }
        }
        if reply.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(ProviderError::MalformedResponse("score outside [0, 1]".into()));
        }
        Ok(Detections { boxes: reply.boxes, scores: reply.scores }.normalized(self.threshold))
    }
}

#[derive(Deserialize)]
struct GenerateReply {
    text: String,
}

pub struct HttpGenerator {
    transport: HttpTransport,
}

impl HttpGenerator {
    pub fn new(endpoint: ProviderEndpoint) -> Result<Self, ProviderError> {
        Ok(Self { transport: HttpTransport::new(endpoint)? })
    }

    pub fn transport(&self) -> &HttpTransport {
        &self.transport
    }
}

impl ProgramGenerator for HttpGenerator {
    fn generate(&self, prompt: &str) -> Result<String, ProviderError> {
        let reply: GenerateReply = self.transport.request("generate", Some(&json!({ "prompt": prompt })))?;
        Ok(reply.text)
    }
}
