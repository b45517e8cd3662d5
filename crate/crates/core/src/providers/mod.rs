//! Model-service protocols: text embedding, object detection and program
//! generation. Each has a JSON-over-HTTP client and a deterministic oracle.

mod http;
mod oracle;

pub use http::{HttpDetector, HttpEmbedder, HttpGenerator, HttpTransport, ProviderEndpoint};
#[cfg(test)]
pub(crate) use oracle::{prompt_ice_count, prompt_query};
pub use oracle::{match_vocabulary, FailurePlan, OracleDetector, OracleEmbedder, StubGenerator, ORACLE_DIM};

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Service-side box confidence threshold used when none is configured.
pub const DEFAULT_BOX_THRESHOLD: f64 = 0.35;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("unknown class label {0:?}")]
    UnknownClass(String),
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn dim(&self) -> Result<usize, ProviderError>;
    /// One unit-free embedding per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
    /// Closed label vocabulary, when the provider has one.
    fn vocabulary(&self) -> Option<Vec<String>> {
        None
    }

    fn embed_one(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        let mut v = self.embed(&[text.to_string()])?;
        v.pop().ok_or_else(|| ProviderError::MalformedResponse("empty embedding list".into()))
    }
}

/// Raw detector output in image pixel coordinates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Detections {
    pub boxes: Vec<[f64; 4]>,
    pub scores: Vec<f64>,
}

impl Detections {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Sort by descending score (ties by position) and drop boxes below `threshold`.
    pub fn normalized(mut self, threshold: f64) -> Self {
        let mut idx: Vec<usize> = (0..self.boxes.len()).filter(|&i| self.scores[i] >= threshold).collect();
        idx.sort_by(|&a, &b| {
            self.scores[b]
                .total_cmp(&self.scores[a])
                .then(self.boxes[a][1].total_cmp(&self.boxes[b][1]))
                .then(self.boxes[a][0].total_cmp(&self.boxes[b][0]))
        });
        self.boxes = idx.iter().map(|&i| self.boxes[i]).collect();
        self.scores = idx.iter().map(|&i| self.scores[i]).collect();
        self
    }
}

pub trait Detector: Send + Sync {
    fn detect(&self, png: &[u8], query: &str) -> Result<Detections, ProviderError>;
}

pub trait ProgramGenerator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, ProviderError>;
}

/// Per-text embedding cache keyed by `(model id, text)`.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    map: Mutex<HashMap<(String, String), Vec<f32>>>,
}

impl EmbeddingCache {
    pub fn get(&self, model: &str, text: &str) -> Option<Vec<f32>> {
        self.map.lock().unwrap().get(&(model.to_string(), text.to_string())).cloned()
    }

    pub fn insert(&self, model: &str, text: &str, v: Vec<f32>) {
        self.map.lock().unwrap().insert((model.to_string(), text.to_string()), v);
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Wraps any embedder with a [`EmbeddingCache`].
pub struct Cached<E> {
    inner: E,
    cache: EmbeddingCache,
}

impl<E: EmbeddingProvider> Cached<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, cache: EmbeddingCache::default() }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: EmbeddingProvider> EmbeddingProvider for Cached<E> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn dim(&self) -> Result<usize, ProviderError> {
        self.inner.dim()
    }

    fn vocabulary(&self) -> Option<Vec<String>> {
        self.inner.vocabulary()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let model = self.inner.model_id().to_string();
        let missing: Vec<String> = texts.iter().filter(|t| self.cache.get(&model, t).is_none()).cloned().collect();
        if !missing.is_empty() {
            let fresh = self.inner.embed(&missing)?;
            for (t, v) in missing.iter().zip(fresh) {
                self.cache.insert(&model, t, v);
            }
        }
        Ok(texts.iter().map(|t| self.cache.get(&model, t).expect("cached above")).collect())
    }
}
