//! Sentence embeddings and the cosine kernel.
//!
//! Providers return raw vectors; [`Embedder`] normalizes them to unit length,
//! checks dimensions and caches by `(model id, text)`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::parallel::fan_out;
use crate::provider::{HttpClient, ProviderError, RetryPolicy};
use crate::store::{hash_parts, PipelineStore};
use crate::text::alphanumeric_words;

pub const DEFAULT_MOCK_DIM: usize = 16;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("cannot embed an empty text")]
    EmptyText,
    #[error("provider returned {actual} vectors for {expected} texts")]
    CountMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// A finite real vector with its Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    norm: f64,
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl EmbeddingVector {
    /// Wraps `values` as-is (no normalization).
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = l2(&values);
        Ok(Self { values, norm })
    }

    /// Scales `values` to unit length; the zero vector passes through.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        let raw = Self::new(values)?;
        if raw.norm == 0.0 {
            return Ok(raw);
        }
        let values: Vec<f64> = raw.values.iter().map(|v| v / raw.norm).collect();
        let norm = l2(&values);
        Ok(Self { values, norm })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }
}

/// `dot(u, v) / (‖u‖‖v‖)`, clamped to `[-1, 1]`; 0 when either vector is zero.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if u.dim() != v.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: u.dim(),
            actual: v.dim(),
        });
    }
    if u.is_zero() || v.is_zero() {
        return Ok(0.0);
    }
    let dot: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok((dot / (u.norm * v.norm)).clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;

    /// One raw vector per input text, in order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic bag-of-buckets embedding: each lowercase alphanumeric word
/// adds one to bucket `fnv1a64(word) % dim`.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    model_id: String,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "mock embedding dimension must be positive");
        Self {
            dim,
            model_id: format!("mock-bucket-{dim}"),
        }
    }

    pub fn raw(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for word in alphanumeric_words(text) {
            v[(fnv1a64(word.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        v
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_MOCK_DIM)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.raw(t)).collect())
    }
}

/// OpenAI-compatible `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct LiveEmbedder {
    client: HttpClient,
    model: String,
}

impl LiveEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: String, timeout: Duration) -> Self {
        Self {
            client: HttpClient::new(base_url, api_key, timeout),
            model: model.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl EmbeddingProvider for LiveEmbedder {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let body = json!({ "model": self.model, "input": texts });
        let value = self.client.post_json("embeddings", &body)?;
        let mut resp: EmbeddingsResponse =
            serde_json::from_value(value).map_err(|e| ProviderError::InvalidResponse(format!("embeddings: {e}")))?;
        if resp.data.iter().all(|d| d.index.is_some()) {
            resp.data.sort_by_key(|d| d.index);
        }
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

/// Caching, normalizing front end over an [`EmbeddingProvider`].
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    retry: RetryPolicy,
    batch_size: usize,
    max_in_flight: usize,
    cache: Mutex<HashMap<String, EmbeddingVector>>,
    disk: Option<PipelineStore>,
    dim: Mutex<Option<usize>>,
    provider_calls: AtomicUsize,
}

const DISK_CACHE_STAGE: &str = "embedding-cache";

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            provider,
            retry: RetryPolicy::default(),
            batch_size: 64,
            max_in_flight: 4,
            cache: Mutex::new(HashMap::new()),
            disk: None,
            dim: Mutex::new(None),
            provider_calls: AtomicUsize::new(0),
        }
    }

    pub fn mock(dim: usize) -> Self {
        Self::new(Arc::new(MockEmbedder::new(dim)))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    /// Also persist vectors under `<store>/embedding-cache/`.
    pub fn with_disk_cache(mut self, store: PipelineStore) -> Self {
        self.disk = Some(store);
        self
    }

    pub fn model_id(&self) -> &str {
        self.provider.model_id()
    }

    /// Number of batches sent to the underlying provider so far.
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::Relaxed)
    }

    fn cache_key(&self, text: &str) -> String {
        hash_parts([self.provider.model_id(), text])
    }

    fn check_dim(&self, actual: usize) -> Result<(), EmbeddingError> {
        let mut dim = self.dim.lock().expect("dimension lock");
        match *dim {
            Some(expected) if expected != actual => Err(EmbeddingError::DimensionMismatch { expected, actual }),
            Some(_) => Ok(()),
            None => {
                *dim = Some(actual);
                Ok(())
            }
        }
    }

    fn lookup(&self, key: &str) -> Option<EmbeddingVector> {
        if let Some(v) = self.cache.lock().expect("embedding cache").get(key) {
            return Some(v.clone());
        }
        let store = self.disk.as_ref()?;
        let bytes = store.get(DISK_CACHE_STAGE, key).ok()??;
        let v: EmbeddingVector = serde_json::from_slice(&bytes).ok()?;
        self.cache
            .lock()
            .expect("embedding cache")
            .insert(key.to_string(), v.clone());
        Some(v)
    }

    fn remember(&self, key: String, v: &EmbeddingVector) {
        if let Some(store) = &self.disk {
            let bytes = serde_json::to_vec(v).expect("vector serializes");
            if let Err(e) = store.put(DISK_CACHE_STAGE, &key, &bytes) {
                log::warn!("embedding disk cache write failed: {e}");
            }
        }
        self.cache.lock().expect("embedding cache").insert(key, v.clone());
    }

    /// Embeds `texts`, one unit-normalized vector per text in input order.
    /// Duplicate and previously seen texts are served from the cache.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let keys: Vec<String> = texts.iter().map(|t| self.cache_key(t)).collect();
        let mut missing: Vec<(String, String)> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (key, text) in keys.iter().zip(texts) {
            if self.lookup(key).is_none() && seen.insert(key.clone()) {
                missing.push((key.clone(), text.clone()));
            }
        }

        let batches: Vec<&[(String, String)]> = missing.chunks(self.batch_size).collect();
        let results = fan_out(&batches, self.max_in_flight, |batch| {
            let inputs: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
            self.provider_calls.fetch_add(1, Ordering::Relaxed);
            let raw = self.retry.run(|| match self.provider.embed_batch(&inputs) {
                Ok(v) => Ok(Ok(v)),
                Err(EmbeddingError::Provider(p)) => Err(p),
                Err(other) => Ok(Err(other)),
            })??;
            if raw.len() != inputs.len() {
                return Err(EmbeddingError::CountMismatch {
                    expected: inputs.len(),
                    actual: raw.len(),
                });
            }
            let first = raw.first().map_or(0, Vec::len);
            if let Some(bad) = raw.iter().find(|v| v.len() != first) {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: first,
                    actual: bad.len(),
                });
            }
            raw.into_iter()
                .map(EmbeddingVector::normalized)
                .collect::<Result<Vec<_>, _>>()
        });

        for (batch, result) in batches.iter().zip(results) {
            let vectors = result?;
            for ((key, _), v) in batch.iter().zip(vectors) {
                self.check_dim(v.dim())?;
                self.remember(key.clone(), &v);
            }
        }

        keys.iter()
            .map(|k| {
                let v = self.lookup(k).expect("embedded above");
                self.check_dim(v.dim())?;
                Ok(v)
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        Ok(self.embed_texts(&[text.to_string()])?.remove(0))
    }
}
