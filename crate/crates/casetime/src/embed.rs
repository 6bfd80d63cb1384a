//! Text embedding backends and cosine distance.
//!
//! Two backends implement [`Embedder`]: a remote HTTP service speaking the
//! common JSON embeddings schema (batch of strings in, batch of float arrays
//! out), and an offline character-trigram fallback so everything downstream
//! runs without network or credentials. Vectors from one `embed` call are
//! mutually comparable; the trigram backend builds its vocabulary per batch.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Duration;
use thiserror::Error;

use crate::util::{atomic_write, sha256_hex, Secret};

/// Backend tag for the offline trigram embedder.
pub const TRIGRAM_BACKEND_TAG: &str = "trigram-fallback";

/// One embedding. `backend_tag` names the producing model (or fallback) so
/// reports can record which space distances were computed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub components: Vec<f64>,
    pub backend_tag: String,
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cosine distance of a zero vector is undefined")]
    ZeroVector,
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding endpoint error: {0}")]
    Transport(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Maps a batch of texts to one vector each.
pub trait Embedder: Sync {
    /// Tag recorded in reports, e.g. a model name or `trigram-fallback`.
    fn backend_tag(&self) -> &str;
    /// One vector per input text, in input order. Vectors from a single
    /// call share a space and may be compared with [`cosine_distance`].
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

/// Cosine distance `1 - u.v / (|u||v|)`, clamped to `[0, 2]`.
///
/// Componentwise-identical vectors return exactly 0, so identical texts
/// are matchable even at a zero threshold.
pub fn cosine_distance(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbedError> {
    if u.components.len() != v.components.len() {
        return Err(EmbedError::DimensionMismatch {
            left: u.components.len(),
            right: v.components.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.components.iter().zip(&v.components) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    if u.components == v.components {
        return Ok(0.0);
    }
    let d = 1.0 - dot / (nu.sqrt() * nv.sqrt());
    Ok(d.clamp(0.0, 2.0))
}

/// Offline fallback: L2-normalized character-trigram counts over the
/// lowercased text. Texts shorter than three characters use the whole text
/// as their single token, so no non-empty text maps to the zero vector.
/// Deterministic: the batch vocabulary is sorted.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

fn trigram_tokens(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    if chars.len() < 3 {
        return vec![lower];
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

impl Embedder for TrigramEmbedder {
    fn backend_tag(&self) -> &str {
        TRIGRAM_BACKEND_TAG
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let token_lists: Vec<Vec<String>> = texts.iter().map(|t| trigram_tokens(t)).collect();
        let vocab: BTreeSet<&String> = token_lists.iter().flatten().collect();
        let index: HashMap<&String, usize> =
            vocab.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        Ok(token_lists
            .iter()
            .map(|tokens| {
                let mut components = vec![0.0; index.len()];
                for token in tokens {
                    components[index[token]] += 1.0;
                }
                let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for c in &mut components {
                        *c /= norm;
                    }
                }
                EmbeddingVector {
                    components,
                    backend_tag: TRIGRAM_BACKEND_TAG.to_string(),
                }
            })
            .collect())
    }
}

/// Canned text-to-vector map, for tests and offline demos.
#[derive(Debug, Clone, Default)]
pub struct FixtureEmbedder {
    pub vectors: HashMap<String, Vec<f64>>,
    pub tag: String,
}

impl Embedder for FixtureEmbedder {
    fn backend_tag(&self) -> &str {
        if self.tag.is_empty() {
            "fixture"
        } else {
            &self.tag
        }
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(*t)
                    .cloned()
                    .map(|components| EmbeddingVector {
                        components,
                        backend_tag: self.backend_tag().to_string(),
                    })
                    .ok_or_else(|| EmbedError::Transport(format!("no fixture vector for `{t}`")))
            })
            .collect()
    }
}

/// Remote embedding client. Requests are batched, retried with exponential
/// backoff, and optionally cached on disk keyed by `(model, text)` digest.
pub struct HttpEmbedder {
    pub endpoint_url: String,
    pub model: String,
    pub api_key: Option<Secret>,
    pub batch_size: usize,
    pub max_retries: u32,
    pub retry_backoff: Duration,
    pub cache_dir: Option<PathBuf>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEmbedder")
            .field("endpoint_url", &self.endpoint_url)
            .field("model", &self.model)
            .field("api_key", &self.api_key)
            .field("batch_size", &self.batch_size)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(endpoint_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpEmbedder {
            endpoint_url: endpoint_url.into(),
            model: model.into(),
            api_key: None,
            batch_size: 64,
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
            cache_dir: None,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(60))
                .build(),
        }
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(Secret::new(key));
        self
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|dir| dir.join(format!("{}.json", sha256_hex(&[&self.model, text]))))
    }

    fn cache_get(&self, text: &str) -> Option<Vec<f64>> {
        let path = self.cache_path(text)?;
        let raw = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&raw).ok()
    }

    fn cache_put(&self, text: &str, components: &[f64]) {
        if let Some(path) = self.cache_path(text) {
            if let Ok(json) = serde_json::to_string(components) {
                let _ = atomic_write(&path, json.as_bytes());
            }
        }
    }

    fn request_batch(&self, batch: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = serde_json::to_string(&EmbedRequest {
            model: &self.model,
            input: batch,
        })
        .expect("embedding request serializes");
        let mut attempt = 0u32;
        loop {
            let mut request = self
                .agent
                .post(&self.endpoint_url)
                .set("content-type", "application/json");
            if let Some(key) = &self.api_key {
                request = request.set("authorization", &format!("Bearer {}", key.expose()));
            }
            match request.send_string(&body) {
                Ok(response) => {
                    let raw = response
                        .into_string()
                        .map_err(|e| EmbedError::Transport(format!("bad response body: {e}")))?;
                    let parsed: EmbedResponse = serde_json::from_str(&raw)
                        .map_err(|e| EmbedError::Transport(format!("bad response body: {e}")))?;
                    if parsed.data.len() != batch.len() {
                        return Err(EmbedError::Transport(format!(
                            "endpoint returned {} vectors for {} inputs",
                            parsed.data.len(),
                            batch.len()
                        )));
                    }
                    return Ok(parsed.data.into_iter().map(|d| d.embedding).collect());
                }
                Err(ureq::Error::Status(code, _)) if code == 401 || code == 403 => {
                    return Err(EmbedError::Transport(format!("auth rejected ({code})")));
                }
                Err(e) => {
                    if attempt >= self.max_retries {
                        return Err(EmbedError::Transport(e.to_string()));
                    }
                    std::thread::sleep(self.retry_backoff * 2u32.pow(attempt.min(8)));
                    attempt += 1;
                }
            }
        }
    }
}

impl Embedder for HttpEmbedder {
    fn backend_tag(&self) -> &str {
        &self.model
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut resolved: HashMap<&str, Vec<f64>> = HashMap::new();
        let mut missing: Vec<&str> = Vec::new();
        for text in texts {
            if resolved.contains_key(*text) || missing.contains(text) {
                continue;
            }
            match self.cache_get(text) {
                Some(v) => {
                    resolved.insert(*text, v);
                }
                None => missing.push(*text),
            }
        }
        for batch in missing.chunks(self.batch_size.max(1)) {
            let vectors = self.request_batch(batch)?;
            for (text, components) in batch.iter().zip(vectors) {
                self.cache_put(text, &components);
                resolved.insert(*text, components);
            }
        }
        texts
            .iter()
            .map(|t| {
                let components = resolved[*t].clone();
                if components.is_empty() {
                    return Err(EmbedError::Transport(format!("empty vector for `{t}`")));
                }
                Ok(EmbeddingVector {
                    components,
                    backend_tag: self.model.clone(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(components: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector {
            components,
            backend_tag: "test".into(),
        }
    }

    #[test]
    fn cosine_anchor_cases() {
        let u = unit(vec![1.0, 2.0, 3.0]);
        assert_eq!(cosine_distance(&u, &u).unwrap(), 0.0);
        let e1 = unit(vec![1.0, 0.0]);
        let e2 = unit(vec![0.0, 1.0]);
        assert_eq!(cosine_distance(&e1, &e2).unwrap(), 1.0);
        let neg = unit(vec![-1.0, 0.0]);
        assert_eq!(cosine_distance(&e1, &neg).unwrap(), 2.0);
    }

    #[test]
    fn cosine_rejects_bad_inputs() {
        let u = unit(vec![1.0, 0.0]);
        let zero = unit(vec![0.0, 0.0]);
        let short = unit(vec![1.0]);
        assert!(matches!(cosine_distance(&u, &zero), Err(EmbedError::ZeroVector)));
        assert!(matches!(
            cosine_distance(&u, &short),
            Err(EmbedError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn trigram_identical_texts_get_identical_vectors() {
        let out = TrigramEmbedder.embed(&["fever and rash", "fever and rash"]).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(cosine_distance(&out[0], &out[1]).unwrap(), 0.0);
    }

    #[test]
    fn trigram_minimal_case_is_one_hot() {
        let out = TrigramEmbedder.embed(&["abc"]).unwrap();
        assert_eq!(out[0].components, vec![1.0]);
        assert_eq!(out[0].backend_tag, TRIGRAM_BACKEND_TAG);
    }

    #[test]
    fn trigram_short_texts_are_not_zero() {
        let out = TrigramEmbedder.embed(&["ab", "x"]).unwrap();
        for v in &out {
            assert!(v.components.iter().any(|c| *c != 0.0));
        }
    }

    #[test]
    fn trigram_is_case_insensitive() {
        let out = TrigramEmbedder.embed(&["Fever", "fever"]).unwrap();
        assert_eq!(cosine_distance(&out[0], &out[1]).unwrap(), 0.0);
    }

    #[test]
    fn trigram_overlap_has_expected_distance() {
        // "abcd" -> {abc, bcd}, "bcd" -> {bcd}: cos = 1/sqrt(2)
        let out = TrigramEmbedder.embed(&["abcd", "bcd"]).unwrap();
        let d = cosine_distance(&out[0], &out[1]).unwrap();
        let expected = 1.0 - 1.0 / 2.0f64.sqrt();
        assert!((d - expected).abs() < 1e-12);
    }

    #[test]
    fn disjoint_trigram_sets_are_maximally_distant_in_positive_space() {
        let out = TrigramEmbedder.embed(&["fever", "vomit"]).unwrap();
        assert_eq!(cosine_distance(&out[0], &out[1]).unwrap(), 1.0);
    }

    #[test]
    fn fixture_embedder_returns_canned_vectors() {
        let mut vectors = HashMap::new();
        vectors.insert("a".to_string(), vec![1.0, 0.0]);
        let backend = FixtureEmbedder {
            vectors,
            tag: "fixture-model".into(),
        };
        let out = backend.embed(&["a"]).unwrap();
        assert_eq!(out[0].components, vec![1.0, 0.0]);
        assert!(backend.embed(&["b"]).is_err());
    }
}
