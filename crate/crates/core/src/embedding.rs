//! Text similarity providers.
//!
//! Everything downstream of state extraction consumes similarity through one
//! interface: `sim(a, b) ∈ [0, 1]`, computed as the cosine of two embeddings
//! clamped below at zero. Three backends exist:
//!
//! - `Remote` calls an OpenAI-compatible embeddings endpoint (the deployment
//!   path; configured via `EMBED_ENDPOINT` / `EMBED_MODEL` / `EMBED_API_KEY`).
//! - `HashMock` derives a unit vector deterministically from the text hash;
//!   it behaves like an embedding model with no semantics and makes every
//!   pipeline fully offline and reproducible.
//! - `ExactMatch` scores 1 for texts equal after normalization, else 0.
//!
//! Similarities are clamped at zero because the routing layer multiplies and
//! averages them as satisfaction scores; a negative cosine would make the
//! composite non-monotone in attribute satisfaction.
//!
//! Embeddings are cached per provider under the equality-normalized text, so
//! repeated queries (routing re-asks the same identities and keys heavily)
//! hit no backend.

use std::num::NonZeroUsize;
use std::sync::Arc;

use lru::LruCache;
use parking_lot::{Condvar, Mutex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::normalize;
use crate::seeding;

/// Default bound on cached embeddings per provider.
pub const DEFAULT_CACHE_CAPACITY: usize = 100_000;
/// Default bound on concurrent remote embedding calls.
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("input collection is empty")]
    EmptyInput,
    #[error("embedding backend failure: {message}")]
    Backend { message: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("missing configuration: {0}")]
    MissingConfig(String),
}

/// A fixed-length real vector produced by a provider.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Arc<Vec<f64>>,
}

impl EmbeddingVector {
    fn new(values: Vec<f64>) -> Self {
        Self {
            values: Arc::new(values),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// An (anchor, paraphrase, contradiction) probe item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

impl Triplet {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if normalize::is_blank(&self.anchor)
            || normalize::is_blank(&self.positive)
            || normalize::is_blank(&self.negative)
        {
            return Err(EmbeddingError::EmptyText);
        }
        Ok(())
    }
}

/// Cosine similarity clamped into [0, 1]. Zero-norm inputs score 0.
pub fn clamped_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Counting semaphore bounding in-flight remote calls.
struct InFlightGate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl InFlightGate {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightPermit<'_> {
        let mut available = self.permits.lock();
        while *available == 0 {
            self.freed.wait(&mut available);
        }
        *available -= 1;
        InFlightPermit { gate: self }
    }
}

struct InFlightPermit<'a> {
    gate: &'a InFlightGate,
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock() += 1;
        self.gate.freed.notify_one();
    }
}

/// Configuration for the OpenAI-compatible remote backend.
#[derive(Debug, Clone)]
pub struct RemoteEmbeddingConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`. The provider appends
    /// `/embeddings`.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Expected vector length. When `None` the first response fixes it.
    pub dimension: Option<usize>,
    pub max_in_flight: usize,
    /// Transport-level retries per call.
    pub retries: usize,
    pub timeout_secs: u64,
}

impl RemoteEmbeddingConfig {
    pub fn new(endpoint: &str, model: &str) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: None,
            dimension: None,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            retries: 2,
            timeout_secs: 60,
        }
    }

    /// Read `EMBED_ENDPOINT`, `EMBED_MODEL`, and `EMBED_API_KEY`.
    pub fn from_env() -> Result<Self, EmbeddingError> {
        let endpoint = std::env::var("EMBED_ENDPOINT")
            .map_err(|_| EmbeddingError::MissingConfig("EMBED_ENDPOINT".into()))?;
        let model = std::env::var("EMBED_MODEL")
            .map_err(|_| EmbeddingError::MissingConfig("EMBED_MODEL".into()))?;
        let mut cfg = Self::new(&endpoint, &model);
        cfg.api_key = std::env::var("EMBED_API_KEY")
            .ok()
            .filter(|k| !k.is_empty());
        Ok(cfg)
    }
}

struct RemoteState {
    config: RemoteEmbeddingConfig,
    client: reqwest::blocking::Client,
    gate: InFlightGate,
    /// Dimension once observed (or declared up front).
    dimension: Mutex<Option<usize>>,
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteState {
    fn fetch(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let _permit = self.gate.acquire();
        let url = format!("{}/embeddings", self.config.endpoint);
        let mut last_err = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(std::time::Duration::from_millis(100 * attempt as u64));
            }
            let mut request = self.client.post(&url).json(&EmbeddingRequest {
                model: &self.config.model,
                input: text,
            });
            if let Some(key) = &self.config.api_key {
                request = request.bearer_auth(key);
            }
            match request.send().and_then(|r| r.error_for_status()) {
                Ok(response) => {
                    let parsed: EmbeddingResponse =
                        response.json().map_err(|e| EmbeddingError::Backend {
                            message: e.to_string(),
                        })?;
                    let values = parsed
                        .data
                        .into_iter()
                        .next()
                        .map(|d| d.embedding)
                        .ok_or_else(|| EmbeddingError::Backend {
                            message: "response carried no embedding data".into(),
                        })?;
                    if values.iter().any(|v| !v.is_finite()) {
                        return Err(EmbeddingError::Backend {
                            message: "embedding contains non-finite entries".into(),
                        });
                    }
                    let mut dim = self.dimension.lock();
                    match *dim {
                        Some(expected) if expected != values.len() => {
                            return Err(EmbeddingError::DimensionMismatch {
                                expected,
                                got: values.len(),
                            });
                        }
                        Some(_) => {}
                        None => *dim = Some(values.len()),
                    }
                    return Ok(values);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(EmbeddingError::Backend { message: last_err })
    }
}

enum Backend {
    Remote(RemoteState),
    HashMock { dimension: usize, seed: u64 },
    ExactMatch,
}

/// A named similarity backend with its embedding cache.
pub struct SimilarityProvider {
    name: String,
    backend: Backend,
    cache: Option<Mutex<LruCache<String, EmbeddingVector>>>,
}

impl std::fmt::Debug for SimilarityProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimilarityProvider")
            .field("name", &self.name)
            .finish()
    }
}

fn make_cache(capacity: usize) -> Option<Mutex<LruCache<String, EmbeddingVector>>> {
    NonZeroUsize::new(capacity).map(|c| Mutex::new(LruCache::new(c)))
}

impl SimilarityProvider {
    /// Normalized-equality similarity: 1 for equal texts, else 0.
    pub fn exact_match() -> Self {
        Self {
            name: "exact-match".into(),
            backend: Backend::ExactMatch,
            cache: make_cache(DEFAULT_CACHE_CAPACITY),
        }
    }

    /// Deterministic pseudo-embeddings derived from the text hash.
    pub fn hash_mock(dimension: usize, seed: u64) -> Self {
        Self {
            name: format!("hash-mock-{dimension}-{seed}"),
            backend: Backend::HashMock {
                dimension: dimension.max(1),
                seed,
            },
            cache: make_cache(DEFAULT_CACHE_CAPACITY),
        }
    }

    /// OpenAI-compatible remote embeddings.
    pub fn remote(config: RemoteEmbeddingConfig) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| EmbeddingError::Backend {
                message: e.to_string(),
            })?;
        let name = format!("remote-{}", config.model);
        let gate = InFlightGate::new(config.max_in_flight);
        let dimension = Mutex::new(config.dimension);
        Ok(Self {
            name,
            backend: Backend::Remote(RemoteState {
                config,
                client,
                gate,
                dimension,
            }),
            cache: make_cache(DEFAULT_CACHE_CAPACITY),
        })
    }

    /// Replace the cache bound; 0 disables caching.
    pub fn with_cache_capacity(mut self, capacity: usize) -> Self {
        self.cache = make_cache(capacity);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Declared vector length. For a remote provider without a declared
    /// dimension this is 0 until the first successful call.
    pub fn dimension(&self) -> usize {
        match &self.backend {
            Backend::Remote(state) => state.dimension.lock().unwrap_or(0),
            Backend::HashMock { dimension, .. } => *dimension,
            Backend::ExactMatch => 32,
        }
    }

    fn compute(&self, normalized: &str) -> Result<EmbeddingVector, EmbeddingError> {
        match &self.backend {
            Backend::Remote(state) => Ok(EmbeddingVector::new(state.fetch(normalized)?)),
            Backend::HashMock { dimension, seed } => Ok(EmbeddingVector::new(hash_vector(
                normalized, *dimension, *seed,
            ))),
            // ExactMatch never scores through vectors; its embedding is a
            // stable 32-dimensional fingerprint kept for interface parity.
            Backend::ExactMatch => Ok(EmbeddingVector::new(hash_vector(normalized, 32, 0))),
        }
    }

    /// Embed one text. Results are deterministic for the offline backends
    /// and cached under the equality-normalized text.
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let normalized = normalize::equality(text);
        if normalized.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.lock().get(&normalized) {
                return Ok(hit.clone());
            }
        }
        let vector = self.compute(&normalized)?;
        if let Some(cache) = &self.cache {
            cache.lock().put(normalized, vector.clone());
        }
        Ok(vector)
    }

    /// Similarity in [0, 1]; symmetric; 1 for texts equal after
    /// normalization.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, EmbeddingError> {
        let na = normalize::equality(a);
        let nb = normalize::equality(b);
        if na.is_empty() || nb.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        if na == nb {
            return Ok(1.0);
        }
        match &self.backend {
            Backend::ExactMatch => Ok(0.0),
            _ => {
                let va = self.embed(&na)?;
                let vb = self.embed(&nb)?;
                if va.len() != vb.len() {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: va.len(),
                        got: vb.len(),
                    });
                }
                Ok(clamped_cosine(va.values(), vb.values()))
            }
        }
    }

    /// Fraction of triplets where the paraphrase outranks the contradiction.
    /// Ties count as failures.
    pub fn triplet_accuracy(&self, triplets: &[Triplet]) -> Result<f64, EmbeddingError> {
        if triplets.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        let mut hits = 0usize;
        for t in triplets {
            t.validate()?;
            let pos = self.similarity(&t.anchor, &t.positive)?;
            let neg = self.similarity(&t.anchor, &t.negative)?;
            if pos > neg {
                hits += 1;
            }
        }
        Ok(hits as f64 / triplets.len() as f64)
    }
}

/// Unit vector sampled from a stream seeded by (provider seed, text hash).
fn hash_vector(normalized: &str, dimension: usize, seed: u64) -> Vec<f64> {
    let stream = seeding::mix(&[seed, seeding::hash_text(normalized)]);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let mut values: Vec<f64> = (0..dimension)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn hash_mock_is_deterministic() {
        let p = SimilarityProvider::hash_mock(64, 7);
        let a1 = p.embed("a").unwrap();
        let a2 = p.embed("a").unwrap();
        assert_eq!(a1.values(), a2.values());
        // A second instance (fresh cache) agrees too.
        let q = SimilarityProvider::hash_mock(64, 7);
        assert_eq!(q.embed("a").unwrap().values(), a1.values());
    }

    #[test]
    fn hash_mock_separates_texts_over_random_word_pairs() {
        // Brute-force collision scan: 1000 distinct word pairs, expect zero
        // identical vectors.
        let p = SimilarityProvider::hash_mock(64, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut collisions = 0;
        for _ in 0..1000 {
            let a: String = (0..6)
                .map(|_| rng.random_range(b'a'..=b'z') as char)
                .collect();
            let b: String = (0..7)
                .map(|_| rng.random_range(b'a'..=b'z') as char)
                .collect();
            if p.embed(&a).unwrap().values() == p.embed(&b).unwrap().values() {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }

    #[test]
    fn exact_match_cases() {
        let p = SimilarityProvider::exact_match();
        assert_eq!(p.similarity("on desk 2", "on desk 2").unwrap(), 1.0);
        assert_eq!(p.similarity("on desk 2", "in drawer").unwrap(), 0.0);
        assert_eq!(p.similarity("On  Desk 2 ", "on desk 2").unwrap(), 1.0);
    }

    #[test]
    fn cosine_clamp_cases() {
        assert_eq!(clamped_cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        let d = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(clamped_cosine(&[d, d], &[d, d]), 1.0);
        // Anti-parallel clamps to zero.
        assert_eq!(clamped_cosine(&[1.0, 0.0], &[-1.0, 0.0]), 0.0);
        assert_eq!(clamped_cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn empty_text_is_rejected() {
        let p = SimilarityProvider::hash_mock(8, 0);
        assert!(matches!(p.embed("   "), Err(EmbeddingError::EmptyText)));
        assert!(matches!(
            p.similarity("", "x"),
            Err(EmbeddingError::EmptyText)
        ));
    }

    #[test]
    fn remote_with_unreachable_endpoint_fails() {
        let mut cfg = RemoteEmbeddingConfig::new("http://127.0.0.1:9", "m");
        cfg.retries = 0;
        cfg.timeout_secs = 2;
        let p = SimilarityProvider::remote(cfg).unwrap();
        assert!(matches!(
            p.embed("hello"),
            Err(EmbeddingError::Backend { .. })
        ));
    }

    #[test]
    fn cache_transparency() {
        let texts = ["alpha beta", "gamma", "delta epsilon", "alpha beta"];
        let cached = SimilarityProvider::hash_mock(32, 5);
        let uncached = SimilarityProvider::hash_mock(32, 5).with_cache_capacity(0);
        for a in &texts {
            for b in &texts {
                assert_eq!(
                    cached.similarity(a, b).unwrap().to_bits(),
                    uncached.similarity(a, b).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn triplet_accuracy_trivial_suites() {
        let p = SimilarityProvider::exact_match();
        let all_pos: Vec<Triplet> = (0..5)
            .map(|i| Triplet {
                anchor: format!("a{i}"),
                positive: format!("a{i}"),
                negative: "b".into(),
            })
            .collect();
        assert_eq!(p.triplet_accuracy(&all_pos).unwrap(), 1.0);
        let all_neg: Vec<Triplet> = (0..5)
            .map(|i| Triplet {
                anchor: format!("a{i}"),
                positive: "b".into(),
                negative: format!("a{i}"),
            })
            .collect();
        assert_eq!(p.triplet_accuracy(&all_neg).unwrap(), 0.0);
        assert!(matches!(
            p.triplet_accuracy(&[]),
            Err(EmbeddingError::EmptyInput)
        ));
    }

    #[test]
    fn triplet_accuracy_matches_per_element_count() {
        let p = SimilarityProvider::hash_mock(48, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let word = |rng: &mut ChaCha8Rng| -> String {
            (0..5)
                .map(|_| rng.random_range(b'a'..=b'z') as char)
                .collect()
        };
        let triplets: Vec<Triplet> = (0..10)
            .map(|_| Triplet {
                anchor: word(&mut rng),
                positive: word(&mut rng),
                negative: word(&mut rng),
            })
            .collect();
        let mut expected = 0usize;
        for t in &triplets {
            let pos = p.similarity(&t.anchor, &t.positive).unwrap();
            let neg = p.similarity(&t.anchor, &t.negative).unwrap();
            if pos > neg {
                expected += 1;
            }
        }
        let acc = p.triplet_accuracy(&triplets).unwrap();
        assert_eq!(acc, expected as f64 / triplets.len() as f64);
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_bounded_and_reflexive(
            a in "[a-z]{1,10}( [a-z]{1,10}){0,3}",
            b in "[a-z]{1,10}( [a-z]{1,10}){0,3}",
        ) {
            let p = SimilarityProvider::hash_mock(32, 11);
            let ab = p.similarity(&a, &b).unwrap();
            let ba = p.similarity(&b, &a).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(p.similarity(&a, &a).unwrap(), 1.0);
        }
    }
}
