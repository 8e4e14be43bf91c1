//! Sentence embeddings for explanation scoring.
//!
//! Two interchangeable backends sit behind the [`Embedder`] trait:
//!
//! * [`FallbackEmbedder`] — a pure, dependency-free hashed bag-of-words
//!   model. Text is lowercased, split into alphanumeric runs, each token is
//!   FNV-1a-64 hashed into one of `dim` buckets, term frequencies are
//!   accumulated, and the vector is L2-normalized. Deterministic down to
//!   the bit on every platform; empty text embeds to the all-zero vector.
//! * [`RemoteEmbedder`] — a client for an HTTP service speaking
//!   `POST {"texts": [...]} -> {"embeddings": [[...], ...]}`. Requests are
//!   batched, retried with bounded exponential backoff, and limited to a
//!   configured number of in-flight calls. A backend outage surfaces as
//!   [`Error::EmbeddingUnavailable`]; it is never silently mapped to a
//!   zero score.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default fallback dimensionality.
pub const DEFAULT_DIM: usize = 4096;
/// Total request attempts against the remote service before giving up.
pub const REMOTE_ATTEMPTS: u32 = 3;
/// First backoff pause; doubles after each failed attempt.
pub const BACKOFF_BASE: Duration = Duration::from_millis(100);

/// A finite, fixed-dimension embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps raw components, rejecting non-finite values and zero length.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::ProtocolViolation {
                message: "embedding has zero dimensions".into(),
            });
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::ProtocolViolation {
                message: "embedding contains non-finite components".into(),
            });
        }
        Ok(Self(components))
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[must_use]
    pub fn components(&self) -> &[f64] {
        &self.0
    }

    #[must_use]
    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Cosine similarity in `[-1, 1]`.
///
/// A zero-norm operand yields 0.0 by convention (empty text is simply
/// dissimilar to everything), and identical vectors yield exactly 1.0.
/// Dimension disagreement is an error.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let norm_u = u.l2_norm();
    let norm_v = v.l2_norm();
    if norm_u == 0.0 || norm_v == 0.0 {
        return Ok(0.0);
    }
    // Identity short-circuit keeps cos(v, v) at exactly 1.0 instead of
    // within-an-ulp of it.
    if u.0 == v.0 {
        return Ok(1.0);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (norm_u * norm_v)).clamp(-1.0, 1.0))
}

/// FNV-1a, 64-bit. Stable across platforms and releases, which is what
/// makes the fallback embedding reproducible bit-for-bit.
#[must_use]
fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Lowercased maximal alphanumeric runs; everything else (whitespace and
/// punctuation alike) separates tokens.
fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Hashed bag-of-words embedding: deterministic, normalization included.
#[must_use]
pub fn embed_fallback(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 1, "embedding dimension must be at least 1");
    let mut counts = vec![0.0f64; dim];
    for token in tokenize(text) {
        let bucket = (fnv1a64(token.as_bytes()) % dim as u64) as usize;
        counts[bucket] += 1.0;
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        for c in &mut counts {
            *c /= norm;
        }
    }
    EmbeddingVector(counts)
}

/// A batch text-embedding backend.
pub trait Embedder: Send + Sync {
    /// Embeds every text, preserving order. All returned vectors share one
    /// dimensionality.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self
            .embed_batch(&[text])?
            .pop()
            .expect("embed_batch returns one vector per text"))
    }
}

/// The local hashed bag-of-words backend.
#[derive(Debug, Clone)]
pub struct FallbackEmbedder {
    pub dim: usize,
}

impl Default for FallbackEmbedder {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM }
    }
}

impl Embedder for FallbackEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| embed_fallback(t, self.dim)).collect())
    }
}

/// Counting semaphore bounding concurrent remote calls.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
    }

    fn release(&self) {
        *self.permits.lock().unwrap() += 1;
        self.available.notify_one();
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Options for the remote backend; defaults mirror the service contract.
#[derive(Debug, Clone)]
pub struct RemoteOptions {
    pub timeout: Duration,
    /// Texts per request.
    pub batch_size: usize,
    /// Concurrent requests across all threads sharing this embedder.
    pub max_in_flight: usize,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            batch_size: 32,
            max_in_flight: 4,
        }
    }
}

/// HTTP client for a remote embedding service.
pub struct RemoteEmbedder {
    url: String,
    client: reqwest::blocking::Client,
    options: RemoteOptions,
    in_flight: Semaphore,
    /// Backoff base, overridable so tests don't sleep for real.
    backoff_base: Duration,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, options: RemoteOptions) -> Result<Self> {
        if options.batch_size == 0 || options.max_in_flight == 0 {
            return Err(Error::Config {
                message: "embedder batch size and in-flight limit must be positive".into(),
            });
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(options.timeout)
            .build()
            .map_err(|e| Error::EmbeddingUnavailable {
                message: format!("failed to build HTTP client: {e}"),
            })?;
        let in_flight = Semaphore::new(options.max_in_flight);
        Ok(Self {
            url: url.into(),
            client,
            options,
            in_flight,
            backoff_base: BACKOFF_BASE,
        })
    }

    /// Shrinks the retry pause (tests only; keeps retry logic real while
    /// avoiding wall-clock waits).
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    /// One batch against the service, with retries.
    fn request_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.in_flight.acquire();
        let result = self.request_batch_inner(texts);
        self.in_flight.release();
        result
    }

    fn request_batch_inner(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut last_failure = String::new();
        for attempt in 0..REMOTE_ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            match self.try_once(texts) {
                Ok(embeddings) => return Ok(embeddings),
                Err(RequestFailure::Retryable(message)) => last_failure = message,
                Err(RequestFailure::Fatal(error)) => return Err(error),
            }
        }
        Err(Error::EmbeddingUnavailable {
            message: format!(
                "{} after {REMOTE_ATTEMPTS} attempts against {}",
                last_failure, self.url
            ),
        })
    }

    fn try_once(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, RequestFailure> {
        let response = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| RequestFailure::Retryable(format!("request failed: {e}")))?;

        let status = response.status();
        if !status.is_success() {
            return Err(RequestFailure::Retryable(format!("HTTP {status}")));
        }
        let body: EmbedResponse = response.json().map_err(|e| {
            RequestFailure::Fatal(Error::ProtocolViolation {
                message: format!("response is not the expected JSON shape: {e}"),
            })
        })?;
        if body.embeddings.len() != texts.len() {
            return Err(RequestFailure::Fatal(Error::ProtocolViolation {
                message: format!(
                    "sent {} texts but received {} embeddings",
                    texts.len(),
                    body.embeddings.len()
                ),
            }));
        }
        Ok(body.embeddings)
    }
}

enum RequestFailure {
    /// Transport errors and HTTP error statuses; worth another attempt.
    Retryable(String),
    /// The service answered but broke the wire contract; retrying can't fix it.
    Fatal(Error),
}

impl Embedder for RemoteEmbedder {
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let mut vectors = Vec::with_capacity(texts.len());
        let mut expected_dim: Option<usize> = None;
        for chunk in texts.chunks(self.options.batch_size.max(1)) {
            for raw in self.request_batch(chunk)? {
                let vector = EmbeddingVector::new(raw)?;
                match expected_dim {
                    None => expected_dim = Some(vector.dim()),
                    Some(d) if d != vector.dim() => {
                        return Err(Error::ProtocolViolation {
                            message: format!(
                                "ragged embedding dimensions: {} then {}",
                                d,
                                vector.dim()
                            ),
                        });
                    }
                    Some(_) => {}
                }
                vectors.push(vector);
            }
        }
        Ok(vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_vectors() {
        // Published FNV-1a-64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tokenizer_lowercases_and_splits_on_punctuation() {
        assert_eq!(
            tokenize("Total: 128.00 (EUR)!"),
            vec!["total", "128", "00", "eur"]
        );
        assert_eq!(tokenize("  \t\n "), Vec::<String>::new());
        assert_eq!(tokenize("Čísla nesedí"), vec!["čísla", "nesedí"]);
    }

    #[test]
    fn empty_text_embeds_to_zero_vector() {
        let v = embed_fallback("", 32);
        assert_eq!(v.dim(), 32);
        assert_eq!(v.l2_norm(), 0.0);
        assert_eq!(embed_fallback("?!، ::", 32).l2_norm(), 0.0);
    }

    #[test]
    fn fallback_vectors_are_unit_norm() {
        for text in ["a", "a a b", "the quick brown fox", "Čísla nesedí 123"] {
            let v = embed_fallback(text, 64);
            assert!((v.l2_norm() - 1.0).abs() < 1e-12, "text {text:?}");
        }
    }

    #[test]
    fn repeated_token_weights_by_frequency() {
        // "a a b": token a twice, token b once, distinct buckets at this dim.
        let dim = 8;
        let a_bucket = (fnv1a64(b"a") % dim as u64) as usize;
        let b_bucket = (fnv1a64(b"b") % dim as u64) as usize;
        assert_ne!(a_bucket, b_bucket, "test dim must be collision-free");

        let v = embed_fallback("a a b", dim);
        let expected_a = 2.0 / 5.0_f64.sqrt();
        let expected_b = 1.0 / 5.0_f64.sqrt();
        assert!((v.components()[a_bucket] - expected_a).abs() < 1e-15);
        assert!((v.components()[b_bucket] - expected_b).abs() < 1e-15);
        assert!((expected_a - 0.8944271909999159).abs() < 1e-15);
        assert!((expected_b - 0.4472135954999579).abs() < 1e-15);
    }

    #[test]
    fn fallback_is_deterministic() {
        let a = embed_fallback("The totals were repainted.", DEFAULT_DIM);
        let b = embed_fallback("The totals were repainted.", DEFAULT_DIM);
        assert_eq!(a, b);
    }

    #[test]
    fn cosine_identical_vectors_is_exactly_one() {
        let v = embed_fallback("edge artifacts near the date field", 128);
        assert_eq!(cosine(&v, &v).unwrap(), 1.0);
        let w = embed_fallback("edge artifacts near the date field", 128);
        assert_eq!(cosine(&v, &w).unwrap(), 1.0);
    }

    #[test]
    fn cosine_known_value() {
        let u = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let v = EmbeddingVector::new(vec![1.0, 1.0]).unwrap();
        assert!((cosine(&u, &v).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_orthogonal_is_zero() {
        let u = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let v = EmbeddingVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine(&u, &v).unwrap(), 0.0);
    }

    #[test]
    fn cosine_zero_norm_is_zero_not_error() {
        let z = embed_fallback("", 16);
        let v = embed_fallback("text", 16);
        assert_eq!(cosine(&z, &v).unwrap(), 0.0);
        assert_eq!(cosine(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn cosine_dimension_mismatch_errors() {
        let u = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let v = EmbeddingVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine(&u, &v),
            Err(Error::DimensionMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn embedding_vector_rejects_non_finite() {
        assert!(EmbeddingVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn semaphore_bounds_and_releases() {
        let s = Semaphore::new(2);
        s.acquire();
        s.acquire();
        s.release();
        s.acquire(); // would deadlock if release hadn't worked
        s.release();
        s.release();
    }
}
