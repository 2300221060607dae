//! Text embedders: a deterministic feature-hashing embedder for offline use,
//! an OpenAI-compatible remote embedder, and a content-hash keyed cache.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum EmbeddingError {
    #[error("cannot embed empty text")]
    EmptyInput,
    #[error("embedding service unavailable: {0}")]
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding(self.0.iter().map(|x| x * factor).collect())
    }
}

/// Cosine similarity; zero vectors are orthogonal to everything.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.0.iter().zip(&b.0) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError>;
    fn dimension(&self) -> usize;
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        (**self).embed(text)
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }
}

const STOP_WORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "is", "it", "of", "on",
    "or", "that", "the", "this", "to", "via", "was", "with",
];

/// Lowercased `[a-z0-9_]` runs with common English stop words removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .collect()
}

/// Token-set Jaccard overlap, the lexical fallback when embeddings are down.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let sa: HashSet<String> = tokenize(a).into_iter().collect();
    let sb: HashSet<String> = tokenize(b).into_iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of [`tokenize`] output into a fixed number of
/// buckets, L2-normalized. Each token adds ±1 to bucket `h % dim`, the sign
/// taken from bit 32 of its FNV-1a hash.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
}

pub const DEFAULT_DETERMINISTIC_DIM: usize = 384;

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for DeterministicEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DETERMINISTIC_DIM)
    }
}

impl Embedder for DeterministicEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        if text.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        let mut v = vec![0.0f64; self.dim];
        for tok in tokenize(text) {
            let h = fnv1a(tok.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
            v[idx] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Embedding(v))
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}

/// OpenAI-compatible `/embeddings` client.
pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: &str,
        model: &str,
        api_key_env: &str,
        timeout: Duration,
        dim: usize,
    ) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbeddingError::Unavailable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: std::env::var(api_key_env).ok(),
            dim,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        if text.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.endpoint))
            .json(&serde_json::json!({ "model": self.model, "input": text }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| EmbeddingError::Unavailable(e.to_string()))?;
        let body: EmbeddingResponse = resp
            .json()
            .map_err(|e| EmbeddingError::Unavailable(format!("bad response: {e}")))?;
        let v = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbeddingError::Unavailable("empty data array".into()))?
            .embedding;
        if v.len() != self.dim {
            return Err(EmbeddingError::Unavailable(format!(
                "expected {} dimensions, got {}",
                self.dim,
                v.len()
            )));
        }
        Ok(Embedding(v))
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}

/// Memoizes another embedder by SHA-256 of the input text. Failures are not
/// cached so a recovering service is picked up again.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: Mutex<HashMap<[u8; 32], Embedding>>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let key: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let v = self.inner.embed(text)?;
        self.cache.lock().unwrap().insert(key, v.clone());
        Ok(v)
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
}

/// Embeds `text`, mapping empty input to the zero vector so that scoring
/// code can treat missing descriptions as dissimilar to everything.
pub(crate) fn embed_or_zero(embedder: &dyn Embedder, text: &str) -> Result<Embedding, EmbeddingError> {
    if text.trim().is_empty() {
        return Ok(Embedding(vec![0.0; embedder.dimension()]));
    }
    embedder.embed(text)
}

/// Pairwise similarity with lexical fallback on service failure.
pub fn similarity(embedder: &dyn Embedder, a: &str, b: &str) -> f64 {
    match (embed_or_zero(embedder, a), embed_or_zero(embedder, b)) {
        (Ok(x), Ok(y)) => cosine(&x, &y),
        _ => jaccard(a, b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Re-implementation of the hashing scheme written from its description:
    /// byte-at-a-time FNV-1a, bucket = hash mod dim, sign from bit 32.
    fn oracle_embed(text: &str, dim: usize) -> Vec<f64> {
        const STOP: [&str; 23] = [
            "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "is", "it", "of",
            "on", "or", "that", "the", "this", "to", "via", "was", "with",
        ];
        let mut out = vec![0.0; dim];
        let mut word = String::new();
        let flush = |word: &mut String, out: &mut Vec<f64>| {
            if !word.is_empty() && !STOP.contains(&word.as_str()) {
                let mut h: u64 = 14695981039346656037;
                for b in word.bytes() {
                    h = (h ^ b as u64).wrapping_mul(1099511628211);
                }
                let bucket = (h % dim as u64) as usize;
                out[bucket] += if h & (1 << 32) == 0 { 1.0 } else { -1.0 };
            }
            word.clear();
        };
        for c in text.chars() {
            if c.is_ascii_alphanumeric() || c == '_' {
                word.push(c.to_ascii_lowercase());
            } else {
                flush(&mut word, &mut out);
            }
        }
        flush(&mut word, &mut out);
        let n: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            for x in &mut out {
                *x /= n;
            }
        }
        out
    }

    const FIXTURES: [&str; 10] = [
        "heap-buffer-overflow in safe_copy when len exceeds destination size",
        "Integer overflow in PNG chunk length leads to out-of-bounds write",
        "use after free in njs_array_prototype_splice",
        "NULL pointer dereference in gf_isom_get_sample",
        "Stack-based buffer overflow via crafted TIFF file",
        "memcpy(dst, src, len);",
        "diff --git a/utils.c b/utils.c\n+    if (len > BUF_SIZE) len = BUF_SIZE;",
        "The the THE of of",
        "x",
        "CWE-190 integer_overflow 2022 32414",
    ];

    #[test]
    fn matches_reference_hashing() {
        let e = DeterministicEmbedder::default();
        for s in FIXTURES {
            let got = e.embed(s).unwrap();
            let want = oracle_embed(s, DEFAULT_DETERMINISTIC_DIM);
            assert_eq!(got.0.len(), want.len());
            for (a, b) in got.0.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{s}");
            }
        }
    }

    #[test]
    fn deterministic_and_self_similar() {
        let e = DeterministicEmbedder::default();
        let s = "heap-buffer-overflow in safe_copy";
        assert_eq!(e.embed(s).unwrap(), e.embed(s).unwrap());
        let v = e.embed(s).unwrap();
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-9);
        assert_eq!(e.embed("").unwrap_err(), EmbeddingError::EmptyInput);
    }

    #[test]
    fn all_stop_words_gives_zero_vector() {
        let v = DeterministicEmbedder::default().embed("the of").unwrap();
        assert!(v.0.iter().all(|x| *x == 0.0));
        assert_eq!(cosine(&v, &v), 0.0);
    }

    #[test]
    fn jaccard_basics() {
        assert_eq!(jaccard("a b c", "a b c"), 1.0);
        assert_eq!(jaccard("heap overflow", "stack underflow"), 0.0);
        assert!((jaccard("heap overflow copy", "heap overflow") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(jaccard("", ""), 0.0);
    }

    struct Counting {
        calls: AtomicUsize,
        inner: DeterministicEmbedder,
    }

    impl Embedder for Counting {
        fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.embed(text)
        }
        fn dimension(&self) -> usize {
            self.inner.dimension()
        }
    }

    #[test]
    fn cache_hits_skip_inner_embedder() {
        let c = CachedEmbedder::new(Counting {
            calls: AtomicUsize::new(0),
            inner: DeterministicEmbedder::default(),
        });
        let a = c.embed("same text").unwrap();
        let b = c.embed("same text").unwrap();
        c.embed("other").unwrap();
        assert_eq!(a, b);
        assert_eq!(c.inner.calls.load(Ordering::SeqCst), 2);
        assert_eq!(c.len(), 2);
    }

    struct Down;
    impl Embedder for Down {
        fn embed(&self, _: &str) -> Result<Embedding, EmbeddingError> {
            Err(EmbeddingError::Unavailable("offline".into()))
        }
        fn dimension(&self) -> usize {
            8
        }
    }

    #[test]
    fn similarity_falls_back_to_jaccard() {
        assert!((similarity(&Down, "heap overflow copy", "heap overflow") - 2.0 / 3.0).abs() < 1e-12);
    }
}
