//! Semantic search: embed entity documents and questions, rank entities by
//! exact cosine similarity. Tables are small (hundreds of rows), so there
//! is no approximate-nearest-neighbor structure; every score is exact.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::graph::{neighborhood, Graph, GraphError, GraphView};
use crate::value::{fnv1a64, NodeId};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding provider error: {0}")]
    Provider(String),
    #[error("embedding provider contract violation: {0}")]
    Contract(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding request timed out")]
    Timeout,
    #[error("embedding http error: status {0}")]
    Http(u16),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A text-to-vector backend. `embed` must return exactly one vector of
/// length `dim()` per input text.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError>;
}

/// Cosine similarity, accumulated in f64. Zero-norm vectors score 0.
pub fn cosine(u: &[f32], v: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut nu = 0.0f64;
    let mut nv = 0.0f64;
    for (a, b) in u.iter().zip(v.iter()) {
        dot += f64::from(*a) * f64::from(*b);
        nu += f64::from(*a) * f64::from(*a);
        nv += f64::from(*b) * f64::from(*b);
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

const BATCH_SIZE: usize = 64;

/// Calls the provider in batches of 64, enforcing the count and dimension
/// contract on every reply.
pub fn embed_batched(
    provider: &dyn EmbeddingProvider,
    texts: &[String],
) -> Result<Vec<Vec<f32>>, EmbeddingError> {
    let dim = provider.dim();
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(BATCH_SIZE) {
        let vectors = provider.embed(chunk)?;
        if vectors.len() != chunk.len() {
            return Err(EmbeddingError::Contract(format!(
                "asked for {} vectors, got {}",
                chunk.len(),
                vectors.len()
            )));
        }
        for v in &vectors {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        out.extend(vectors);
    }
    Ok(out)
}

/// Deterministic test embedder: a hashed bag-of-words projection. Identical
/// texts give identical vectors, making end-to-end runs byte-reproducible.
pub struct HashedBagProvider {
    dim: usize,
}

impl HashedBagProvider {
    pub fn new(dim: usize) -> Self {
        HashedBagProvider { dim: dim.max(1) }
    }
}

impl Default for HashedBagProvider {
    fn default() -> Self {
        HashedBagProvider::new(256)
    }
}

impl EmbeddingProvider for HashedBagProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut v = vec![0.0f32; self.dim];
                for token in crate::lexical::tokenize(text) {
                    let slot = (fnv1a64(token.as_bytes()) % self.dim as u64) as usize;
                    v[slot] += 1.0;
                }
                v
            })
            .collect())
    }
}

/// Remote provider speaking a minimal JSON contract:
/// `POST {"texts": [...]}` -> `{"vectors": [[...], ...]}`.
pub struct HttpEmbeddingProvider {
    endpoint: String,
    dim: usize,
    client: reqwest::blocking::Client,
    max_retries: u32,
}

#[derive(Deserialize)]
struct EmbeddingReply {
    vectors: Vec<Vec<f32>>,
}

impl HttpEmbeddingProvider {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Result<Self, EmbeddingError> {
        Self::with_timeout(endpoint, dim, Duration::from_secs(30))
    }

    pub fn with_timeout(
        endpoint: impl Into<String>,
        dim: usize,
        timeout: Duration,
    ) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbeddingError::Provider(e.to_string()))?;
        Ok(HttpEmbeddingProvider {
            endpoint: endpoint.into(),
            dim,
            client,
            max_retries: 2,
        })
    }

    fn attempt(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&json!({ "texts": texts }))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    EmbeddingError::Timeout
                } else {
                    EmbeddingError::Provider(e.to_string())
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(EmbeddingError::Http(status.as_u16()));
        }
        let reply: EmbeddingReply = resp
            .json()
            .map_err(|e| EmbeddingError::Contract(format!("malformed reply: {e}")))?;
        Ok(reply.vectors)
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let mut delay = Duration::from_millis(250);
        let mut last = EmbeddingError::Timeout;
        for attempt in 0..=self.max_retries {
            match self.attempt(texts) {
                Ok(v) => return Ok(v),
                Err(e @ (EmbeddingError::Timeout | EmbeddingError::Http(500..=599)))
                    if attempt < self.max_retries =>
                {
                    last = e;
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }
}

/// The text embedded for an entity: its depth-`d` neighborhood values
/// joined by " | " (breadth-first, root-proximal information first).
pub fn entity_text(
    view: &dyn GraphView,
    entity: NodeId,
    depth: usize,
) -> Result<String, GraphError> {
    Ok(neighborhood(view, entity, depth)?.join(" | "))
}

/// Entity embeddings with precomputed norms for exact cosine scoring.
pub struct VectorIndex {
    entity_ids: Vec<NodeId>,
    matrix: Vec<Vec<f32>>,
    norms: Vec<f64>,
    dim: usize,
}

impl VectorIndex {
    /// Embeds every entity node's depth-`d` document. Fails when the
    /// provider does; semantic search is core, not best-effort.
    pub fn build(
        graph: &Graph,
        provider: &dyn EmbeddingProvider,
        depth: usize,
    ) -> Result<VectorIndex, EmbeddingError> {
        let entity_ids = graph.entity_ids();
        let texts = entity_ids
            .iter()
            .map(|id| entity_text(graph, *id, depth).map_err(EmbeddingError::from))
            .collect::<Result<Vec<_>, _>>()?;
        let matrix = embed_batched(provider, &texts)?;
        let norms = matrix
            .iter()
            .map(|v| v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt())
            .collect();
        Ok(VectorIndex {
            entity_ids,
            matrix,
            norms,
            dim: provider.dim(),
        })
    }

    pub fn len(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entity_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cosine of every entity against the question vector.
    pub fn score(&self, question: &[f32]) -> Result<BTreeMap<NodeId, f64>, EmbeddingError> {
        if question.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: question.len(),
            });
        }
        let qnorm = question
            .iter()
            .map(|x| f64::from(*x) * f64::from(*x))
            .sum::<f64>()
            .sqrt();
        let mut out = BTreeMap::new();
        for (i, id) in self.entity_ids.iter().enumerate() {
            let score = if qnorm == 0.0 || self.norms[i] == 0.0 {
                0.0
            } else {
                let dot: f64 = self.matrix[i]
                    .iter()
                    .zip(question.iter())
                    .map(|(a, b)| f64::from(*a) * f64::from(*b))
                    .sum();
                dot / (self.norms[i] * qnorm)
            };
            out.insert(*id, score);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn cosine_hand_value() {
        // (1,2,3)·(4,5,6) = 32; norms sqrt(14), sqrt(77).
        let got = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert!((got - 0.974_631_846).abs() < 1e-9, "got {got}");
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant(
            u in proptest::collection::vec(-10.0f32..10.0, 3..8),
            s in 0.1f32..50.0,
            t in 0.1f32..50.0,
        ) {
            let v: Vec<f32> = u.iter().map(|x| x + 1.0).collect();
            let su: Vec<f32> = u.iter().map(|x| x * s).collect();
            let tv: Vec<f32> = v.iter().map(|x| x * t).collect();
            let base = cosine(&u, &v);
            let scaled = cosine(&su, &tv);
            prop_assert!((base - scaled).abs() < 1e-5);
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&base));
            prop_assert!((cosine(&u, &v) - cosine(&v, &u)).abs() < 1e-12);
        }
    }

    #[test]
    fn hashed_provider_deterministic() {
        let p = HashedBagProvider::new(256);
        let texts = vec!["Loose Women | 2010 | 5".to_string(), "Loose Women | 2010 | 5".to_string()];
        let vs = p.embed(&texts).unwrap();
        assert_eq!(vs[0], vs[1]);
        assert_eq!(vs[0].len(), 256);
        assert!(vs[0].iter().sum::<f32>() > 0.0);
    }

    #[test]
    fn batching_enforces_count_contract() {
        struct Short;
        impl EmbeddingProvider for Short {
            fn dim(&self) -> usize {
                2
            }
            fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
                Ok(vec![vec![1.0, 0.0]])
            }
        }
        let texts = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            embed_batched(&Short, &texts),
            Err(EmbeddingError::Contract(_))
        ));
    }

    #[test]
    fn index_scores_and_dimension_check() {
        let graph = crate::graph::tests::show_graph_disambiguated();
        let provider = HashedBagProvider::new(64);
        let idx = VectorIndex::build(&graph, &provider, 2).unwrap();
        assert_eq!(idx.len(), 7);
        let q = provider.embed(&["loose women".to_string()]).unwrap().remove(0);
        let scores = idx.score(&q).unwrap();
        assert_eq!(scores.len(), 7);
        assert!(scores.values().all(|s| (-1.0..=1.0).contains(s)));
        assert!(matches!(
            idx.score(&[0.0; 3]),
            Err(EmbeddingError::DimensionMismatch { expected: 64, got: 3 })
        ));
    }

    #[test]
    fn empty_graph_empty_index() {
        let graph = Graph::new();
        let provider = HashedBagProvider::new(16);
        let idx = VectorIndex::build(&graph, &provider, 2).unwrap();
        assert!(idx.is_empty());
    }

    #[test]
    fn entity_text_joins_neighborhood() {
        let graph = crate::graph::tests::show_graph_disambiguated();
        let first = graph.entity_ids()[0];
        assert_eq!(entity_text(&graph, first, 0).unwrap(), "Loose Women");
        assert_eq!(entity_text(&graph, first, 1).unwrap(), "Loose Women | 2010 | 5");
        let d2 = entity_text(&graph, first, 2).unwrap();
        assert!(d2.contains("This Morning"));
    }
}
