//! BM25 full-text ranking of entity documents against the question.
//!
//! A document combines the entity's primary-key value with its attribute
//! labels and values. No stemming, stop words, or phrase queries; the
//! tokenizer lowercases and splits on any non-alphanumeric character.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::graph::{Graph, GraphView};
use crate::value::NodeId;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Lowercase, split on any non-alphanumeric character, keep pure-digit
/// tokens, never emit empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EntityDocument {
    pub entity_id: NodeId,
    /// Term -> multiplicity.
    pub terms: BTreeMap<String, u32>,
    /// Total term multiplicity.
    pub length: u32,
}

impl EntityDocument {
    fn from_tokens(entity_id: NodeId, tokens: Vec<String>) -> Self {
        let mut terms = BTreeMap::new();
        let length = tokens.len() as u32;
        for t in tokens {
            *terms.entry(t).or_insert(0) += 1;
        }
        EntityDocument {
            entity_id,
            terms,
            length,
        }
    }
}

/// One search document per entity: tokens of its value plus, for each
/// out-edge, tokens of the attribute label and the attribute value.
pub fn build_documents(graph: &Graph) -> Vec<EntityDocument> {
    graph
        .entity_ids()
        .into_iter()
        .map(|id| {
            let node = graph.get_node(id).expect("entity id resolves");
            let mut tokens = tokenize(&node.value);
            for edge in graph.out_edges(id) {
                if let Some(attr) = graph.get_node(edge.dst) {
                    tokens.extend(tokenize(&attr.label));
                    tokens.extend(tokenize(&attr.value));
                }
            }
            EntityDocument::from_tokens(id, tokens)
        })
        .collect()
}

/// One posting: document, term frequency, and the document length (carried
/// inline so scoring never looks the document up).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Posting {
    pub doc: NodeId,
    pub tf: u32,
    pub dl: u32,
}

#[derive(Debug, Serialize)]
pub struct Bm25Index {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_count: usize,
    avgdl: f64,
    k1: f64,
    b: f64,
}

impl Bm25Index {
    pub fn build(documents: Vec<EntityDocument>, k1: f64, b: f64) -> Bm25Index {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for doc in &documents {
            for (term, tf) in &doc.terms {
                postings.entry(term.clone()).or_default().push(Posting {
                    doc: doc.entity_id,
                    tf: *tf,
                    dl: doc.length,
                });
            }
        }
        for list in postings.values_mut() {
            list.sort_by_key(|p| p.doc);
        }
        let total_len: u64 = documents.iter().map(|d| u64::from(d.length)).sum();
        let avgdl = if documents.is_empty() {
            0.0
        } else {
            total_len as f64 / documents.len() as f64
        };
        Bm25Index {
            postings,
            doc_count: documents.len(),
            avgdl,
            k1,
            b,
        }
    }

    pub fn from_graph(graph: &Graph, k1: f64, b: f64) -> Bm25Index {
        Bm25Index::build(build_documents(graph), k1, b)
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    /// BM25 with the never-negative IDF variant
    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`. Query terms contribute with
    /// multiplicity. Entities absent from the map implicitly score 0.
    pub fn score(&self, question: &str) -> BTreeMap<NodeId, f64> {
        let mut scores: BTreeMap<NodeId, f64> = BTreeMap::new();
        if self.doc_count == 0 {
            return scores;
        }
        let n = self.doc_count as f64;
        for term in tokenize(question) {
            let Some(postings) = self.postings.get(&term) else {
                continue;
            };
            let df = postings.len() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            for p in postings {
                let tf = f64::from(p.tf);
                let norm = self.k1 * (1.0 - self.b + self.b * f64::from(p.dl) / self.avgdl);
                *scores.entry(p.doc).or_insert(0.0) += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        scores
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes")
    }
}
