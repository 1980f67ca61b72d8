//! Entity-oriented search: fuse BM25 and semantic scores, select top-K
//! entities, and augment with the results of LLM-generated Cypher run on
//! the graph. Also home of the per-table pipeline state (`TableContext`)
//! and the per-question state (`QuestionSession`).

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::cypher::{run_query_in, Budget, Overlay, QueryFailure};
use crate::graph::{build_graph, build_row_graph, disambiguate, export_schema, Graph, GraphView};
use crate::lexical::Bm25Index;
use crate::llm::{CallLedger, CallTag, ChatMessage, ChatRequest, LlmGateway, PromptSet, TemplateId};
use crate::schema::{fallback_schema, identify_schema, EntitySchema, SchemaError};
use crate::table::Table;
use crate::value::{NodeId, Value};
use crate::vector::{EmbeddingProvider, VectorIndex};

/// Search hyperparameters. Defaults: window h=5, depth d=2, K=50, both
/// fusion weights 1, merge threshold 0.95.
#[derive(Debug, Clone, Serialize)]
pub struct SearchConfig {
    pub w_fulltext: f64,
    pub w_semantic: f64,
    pub k: usize,
    pub merge_threshold: f64,
    pub depth: usize,
    pub window: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            w_fulltext: 1.0,
            w_semantic: 1.0,
            k: 50,
            merge_threshold: 0.95,
            depth: 2,
            window: 5,
            bm25_k1: crate::lexical::DEFAULT_K1,
            bm25_b: crate::lexical::DEFAULT_B,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("K must be at least 1".into());
        }
        if self.w_fulltext < 0.0 || self.w_semantic < 0.0 {
            return Err("fusion weights must be non-negative".into());
        }
        if self.w_fulltext == 0.0 && self.w_semantic == 0.0 {
            return Err("at least one fusion weight must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.merge_threshold) {
            return Err("merge threshold must be in [0, 1]".into());
        }
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        Ok(())
    }
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct RunFlags {
    pub no_graph_search: bool,
    pub no_semantic: bool,
    pub no_fulltext: bool,
    pub row_oriented: bool,
}

/// Iterative search-answer settings: at most `max_iterations` rounds, early
/// stop at `confidence_threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct CotConfig {
    pub max_iterations: u32,
    pub confidence_threshold: f64,
}

impl Default for CotConfig {
    fn default() -> Self {
        CotConfig {
            max_iterations: 3,
            confidence_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Via {
    pub fusion: bool,
    pub cypher: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchHit {
    pub entity_id: NodeId,
    pub bm25: f64,
    pub semantic: f64,
    /// Weighted sum of the min-max normalized scores; present exactly when
    /// the hit entered through fusion.
    pub fused: Option<f64>,
    pub via: Via,
}

/// A node created by Cypher execution, snapshotted so it outlives the
/// overlay.
#[derive(Debug, Clone, Serialize)]
pub struct CreatedNode {
    pub id: NodeId,
    pub label: String,
    pub props: BTreeMap<String, Value>,
}

impl fmt::Display for CreatedNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(:{} {})", self.label, Value::Map(self.props.clone()))
    }
}

/// Why graph search produced nothing usable.
#[derive(Debug, Clone, Serialize)]
pub enum GraphSearchFailure {
    Llm(String),
    Query(QueryFailure),
}

impl fmt::Display for GraphSearchFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSearchFailure::Llm(msg) => write!(f, "cypher generation failed: {msg}"),
            GraphSearchFailure::Query(q) => write!(f, "cypher execution failed: {q}"),
        }
    }
}

#[derive(Debug, Default)]
pub struct RetrievalResult {
    /// Cypher-flagged hits first, then fused descending, ties by entity id.
    pub hits: Vec<SearchHit>,
    pub cypher_query: Option<String>,
    pub cypher_columns: Vec<String>,
    pub cypher_rows: Vec<Vec<String>>,
    /// Base-graph nodes touched by the final RETURN of the Cypher run.
    pub cypher_touched: Vec<NodeId>,
    pub cypher_created: Vec<CreatedNode>,
    pub cypher_failure: Option<GraphSearchFailure>,
    pub warnings: Vec<String>,
}

impl RetrievalResult {
    pub fn cypher_failed(&self) -> bool {
        self.cypher_failure.is_some()
    }
}

/// Min-max normalizes both score families over the same entity universe
/// and combines them with the configured weights. Returns every entity,
/// ordered by fused score descending with ties broken by ascending id.
pub fn fuse(
    bm25: &BTreeMap<NodeId, f64>,
    semantic: &BTreeMap<NodeId, f64>,
    cfg: &SearchConfig,
) -> Vec<SearchHit> {
    let mut universe: Vec<NodeId> = bm25.keys().chain(semantic.keys()).copied().collect();
    universe.sort_unstable();
    universe.dedup();

    let norm = |scores: &BTreeMap<NodeId, f64>| -> BTreeMap<NodeId, f64> {
        let values: Vec<f64> = universe
            .iter()
            .map(|id| scores.get(id).copied().unwrap_or(0.0))
            .collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        universe
            .iter()
            .zip(values)
            .map(|(id, v)| {
                let n = if max > min { (v - min) / (max - min) } else { 0.0 };
                (*id, n)
            })
            .collect()
    };

    let nb = norm(bm25);
    let ns = norm(semantic);
    let mut hits: Vec<SearchHit> = universe
        .iter()
        .map(|id| SearchHit {
            entity_id: *id,
            bm25: bm25.get(id).copied().unwrap_or(0.0),
            semantic: semantic.get(id).copied().unwrap_or(0.0),
            fused: Some(cfg.w_fulltext * nb[id] + cfg.w_semantic * ns[id]),
            via: Via {
                fusion: true,
                cypher: false,
            },
        })
        .collect();
    hits.sort_by(|a, b| {
        b.fused
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&a.fused.unwrap_or(f64::NEG_INFINITY))
            .then(a.entity_id.cmp(&b.entity_id))
    });
    hits
}

/// The assembled runtime: providers, prompts, few-shot fixtures, and every
/// hyperparameter.
pub struct Engine {
    pub gateway: LlmGateway,
    pub embedder: Box<dyn EmbeddingProvider>,
    pub prompts: PromptSet,
    pub pk_examples: String,
    pub relation_examples: String,
    pub cypher_examples: String,
    pub search: SearchConfig,
    pub cot: CotConfig,
    pub flags: RunFlags,
    /// Per-tag temperature overrides keyed by [`CallTag::name`].
    pub temperatures: BTreeMap<String, f64>,
}

impl Engine {
    /// A chat request with any configured temperature override applied.
    pub fn chat_request(&self, tag: CallTag, prompt: String) -> ChatRequest {
        let mut req = ChatRequest {
            messages: vec![ChatMessage::user(prompt)],
            temperature: tag.default_temperature(),
            max_tokens: tag.default_max_tokens(),
            tag,
        };
        if let Some(t) = self.temperatures.get(tag.name()) {
            req.temperature = *t;
        }
        req
    }
}

/// Everything built once per table and shared by its questions: the
/// identified schema, the disambiguated graph, and both search indexes.
pub struct TableContext {
    pub table: Table,
    pub work_table: Table,
    pub schema: Option<EntitySchema>,
    pub transposed: bool,
    pub used_fallback: bool,
    pub graph: Graph,
    pub bm25: Bm25Index,
    pub vectors: Option<VectorIndex>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ContextError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Embedding(#[from] crate::vector::EmbeddingError),
}

impl TableContext {
    /// Identification calls are billed to `ledger` (the first question on
    /// the table, per the amortized accounting).
    pub fn build(
        engine: &Engine,
        table: &Table,
        ledger: &CallLedger,
    ) -> Result<TableContext, ContextError> {
        let mut warnings = Vec::new();
        let (schema, work_table, transposed, used_fallback, graph) = if engine.flags.row_oriented {
            // Row-oriented ablation: no identification, one node per row.
            (None, table.clone(), false, false, build_row_graph(table))
        } else {
            let outcome = identify_schema(
                table,
                &engine.gateway,
                ledger,
                &engine.prompts,
                &engine.pk_examples,
                &engine.relation_examples,
                engine.search.window,
            )?;
            warnings.extend(outcome.warnings);
            let graph = build_graph(&outcome.table, &outcome.schema, outcome.transposed)?;
            (
                Some(outcome.schema),
                outcome.table,
                outcome.transposed,
                outcome.used_fallback,
                graph,
            )
        };

        let mut graph = graph;
        let report = disambiguate(
            &mut graph,
            Some(engine.embedder.as_ref()),
            engine.search.merge_threshold,
        )?;
        warnings.extend(report.warnings);

        let bm25 = Bm25Index::from_graph(&graph, engine.search.bm25_k1, engine.search.bm25_b);
        let vectors = if engine.flags.no_semantic {
            None
        } else {
            Some(VectorIndex::build(
                &graph,
                engine.embedder.as_ref(),
                engine.search.depth,
            )?)
        };

        Ok(TableContext {
            table: table.clone(),
            work_table,
            schema,
            transposed,
            used_fallback,
            graph,
            bm25,
            vectors,
            warnings,
        })
    }

    /// Like [`TableContext::build`] but without any LLM: heuristic schema
    /// only. Used by CLI paths that have no provider configured.
    pub fn build_with_fallback_schema(
        table: &Table,
        embedder: &dyn EmbeddingProvider,
        search: &SearchConfig,
    ) -> Result<TableContext, ContextError> {
        let schema = fallback_schema(table);
        let mut graph = build_graph(table, &schema, false)?;
        let report = disambiguate(&mut graph, Some(embedder), search.merge_threshold)?;
        let bm25 = Bm25Index::from_graph(&graph, search.bm25_k1, search.bm25_b);
        let vectors = Some(VectorIndex::build(&graph, embedder, search.depth)?);
        Ok(TableContext {
            table: table.clone(),
            work_table: table.clone(),
            schema: Some(schema),
            transposed: false,
            used_fallback: true,
            graph,
            bm25,
            vectors,
            warnings: report.warnings,
        })
    }
}

/// Per-question state: the Cypher overlay (persisting across the iterations
/// of one question) and the call ledger.
pub struct QuestionSession<'e> {
    pub engine: &'e Engine,
    pub ctx: &'e TableContext,
    pub overlay: Overlay<'e>,
    pub ledger: CallLedger,
}

impl<'e> QuestionSession<'e> {
    pub fn new(engine: &'e Engine, ctx: &'e TableContext) -> Self {
        QuestionSession {
            engine,
            ctx,
            overlay: Overlay::new(&ctx.graph),
            ledger: CallLedger::new(),
        }
    }

    /// One retrieval round. Never fails: graph-search problems are recorded
    /// in `cypher_failure` and the fusion result stands on its own.
    pub fn retrieve(&mut self, question_slot: &str) -> RetrievalResult {
        let mut result = RetrievalResult::default();
        let flags = self.engine.flags;

        if !flags.no_graph_search {
            self.graph_search(question_slot, &mut result);
        }

        let entity_ids = self.ctx.graph.entity_ids();
        let question_text = first_line(question_slot);

        let bm25_scores: BTreeMap<NodeId, f64> = if flags.no_fulltext {
            entity_ids.iter().map(|id| (*id, 0.0)).collect()
        } else {
            let raw = self.ctx.bm25.score(question_text);
            entity_ids
                .iter()
                .map(|id| (*id, raw.get(id).copied().unwrap_or(0.0)))
                .collect()
        };

        let semantic_scores: BTreeMap<NodeId, f64> = match (&self.ctx.vectors, flags.no_semantic) {
            (Some(index), false) => {
                match crate::vector::embed_batched(
                    self.engine.embedder.as_ref(),
                    &[question_text.to_string()],
                )
                .and_then(|mut vs| index.score(&vs.remove(0)))
                {
                    Ok(scores) => scores,
                    Err(e) => {
                        result
                            .warnings
                            .push(format!("semantic scoring unavailable: {e}"));
                        entity_ids.iter().map(|id| (*id, 0.0)).collect()
                    }
                }
            }
            _ => entity_ids.iter().map(|id| (*id, 0.0)).collect(),
        };

        let fused = fuse(&bm25_scores, &semantic_scores, &self.engine.search);
        let k = self.engine.search.k;
        let mut hits: Vec<SearchHit> = fused.into_iter().take(k).collect();

        // Cypher-touched base entities join the hit list even beyond K.
        let touched: Vec<NodeId> = result
            .cypher_touched
            .iter()
            .copied()
            .filter(|id| {
                self.ctx
                    .graph
                    .get_node(*id)
                    .map(|n| n.kind == crate::graph::NodeKind::Entity)
                    .unwrap_or(false)
            })
            .collect();
        for id in touched {
            if let Some(hit) = hits.iter_mut().find(|h| h.entity_id == id) {
                hit.via.cypher = true;
            } else {
                hits.push(SearchHit {
                    entity_id: id,
                    bm25: bm25_scores.get(&id).copied().unwrap_or(0.0),
                    semantic: semantic_scores.get(&id).copied().unwrap_or(0.0),
                    fused: None,
                    via: Via {
                        fusion: false,
                        cypher: true,
                    },
                });
            }
        }
        hits.sort_by(|a, b| {
            let block = |h: &SearchHit| u8::from(!h.via.cypher);
            block(a)
                .cmp(&block(b))
                .then_with(|| {
                    b.fused
                        .unwrap_or(f64::NEG_INFINITY)
                        .total_cmp(&a.fused.unwrap_or(f64::NEG_INFINITY))
                })
                .then(a.entity_id.cmp(&b.entity_id))
        });
        result.hits = hits;
        result
    }

    fn graph_search(&mut self, question_slot: &str, result: &mut RetrievalResult) {
        let schema_text = export_schema(&self.overlay);
        let mut vars = BTreeMap::new();
        vars.insert("schema", schema_text);
        vars.insert("examples", self.engine.cypher_examples.clone());
        vars.insert("question", question_slot.to_string());
        let prompt = match self.engine.prompts.render(TemplateId::TextToCypher, &vars) {
            Ok(p) => p,
            Err(e) => {
                result.cypher_failure = Some(GraphSearchFailure::Llm(e.to_string()));
                return;
            }
        };
        let reply = match self.engine.gateway.complete(
            &self.engine.chat_request(CallTag::TextToCypher, prompt),
            &self.ledger,
        ) {
            Ok(r) => r,
            Err(e) => {
                result.cypher_failure = Some(GraphSearchFailure::Llm(e.to_string()));
                return;
            }
        };
        let query = extract_cypher(&reply);
        result.cypher_query = Some(query.clone());
        match run_query_in(&query, &mut self.overlay, &Budget::default()) {
            Ok(outcome) => {
                result.cypher_columns = outcome.rows.columns.clone();
                result.cypher_rows = outcome.rows_text;
                result.cypher_touched = outcome.touched_node_ids;
                result.warnings.extend(outcome.warnings);
                result.cypher_created = outcome
                    .created_node_ids
                    .iter()
                    .filter_map(|id| self.overlay.get_node(*id))
                    .map(|n| CreatedNode {
                        id: n.id,
                        label: n.label.clone(),
                        props: n.props.clone(),
                    })
                    .collect();
            }
            Err(failure) => {
                result.cypher_failure = Some(GraphSearchFailure::Query(failure));
            }
        }
    }
}

/// The question text proper, without any appended iteration feedback.
fn first_line(question_slot: &str) -> &str {
    question_slot.lines().next().unwrap_or(question_slot)
}

/// Strips markdown code fences and label noise from an LLM Cypher reply and
/// keeps the first statement.
pub fn extract_cypher(reply: &str) -> String {
    let trimmed = reply.trim();
    let body = if let Some(start) = trimmed.find("```") {
        let after = &trimmed[start + 3..];
        let after = match after.find('\n') {
            // Drop a language tag on the fence line ("```cypher").
            Some(nl) if after[..nl].trim().chars().all(|c| c.is_alphanumeric()) => &after[nl + 1..],
            _ => after,
        };
        match after.find("```") {
            Some(end) => &after[..end],
            None => after,
        }
    } else {
        trimmed
    };
    let body = body.trim();
    let body = body
        .strip_prefix("Cypher code:")
        .or_else(|| body.strip_prefix("cypher code:"))
        .unwrap_or(body)
        .trim();
    match body.find(';') {
        Some(end) => body[..end].trim().to_string(),
        None => body.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(pairs: &[(NodeId, f64)]) -> BTreeMap<NodeId, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn fuse_hand_arithmetic() {
        let cfg = SearchConfig::default();
        let bm25 = scores(&[(1, 2.0), (2, 1.0), (3, 0.0)]);
        let cos = scores(&[(1, 0.2), (2, 0.4), (3, 0.9)]);
        let hits = fuse(&bm25, &cos, &cfg);
        let by_id: BTreeMap<NodeId, f64> =
            hits.iter().map(|h| (h.entity_id, h.fused.unwrap())).collect();
        assert!((by_id[&1] - 1.0).abs() < 1e-12);
        assert!((by_id[&2] - (0.5 + 0.2 / 0.7)).abs() < 1e-12);
        assert!((by_id[&3] - 1.0).abs() < 1e-12);
        // Entities 1 and 3 tie at 1.0; ties break by ascending id.
        let order: Vec<NodeId> = hits.iter().map(|h| h.entity_id).collect();
        assert_eq!(order, vec![1, 3, 2]);
    }

    #[test]
    fn zero_semantic_weight_degenerates_to_bm25_order() {
        let cfg = SearchConfig {
            w_semantic: 0.0,
            ..SearchConfig::default()
        };
        let bm25 = scores(&[(1, 0.3), (2, 2.0), (3, 1.1)]);
        let cos = scores(&[(1, 0.9), (2, 0.1), (3, 0.5)]);
        let order: Vec<NodeId> = fuse(&bm25, &cos, &cfg).iter().map(|h| h.entity_id).collect();
        assert_eq!(order, vec![2, 3, 1]);
    }

    #[test]
    fn top_in_both_families_is_top_fused() {
        let cfg = SearchConfig::default();
        let bm25 = scores(&[(1, 5.0), (2, 1.0), (3, 0.0)]);
        let cos = scores(&[(1, 0.9), (2, 0.7), (3, 0.1)]);
        let hits = fuse(&bm25, &cos, &cfg);
        assert_eq!(hits[0].entity_id, 1);
    }

    #[test]
    fn positive_scaling_of_bm25_preserves_order() {
        let cfg = SearchConfig::default();
        let bm25 = scores(&[(1, 0.5), (2, 3.0), (3, 1.7), (4, 0.0)]);
        let cos = scores(&[(1, 0.8), (2, 0.2), (3, 0.4), (4, 0.6)]);
        let base: Vec<NodeId> = fuse(&bm25, &cos, &cfg).iter().map(|h| h.entity_id).collect();
        let scaled: BTreeMap<NodeId, f64> = bm25.iter().map(|(k, v)| (*k, v * 37.5)).collect();
        let after: Vec<NodeId> = fuse(&scaled, &cos, &cfg).iter().map(|h| h.entity_id).collect();
        assert_eq!(base, after);
    }

    #[test]
    fn constant_family_normalizes_to_zero() {
        let cfg = SearchConfig::default();
        let bm25 = scores(&[(1, 0.0), (2, 0.0)]);
        let cos = scores(&[(1, 0.3), (2, 0.6)]);
        let hits = fuse(&bm25, &cos, &cfg);
        assert_eq!(hits[0].entity_id, 2);
        assert!((hits[1].fused.unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn extract_cypher_strips_fences_and_labels() {
        assert_eq!(extract_cypher("MATCH (n) RETURN n"), "MATCH (n) RETURN n");
        assert_eq!(
            extract_cypher("```cypher\nMATCH (n) RETURN n\n```"),
            "MATCH (n) RETURN n"
        );
        assert_eq!(
            extract_cypher("```\nMATCH (n) RETURN n\n```"),
            "MATCH (n) RETURN n"
        );
        assert_eq!(
            extract_cypher("Cypher code:\nMATCH (n) RETURN n; MATCH (m) RETURN m"),
            "MATCH (n) RETURN n"
        );
    }
}
