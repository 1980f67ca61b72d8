//! A Cypher subset: MATCH / WHERE / WITH / CREATE / RETURN / UNWIND with
//! aggregates, string and numeric functions, evaluated over a per-question
//! overlay of the table graph.
//!
//! Query string -> tokenizer -> parser -> AST -> clause-pipeline evaluator.

pub mod ast;
pub mod eval;
pub mod parser;
pub mod token;

use serde::Serialize;

use crate::graph::Graph;
use crate::value::NodeId;

pub use ast::{print_expr, print_query, Query};
pub use eval::{evaluate, BindingTable, Budget, EvalError, EvalOutput, Overlay};
pub use parser::ParseError;
pub use token::{tokenize, LexError, Token};

/// How a query failed; parse-shaped failures are distinguished from
/// runtime and budget failures for exit codes and prompt feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Lex,
    Parse,
    Unsupported,
    Eval,
    Budget,
}

/// Structured failure value; the question pipeline records it and keeps
/// going with fusion-only retrieval.
#[derive(Debug, Clone, Serialize)]
pub struct QueryFailure {
    pub kind: FailureKind,
    pub message: String,
    pub span: Option<(usize, usize)>,
}

impl std::fmt::Display for QueryFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for QueryFailure {}

impl QueryFailure {
    fn from_lex(e: LexError) -> Self {
        QueryFailure {
            kind: FailureKind::Lex,
            message: e.to_string(),
            span: Some((e.offset, e.offset + e.ch.len_utf8())),
        }
    }

    fn from_parse(e: ParseError) -> Self {
        match e {
            ParseError::Syntax { span, .. } => QueryFailure {
                kind: FailureKind::Parse,
                message: e.to_string(),
                span: Some(span),
            },
            ParseError::Unsupported { span, .. } => QueryFailure {
                kind: FailureKind::Unsupported,
                message: e.to_string(),
                span: Some(span),
            },
        }
    }

    fn from_eval(e: EvalError) -> Self {
        QueryFailure {
            kind: match e {
                EvalError::Budget(_) => FailureKind::Budget,
                _ => FailureKind::Eval,
            },
            message: e.to_string(),
            span: None,
        }
    }
}

/// Everything a query run produces. `rows_text` is the result table
/// rendered with node references resolved against the overlay, so it stays
/// meaningful after the overlay is gone.
#[derive(Debug)]
pub struct QueryOutcome {
    pub rows: BindingTable,
    pub rows_text: Vec<Vec<String>>,
    /// Base-graph nodes appearing in a final RETURN row.
    pub touched_node_ids: Vec<NodeId>,
    /// Overlay nodes created by this run, in creation order.
    pub created_node_ids: Vec<NodeId>,
    pub created_rel_count: usize,
    pub warnings: Vec<String>,
}

pub fn parse_query(src: &str) -> Result<Query, QueryFailure> {
    let tokens = tokenize(src).map_err(QueryFailure::from_lex)?;
    parser::parse(&tokens).map_err(QueryFailure::from_parse)
}

/// Runs a query against a fresh overlay of `graph`. The base graph is never
/// mutated; CREATE results are discarded with the overlay.
pub fn run_query(src: &str, graph: &Graph) -> Result<QueryOutcome, QueryFailure> {
    let mut overlay = Overlay::new(graph);
    run_query_in(src, &mut overlay, &Budget::default())
}

/// Runs a query inside an existing overlay, so created nodes persist across
/// the queries of one question.
pub fn run_query_in(
    src: &str,
    overlay: &mut Overlay,
    budget: &Budget,
) -> Result<QueryOutcome, QueryFailure> {
    let query = parse_query(src)?;
    let output = evaluate(&query, overlay, budget).map_err(QueryFailure::from_eval)?;
    let rows_text = output
        .table
        .rows
        .iter()
        .map(|row| row.iter().map(|v| render_value(v, overlay)).collect())
        .collect();
    Ok(QueryOutcome {
        rows: output.table,
        rows_text,
        touched_node_ids: output.touched,
        created_node_ids: output.created_nodes,
        created_rel_count: output.created_rels,
        warnings: output.warnings,
    })
}

/// Renders a value with node references resolved: a node with a value shows
/// the value, otherwise its label and properties.
pub fn render_value(value: &crate::value::Value, view: &dyn crate::graph::GraphView) -> String {
    use crate::value::Value;
    match value {
        Value::Node(id) => match view.get_node(*id) {
            Some(node) if !node.value.is_empty() => node.value.clone(),
            Some(node) => {
                let props = Value::Map(node.props.clone());
                format!("(:{} {})", node.label, props)
            }
            None => format!("#{id}"),
        },
        Value::List(items) => {
            let rendered: Vec<String> = items.iter().map(|v| render_value(v, view)).collect();
            format!("[{}]", rendered.join(", "))
        }
        other => other.to_string(),
    }
}
