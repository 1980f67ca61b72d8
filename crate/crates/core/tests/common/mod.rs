//! Shared test support: the random graph/query generator and the
//! brute-force enumeration oracle used by both the differential suite and
//! the acceptance suite. The oracle never touches the lexer, parser, or
//! pipeline evaluator.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use tunes_core::cypher::run_query;
use tunes_core::graph::{Graph, GraphView, NodeKind};
use tunes_core::value::{NodeId, Value};

const VALUES: &[&str] = &["2010", "2011", "a", "b", "5"];
const LABELS: &[&str] = &["Year", "Title", "Episodes", "X"];
const RELS: &[&str] = &["air_in", "has_episodes", "rel"];
const PROPS: &[&str] = &["value", "title", "row_address", "column_address"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dir {
    Out,
    In,
    Undirected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Eq => "=",
            Cmp::Ne => "<>",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Lit {
    Str(String),
    Int(i64),
}

impl Lit {
    pub fn render(&self) -> String {
        match self {
            Lit::Str(s) => format!("'{s}'"),
            Lit::Int(i) => i.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpecNode {
    var: String,
    label: Option<String>,
    prop: Option<(String, Lit)>,
}

#[derive(Debug, Clone)]
pub struct SpecQuery {
    a: SpecNode,
    segment: Option<(Option<String>, Dir, SpecNode)>,
    where_clause: Option<(String, String, Cmp, Lit)>,
    count: bool,
    returns: Vec<String>,
}

impl SpecQuery {
    pub fn render(&self) -> String {
        let node = |n: &SpecNode| {
            let mut s = format!("({}", n.var);
            if let Some(l) = &n.label {
                s.push(':');
                s.push_str(l);
            }
            if let Some((k, v)) = &n.prop {
                s.push_str(&format!(" {{{k}: {}}}", v.render()));
            }
            s.push(')');
            s
        };
        let mut q = format!("MATCH {}", node(&self.a));
        if let Some((rel, dir, b)) = &self.segment {
            let body = match rel {
                Some(r) => format!("[:{r}]"),
                None => "[]".to_string(),
            };
            let arrow = match dir {
                Dir::Out => format!("-{body}->"),
                Dir::In => format!("<-{body}-"),
                Dir::Undirected => format!("-{body}-"),
            };
            q.push_str(&arrow);
            q.push_str(&node(b));
        }
        if let Some((var, prop, cmp, lit)) = &self.where_clause {
            q.push_str(&format!(" WHERE {var}.{prop} {} {}", cmp.symbol(), lit.render()));
        }
        if self.count {
            q.push_str(&format!(" RETURN count({})", self.returns[0]));
        } else {
            q.push_str(&format!(" RETURN {}", self.returns.join(", ")));
        }
        q
    }
}

pub fn random_graph(rng: &mut ChaCha8Rng) -> Graph {
    let mut graph = Graph::new();
    let n_nodes = rng.random_range(1..=8);
    for _ in 0..n_nodes {
        let is_entity = rng.random_bool(0.4);
        let value = VALUES[rng.random_range(0..VALUES.len())].to_string();
        let mut addresses = BTreeSet::new();
        for _ in 0..rng.random_range(0..3) {
            addresses.insert(tunes_core::table::CellAddress::new(
                rng.random_range(0..4),
                rng.random_range(0..4),
            ));
        }
        let mut props = BTreeMap::new();
        if is_entity && rng.random_bool(0.8) {
            props.insert(
                "title".to_string(),
                Value::Str(VALUES[rng.random_range(0..VALUES.len())].to_string()),
            );
        }
        let (kind, label) = if is_entity {
            (NodeKind::Entity, "Entity".to_string())
        } else {
            (
                NodeKind::Attribute,
                LABELS[rng.random_range(0..LABELS.len())].to_string(),
            )
        };
        graph.add_node(kind, label, value, addresses, props);
    }
    let ids = graph.node_ids();
    let n_edges = rng.random_range(0..=12);
    for _ in 0..n_edges {
        let src = ids[rng.random_range(0..ids.len())];
        let dst = ids[rng.random_range(0..ids.len())];
        graph.add_edge(src, dst, RELS[rng.random_range(0..RELS.len())]);
    }
    graph
}

pub fn random_lit(rng: &mut ChaCha8Rng) -> Lit {
    if rng.random_bool(0.5) {
        Lit::Str(VALUES[rng.random_range(0..VALUES.len())].to_string())
    } else {
        Lit::Int(rng.random_range(0..5))
    }
}

pub fn random_node(rng: &mut ChaCha8Rng, var: &str) -> SpecNode {
    let label = if rng.random_bool(0.5) {
        Some(if rng.random_bool(0.3) {
            "Entity".to_string()
        } else {
            LABELS[rng.random_range(0..LABELS.len())].to_string()
        })
    } else {
        None
    };
    let prop = if rng.random_bool(0.4) {
        Some((
            PROPS[rng.random_range(0..PROPS.len())].to_string(),
            random_lit(rng),
        ))
    } else {
        None
    };
    SpecNode {
        var: var.to_string(),
        label,
        prop,
    }
}

pub fn random_query(rng: &mut ChaCha8Rng) -> SpecQuery {
    let a = random_node(rng, "a");
    let segment = if rng.random_bool(0.6) {
        let rel = if rng.random_bool(0.6) {
            Some(RELS[rng.random_range(0..RELS.len())].to_string())
        } else {
            None
        };
        let dir = match rng.random_range(0..3) {
            0 => Dir::Out,
            1 => Dir::In,
            _ => Dir::Undirected,
        };
        Some((rel, dir, random_node(rng, "b")))
    } else {
        None
    };
    let vars: Vec<String> = if segment.is_some() {
        vec!["a".to_string(), "b".to_string()]
    } else {
        vec!["a".to_string()]
    };
    let where_clause = if rng.random_bool(0.5) {
        let var = vars[rng.random_range(0..vars.len())].clone();
        let cmp = [Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge][rng.random_range(0..6)];
        Some((
            var,
            PROPS[rng.random_range(0..PROPS.len())].to_string(),
            cmp,
            random_lit(rng),
        ))
    } else {
        None
    };
    let count = rng.random_bool(0.3);
    let returns = if count {
        vec![vars[rng.random_range(0..vars.len())].clone()]
    } else {
        let mut r = vars.clone();
        if r.len() == 2 && rng.random_bool(0.3) {
            r.remove(rng.random_range(0..2));
        }
        r
    };
    SpecQuery {
        a,
        segment,
        where_clause,
        count,
        returns,
    }
}

// --- the oracle: direct enumeration, independent property lookup ---------

#[derive(Debug, Clone, PartialEq)]
pub enum OVal {
    Str(String),
    Int(i64),
    Null,
}

/// Independent reimplementation of property resolution from the node's
/// public fields.
pub fn oracle_prop(graph: &Graph, id: NodeId, key: &str) -> OVal {
    let node = graph.get_node(id).unwrap();
    if let Some(v) = node.props.get(key) {
        return match v {
            Value::Str(s) => OVal::Str(s.clone()),
            Value::Int(i) => OVal::Int(*i),
            _ => OVal::Null,
        };
    }
    match key {
        "value" => OVal::Str(node.value.clone()),
        "row_address" => node
            .addresses
            .iter()
            .map(|a| a.row)
            .min()
            .map(|r| OVal::Int(r as i64))
            .unwrap_or(OVal::Null),
        "column_address" => node
            .addresses
            .iter()
            .map(|a| a.col)
            .min()
            .map(|c| OVal::Int(c as i64))
            .unwrap_or(OVal::Null),
        _ if key == node.label.to_lowercase() => OVal::Str(node.value.clone()),
        _ => OVal::Null,
    }
}

pub fn oracle_compare(cmp: Cmp, lhs: &OVal, rhs: &Lit) -> bool {
    match (lhs, rhs) {
        (OVal::Null, _) => false,
        (OVal::Str(a), Lit::Str(b)) => match cmp {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
        },
        (OVal::Int(a), Lit::Int(b)) => match cmp {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
        },
        // mismatched types compare false
        _ => false,
    }
}

pub fn oracle_node_ok(graph: &Graph, id: NodeId, spec: &SpecNode) -> bool {
    let node = graph.get_node(id).unwrap();
    if let Some(label) = &spec.label {
        let kind_name = match node.kind {
            NodeKind::Entity => "Entity",
            NodeKind::Attribute => "Attribute",
        };
        if node.label != *label && kind_name != label {
            return false;
        }
    }
    if let Some((key, lit)) = &spec.prop {
        if !oracle_compare(Cmp::Eq, &oracle_prop(graph, id, key), lit) {
            return false;
        }
    }
    true
}

/// Enumerates every assignment of pattern variables to nodes/edges.
pub fn oracle_rows(graph: &Graph, query: &SpecQuery) -> Vec<Vec<String>> {
    let mut assignments: Vec<BTreeMap<String, NodeId>> = Vec::new();
    match &query.segment {
        None => {
            for id in graph.node_ids() {
                if oracle_node_ok(graph, id, &query.a) {
                    let mut m = BTreeMap::new();
                    m.insert(query.a.var.clone(), id);
                    assignments.push(m);
                }
            }
        }
        Some((rel_type, dir, b)) => {
            let mut oriented: Vec<(NodeId, NodeId)> = Vec::new();
            for edge in graph.edges() {
                if let Some(t) = rel_type {
                    if edge.rel != *t {
                        continue;
                    }
                }
                match dir {
                    Dir::Out => oriented.push((edge.src, edge.dst)),
                    Dir::In => oriented.push((edge.dst, edge.src)),
                    Dir::Undirected => {
                        oriented.push((edge.src, edge.dst));
                        oriented.push((edge.dst, edge.src));
                    }
                }
            }
            for (na, nb) in oriented {
                if oracle_node_ok(graph, na, &query.a) && oracle_node_ok(graph, nb, b) {
                    let mut m = BTreeMap::new();
                    m.insert(query.a.var.clone(), na);
                    m.insert(b.var.clone(), nb);
                    assignments.push(m);
                }
            }
        }
    }

    if let Some((var, prop, cmp, lit)) = &query.where_clause {
        assignments.retain(|m| oracle_compare(*cmp, &oracle_prop(graph, m[var], prop), lit));
    }

    if query.count {
        return vec![vec![format!("int:{}", assignments.len())]];
    }
    assignments
        .into_iter()
        .map(|m| {
            query
                .returns
                .iter()
                .map(|v| format!("node:{}", m[v]))
                .collect()
        })
        .collect()
}

pub fn canon_impl_rows(rows: &[Vec<Value>]) -> Vec<String> {
    let mut out: Vec<String> = rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| match v {
                    Value::Node(id) => format!("node:{id}"),
                    Value::Int(i) => format!("int:{i}"),
                    Value::Str(s) => format!("str:{s}"),
                    other => format!("other:{other}"),
                })
                .collect::<Vec<_>>()
                .join("\t")
        })
        .collect();
    out.sort();
    out
}

pub fn canon_oracle_rows(rows: Vec<Vec<String>>) -> Vec<String> {
    let mut out: Vec<String> = rows.into_iter().map(|r| r.join("\t")).collect();
    out.sort();
    out
}


/// Runs `n` generator-random queries against the brute-force oracle.
/// Returns the elapsed time; panics on the first divergence.
pub fn run_differential(n: usize, seed: u64) -> std::time::Duration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = std::time::Instant::now();
    for case in 0..n {
        let graph = random_graph(&mut rng);
        let query = random_query(&mut rng);
        let src = query.render();
        let outcome = run_query(&src, &graph)
            .unwrap_or_else(|e| panic!("case {case}: query '{src}' failed: {e}"));
        let got = canon_impl_rows(&outcome.rows.rows);
        let want = canon_oracle_rows(oracle_rows(&graph, &query));
        assert_eq!(
            got, want,
            "case {case} diverged\nquery: {src}\ngraph: {}",
            graph.to_json()
        );
    }
    started.elapsed()
}
