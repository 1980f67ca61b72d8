//! The per-table property graph: entity and attribute nodes carrying table
//! addresses, typed directed edges, node disambiguation, neighborhood and
//! schema views.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{normalize_label, EntitySchema, KeyPosition};
use crate::table::{CellAddress, Table};
use crate::value::{fnv1a64, NodeId, Value};
use crate::vector::{cosine, EmbeddingError, EmbeddingProvider};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("bad graph dump: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Entity,
    Attribute,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Entity => "Entity",
            NodeKind::Attribute => "Attribute",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// `"Entity"` for entity nodes, the normalized attribute name for
    /// attribute nodes, whatever the CREATE pattern said for created nodes.
    pub label: String,
    /// Entity nodes: key cells joined by " — ". Attribute nodes: the cell
    /// text, never empty for table-derived nodes.
    pub value: String,
    pub addresses: BTreeSet<CellAddress>,
    /// Extra properties: per-key-attribute values on entities, arbitrary
    /// values on CREATE-derived nodes.
    pub props: BTreeMap<String, Value>,
}

impl Node {
    /// Property resolution order: explicit props, `value`, the address
    /// minima, then the label-lowercased alias for the node's value (so
    /// `y.year` works on a `Year` node). Missing keys are `None` (null).
    pub fn lookup_prop(&self, key: &str) -> Option<Value> {
        if let Some(v) = self.props.get(key) {
            return Some(v.clone());
        }
        match key {
            "value" => Some(Value::Str(self.value.clone())),
            "row_address" => self
                .addresses
                .iter()
                .map(|a| a.row)
                .min()
                .map(|r| Value::Int(r as i64)),
            "column_address" => self
                .addresses
                .iter()
                .map(|a| a.col)
                .min()
                .map(|c| Value::Int(c as i64)),
            _ if key == self.label.to_lowercase() => Some(Value::Str(self.value.clone())),
            _ => None,
        }
    }

    fn sort_key(&self) -> (i32, i32, NodeId) {
        let col = self.addresses.iter().map(|a| a.col).min().unwrap_or(i32::MAX);
        let row = self.addresses.iter().map(|a| a.row).min().unwrap_or(i32::MAX);
        (col, row, self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub rel: String,
}

/// Read access shared by the base graph and per-question overlays.
pub trait GraphView {
    fn get_node(&self, id: NodeId) -> Option<&Node>;
    /// All node ids, ascending.
    fn node_ids(&self) -> Vec<NodeId>;
    fn out_edges(&self, id: NodeId) -> Vec<&Edge>;
    fn in_edges(&self, id: NodeId) -> Vec<&Edge>;

    fn node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.get_node(id).ok_or(GraphError::UnknownNode(id))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
    out_adj: BTreeMap<NodeId, Vec<usize>>,
    in_adj: BTreeMap<NodeId, Vec<usize>>,
    next_id: NodeId,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn add_node(
        &mut self,
        kind: NodeKind,
        label: impl Into<String>,
        value: impl Into<String>,
        addresses: BTreeSet<CellAddress>,
        props: BTreeMap<String, Value>,
    ) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            id,
            Node {
                id,
                kind,
                label: label.into(),
                value: value.into(),
                addresses,
                props,
            },
        );
        id
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, rel: impl Into<String>) {
        let idx = self.edges.len();
        self.edges.push(Edge {
            src,
            dst,
            rel: rel.into(),
        });
        self.out_adj.entry(src).or_default().push(idx);
        self.in_adj.entry(dst).or_default().push(idx);
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Entity node ids, ascending; the retrieval universe.
    pub fn entity_ids(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Entity)
            .map(|n| n.id)
            .collect()
    }

    /// First id that will be assigned next; overlays allocate from here.
    pub fn next_id(&self) -> NodeId {
        self.next_id
    }

    fn rebuild_adjacency(&mut self) {
        self.out_adj.clear();
        self.in_adj.clear();
        for (idx, e) in self.edges.iter().enumerate() {
            self.out_adj.entry(e.src).or_default().push(idx);
            self.in_adj.entry(e.dst).or_default().push(idx);
        }
    }

    /// Deterministic content hash; mutation-free queries leave it unchanged.
    pub fn content_hash(&self) -> u64 {
        fnv1a64(self.to_json().as_bytes())
    }
}

impl GraphView for Graph {
    fn get_node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    fn out_edges(&self, id: NodeId) -> Vec<&Edge> {
        self.out_adj
            .get(&id)
            .map(|v| v.iter().map(|i| &self.edges[*i]).collect())
            .unwrap_or_default()
    }

    fn in_edges(&self, id: NodeId) -> Vec<&Edge> {
        self.in_adj
            .get(&id)
            .map(|v| v.iter().map(|i| &self.edges[*i]).collect())
            .unwrap_or_default()
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Builds the graph from a column-oriented table: one entity node per data
/// row, one attribute node per non-empty non-key cell, one typed edge per
/// (entity, attribute cell). Blank cells are skipped here and nowhere else.
///
/// `transposed` records that the working table was transposed from the
/// original; node addresses are mapped back to original coordinates.
pub fn build_graph(
    table: &Table,
    schema: &EntitySchema,
    transposed: bool,
) -> Result<Graph, GraphError> {
    let KeyPosition::Columns(_) = schema.primary_key.position else {
        return Err(GraphError::SchemaMismatch(
            "graph construction requires a column-oriented schema".into(),
        ));
    };
    for attr in &schema.attributes {
        if attr.index >= 0 && attr.index as usize >= table.n_cols() {
            return Err(GraphError::SchemaMismatch(format!(
                "attribute '{}' column {} out of range",
                attr.name, attr.index
            )));
        }
    }
    let key_attrs: Vec<_> = schema.key_attributes().collect();
    if key_attrs.is_empty() {
        return Err(GraphError::SchemaMismatch("schema has no key attribute".into()));
    }

    let map_addr = |r: i32, c: i32| {
        if transposed {
            CellAddress::new(c, r)
        } else {
            CellAddress::new(r, c)
        }
    };

    let mut graph = Graph::new();
    let first_data_row = if schema.has_header { 1 } else { 0 };
    for (ordinal, row) in (first_data_row..table.n_rows()).enumerate() {
        let mut parts = Vec::new();
        let mut addresses = BTreeSet::new();
        let mut props = BTreeMap::new();
        for attr in &key_attrs {
            let text = if attr.index < 0 {
                (ordinal + 1).to_string()
            } else {
                table.cell(row, attr.index as usize).to_string()
            };
            addresses.insert(map_addr(row as i32, attr.index));
            props.insert(
                normalize_label(&attr.name).to_lowercase(),
                Value::Str(text.clone()),
            );
            parts.push(text);
        }
        let entity = graph.add_node(
            NodeKind::Entity,
            "Entity",
            parts.join(" — "),
            addresses,
            props,
        );

        for attr in schema.value_attributes() {
            let cell = table.cell(row, attr.index as usize);
            if cell.trim().is_empty() {
                continue;
            }
            let mut addr = BTreeSet::new();
            addr.insert(map_addr(row as i32, attr.index));
            let attr_node = graph.add_node(
                NodeKind::Attribute,
                normalize_label(&attr.name),
                cell,
                addr,
                BTreeMap::new(),
            );
            let rel = schema
                .relation_for(&attr.name)
                .map(|r| r.relation.clone())
                .unwrap_or_else(|| crate::schema::fallback_relation(&attr.name));
            graph.add_edge(entity, attr_node, rel);
        }
    }
    Ok(graph)
}

/// Row-oriented ablation graph: every table row becomes one relationship-
/// free entity node whose value is the whole row joined by " | ".
pub fn build_row_graph(table: &Table) -> Graph {
    let mut graph = Graph::new();
    for r in 0..table.n_rows() {
        let cells: Vec<String> = (0..table.n_cols())
            .map(|c| table.cell(r, c).to_string())
            .collect();
        let addresses = (0..table.n_cols())
            .map(|c| CellAddress::new(r as i32, c as i32))
            .collect();
        graph.add_node(
            NodeKind::Entity,
            "Entity",
            cells.join(" | "),
            addresses,
            BTreeMap::new(),
        );
    }
    graph
}

// ---------------------------------------------------------------------------
// Disambiguation
// ---------------------------------------------------------------------------

#[derive(Debug, Default)]
pub struct DisambigReport {
    pub merges: usize,
    pub warnings: Vec<String>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root index wins so components are order-independent.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Merges duplicate and synonymous attribute nodes within each label:
/// byte-identical values first, then pairs whose embedding cosine exceeds
/// `threshold`, closed transitively via union-find. The merged node keeps
/// the lexicographically smallest member value; addresses are unioned and
/// edges redirected with parallel duplicates dropped. Idempotent.
pub fn disambiguate(
    graph: &mut Graph,
    provider: Option<&dyn EmbeddingProvider>,
    threshold: f64,
) -> Result<DisambigReport, EmbeddingError> {
    let mut report = DisambigReport::default();
    let mut by_label: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
    for node in graph.nodes.values() {
        if node.kind == NodeKind::Attribute {
            by_label.entry(node.label.clone()).or_default().push(node.id);
        }
    }

    // loser -> winner
    let mut remap: BTreeMap<NodeId, NodeId> = BTreeMap::new();

    for ids in by_label.values() {
        // Exact-value merge: survivor is the smallest id per value.
        let mut by_value: BTreeMap<String, Vec<NodeId>> = BTreeMap::new();
        for id in ids {
            by_value
                .entry(graph.nodes[id].value.clone())
                .or_default()
                .push(*id);
        }
        for group in by_value.values() {
            let winner = *group.iter().min().unwrap();
            for id in group {
                if *id != winner {
                    remap.insert(*id, winner);
                }
            }
        }

        // Similarity merge over the distinct values.
        let survivors: Vec<NodeId> = by_value.values().map(|g| *g.iter().min().unwrap()).collect();
        if survivors.len() < 2 {
            continue;
        }
        let Some(provider) = provider else {
            if report.warnings.is_empty() {
                report
                    .warnings
                    .push("similarity merge skipped: no embedding provider".to_string());
            }
            continue;
        };
        let values: Vec<String> = survivors.iter().map(|id| graph.nodes[id].value.clone()).collect();
        let vectors = crate::vector::embed_batched(provider, &values)?;
        let mut uf = UnionFind::new(survivors.len());
        for i in 0..survivors.len() {
            for j in (i + 1)..survivors.len() {
                if cosine(&vectors[i], &vectors[j]) > threshold {
                    uf.union(i, j);
                }
            }
        }
        let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..survivors.len() {
            let root = uf.find(i);
            components.entry(root).or_default().push(i);
        }
        for members in components.values() {
            if members.len() < 2 {
                continue;
            }
            // Canonical member: lexicographically smallest value.
            let winner_idx = *members
                .iter()
                .min_by(|a, b| values[**a].cmp(&values[**b]))
                .unwrap();
            let winner = survivors[winner_idx];
            for m in members {
                let loser = survivors[*m];
                if loser != winner {
                    remap.insert(loser, winner);
                }
            }
        }
    }

    // Resolve chains (exact-merge loser whose winner lost a similarity merge).
    let resolve = |remap: &BTreeMap<NodeId, NodeId>, mut id: NodeId| {
        while let Some(next) = remap.get(&id) {
            id = *next;
        }
        id
    };

    report.merges = remap.len();
    if remap.is_empty() {
        return Ok(report);
    }

    let losers: Vec<NodeId> = remap.keys().copied().collect();
    for loser in losers {
        let winner = resolve(&remap, loser);
        let loser_node = graph.nodes.remove(&loser).expect("loser exists");
        let winner_node = graph.nodes.get_mut(&winner).expect("winner exists");
        winner_node.addresses.extend(loser_node.addresses);
    }

    let mut seen = BTreeSet::new();
    let mut edges = Vec::with_capacity(graph.edges.len());
    for e in graph.edges.drain(..) {
        let src = resolve(&remap, e.src);
        let dst = resolve(&remap, e.dst);
        if seen.insert((src, dst, e.rel.clone())) {
            edges.push(Edge { src, dst, rel: e.rel });
        }
    }
    graph.edges = edges;
    graph.rebuild_adjacency();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Views
// ---------------------------------------------------------------------------

/// Breadth-first node values over the undirected edge view, root first, up
/// to `depth` hops, each node once, ordered within a hop by (table column,
/// row, id).
pub fn neighborhood(
    view: &dyn GraphView,
    start: NodeId,
    depth: usize,
) -> Result<Vec<String>, GraphError> {
    view.node(start)?;
    let mut visited = BTreeSet::new();
    visited.insert(start);
    let mut values = vec![view.node(start)?.value.clone()];
    let mut frontier = vec![start];
    for _hop in 0..depth {
        let mut next = Vec::new();
        for id in &frontier {
            for edge in view.out_edges(*id) {
                if visited.insert(edge.dst) {
                    next.push(edge.dst);
                }
            }
            for edge in view.in_edges(*id) {
                if visited.insert(edge.src) {
                    next.push(edge.src);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by_key(|id| view.get_node(*id).map(|n| n.sort_key()).unwrap_or((0, 0, *id)));
        for id in &next {
            values.push(view.node(*id)?.value.clone());
        }
        frontier = next;
    }
    Ok(values)
}

/// Textual schema for the text-to-Cypher prompt: node labels with property
/// keys (up to 3 sample values each) and the relationship triples, both in
/// deterministic label-lexicographic order.
pub fn export_schema(view: &dyn GraphView) -> String {
    #[derive(Default)]
    struct LabelInfo {
        prop_samples: BTreeMap<String, Vec<String>>,
        value_samples: Vec<String>,
        has_addresses: bool,
    }

    let mut labels: BTreeMap<String, LabelInfo> = BTreeMap::new();
    for id in view.node_ids() {
        let node = view.get_node(id).expect("listed id resolves");
        let info = labels.entry(node.label.clone()).or_default();
        if !node.value.is_empty() {
            push_sample(&mut info.value_samples, node.value.clone());
        }
        if !node.addresses.is_empty() {
            info.has_addresses = true;
        }
        for (key, val) in &node.props {
            let samples = info.prop_samples.entry(key.clone()).or_default();
            push_sample(samples, render_sample(val));
        }
    }

    let mut rel_triples = BTreeSet::new();
    for id in view.node_ids() {
        for edge in view.out_edges(id) {
            let src_label = view.get_node(edge.src).map(|n| n.label.clone()).unwrap_or_default();
            let dst_label = view.get_node(edge.dst).map(|n| n.label.clone()).unwrap_or_default();
            rel_triples.insert((src_label, edge.rel.clone(), dst_label));
        }
    }

    let mut out = String::from("Nodes:\n");
    for (label, info) in &labels {
        let mut fields = Vec::new();
        for (key, samples) in &info.prop_samples {
            fields.push(format!("{key}: [{}]", samples.join(", ")));
        }
        if !info.value_samples.is_empty() {
            fields.push(format!(
                "value: [{}]",
                info.value_samples
                    .iter()
                    .map(|s| format!("'{}'", s.replace('\'', "\\'")))
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        if info.has_addresses {
            fields.push("row_address: int".to_string());
            fields.push("column_address: int".to_string());
        }
        let _ = writeln!(out, "(:{label} {{{}}})", fields.join(", "));
    }
    out.push_str("Relationships:\n");
    for (src, rel, dst) in &rel_triples {
        let _ = writeln!(out, "(:{src})-[:{rel}]->(:{dst})");
    }
    out
}

fn push_sample(samples: &mut Vec<String>, value: String) {
    if samples.len() < 3 && !samples.contains(&value) {
        samples.push(value);
    }
}

fn render_sample(v: &Value) -> String {
    match v {
        Value::Str(s) => format!("'{}'", s.replace('\'', "\\'")),
        other => other.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NodeDump {
    id: NodeId,
    kind: NodeKind,
    label: String,
    value: String,
    addresses: Vec<[i32; 2]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    props: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct GraphDump {
    nodes: Vec<NodeDump>,
    edges: Vec<Edge>,
}

impl Graph {
    pub fn to_json(&self) -> String {
        let dump = GraphDump {
            nodes: self
                .nodes
                .values()
                .map(|n| NodeDump {
                    id: n.id,
                    kind: n.kind,
                    label: n.label.clone(),
                    value: n.value.clone(),
                    addresses: n.addresses.iter().map(|a| [a.row, a.col]).collect(),
                    props: n.props.clone(),
                })
                .collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_string_pretty(&dump).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Graph, GraphError> {
        let dump: GraphDump =
            serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        let mut graph = Graph::new();
        for n in dump.nodes {
            graph.nodes.insert(
                n.id,
                Node {
                    id: n.id,
                    kind: n.kind,
                    label: n.label,
                    value: n.value,
                    addresses: n.addresses.iter().map(|a| CellAddress::new(a[0], a[1])).collect(),
                    props: n.props,
                },
            );
            graph.next_id = graph.next_id.max(n.id + 1);
        }
        for e in dump.edges {
            if !graph.nodes.contains_key(&e.src) || !graph.nodes.contains_key(&e.dst) {
                return Err(GraphError::Format(format!(
                    "edge {} -> {} references a missing node",
                    e.src, e.dst
                )));
            }
            graph.add_edge(e.src, e.dst, e.rel);
        }
        Ok(graph)
    }

    /// DOT rendering for debugging.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph table {\n");
        for node in self.nodes.values() {
            let _ = writeln!(
                out,
                "  n{} [label=\"{}: {}\"];",
                node.id,
                node.label,
                node.value.replace('"', "\\\"")
            );
        }
        for e in &self.edges {
            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", e.src, e.dst, e.rel);
        }
        out.push_str("}\n");
        out
    }
}
