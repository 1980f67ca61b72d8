//! Clause-pipeline evaluation over a copy-on-write overlay of the base
//! graph. Each clause transforms a binding table; CREATE writes only to the
//! overlay, so the base graph is untouched by any query.
//!
//! Evaluation is deliberately permissive: LLM-generated queries are full of
//! small type errors, so comparisons between mismatched types yield false
//! with a warning, arithmetic on non-numbers yields null with a warning,
//! and variable lookup falls back to a unique case-insensitive match
//! before reporting an unbound variable.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::graph::{Edge, Graph, GraphView, Node, NodeKind};
use crate::value::{NodeId, OrdRow, RelInfo, Value};

use super::ast::*;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("unknown function: {0}")]
    UnknownFunction(String),
    #[error("unbound variable: {0}")]
    UnboundVariable(String),
    #[error("{0}")]
    Misuse(String),
    #[error("evaluation budget exceeded: {0}")]
    Budget(&'static str),
}

/// Evaluation limits. LLM queries can be pathological; the pipeline must
/// stay responsive.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    pub max_rows: usize,
    pub wall: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_rows: 10_000,
            wall: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BindingTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl BindingTable {
    /// The unit table: no columns, one empty row. Identity for MATCH.
    fn unit() -> Self {
        BindingTable {
            columns: Vec::new(),
            rows: vec![Vec::new()],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Mutable view layered over an immutable base graph. Created nodes get ids
/// above every base id; the overlay lives for one question and can span
/// several queries.
pub struct Overlay<'g> {
    base: &'g Graph,
    first_overlay_id: NodeId,
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
    out_adj: BTreeMap<NodeId, Vec<usize>>,
    in_adj: BTreeMap<NodeId, Vec<usize>>,
    next_id: NodeId,
}

impl<'g> Overlay<'g> {
    pub fn new(base: &'g Graph) -> Self {
        let first = base.next_id();
        Overlay {
            base,
            first_overlay_id: first,
            nodes: BTreeMap::new(),
            edges: Vec::new(),
            out_adj: BTreeMap::new(),
            in_adj: BTreeMap::new(),
            next_id: first,
        }
    }

    pub fn base(&self) -> &'g Graph {
        self.base
    }

    pub fn is_base(&self, id: NodeId) -> bool {
        id < self.first_overlay_id
    }

    pub fn created_node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn created_edge_count(&self) -> usize {
        self.edges.len()
    }

    fn add_node(&mut self, kind: NodeKind, label: String, value: String, props: BTreeMap<String, Value>) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            id,
            Node {
                id,
                kind,
                label,
                value,
                addresses: BTreeSet::new(),
                props,
            },
        );
        id
    }

    fn add_edge(&mut self, src: NodeId, dst: NodeId, rel: String) {
        let idx = self.edges.len();
        self.edges.push(Edge { src, dst, rel });
        self.out_adj.entry(src).or_default().push(idx);
        self.in_adj.entry(dst).or_default().push(idx);
    }
}

impl GraphView for Overlay<'_> {
    fn get_node(&self, id: NodeId) -> Option<&Node> {
        if self.is_base(id) {
            self.base.get_node(id)
        } else {
            self.nodes.get(&id)
        }
    }

    fn node_ids(&self) -> Vec<NodeId> {
        let mut ids = self.base.node_ids();
        ids.extend(self.nodes.keys().copied());
        ids
    }

    fn out_edges(&self, id: NodeId) -> Vec<&Edge> {
        let mut edges = if self.is_base(id) {
            self.base.out_edges(id)
        } else {
            Vec::new()
        };
        if let Some(idxs) = self.out_adj.get(&id) {
            edges.extend(idxs.iter().map(|i| &self.edges[*i]));
        }
        edges
    }

    fn in_edges(&self, id: NodeId) -> Vec<&Edge> {
        let mut edges = if self.is_base(id) {
            self.base.in_edges(id)
        } else {
            Vec::new()
        };
        if let Some(idxs) = self.in_adj.get(&id) {
            edges.extend(idxs.iter().map(|i| &self.edges[*i]));
        }
        edges
    }
}

#[derive(Debug)]
pub struct EvalOutput {
    pub table: BindingTable,
    pub warnings: Vec<String>,
    /// Base-graph nodes appearing in a final RETURN row, directly or as
    /// the source of a returned property value. Sorted, deduplicated.
    pub touched: Vec<NodeId>,
    /// Overlay nodes created by this evaluation, in creation order.
    pub created_nodes: Vec<NodeId>,
    pub created_rels: usize,
}

struct EvalState {
    warnings: Vec<String>,
    seen_warnings: BTreeSet<String>,
    touched: BTreeSet<NodeId>,
    record_touched: bool,
    base_limit: NodeId,
    deadline: Instant,
    max_rows: usize,
    created_nodes: Vec<NodeId>,
    created_rels: usize,
}

impl EvalState {
    fn new(budget: &Budget, base_limit: NodeId) -> Self {
        EvalState {
            warnings: Vec::new(),
            seen_warnings: BTreeSet::new(),
            touched: BTreeSet::new(),
            record_touched: false,
            base_limit,
            deadline: Instant::now() + budget.wall,
            max_rows: budget.max_rows,
            created_nodes: Vec::new(),
            created_rels: 0,
        }
    }

    fn warn(&mut self, msg: String) {
        if self.warnings.len() < 100 && self.seen_warnings.insert(msg.clone()) {
            self.warnings.push(msg);
        }
    }

    fn touch(&mut self, id: NodeId) {
        if self.record_touched && id < self.base_limit {
            self.touched.insert(id);
        }
    }

    fn check_time(&self) -> Result<(), EvalError> {
        if Instant::now() > self.deadline {
            Err(EvalError::Budget("wall clock"))
        } else {
            Ok(())
        }
    }

    fn check_rows(&self, n: usize) -> Result<(), EvalError> {
        if n > self.max_rows {
            Err(EvalError::Budget("intermediate rows"))
        } else {
            Ok(())
        }
    }
}

/// Variable environment: projected columns plus, during pattern matching
/// and CREATE, an extension map of in-flight bindings. `fallback` carries
/// the pre-projection scope so ORDER BY can reach unprojected variables.
struct Env<'a> {
    columns: &'a [String],
    row: &'a [Value],
    ext: Option<&'a BTreeMap<String, Value>>,
    fallback: Option<(&'a [String], &'a [Value])>,
    /// Lenient lookups turn unbound variables into null (ORDER BY keys).
    lenient: bool,
}

impl<'a> Env<'a> {
    fn of(columns: &'a [String], row: &'a [Value]) -> Self {
        Env {
            columns,
            row,
            ext: None,
            fallback: None,
            lenient: false,
        }
    }

    fn with_ext(columns: &'a [String], row: &'a [Value], ext: &'a BTreeMap<String, Value>) -> Self {
        Env {
            columns,
            row,
            ext: Some(ext),
            fallback: None,
            lenient: false,
        }
    }

    fn lookup_exact(&self, name: &str) -> Option<Value> {
        if let Some(ext) = self.ext {
            if let Some(v) = ext.get(name) {
                return Some(v.clone());
            }
        }
        if let Some(idx) = self.columns.iter().position(|c| c == name) {
            return Some(self.row[idx].clone());
        }
        if let Some((cols, row)) = self.fallback {
            if let Some(idx) = cols.iter().position(|c| c == name) {
                return Some(row[idx].clone());
            }
        }
        None
    }

    /// Exact match first, then a unique case-insensitive match.
    fn lookup(&self, name: &str) -> Option<(Value, bool)> {
        if let Some(v) = self.lookup_exact(name) {
            return Some((v, false));
        }
        let lower = name.to_lowercase();
        let mut matches: Vec<Value> = Vec::new();
        if let Some(ext) = self.ext {
            for (n, v) in ext {
                if n.to_lowercase() == lower {
                    matches.push(v.clone());
                }
            }
        }
        for (i, c) in self.columns.iter().enumerate() {
            if c.to_lowercase() == lower {
                matches.push(self.row[i].clone());
            }
        }
        if matches.is_empty() {
            if let Some((cols, row)) = self.fallback {
                for (i, c) in cols.iter().enumerate() {
                    if c.to_lowercase() == lower {
                        matches.push(row[i].clone());
                    }
                }
            }
        }
        if matches.len() == 1 {
            matches.pop().map(|v| (v, true))
        } else {
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Scope validation
// ---------------------------------------------------------------------------

fn expr_vars(expr: &Expr, out: &mut Vec<String>) {
    match expr {
        Expr::Var(name) => out.push(name.clone()),
        Expr::Literal(_) => {}
        Expr::Prop(e, _) | Expr::Not(e) | Expr::Neg(e) => expr_vars(e, out),
        Expr::List(items) => items.iter().for_each(|e| expr_vars(e, out)),
        Expr::Binary { lhs, rhs, .. } => {
            expr_vars(lhs, out);
            expr_vars(rhs, out);
        }
        Expr::FnCall { args, .. } => args.iter().for_each(|e| expr_vars(e, out)),
    }
}

fn check_vars(expr: &Expr, scope: &BTreeSet<String>) -> Result<(), EvalError> {
    let mut vars = Vec::new();
    expr_vars(expr, &mut vars);
    for v in vars {
        if !scope.contains(&v.to_lowercase()) {
            return Err(EvalError::UnboundVariable(v));
        }
    }
    Ok(())
}

fn pattern_vars(patterns: &[PathPattern]) -> Vec<String> {
    let mut vars = Vec::new();
    for p in patterns {
        if let Some(v) = &p.start.var {
            vars.push(v.clone());
        }
        for (rel, node) in &p.segments {
            if let Some(v) = &rel.var {
                vars.push(v.clone());
            }
            if let Some(v) = &node.var {
                vars.push(v.clone());
            }
        }
    }
    vars
}

/// Every variable referenced in a clause must be bound by an earlier clause
/// or the same MATCH. Scope is tracked case-insensitively to match the
/// lenient lookup rules.
fn validate_scopes(query: &Query) -> Result<(), EvalError> {
    let mut scope: BTreeSet<String> = BTreeSet::new();
    for clause in &query.clauses {
        match clause {
            Clause::Match(m) => {
                let mut new_scope = scope.clone();
                for v in pattern_vars(&m.patterns) {
                    new_scope.insert(v.to_lowercase());
                }
                for p in &m.patterns {
                    for (_, e) in &p.start.props {
                        check_vars(e, &new_scope)?;
                    }
                    for (_, node) in &p.segments {
                        for (_, e) in &node.props {
                            check_vars(e, &new_scope)?;
                        }
                    }
                }
                if let Some(w) = &m.where_clause {
                    check_vars(w, &new_scope)?;
                }
                scope = new_scope;
            }
            Clause::Unwind(u) => {
                check_vars(&u.expr, &scope)?;
                scope.insert(u.var.to_lowercase());
            }
            Clause::Create(c) => {
                for p in &c.patterns {
                    let mut nodes = vec![&p.start];
                    nodes.extend(p.segments.iter().map(|(_, n)| n));
                    for node in nodes {
                        for (_, e) in &node.props {
                            check_vars(e, &scope)?;
                        }
                        if let Some(v) = &node.var {
                            scope.insert(v.to_lowercase());
                        }
                    }
                    for (rel, _) in &p.segments {
                        if let Some(v) = &rel.var {
                            scope.insert(v.to_lowercase());
                        }
                    }
                }
            }
            Clause::With(w) => {
                for item in &w.items {
                    check_vars(&item.expr, &scope)?;
                }
                let new_scope: BTreeSet<String> =
                    w.items.iter().map(|i| i.name().to_lowercase()).collect();
                if let Some(pred) = &w.where_clause {
                    check_vars(pred, &new_scope)?;
                }
                let combined: BTreeSet<String> = new_scope.union(&scope).cloned().collect();
                for key in &w.order_by {
                    check_vars(&key.expr, &combined)?;
                }
                scope = new_scope;
            }
            Clause::Return(r) => {
                for item in &r.items {
                    check_vars(&item.expr, &scope)?;
                }
                let new_scope: BTreeSet<String> =
                    r.items.iter().map(|i| i.name().to_lowercase()).collect();
                let combined: BTreeSet<String> = new_scope.union(&scope).cloned().collect();
                for key in &r.order_by {
                    check_vars(&key.expr, &combined)?;
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

pub fn evaluate(
    query: &Query,
    overlay: &mut Overlay,
    budget: &Budget,
) -> Result<EvalOutput, EvalError> {
    validate_scopes(query)?;
    let mut state = EvalState::new(budget, overlay.first_overlay_id);
    let mut table = BindingTable::unit();
    let mut returned = false;
    for clause in &query.clauses {
        state.check_time()?;
        table = match clause {
            Clause::Match(m) => eval_match(m, table, overlay, &mut state)?,
            Clause::Unwind(u) => eval_unwind(u, table, overlay, &mut state)?,
            Clause::Create(c) => eval_create(c, table, overlay, &mut state)?,
            Clause::With(w) => project(
                ProjectSpec {
                    distinct: w.distinct,
                    items: &w.items,
                    where_clause: w.where_clause.as_ref(),
                    order_by: &w.order_by,
                    limit: w.limit,
                    is_return: false,
                },
                table,
                overlay,
                &mut state,
            )?,
            Clause::Return(r) => {
                returned = true;
                project(
                    ProjectSpec {
                        distinct: r.distinct,
                        items: &r.items,
                        where_clause: None,
                        order_by: &r.order_by,
                        limit: r.limit,
                        is_return: true,
                    },
                    table,
                    overlay,
                    &mut state,
                )?
            }
        };
    }
    if !returned {
        table = BindingTable::default();
    }
    // Nodes returned directly (possibly nested in lists/maps) count as touched.
    for row in &table.rows {
        for value in row {
            collect_nodes(value, &mut state);
        }
    }
    Ok(EvalOutput {
        table,
        warnings: state.warnings,
        touched: state.touched.into_iter().collect(),
        created_nodes: state.created_nodes,
        created_rels: state.created_rels,
    })
}

fn collect_nodes(value: &Value, state: &mut EvalState) {
    match value {
        Value::Node(id) => {
            if *id < state.base_limit {
                state.touched.insert(*id);
            }
        }
        Value::List(items) => items.iter().for_each(|v| collect_nodes(v, state)),
        Value::Map(m) => m.values().for_each(|v| collect_nodes(v, state)),
        _ => {}
    }
}

// ---------------------------------------------------------------------------
// MATCH
// ---------------------------------------------------------------------------

fn eval_match(
    clause: &MatchClause,
    table: BindingTable,
    view: &Overlay,
    state: &mut EvalState,
) -> Result<BindingTable, EvalError> {
    let mut current = table;
    for pattern in &clause.patterns {
        current = expand_pattern(pattern, current, view, state)?;
    }
    if let Some(pred) = &clause.where_clause {
        current = filter_rows(current, pred, view, state)?;
    }
    Ok(current)
}

fn expand_pattern(
    path: &PathPattern,
    table: BindingTable,
    view: &Overlay,
    state: &mut EvalState,
) -> Result<BindingTable, EvalError> {
    let mut new_vars: Vec<String> = Vec::new();
    for v in pattern_vars(std::slice::from_ref(path)) {
        if !table.columns.contains(&v) && !new_vars.contains(&v) {
            new_vars.push(v);
        }
    }
    let mut out_columns = table.columns.clone();
    out_columns.extend(new_vars.iter().cloned());
    let mut out_rows: Vec<Vec<Value>> = Vec::new();

    let all_ids = view.node_ids();
    for row in &table.rows {
        state.check_time()?;
        let mut ext: BTreeMap<String, Value> = BTreeMap::new();

        // start candidates
        let start_bound = path
            .start
            .var
            .as_ref()
            .and_then(|v| Env::with_ext(&table.columns, row, &ext).lookup_exact(v));
        let candidates: Vec<NodeId> = match &start_bound {
            Some(Value::Node(id)) => vec![*id],
            Some(_) => Vec::new(),
            None => all_ids.clone(),
        };
        for start in candidates {
            if !node_matches(&path.start, start, &table.columns, row, &ext, view, state)? {
                continue;
            }
            let inserted = match (&path.start.var, &start_bound) {
                (Some(v), None) => {
                    ext.insert(v.clone(), Value::Node(start));
                    true
                }
                _ => false,
            };
            match_segments(
                path, 0, start, &table.columns, row, &mut ext, view, state, &new_vars,
                &mut out_rows,
            )?;
            if inserted {
                ext.remove(path.start.var.as_ref().unwrap());
            }
        }
    }
    Ok(BindingTable {
        columns: out_columns,
        rows: out_rows,
    })
}

#[allow(clippy::too_many_arguments)]
fn match_segments(
    path: &PathPattern,
    seg_idx: usize,
    cur: NodeId,
    columns: &[String],
    row: &[Value],
    ext: &mut BTreeMap<String, Value>,
    view: &Overlay,
    state: &mut EvalState,
    new_vars: &[String],
    out_rows: &mut Vec<Vec<Value>>,
) -> Result<(), EvalError> {
    if seg_idx == path.segments.len() {
        let mut new_row = row.to_vec();
        for v in new_vars {
            new_row.push(ext.get(v).cloned().unwrap_or(Value::Null));
        }
        out_rows.push(new_row);
        state.check_rows(out_rows.len())?;
        return Ok(());
    }
    let (rel, node_pat) = &path.segments[seg_idx];

    let mut candidates: Vec<(&Edge, NodeId)> = Vec::new();
    match rel.direction {
        Direction::Out => candidates.extend(view.out_edges(cur).into_iter().map(|e| (e, e.dst))),
        Direction::In => candidates.extend(view.in_edges(cur).into_iter().map(|e| (e, e.src))),
        Direction::Undirected => {
            candidates.extend(view.out_edges(cur).into_iter().map(|e| (e, e.dst)));
            candidates.extend(view.in_edges(cur).into_iter().map(|e| (e, e.src)));
        }
    }

    for (edge, next) in candidates {
        if let Some(t) = &rel.rel_type {
            if edge.rel != *t {
                continue;
            }
        }
        let rel_value = Value::Rel(Box::new(RelInfo {
            src: edge.src,
            dst: edge.dst,
            rel_type: edge.rel.clone(),
        }));
        let mut inserted_rel = false;
        if let Some(rv) = &rel.var {
            match Env::with_ext(columns, row, ext).lookup_exact(rv) {
                Some(existing) => {
                    if existing != rel_value {
                        continue;
                    }
                }
                None => {
                    ext.insert(rv.clone(), rel_value);
                    inserted_rel = true;
                }
            }
        }

        let node_bound = node_pat
            .var
            .as_ref()
            .and_then(|v| Env::with_ext(columns, row, ext).lookup_exact(v));
        let node_ok = match &node_bound {
            Some(Value::Node(id)) => *id == next,
            Some(_) => false,
            None => true,
        } && node_matches(node_pat, next, columns, row, ext, view, state)?;

        if node_ok {
            let inserted_node = match (&node_pat.var, &node_bound) {
                (Some(v), None) => {
                    ext.insert(v.clone(), Value::Node(next));
                    true
                }
                _ => false,
            };
            match_segments(
                path, seg_idx + 1, next, columns, row, ext, view, state, new_vars, out_rows,
            )?;
            if inserted_node {
                ext.remove(node_pat.var.as_ref().unwrap());
            }
        }
        if inserted_rel {
            ext.remove(rel.var.as_ref().unwrap());
        }
    }
    Ok(())
}

/// Label test: the pattern label matches the node's label or its kind name,
/// so `:Entity` matches entity nodes and `:Year` matches attribute nodes
/// labeled Year. Property entries compare with the permissive equality.
fn node_matches(
    pattern: &NodePattern,
    id: NodeId,
    columns: &[String],
    row: &[Value],
    ext: &BTreeMap<String, Value>,
    view: &Overlay,
    state: &mut EvalState,
) -> Result<bool, EvalError> {
    let Some(node) = view.get_node(id) else {
        return Ok(false);
    };
    if let Some(label) = &pattern.label {
        if node.label != *label && node.kind.name() != label {
            return Ok(false);
        }
    }
    for (key, expr) in &pattern.props {
        let want = {
            let env = Env::with_ext(columns, row, ext);
            eval_expr(expr, &env, view, state)?
        };
        let got = view
            .get_node(id)
            .and_then(|n| n.lookup_prop(key))
            .unwrap_or(Value::Null);
        if eq_values(&got, &want) != Some(true) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn filter_rows(
    table: BindingTable,
    pred: &Expr,
    view: &Overlay,
    state: &mut EvalState,
) -> Result<BindingTable, EvalError> {
    let mut rows = Vec::with_capacity(table.rows.len());
    for row in table.rows {
        state.check_time()?;
        let keep = {
            let env = Env::of(&table.columns, &row);
            is_true(&eval_expr(pred, &env, view, state)?, state)
        };
        if keep {
            rows.push(row);
        }
    }
    Ok(BindingTable {
        columns: table.columns,
        rows,
    })
}

fn is_true(value: &Value, state: &mut EvalState) -> bool {
    match value {
        Value::Bool(b) => *b,
        Value::Null => false,
        other => {
            state.warn(format!(
                "predicate evaluated to {} instead of a boolean; treated as false",
                other.type_name()
            ));
            false
        }
    }
}

// ---------------------------------------------------------------------------
// UNWIND
// ---------------------------------------------------------------------------

fn eval_unwind(
    clause: &UnwindClause,
    table: BindingTable,
    view: &Overlay,
    state: &mut EvalState,
) -> Result<BindingTable, EvalError> {
    if table.columns.contains(&clause.var) {
        return Err(EvalError::Misuse(format!(
            "UNWIND rebinds variable '{}'",
            clause.var
        )));
    }
    let mut columns = table.columns.clone();
    columns.push(clause.var.clone());
    let mut rows = Vec::new();
    for row in &table.rows {
        state.check_time()?;
        let value = {
            let env = Env::of(&table.columns, row);
            eval_expr(&clause.expr, &env, view, state)?
        };
        match value {
            Value::List(items) => {
                for item in items {
                    let mut new_row = row.clone();
                    new_row.push(item);
                    rows.push(new_row);
                    state.check_rows(rows.len())?;
                }
            }
            Value::Null => {}
            scalar => {
                state.warn("UNWIND of a non-list value produced a single row".to_string());
                let mut new_row = row.clone();
                new_row.push(scalar);
                rows.push(new_row);
                state.check_rows(rows.len())?;
            }
        }
    }
    Ok(BindingTable { columns, rows })
}

// ---------------------------------------------------------------------------
// CREATE
// ---------------------------------------------------------------------------

fn eval_create(
    clause: &CreateClause,
    table: BindingTable,
    overlay: &mut Overlay,
    state: &mut EvalState,
) -> Result<BindingTable, EvalError> {
    let mut new_vars: Vec<String> = Vec::new();
    for v in pattern_vars(&clause.patterns) {
        if !table.columns.contains(&v) && !new_vars.contains(&v) {
            new_vars.push(v);
        }
    }
    let mut out_columns = table.columns.clone();
    out_columns.extend(new_vars.iter().cloned());

    let mut out_rows = Vec::new();
    for row in &table.rows {
        state.check_time()?;
        let mut ext: BTreeMap<String, Value> = BTreeMap::new();
        for path in &clause.patterns {
            let mut cur =
                resolve_or_create_node(&path.start, &table.columns, row, &mut ext, overlay, state)?;
            for (rel, node_pat) in &path.segments {
                let next =
                    resolve_or_create_node(node_pat, &table.columns, row, &mut ext, overlay, state)?;
                let (src, dst) = match rel.direction {
                    Direction::Out => (cur, next),
                    Direction::In => (next, cur),
                    Direction::Undirected => {
                        state.warn(
                            "CREATE with an undirected relationship; treated as outgoing"
                                .to_string(),
                        );
                        (cur, next)
                    }
                };
                let rel_type = match &rel.rel_type {
                    Some(t) => t.clone(),
                    None => {
                        state.warn("CREATE relationship without a type".to_string());
                        String::new()
                    }
                };
                overlay.add_edge(src, dst, rel_type.clone());
                state.created_rels += 1;
                if let Some(rv) = &rel.var {
                    ext.entry(rv.clone()).or_insert_with(|| {
                        Value::Rel(Box::new(RelInfo {
                            src,
                            dst,
                            rel_type,
                        }))
                    });
                }
                cur = next;
            }
        }
        let mut new_row = row.clone();
        for v in &new_vars {
            new_row.push(ext.get(v).cloned().unwrap_or(Value::Null));
        }
        out_rows.push(new_row);
        state.check_rows(out_rows.len())?;
    }
    Ok(BindingTable {
        columns: out_columns,
        rows: out_rows,
    })
}

fn resolve_or_create_node(
    pattern: &NodePattern,
    columns: &[String],
    row: &[Value],
    ext: &mut BTreeMap<String, Value>,
    overlay: &mut Overlay,
    state: &mut EvalState,
) -> Result<NodeId, EvalError> {
    if let Some(var) = &pattern.var {
        let existing = {
            let env = Env::with_ext(columns, row, ext);
            env.lookup(var)
        };
        if let Some((value, case_fallback)) = existing {
            if case_fallback {
                state.warn(format!(
                    "variable '{var}' resolved case-insensitively in CREATE"
                ));
            }
            match value {
                Value::Node(id) => {
                    if pattern.label.is_some() || !pattern.props.is_empty() {
                        state.warn(format!(
                            "CREATE reuses bound variable '{var}'; its label/properties are ignored"
                        ));
                    }
                    return Ok(id);
                }
                _ => {
                    state.warn(format!(
                        "CREATE variable '{var}' was bound to a non-node value; a new node shadows it"
                    ));
                }
            }
        }
    }
    let mut props = BTreeMap::new();
    for (key, expr) in &pattern.props {
        let value = {
            let env = Env::with_ext(columns, row, ext);
            eval_expr(expr, &env, overlay, state)?
        };
        props.insert(key.clone(), value);
    }
    let label = pattern.label.clone().unwrap_or_default();
    let kind = if label == "Entity" {
        NodeKind::Entity
    } else {
        NodeKind::Attribute
    };
    let value = match props.get("value") {
        Some(Value::Str(s)) => s.clone(),
        _ => String::new(),
    };
    let id = overlay.add_node(kind, label, value, props);
    state.created_nodes.push(id);
    if let Some(var) = &pattern.var {
        ext.insert(var.clone(), Value::Node(id));
    }
    Ok(id)
}

// ---------------------------------------------------------------------------
// WITH / RETURN projection
// ---------------------------------------------------------------------------

struct ProjectSpec<'a> {
    distinct: bool,
    items: &'a [Projection],
    where_clause: Option<&'a Expr>,
    order_by: &'a [OrderKey],
    limit: Option<u64>,
    is_return: bool,
}

fn project(
    spec: ProjectSpec,
    table: BindingTable,
    view: &Overlay,
    state: &mut EvalState,
) -> Result<BindingTable, EvalError> {
    let names: Vec<String> = spec.items.iter().map(|i| i.name()).collect();
    let any_aggregate = spec.items.iter().any(|i| i.expr.contains_aggregate());

    // (projected row, source row index when row-wise)
    let mut projected: Vec<(Vec<Value>, Option<usize>)> = Vec::new();

    state.record_touched = spec.is_return;
    let result = (|| -> Result<(), EvalError> {
        if any_aggregate {
            let key_idx: Vec<usize> = spec
                .items
                .iter()
                .enumerate()
                .filter(|(_, i)| !i.expr.contains_aggregate())
                .map(|(idx, _)| idx)
                .collect();
            let mut groups: BTreeMap<OrdRow, Vec<usize>> = BTreeMap::new();
            for (ri, row) in table.rows.iter().enumerate() {
                state.check_time()?;
                let mut key = Vec::with_capacity(key_idx.len());
                for idx in &key_idx {
                    let env = Env::of(&table.columns, row);
                    key.push(eval_expr(&spec.items[*idx].expr, &env, view, state)?);
                }
                groups.entry(OrdRow(key)).or_default().push(ri);
            }
            if groups.is_empty() && key_idx.is_empty() {
                groups.insert(OrdRow(Vec::new()), Vec::new());
            }
            for (key, members) in groups {
                state.check_time()?;
                let rows: Vec<&Vec<Value>> = members.iter().map(|ri| &table.rows[*ri]).collect();
                let mut out_row = Vec::with_capacity(spec.items.len());
                let mut key_cursor = 0;
                for (idx, item) in spec.items.iter().enumerate() {
                    if key_idx.contains(&idx) {
                        out_row.push(key.0[key_cursor].clone());
                        key_cursor += 1;
                    } else {
                        out_row.push(eval_agg_expr(
                            &item.expr,
                            &rows,
                            &table.columns,
                            view,
                            state,
                        )?);
                    }
                }
                projected.push((out_row, None));
                state.check_rows(projected.len())?;
            }
        } else {
            for (ri, row) in table.rows.iter().enumerate() {
                state.check_time()?;
                let mut out_row = Vec::with_capacity(spec.items.len());
                for item in spec.items {
                    let env = Env::of(&table.columns, row);
                    out_row.push(eval_expr(&item.expr, &env, view, state)?);
                }
                projected.push((out_row, Some(ri)));
            }
        }
        Ok(())
    })();
    state.record_touched = false;
    result?;

    if let Some(pred) = spec.where_clause {
        let mut kept = Vec::with_capacity(projected.len());
        for (row, src) in projected {
            let keep = {
                let env = Env::of(&names, &row);
                is_true(&eval_expr(pred, &env, view, state)?, state)
            };
            if keep {
                kept.push((row, src));
            }
        }
        projected = kept;
    }

    if spec.distinct {
        let mut seen: BTreeSet<OrdRow> = BTreeSet::new();
        projected.retain(|(row, _)| seen.insert(OrdRow(row.clone())));
    }

    if !spec.order_by.is_empty() {
        let mut keyed: Vec<(Vec<Value>, Vec<Value>)> = Vec::with_capacity(projected.len());
        for (row, src) in &projected {
            let mut key = Vec::with_capacity(spec.order_by.len());
            for ok in spec.order_by {
                let mut env = Env::of(&names, row);
                let fallbacks;
                if let Some(ri) = src {
                    fallbacks = (&table.columns[..], &table.rows[*ri][..]);
                    env.fallback = Some(fallbacks);
                }
                env.lenient = true;
                key.push(eval_expr(&ok.expr, &env, view, state)?);
            }
            keyed.push((key, row.clone()));
        }
        keyed.sort_by(|(ka, _), (kb, _)| {
            for (ok, (a, b)) in spec.order_by.iter().zip(ka.iter().zip(kb.iter())) {
                let ord = a.canonical_cmp(b);
                let ord = if ok.descending { ord.reverse() } else { ord };
                if ord != std::cmp::Ordering::Equal {
                    return ord;
                }
            }
            std::cmp::Ordering::Equal
        });
        projected = keyed.into_iter().map(|(_, row)| (row, None)).collect();
    }

    let mut rows: Vec<Vec<Value>> = projected.into_iter().map(|(row, _)| row).collect();
    if let Some(limit) = spec.limit {
        rows.truncate(limit as usize);
    }
    Ok(BindingTable {
        columns: names,
        rows,
    })
}

/// Evaluates an expression that may contain aggregate calls over a group.
fn eval_agg_expr(
    expr: &Expr,
    group: &[&Vec<Value>],
    columns: &[String],
    view: &Overlay,
    state: &mut EvalState,
) -> Result<Value, EvalError> {
    if !expr.contains_aggregate() {
        // A non-aggregate sub-expression of an aggregating projection is a
        // grouping expression; every group member yields the same value.
        return match group.first() {
            Some(row) => {
                let env = Env::of(columns, row);
                eval_expr(expr, &env, view, state)
            }
            None => Ok(Value::Null),
        };
    }
    match expr {
        Expr::FnCall {
            name,
            distinct,
            star,
            args,
        } if expr.is_aggregate_call() => {
            compute_aggregate(name, *distinct, *star, args, group, columns, view, state)
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = eval_agg_expr(lhs, group, columns, view, state)?;
            let r = eval_agg_expr(rhs, group, columns, view, state)?;
            apply_binary(*op, l, r, state)
        }
        Expr::Not(inner) => {
            let v = eval_agg_expr(inner, group, columns, view, state)?;
            apply_not(v, state)
        }
        Expr::Neg(inner) => {
            let v = eval_agg_expr(inner, group, columns, view, state)?;
            apply_neg(v, state)
        }
        Expr::Prop(base, key) => {
            let v = eval_agg_expr(base, group, columns, view, state)?;
            lookup_prop_value(&v, key, view, state)
        }
        Expr::List(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(eval_agg_expr(item, group, columns, view, state)?);
            }
            Ok(Value::List(out))
        }
        Expr::FnCall {
            name,
            distinct,
            star,
            args,
        } => {
            if *star || *distinct {
                return Err(EvalError::Misuse(format!(
                    "'{name}' does not take * or DISTINCT"
                )));
            }
            let mut values = Vec::with_capacity(args.len());
            for arg in args {
                values.push(eval_agg_expr(arg, group, columns, view, state)?);
            }
            call_scalar(name, values, state)
        }
        Expr::Literal(_) | Expr::Var(_) => unreachable!("handled by contains_aggregate"),
    }
}

#[allow(clippy::too_many_arguments)]
fn compute_aggregate(
    name: &str,
    distinct: bool,
    star: bool,
    args: &[Expr],
    group: &[&Vec<Value>],
    columns: &[String],
    view: &Overlay,
    state: &mut EvalState,
) -> Result<Value, EvalError> {
    if star {
        if name != "count" {
            return Err(EvalError::Misuse(format!("'{name}(*)' is not valid")));
        }
        return Ok(Value::Int(group.len() as i64));
    }
    if args.len() != 1 {
        return Err(EvalError::Misuse(format!(
            "aggregate '{name}' takes exactly one argument"
        )));
    }
    let mut values = Vec::with_capacity(group.len());
    for row in group {
        let v = {
            let env = Env::of(columns, row);
            eval_expr(&args[0], &env, view, state)?
        };
        if !v.is_null() {
            values.push(v);
        }
    }
    if distinct {
        let mut seen: Vec<Value> = Vec::new();
        values.retain(|v| {
            if seen.iter().any(|s| s.canonical_eq(v)) {
                false
            } else {
                seen.push(v.clone());
                true
            }
        });
    }
    match name {
        "count" => Ok(Value::Int(values.len() as i64)),
        "collect" => Ok(Value::List(values)),
        "sum" => {
            let mut int_sum: i64 = 0;
            let mut float_sum = 0.0f64;
            let mut all_int = true;
            for v in &values {
                match v {
                    Value::Int(i) => {
                        float_sum += *i as f64;
                        int_sum = int_sum.saturating_add(*i);
                    }
                    Value::Float(f) => {
                        all_int = false;
                        float_sum += f;
                    }
                    other => {
                        state.warn(format!("sum() skipped a {} value", other.type_name()));
                    }
                }
            }
            if all_int {
                Ok(Value::Int(int_sum))
            } else {
                Ok(Value::Float(float_sum))
            }
        }
        "min" | "max" => {
            let mut best: Option<Value> = None;
            for v in values {
                best = Some(match best {
                    None => v,
                    Some(b) => {
                        let take = if name == "min" {
                            v.canonical_cmp(&b).is_lt()
                        } else {
                            v.canonical_cmp(&b).is_gt()
                        };
                        if take {
                            v
                        } else {
                            b
                        }
                    }
                });
            }
            Ok(best.unwrap_or(Value::Null))
        }
        "avg" => {
            let mut sum = 0.0f64;
            let mut n = 0usize;
            for v in &values {
                match v.as_f64() {
                    Some(f) => {
                        sum += f;
                        n += 1;
                    }
                    None => state.warn(format!("avg() skipped a {} value", v.type_name())),
                }
            }
            if n == 0 {
                Ok(Value::Null)
            } else {
                Ok(Value::Float(sum / n as f64))
            }
        }
        other => Err(EvalError::UnknownFunction(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

fn eval_expr(
    expr: &Expr,
    env: &Env,
    view: &dyn GraphView,
    state: &mut EvalState,
) -> Result<Value, EvalError> {
    match expr {
        Expr::Literal(lit) => Ok(match lit {
            Literal::Null => Value::Null,
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Int(i) => Value::Int(*i),
            Literal::Float(f) => Value::Float(*f),
            Literal::Str(s) => Value::Str(s.clone()),
        }),
        Expr::Var(name) => match env.lookup(name) {
            Some((value, case_fallback)) => {
                if case_fallback {
                    state.warn(format!("variable '{name}' resolved case-insensitively"));
                }
                Ok(value)
            }
            None if env.lenient => {
                state.warn(format!("variable '{name}' is not in scope; treated as null"));
                Ok(Value::Null)
            }
            None => Err(EvalError::UnboundVariable(name.clone())),
        },
        Expr::Prop(base, key) => {
            let value = eval_expr(base, env, view, state)?;
            lookup_prop_value(&value, key, view, state)
        }
        Expr::List(items) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(eval_expr(item, env, view, state)?);
            }
            Ok(Value::List(out))
        }
        Expr::Not(inner) => {
            let v = eval_expr(inner, env, view, state)?;
            apply_not(v, state)
        }
        Expr::Neg(inner) => {
            let v = eval_expr(inner, env, view, state)?;
            apply_neg(v, state)
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = eval_expr(lhs, env, view, state)?;
            let r = eval_expr(rhs, env, view, state)?;
            apply_binary(*op, l, r, state)
        }
        Expr::FnCall {
            name,
            distinct,
            star,
            args,
        } => {
            if AGGREGATE_FNS.contains(&name.as_str()) {
                return Err(EvalError::Misuse(format!(
                    "aggregate function '{name}' is not allowed here"
                )));
            }
            if *star || *distinct {
                return Err(EvalError::Misuse(format!(
                    "'{name}' does not take * or DISTINCT"
                )));
            }
            let mut values = Vec::with_capacity(args.len());
            for arg in args {
                values.push(eval_expr(arg, env, view, state)?);
            }
            call_scalar(name, values, state)
        }
    }
}

fn lookup_prop_value(
    value: &Value,
    key: &str,
    view: &dyn GraphView,
    state: &mut EvalState,
) -> Result<Value, EvalError> {
    match value {
        Value::Node(id) => {
            let result = view
                .get_node(*id)
                .and_then(|n| n.lookup_prop(key))
                .unwrap_or(Value::Null);
            state.touch(*id);
            Ok(result)
        }
        Value::Map(m) => Ok(m.get(key).cloned().unwrap_or(Value::Null)),
        Value::Null => Ok(Value::Null),
        other => {
            state.warn(format!(
                "property access on a {} value yields null",
                other.type_name()
            ));
            Ok(Value::Null)
        }
    }
}

fn apply_not(value: Value, state: &mut EvalState) -> Result<Value, EvalError> {
    match value {
        Value::Bool(b) => Ok(Value::Bool(!b)),
        Value::Null => Ok(Value::Null),
        other => {
            state.warn(format!("NOT applied to a {} value", other.type_name()));
            Ok(Value::Null)
        }
    }
}

fn apply_neg(value: Value, state: &mut EvalState) -> Result<Value, EvalError> {
    match value {
        Value::Int(i) => Ok(i
            .checked_neg()
            .map(Value::Int)
            .unwrap_or(Value::Float(-(i as f64)))),
        Value::Float(f) => Ok(Value::Float(-f)),
        Value::Null => Ok(Value::Null),
        other => {
            state.warn(format!("negation of a {} value yields null", other.type_name()));
            Ok(Value::Null)
        }
    }
}

/// Equality across types: `Some(result)` when comparable, `None` when the
/// types are incommensurable or either side is null.
pub(crate) fn eq_values(a: &Value, b: &Value) -> Option<bool> {
    if a.is_null() || b.is_null() {
        return None;
    }
    match (a, b) {
        (x, y) if x.as_f64().is_some() && y.as_f64().is_some() => {
            Some(x.as_f64().unwrap() == y.as_f64().unwrap())
        }
        (Value::Str(x), Value::Str(y)) => Some(x == y),
        (Value::Bool(x), Value::Bool(y)) => Some(x == y),
        (Value::Node(x), Value::Node(y)) => Some(x == y),
        (Value::Rel(x), Value::Rel(y)) => Some(x == y),
        (Value::List(x), Value::List(y)) => {
            if x.len() != y.len() {
                return Some(false);
            }
            Some(
                x.iter()
                    .zip(y.iter())
                    .all(|(a, b)| eq_values(a, b) == Some(true)),
            )
        }
        (Value::Map(x), Value::Map(y)) => {
            if x.len() != y.len() {
                return Some(false);
            }
            Some(x.iter().zip(y.iter()).all(|((ka, va), (kb, vb))| {
                ka == kb && eq_values(va, vb) == Some(true)
            }))
        }
        _ => None,
    }
}

fn apply_binary(op: BinOp, l: Value, r: Value, state: &mut EvalState) -> Result<Value, EvalError> {
    use BinOp::*;
    match op {
        Or => {
            let lb = matches!(l, Value::Bool(true));
            let rb = matches!(r, Value::Bool(true));
            Ok(Value::Bool(lb || rb))
        }
        And => {
            let lb = matches!(l, Value::Bool(true));
            let rb = matches!(r, Value::Bool(true));
            Ok(Value::Bool(lb && rb))
        }
        Eq | Ne => match eq_values(&l, &r) {
            Some(eq) => Ok(Value::Bool(if op == Ne { !eq } else { eq })),
            // Incomparable operands (null or mismatched types) make the
            // whole comparison false, <> included.
            None => {
                if !l.is_null() && !r.is_null() {
                    state.warn(format!(
                        "comparison between {} and {} yields false",
                        l.type_name(),
                        r.type_name()
                    ));
                }
                Ok(Value::Bool(false))
            }
        },
        Lt | Le | Gt | Ge => {
            if l.is_null() || r.is_null() {
                return Ok(Value::Bool(false));
            }
            let ord = match (&l, &r) {
                (x, y) if x.as_f64().is_some() && y.as_f64().is_some() => {
                    x.as_f64().unwrap().partial_cmp(&y.as_f64().unwrap())
                }
                (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
                (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
                _ => {
                    state.warn(format!(
                        "comparison between {} and {} yields false",
                        l.type_name(),
                        r.type_name()
                    ));
                    None
                }
            };
            let Some(ord) = ord else {
                return Ok(Value::Bool(false));
            };
            Ok(Value::Bool(match op {
                Lt => ord.is_lt(),
                Le => ord.is_le(),
                Gt => ord.is_gt(),
                Ge => ord.is_ge(),
                _ => unreachable!(),
            }))
        }
        In => match r {
            Value::List(items) => Ok(Value::Bool(
                items.iter().any(|item| eq_values(&l, item) == Some(true)),
            )),
            Value::Null => Ok(Value::Bool(false)),
            other => {
                state.warn(format!(
                    "IN requires a list on the right, got {}",
                    other.type_name()
                ));
                Ok(Value::Bool(false))
            }
        },
        Contains | StartsWith | EndsWith => match (&l, &r) {
            (Value::Str(x), Value::Str(y)) => Ok(Value::Bool(match op {
                Contains => x.contains(y.as_str()),
                StartsWith => x.starts_with(y.as_str()),
                EndsWith => x.ends_with(y.as_str()),
                _ => unreachable!(),
            })),
            _ => {
                if !l.is_null() && !r.is_null() {
                    state.warn(format!(
                        "{} requires strings, got {} and {}",
                        op.symbol(),
                        l.type_name(),
                        r.type_name()
                    ));
                }
                Ok(Value::Bool(false))
            }
        },
        Add => match (&l, &r) {
            (Value::Int(a), Value::Int(b)) => Ok(a
                .checked_add(*b)
                .map(Value::Int)
                .unwrap_or_else(|| Value::Float(*a as f64 + *b as f64))),
            (Value::Str(a), Value::Str(b)) => Ok(Value::Str(format!("{a}{b}"))),
            (Value::Str(a), b) if b.as_f64().is_some() => Ok(Value::Str(format!("{a}{b}"))),
            (a, Value::Str(b)) if a.as_f64().is_some() => Ok(Value::Str(format!("{a}{b}"))),
            (Value::List(a), Value::List(b)) => {
                let mut out = a.clone();
                out.extend(b.clone());
                Ok(Value::List(out))
            }
            _ => numeric_binary(op, &l, &r, state),
        },
        Sub | Mul | Div => numeric_binary(op, &l, &r, state),
    }
}

fn numeric_binary(op: BinOp, l: &Value, r: &Value, state: &mut EvalState) -> Result<Value, EvalError> {
    if l.is_null() || r.is_null() {
        return Ok(Value::Null);
    }
    // Integer arithmetic stays integral (including integer division).
    if let (Value::Int(a), Value::Int(b)) = (l, r) {
        return Ok(match op {
            BinOp::Add => a
                .checked_add(*b)
                .map(Value::Int)
                .unwrap_or_else(|| Value::Float(*a as f64 + *b as f64)),
            BinOp::Sub => a
                .checked_sub(*b)
                .map(Value::Int)
                .unwrap_or_else(|| Value::Float(*a as f64 - *b as f64)),
            BinOp::Mul => a
                .checked_mul(*b)
                .map(Value::Int)
                .unwrap_or_else(|| Value::Float(*a as f64 * *b as f64)),
            BinOp::Div => {
                if *b == 0 {
                    state.warn("division by zero yields null".to_string());
                    Value::Null
                } else {
                    Value::Int(a / b)
                }
            }
            _ => unreachable!(),
        });
    }
    match (l.as_f64(), r.as_f64()) {
        (Some(a), Some(b)) => Ok(match op {
            BinOp::Add => Value::Float(a + b),
            BinOp::Sub => Value::Float(a - b),
            BinOp::Mul => Value::Float(a * b),
            BinOp::Div => {
                if b == 0.0 {
                    state.warn("division by zero yields null".to_string());
                    Value::Null
                } else {
                    Value::Float(a / b)
                }
            }
            _ => unreachable!(),
        }),
        _ => {
            state.warn(format!(
                "arithmetic on {} and {} yields null",
                l.type_name(),
                r.type_name()
            ));
            Ok(Value::Null)
        }
    }
}

fn call_scalar(name: &str, mut args: Vec<Value>, state: &mut EvalState) -> Result<Value, EvalError> {
    let arity = |n: usize| -> Result<(), EvalError> {
        if args.len() != n {
            Err(EvalError::Misuse(format!(
                "function '{name}' takes {n} argument(s), got {}",
                args.len()
            )))
        } else {
            Ok(())
        }
    };
    match name {
        "tolower" | "toupper" => {
            arity(1)?;
            match &args[0] {
                Value::Str(s) => Ok(Value::Str(if name == "tolower" {
                    s.to_lowercase()
                } else {
                    s.to_uppercase()
                })),
                Value::Null => Ok(Value::Null),
                other => {
                    state.warn(format!("{name}() on a {} value yields null", other.type_name()));
                    Ok(Value::Null)
                }
            }
        }
        "tointeger" => {
            arity(1)?;
            Ok(match &args[0] {
                Value::Int(i) => Value::Int(*i),
                Value::Float(f) if f.is_finite() => Value::Int(*f as i64),
                Value::Str(s) => {
                    let t = s.trim();
                    if let Ok(i) = t.parse::<i64>() {
                        Value::Int(i)
                    } else if let Ok(f) = t.parse::<f64>() {
                        if f.is_finite() {
                            Value::Int(f as i64)
                        } else {
                            Value::Null
                        }
                    } else {
                        Value::Null
                    }
                }
                _ => Value::Null,
            })
        }
        "tofloat" => {
            arity(1)?;
            Ok(match &args[0] {
                Value::Int(i) => Value::Float(*i as f64),
                Value::Float(f) => Value::Float(*f),
                Value::Str(s) => s
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .map(Value::Float)
                    .unwrap_or(Value::Null),
                _ => Value::Null,
            })
        }
        "tostring" => {
            arity(1)?;
            Ok(match &args[0] {
                Value::Null => Value::Null,
                other => Value::Str(other.to_string()),
            })
        }
        "abs" => {
            arity(1)?;
            Ok(match &args[0] {
                Value::Int(i) => i
                    .checked_abs()
                    .map(Value::Int)
                    .unwrap_or_else(|| Value::Float((*i as f64).abs())),
                Value::Float(f) => Value::Float(f.abs()),
                Value::Null => Value::Null,
                other => {
                    state.warn(format!("abs() on a {} value yields null", other.type_name()));
                    Value::Null
                }
            })
        }
        "size" => {
            arity(1)?;
            Ok(match args.remove(0) {
                Value::List(items) => Value::Int(items.len() as i64),
                Value::Str(s) => Value::Int(s.chars().count() as i64),
                Value::Null => Value::Null,
                other => {
                    state.warn(format!("size() on a {} value yields null", other.type_name()));
                    Value::Null
                }
            })
        }
        other => Err(EvalError::UnknownFunction(other.to_string())),
    }
}
