//! AST for the supported Cypher subset, plus a pretty-printer whose output
//! re-parses to a structurally equal tree.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    Contains,
    StartsWith,
    EndsWith,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "OR",
            BinOp::And => "AND",
            BinOp::Eq => "=",
            BinOp::Ne => "<>",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::In => "IN",
            BinOp::Contains => "CONTAINS",
            BinOp::StartsWith => "STARTS WITH",
            BinOp::EndsWith => "ENDS WITH",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq
            | BinOp::Ne
            | BinOp::Lt
            | BinOp::Le
            | BinOp::Gt
            | BinOp::Ge
            | BinOp::In
            | BinOp::Contains
            | BinOp::StartsWith
            | BinOp::EndsWith => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Literal),
    Var(String),
    Prop(Box<Expr>, String),
    List(Vec<Expr>),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    FnCall {
        /// Lowercased at parse time; Cypher function names are
        /// case-insensitive.
        name: String,
        distinct: bool,
        /// `count(*)`.
        star: bool,
        args: Vec<Expr>,
    },
}

pub const AGGREGATE_FNS: &[&str] = &["count", "collect", "sum", "min", "max", "avg"];

impl Expr {
    pub fn is_aggregate_call(&self) -> bool {
        matches!(self, Expr::FnCall { name, .. } if AGGREGATE_FNS.contains(&name.as_str()))
    }

    /// True when any sub-expression is an aggregate call.
    pub fn contains_aggregate(&self) -> bool {
        match self {
            Expr::Literal(_) | Expr::Var(_) => false,
            Expr::Prop(e, _) | Expr::Not(e) | Expr::Neg(e) => e.contains_aggregate(),
            Expr::List(items) => items.iter().any(Expr::contains_aggregate),
            Expr::Binary { lhs, rhs, .. } => lhs.contains_aggregate() || rhs.contains_aggregate(),
            Expr::FnCall { name, args, .. } => {
                AGGREGATE_FNS.contains(&name.as_str())
                    || args.iter().any(Expr::contains_aggregate)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Undirected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePattern {
    pub var: Option<String>,
    pub label: Option<String>,
    pub props: Vec<(String, Expr)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelPattern {
    pub var: Option<String>,
    pub rel_type: Option<String>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPattern {
    pub start: NodePattern,
    pub segments: Vec<(RelPattern, NodePattern)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub expr: Expr,
    pub alias: Option<String>,
}

impl Projection {
    /// The output column name: the alias, or the printed expression.
    pub fn name(&self) -> String {
        self.alias.clone().unwrap_or_else(|| print_expr(&self.expr))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderKey {
    pub expr: Expr,
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchClause {
    pub patterns: Vec<PathPattern>,
    pub where_clause: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithClause {
    pub distinct: bool,
    pub items: Vec<Projection>,
    pub where_clause: Option<Expr>,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnClause {
    pub distinct: bool,
    pub items: Vec<Projection>,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateClause {
    pub patterns: Vec<PathPattern>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnwindClause {
    pub expr: Expr,
    pub var: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    Match(MatchClause),
    With(WithClause),
    Create(CreateClause),
    Return(ReturnClause),
    Unwind(UnwindClause),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub clauses: Vec<Clause>,
}

// ---------------------------------------------------------------------------
// Pretty-printing
// ---------------------------------------------------------------------------

pub fn print_query(query: &Query) -> String {
    let mut out = String::new();
    for (i, clause) in query.clauses.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match clause {
            Clause::Match(m) => {
                out.push_str("MATCH ");
                print_patterns(&mut out, &m.patterns);
                if let Some(w) = &m.where_clause {
                    let _ = write!(out, " WHERE {}", print_expr(w));
                }
            }
            Clause::With(w) => {
                out.push_str("WITH ");
                if w.distinct {
                    out.push_str("DISTINCT ");
                }
                print_items(&mut out, &w.items);
                print_tail(&mut out, &w.order_by, w.limit);
                if let Some(pred) = &w.where_clause {
                    let _ = write!(out, " WHERE {}", print_expr(pred));
                }
            }
            Clause::Create(c) => {
                out.push_str("CREATE ");
                print_patterns(&mut out, &c.patterns);
            }
            Clause::Return(r) => {
                out.push_str("RETURN ");
                if r.distinct {
                    out.push_str("DISTINCT ");
                }
                print_items(&mut out, &r.items);
                print_tail(&mut out, &r.order_by, r.limit);
            }
            Clause::Unwind(u) => {
                let _ = write!(out, "UNWIND {} AS {}", print_expr(&u.expr), u.var);
            }
        }
    }
    out
}

fn print_patterns(out: &mut String, patterns: &[PathPattern]) {
    for (i, p) in patterns.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        print_node(out, &p.start);
        for (rel, node) in &p.segments {
            match rel.direction {
                Direction::Out => {
                    out.push('-');
                    print_rel(out, rel);
                    out.push_str("->");
                }
                Direction::In => {
                    out.push_str("<-");
                    print_rel(out, rel);
                    out.push('-');
                }
                Direction::Undirected => {
                    out.push('-');
                    print_rel(out, rel);
                    out.push('-');
                }
            }
            print_node(out, node);
        }
    }
}

fn print_node(out: &mut String, node: &NodePattern) {
    out.push('(');
    if let Some(v) = &node.var {
        out.push_str(v);
    }
    if let Some(l) = &node.label {
        let _ = write!(out, ":{l}");
    }
    if !node.props.is_empty() {
        if node.var.is_some() || node.label.is_some() {
            out.push(' ');
        }
        out.push('{');
        for (i, (k, e)) in node.props.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{k}: {}", print_expr(e));
        }
        out.push('}');
    }
    out.push(')');
}

fn print_rel(out: &mut String, rel: &RelPattern) {
    if rel.var.is_none() && rel.rel_type.is_none() {
        return;
    }
    out.push('[');
    if let Some(v) = &rel.var {
        out.push_str(v);
    }
    if let Some(t) = &rel.rel_type {
        let _ = write!(out, ":{t}");
    }
    out.push(']');
}

fn print_items(out: &mut String, items: &[Projection]) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&print_expr(&item.expr));
        if let Some(alias) = &item.alias {
            let _ = write!(out, " AS {alias}");
        }
    }
}

fn print_tail(out: &mut String, order_by: &[OrderKey], limit: Option<u64>) {
    if !order_by.is_empty() {
        out.push_str(" ORDER BY ");
        for (i, key) in order_by.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&print_expr(&key.expr));
            if key.descending {
                out.push_str(" DESC");
            }
        }
    }
    if let Some(l) = limit {
        let _ = write!(out, " LIMIT {l}");
    }
}

pub fn print_expr(expr: &Expr) -> String {
    let mut out = String::new();
    print_expr_prec(&mut out, expr, 0);
    out
}

fn print_expr_prec(out: &mut String, expr: &Expr, min_prec: u8) {
    match expr {
        Expr::Literal(lit) => match lit {
            Literal::Null => out.push_str("null"),
            Literal::Bool(b) => {
                let _ = write!(out, "{b}");
            }
            Literal::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Literal::Float(f) => {
                if f.fract() == 0.0 && f.is_finite() {
                    let _ = write!(out, "{f:.1}");
                } else {
                    let _ = write!(out, "{f}");
                }
            }
            Literal::Str(s) => {
                let _ = write!(out, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"));
            }
        },
        Expr::Var(name) => out.push_str(name),
        Expr::Prop(base, key) => {
            print_expr_prec(out, base, 8);
            let _ = write!(out, ".{key}");
        }
        Expr::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_expr_prec(out, item, 0);
            }
            out.push(']');
        }
        Expr::Not(inner) => {
            let wrap = min_prec > 3;
            if wrap {
                out.push('(');
            }
            out.push_str("NOT ");
            print_expr_prec(out, inner, 3);
            if wrap {
                out.push(')');
            }
        }
        Expr::Neg(inner) => {
            let wrap = min_prec > 7;
            if wrap {
                out.push('(');
            }
            out.push('-');
            print_expr_prec(out, inner, 7);
            if wrap {
                out.push(')');
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let wrap = prec < min_prec;
            if wrap {
                out.push('(');
            }
            print_expr_prec(out, lhs, prec);
            let _ = write!(out, " {} ", op.symbol());
            print_expr_prec(out, rhs, prec + 1);
            if wrap {
                out.push(')');
            }
        }
        Expr::FnCall {
            name,
            distinct,
            star,
            args,
        } => {
            let _ = write!(out, "{name}(");
            if *distinct {
                out.push_str("DISTINCT ");
            }
            if *star {
                out.push('*');
            }
            for (i, arg) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_expr_prec(out, arg, 0);
            }
            out.push(')');
        }
    }
}
