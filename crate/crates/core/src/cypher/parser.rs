//! Recursive-descent parser for the supported subset. Constructs outside
//! the subset (OPTIONAL MATCH, MERGE, DELETE, SET, variable-length paths)
//! are reported as distinct "unsupported feature" errors so callers can
//! tell them apart from plain syntax mistakes.

use thiserror::Error;

use super::ast::*;
use super::token::{Kw, Token, TokenKind};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("parse error at {}..{}: expected {expected}, found {found}", span.0, span.1)]
    Syntax {
        span: (usize, usize),
        expected: String,
        found: String,
    },
    #[error("unsupported feature at {}..{}: {feature}", span.0, span.1)]
    Unsupported {
        span: (usize, usize),
        feature: String,
    },
}

const UNSUPPORTED_CLAUSES: &[&str] = &[
    "optional", "merge", "delete", "detach", "set", "remove", "union", "call", "foreach", "skip",
];

pub fn parse(tokens: &[Token]) -> Result<Query, ParseError> {
    let mut parser = Parser { tokens, pos: 0 };
    let query = parser.query()?;
    Ok(query)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    fn bump(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.peek()
            .map(|t| t.span)
            .unwrap_or_else(|| match self.tokens.last() {
                Some(t) => (t.span.1, t.span.1),
                None => (0, 0),
            })
    }

    fn found(&self) -> String {
        self.peek()
            .map(|t| format!("'{t}'"))
            .unwrap_or_else(|| "end of input".to_string())
    }

    fn err<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            span: self.here(),
            expected: expected.to_string(),
            found: self.found(),
        })
    }

    fn unsupported<T>(&self, feature: &str) -> Result<T, ParseError> {
        Err(ParseError::Unsupported {
            span: self.here(),
            feature: feature.to_string(),
        })
    }

    fn at_kw(&self, kw: Kw) -> bool {
        matches!(self.peek(), Some(t) if t.kind == TokenKind::Keyword(kw))
    }

    fn eat_kw(&mut self, kw: Kw) -> bool {
        if self.at_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: Kw, what: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.err(what)
        }
    }

    fn at_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(t) if t.kind == TokenKind::Sym && t.text == sym)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.at_sym(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.err(&format!("'{sym}'"))
        }
    }

    /// Identifier-like token (identifier or keyword used as a name).
    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(t) if matches!(t.kind, TokenKind::Ident | TokenKind::Keyword(_)) => {
                let text = t.text.clone();
                self.pos += 1;
                Ok(text)
            }
            _ => self.err(what),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                let text = t.text.clone();
                self.pos += 1;
                Ok(text)
            }
            _ => self.err(what),
        }
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        let mut clauses = Vec::new();
        while let Some(t) = self.peek() {
            if t.kind == TokenKind::Sym && t.text == ";" {
                self.pos += 1;
                break;
            }
            let clause = self.clause()?;
            let is_return = matches!(clause, Clause::Return(_));
            clauses.push(clause);
            if is_return {
                break;
            }
        }
        if let Some(t) = self.peek() {
            if !(t.kind == TokenKind::Sym && t.text == ";") {
                return self.err("end of query");
            }
            self.pos += 1;
        }
        if self.peek().is_some() {
            return self.err("end of query");
        }
        if clauses.is_empty() {
            return self.err("a query clause");
        }
        if !matches!(clauses.last(), Some(Clause::Return(_)) | Some(Clause::Create(_))) {
            return Err(ParseError::Syntax {
                span: self.here(),
                expected: "query ending in RETURN or CREATE".to_string(),
                found: "a dangling clause".to_string(),
            });
        }
        Ok(Query { clauses })
    }

    fn clause(&mut self) -> Result<Clause, ParseError> {
        if let Some(t) = self.peek() {
            if t.kind == TokenKind::Ident
                && UNSUPPORTED_CLAUSES.contains(&t.text.to_ascii_lowercase().as_str())
            {
                let feature = format!("{} clause", t.text.to_uppercase());
                return self.unsupported(&feature);
            }
        }
        if self.eat_kw(Kw::Match) {
            let patterns = self.pattern_list()?;
            let where_clause = if self.eat_kw(Kw::Where) {
                Some(self.expr()?)
            } else {
                None
            };
            return Ok(Clause::Match(MatchClause {
                patterns,
                where_clause,
            }));
        }
        if self.eat_kw(Kw::Create) {
            return Ok(Clause::Create(CreateClause {
                patterns: self.pattern_list()?,
            }));
        }
        if self.eat_kw(Kw::Unwind) {
            let expr = self.expr()?;
            self.expect_kw(Kw::As, "AS after UNWIND expression")?;
            let var = self.ident("variable name")?;
            return Ok(Clause::Unwind(UnwindClause { expr, var }));
        }
        if self.eat_kw(Kw::With) {
            let distinct = self.eat_kw(Kw::Distinct);
            let items = self.projection_list()?;
            let (where_clause, order_by, limit) = self.with_tail()?;
            return Ok(Clause::With(WithClause {
                distinct,
                items,
                where_clause,
                order_by,
                limit,
            }));
        }
        if self.eat_kw(Kw::Return) {
            let distinct = self.eat_kw(Kw::Distinct);
            let items = self.projection_list()?;
            let (where_clause, order_by, limit) = self.with_tail()?;
            if where_clause.is_some() {
                return self.err("no WHERE after RETURN");
            }
            return Ok(Clause::Return(ReturnClause {
                distinct,
                items,
                order_by,
                limit,
            }));
        }
        self.err("MATCH, WITH, CREATE, UNWIND or RETURN")
    }

    /// WHERE / ORDER BY / LIMIT in any order, each at most once.
    fn with_tail(
        &mut self,
    ) -> Result<(Option<Expr>, Vec<OrderKey>, Option<u64>), ParseError> {
        let mut where_clause = None;
        let mut order_by = Vec::new();
        let mut limit = None;
        loop {
            if where_clause.is_none() && self.eat_kw(Kw::Where) {
                where_clause = Some(self.expr()?);
            } else if order_by.is_empty() && self.at_kw(Kw::Order) {
                self.bump();
                self.expect_kw(Kw::By, "BY after ORDER")?;
                loop {
                    let expr = self.expr()?;
                    let descending = if self.eat_kw(Kw::Desc) {
                        true
                    } else {
                        self.eat_kw(Kw::Asc);
                        false
                    };
                    order_by.push(OrderKey { expr, descending });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            } else if limit.is_none() && self.at_kw(Kw::Limit) {
                self.bump();
                match self.peek() {
                    Some(t) if t.kind == TokenKind::Int => {
                        limit = Some(t.text.parse().map_err(|_| ParseError::Syntax {
                            span: t.span,
                            expected: "integer limit".to_string(),
                            found: format!("'{}'", t.text),
                        })?);
                        self.pos += 1;
                    }
                    _ => return self.err("integer after LIMIT"),
                }
            } else {
                break;
            }
        }
        Ok((where_clause, order_by, limit))
    }

    fn projection_list(&mut self) -> Result<Vec<Projection>, ParseError> {
        let mut items = Vec::new();
        loop {
            let expr = self.expr()?;
            let alias = if self.eat_kw(Kw::As) {
                Some(self.name("alias name")?)
            } else {
                None
            };
            items.push(Projection { expr, alias });
            if !self.eat_sym(",") {
                break;
            }
        }
        Ok(items)
    }

    fn pattern_list(&mut self) -> Result<Vec<PathPattern>, ParseError> {
        let mut patterns = vec![self.path_pattern()?];
        while self.eat_sym(",") {
            patterns.push(self.path_pattern()?);
        }
        Ok(patterns)
    }

    fn path_pattern(&mut self) -> Result<PathPattern, ParseError> {
        let start = self.node_pattern()?;
        let mut segments = Vec::new();
        loop {
            let direction_in = self.at_sym("<");
            if !direction_in && !self.at_sym("-") {
                break;
            }
            if direction_in {
                self.bump();
                self.expect_sym("-")?;
            } else {
                self.bump();
            }
            let rel = self.rel_body()?;
            self.expect_sym("-")?;
            let direction = if direction_in {
                Direction::In
            } else if self.eat_sym(">") {
                Direction::Out
            } else {
                Direction::Undirected
            };
            let node = self.node_pattern()?;
            segments.push((
                RelPattern {
                    var: rel.0,
                    rel_type: rel.1,
                    direction,
                },
                node,
            ));
        }
        Ok(PathPattern { start, segments })
    }

    /// The optional `[var :TYPE]` part of a relationship pattern.
    fn rel_body(&mut self) -> Result<(Option<String>, Option<String>), ParseError> {
        if !self.eat_sym("[") {
            return Ok((None, None));
        }
        let var = match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                let v = t.text.clone();
                self.pos += 1;
                Some(v)
            }
            _ => None,
        };
        let rel_type = if self.eat_sym(":") {
            Some(self.name("relationship type")?)
        } else {
            None
        };
        if self.at_sym("*") {
            return self.unsupported("variable-length relationship");
        }
        self.expect_sym("]")?;
        Ok((var, rel_type))
    }

    fn node_pattern(&mut self) -> Result<NodePattern, ParseError> {
        self.expect_sym("(")?;
        let var = match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                let v = t.text.clone();
                self.pos += 1;
                Some(v)
            }
            _ => None,
        };
        let label = if self.eat_sym(":") {
            Some(self.name("node label")?)
        } else {
            None
        };
        let props = if self.at_sym("{") {
            self.prop_map()?
        } else {
            Vec::new()
        };
        self.expect_sym(")")?;
        Ok(NodePattern { var, label, props })
    }

    fn prop_map(&mut self) -> Result<Vec<(String, Expr)>, ParseError> {
        self.expect_sym("{")?;
        let mut props = Vec::new();
        if !self.at_sym("}") {
            loop {
                let key = self.name("property key")?;
                self.expect_sym(":")?;
                let value = self.expr()?;
                props.push((key, value));
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym("}")?;
        Ok(props)
    }

    // -- expressions --------------------------------------------------------

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.eat_kw(Kw::Or) {
            let rhs = self.and_expr()?;
            lhs = Expr::Binary {
                op: BinOp::Or,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_expr()?;
        while self.eat_kw(Kw::And) {
            let rhs = self.not_expr()?;
            lhs = Expr::Binary {
                op: BinOp::And,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_kw(Kw::Not) {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        let op = if self.eat_sym("=") {
            BinOp::Eq
        } else if self.eat_sym("<>") {
            BinOp::Ne
        } else if self.eat_sym("<=") {
            BinOp::Le
        } else if self.eat_sym(">=") {
            BinOp::Ge
        } else if self.eat_sym("<") {
            BinOp::Lt
        } else if self.eat_sym(">") {
            BinOp::Gt
        } else if self.eat_kw(Kw::In) {
            BinOp::In
        } else if self.eat_kw(Kw::Contains) {
            BinOp::Contains
        } else if self.at_kw(Kw::Starts) {
            self.bump();
            self.expect_kw(Kw::With, "WITH after STARTS")?;
            BinOp::StartsWith
        } else if self.at_kw(Kw::Ends) {
            self.bump();
            self.expect_kw(Kw::With, "WITH after ENDS")?;
            BinOp::EndsWith
        } else {
            return Ok(lhs);
        };
        let rhs = self.additive()?;
        Ok(Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        })
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = if self.eat_sym("+") {
                BinOp::Add
            } else if self.eat_sym("-") {
                BinOp::Sub
            } else {
                break;
            };
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_sym("*") {
                BinOp::Mul
            } else if self.eat_sym("/") {
                BinOp::Div
            } else {
                break;
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_sym("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.primary()?;
        while self.eat_sym(".") {
            let key = self.name("property name")?;
            expr = Expr::Prop(Box::new(expr), key);
        }
        Ok(expr)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(t) = self.peek() else {
            return self.err("an expression");
        };
        match &t.kind {
            TokenKind::Str => {
                let text = t.text.clone();
                self.pos += 1;
                Ok(Expr::Literal(Literal::Str(text)))
            }
            TokenKind::Int => {
                let text = t.text.clone();
                let span = t.span;
                self.pos += 1;
                match text.parse::<i64>() {
                    Ok(i) => Ok(Expr::Literal(Literal::Int(i))),
                    Err(_) => text
                        .parse::<f64>()
                        .map(|f| Expr::Literal(Literal::Float(f)))
                        .map_err(|_| ParseError::Syntax {
                            span,
                            expected: "numeric literal".to_string(),
                            found: format!("'{text}'"),
                        }),
                }
            }
            TokenKind::Float => {
                let text = t.text.clone();
                let span = t.span;
                self.pos += 1;
                text.parse::<f64>()
                    .map(|f| Expr::Literal(Literal::Float(f)))
                    .map_err(|_| ParseError::Syntax {
                        span,
                        expected: "numeric literal".to_string(),
                        found: format!("'{text}'"),
                    })
            }
            TokenKind::Keyword(Kw::Null) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Null))
            }
            TokenKind::Keyword(Kw::True) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Bool(true)))
            }
            TokenKind::Keyword(Kw::False) => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Bool(false)))
            }
            TokenKind::Sym if t.text == "(" => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            TokenKind::Sym if t.text == "[" => {
                self.pos += 1;
                let mut items = Vec::new();
                if !self.at_sym("]") {
                    loop {
                        items.push(self.expr()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym("]")?;
                Ok(Expr::List(items))
            }
            TokenKind::Ident => {
                // function call when directly followed by '('
                if matches!(self.peek_at(1), Some(nt) if nt.kind == TokenKind::Sym && nt.text == "(")
                {
                    let name = t.text.to_ascii_lowercase();
                    self.pos += 2;
                    let distinct = self.eat_kw(Kw::Distinct);
                    let mut star = false;
                    let mut args = Vec::new();
                    if self.at_sym("*") {
                        self.bump();
                        star = true;
                    } else if !self.at_sym(")") {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym(")")?;
                    return Ok(Expr::FnCall {
                        name,
                        distinct,
                        star,
                        args,
                    });
                }
                let name = t.text.clone();
                self.pos += 1;
                Ok(Expr::Var(name))
            }
            _ => self.err("an expression"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::token::tokenize;
    use super::*;

    fn parse_str(src: &str) -> Result<Query, ParseError> {
        parse(&tokenize(src).unwrap())
    }

    #[test]
    fn precedence_add_mul() {
        let q = parse_str("RETURN 1+2*3").unwrap();
        let Clause::Return(r) = &q.clauses[0] else {
            panic!()
        };
        let Expr::Binary { op: BinOp::Add, rhs, .. } = &r.items[0].expr else {
            panic!("expected Add at the top: {:?}", r.items[0].expr)
        };
        assert!(matches!(**rhs, Expr::Binary { op: BinOp::Mul, .. }));
    }

    #[test]
    fn missing_paren_is_reported() {
        let err = parse_str("MATCH (n RETURN n").unwrap_err();
        match err {
            ParseError::Syntax { expected, .. } => assert!(expected.contains(")")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bundled_example_shape() {
        let src = include_str!("../../fixtures/airing_difference.cypher");
        let q = parse_str(src).unwrap();
        let matches = q.clauses.iter().filter(|c| matches!(c, Clause::Match(_))).count();
        let withs = q.clauses.iter().filter(|c| matches!(c, Clause::With(_))).count();
        let creates = q.clauses.iter().filter(|c| matches!(c, Clause::Create(_))).count();
        let returns = q.clauses.iter().filter(|c| matches!(c, Clause::Return(_))).count();
        assert_eq!((matches, withs, creates, returns), (2, 3, 7, 1));
    }

    #[test]
    fn unsupported_features_are_distinct() {
        assert!(matches!(
            parse_str("MERGE (n) RETURN n"),
            Err(ParseError::Unsupported { .. })
        ));
        assert!(matches!(
            parse_str("OPTIONAL MATCH (n) RETURN n"),
            Err(ParseError::Unsupported { .. })
        ));
        assert!(matches!(
            parse_str("MATCH (a)-[:r*]->(b) RETURN a"),
            Err(ParseError::Unsupported { .. })
        ));
        assert!(matches!(
            parse_str("MATCH (n) SET n.x = 1 RETURN n"),
            Err(ParseError::Unsupported { .. })
        ));
    }

    #[test]
    fn dangling_match_is_an_error() {
        assert!(matches!(
            parse_str("MATCH (n)"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn create_can_end_a_query() {
        assert!(parse_str("CREATE (a:Attribute {x: '1'})").is_ok());
    }

    #[test]
    fn relationship_directions() {
        let q = parse_str("MATCH (a)-[:r]->(b), (c)<-[:s]-(d), (e)-[t]-(f) RETURN a").unwrap();
        let Clause::Match(m) = &q.clauses[0] else {
            panic!()
        };
        assert_eq!(m.patterns[0].segments[0].0.direction, Direction::Out);
        assert_eq!(m.patterns[1].segments[0].0.direction, Direction::In);
        assert_eq!(m.patterns[2].segments[0].0.direction, Direction::Undirected);
        assert_eq!(m.patterns[2].segments[0].0.var.as_deref(), Some("t"));
    }

    #[test]
    fn trailing_semicolon_accepted() {
        assert!(parse_str("RETURN 1;").is_ok());
    }

    #[test]
    fn round_trip_corpus() {
        let corpus = [
            "MATCH (n:Entity) RETURN count(n)",
            "MATCH (e:Entity {title: 'Loose Women'})-[:air_in]->(y:Year) RETURN e, y.value",
            "MATCH (a)-[r:knows]-(b) WHERE a.value <> b.value AND NOT a.x = 1 RETURN DISTINCT a ORDER BY a.row_address DESC LIMIT 3",
            "WITH 1 AS x RETURN x + 2 * -3",
            "UNWIND [1, 2, 3] AS n RETURN n",
            "MATCH (n) WHERE n.value IN ['a', 'b'] OR n.value STARTS WITH 'c' RETURN toLower(n.value) AS v",
            "MATCH (n) WITH collect(n.value) AS vs RETURN size(vs)",
            "CREATE (a:Attribute {x: 1 - 2 - 3, y: (1 + 2) * 3})",
            "MATCH (n) RETURN count(DISTINCT n.value)",
            "RETURN 3.5e2",
        ];
        for src in corpus {
            let first = parse_str(src).unwrap_or_else(|e| panic!("{src}: {e}"));
            let printed = print_query(&first);
            let second = parse_str(&printed)
                .unwrap_or_else(|e| panic!("re-parse of '{printed}' failed: {e}"));
            assert_eq!(first, second, "round trip changed structure for {src}");
        }
        // the bundled airing-difference query round-trips too
        let src = include_str!("../../fixtures/airing_difference.cypher");
        let first = parse_str(src).unwrap();
        let second = parse_str(&print_query(&first)).unwrap();
        assert_eq!(first, second);
    }
}
