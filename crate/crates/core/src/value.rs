//! Runtime values shared by graph node properties and Cypher evaluation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Graph node identifier. Never reused after a node is merged or removed.
pub type NodeId = u64;

/// FNV-1a, used wherever we need a hash that is stable across runs and
/// builds (graph content hashes, the test embedder's token buckets).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// A relationship captured by value (source, target, type). Used when a
/// Cypher query binds a relationship variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelInfo {
    pub src: NodeId,
    pub dst: NodeId,
    pub rel_type: String,
}

/// The value domain of the engine: property values on nodes and the cells
/// of Cypher binding tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", content = "v")]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Node(NodeId),
    Rel(Box<RelInfo>),
    Map(BTreeMap<String, Value>),
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// Numeric view for arithmetic and cross-type numeric comparison.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::List(_) => "list",
            Value::Node(_) => "node",
            Value::Rel(_) => "relationship",
            Value::Map(_) => "map",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Bool(_) => 0,
            Value::Int(_) | Value::Float(_) => 1,
            Value::Str(_) => 2,
            Value::List(_) => 3,
            Value::Map(_) => 4,
            Value::Node(_) => 5,
            Value::Rel(_) => 6,
            // Nulls sort last so ORDER BY ASC puts them at the end.
            Value::Null => 7,
        }
    }

    /// Total, deterministic ordering across all value types. Ints and
    /// floats compare numerically so `1` and `1.0` are equal keys.
    pub fn canonical_cmp(&self, other: &Value) -> Ordering {
        let (ra, rb) = (self.rank(), other.rank());
        if ra != rb {
            return ra.cmp(&rb);
        }
        match (self, other) {
            (Value::Null, Value::Null) => Ordering::Equal,
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (a, b) if a.as_f64().is_some() => {
                a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())
            }
            (Value::Str(a), Value::Str(b)) => a.cmp(b),
            (Value::List(a), Value::List(b)) => {
                for (x, y) in a.iter().zip(b.iter()) {
                    let c = x.canonical_cmp(y);
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                a.len().cmp(&b.len())
            }
            (Value::Map(a), Value::Map(b)) => {
                let mut ia = a.iter();
                let mut ib = b.iter();
                loop {
                    match (ia.next(), ib.next()) {
                        (None, None) => return Ordering::Equal,
                        (None, Some(_)) => return Ordering::Less,
                        (Some(_), None) => return Ordering::Greater,
                        (Some((ka, va)), Some((kb, vb))) => {
                            let c = ka.cmp(kb).then_with(|| va.canonical_cmp(vb));
                            if c != Ordering::Equal {
                                return c;
                            }
                        }
                    }
                }
            }
            (Value::Node(a), Value::Node(b)) => a.cmp(b),
            (Value::Rel(a), Value::Rel(b)) => a.cmp(b),
            _ => unreachable!("rank() groups mismatched variants"),
        }
    }

    /// Equality under the canonical ordering (numeric cross-type aware).
    pub fn canonical_eq(&self, other: &Value) -> bool {
        self.canonical_cmp(other) == Ordering::Equal
    }
}

impl fmt::Display for Value {
    /// Plain rendering for TSV output and answer contexts. Strings print
    /// unquoted; quoting is applied inside lists and maps only.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "null"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => {
                if x.fract() == 0.0 && x.is_finite() && x.abs() < 1e15 {
                    write!(f, "{:.1}", x)
                } else {
                    write!(f, "{x}")
                }
            }
            Value::Str(s) => write!(f, "{s}"),
            Value::List(items) => {
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write_quoted(f, v)?;
                }
                write!(f, "]")
            }
            Value::Node(id) => write!(f, "#{id}"),
            Value::Rel(r) => write!(f, "-[:{}]->", r.rel_type),
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: ")?;
                    write_quoted(f, v)?;
                }
                write!(f, "}}")
            }
        }
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, v: &Value) -> fmt::Result {
    match v {
        Value::Str(s) => write!(f, "'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        other => write!(f, "{other}"),
    }
}

/// Row wrapper giving `Vec<Value>` the canonical ordering, for grouping
/// keys and DISTINCT.
#[derive(Debug, Clone)]
pub struct OrdRow(pub Vec<Value>);

impl PartialEq for OrdRow {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OrdRow {}

impl PartialOrd for OrdRow {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdRow {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            let c = a.canonical_cmp(b);
            if c != Ordering::Equal {
                return c;
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_cross_type_equality() {
        assert!(Value::Int(1).canonical_eq(&Value::Float(1.0)));
        assert_eq!(
            Value::Int(2).canonical_cmp(&Value::Float(1.5)),
            Ordering::Greater
        );
    }

    #[test]
    fn nulls_sort_last() {
        assert_eq!(Value::Str("z".into()).canonical_cmp(&Value::Null), Ordering::Less);
    }

    #[test]
    fn display_is_tsv_friendly() {
        assert_eq!(Value::Str("a b".into()).to_string(), "a b");
        assert_eq!(Value::Int(7).to_string(), "7");
        assert_eq!(Value::Float(350.0).to_string(), "350.0");
        assert_eq!(
            Value::List(vec![Value::Str("x".into()), Value::Int(1)]).to_string(),
            "['x', 1]"
        );
    }
}
