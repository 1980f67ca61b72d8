//! Entity identification: primary key, attribute orientation, and
//! entity-attribute relations for a table, obtained by prompting an LLM
//! with template replies parsed back into structured specs.
//!
//! Row-oriented tables (attribute names running down a column) are
//! transposed here so everything downstream only sees column-attribute
//! tables; the transposition is recorded so node addresses can be mapped
//! back to the original grid.

use std::collections::BTreeMap;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{CallLedger, CallTag, ChatRequest, LlmError, LlmGateway, PromptSet, TemplateId};
use crate::table::Table;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("llm error: {0}")]
    Llm(#[from] LlmError),
    #[error("unparseable identification reply: {0}")]
    Parse(String),
    #[error("prompt error: {0}")]
    Prompt(#[from] crate::llm::PromptError),
}

/// Where attribute names live: `Column` means attributes are columns with
/// names in row 0; `Row` means attributes are rows with names in column 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Column,
    Row,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyPosition {
    Columns(Vec<i32>),
    Rows(Vec<i32>),
}

impl KeyPosition {
    pub fn indices(&self) -> &[i32] {
        match self {
            KeyPosition::Columns(v) | KeyPosition::Rows(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimaryKeySpec {
    pub key_attributes: Vec<String>,
    pub position: KeyPosition,
    pub attribute_names_position: Axis,
    /// True when the key was generated by the LLM rather than found in the
    /// table; its single index is negative and the engine inserts a
    /// row-number key column at that virtual index.
    pub synthetic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub attribute: String,
    pub relation: String,
    pub description: String,
}

/// One attribute of the normalized (column-oriented) table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRef {
    /// Unique name after duplicate disambiguation; used for graph labels.
    pub name: String,
    /// The text as it appears in the table (empty for synthesized names).
    pub display: String,
    /// Column index in the normalized table; negative for a synthetic key.
    pub index: i32,
    pub is_key: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySchema {
    pub primary_key: PrimaryKeySpec,
    pub attributes: Vec<AttributeRef>,
    /// Exactly one relation per non-key attribute, keyed by unique name.
    pub relations: Vec<RelationSpec>,
    /// False when the table is headerless and row 0 is data.
    pub has_header: bool,
}

impl EntitySchema {
    pub fn key_attributes(&self) -> impl Iterator<Item = &AttributeRef> {
        self.attributes.iter().filter(|a| a.is_key)
    }

    pub fn value_attributes(&self) -> impl Iterator<Item = &AttributeRef> {
        self.attributes.iter().filter(|a| !a.is_key)
    }

    pub fn relation_for(&self, attribute_name: &str) -> Option<&RelationSpec> {
        self.relations.iter().find(|r| r.attribute == attribute_name)
    }
}

/// Identification plus the table normalization it implies.
#[derive(Debug)]
pub struct SchemaOutcome {
    pub schema: EntitySchema,
    /// The working table, transposed when the original was row-oriented.
    pub table: Table,
    pub transposed: bool,
    pub used_fallback: bool,
    pub warnings: Vec<String>,
}

/// Normalizes a name into a Cypher-safe label: whitespace runs become
/// underscores, everything outside `[A-Za-z0-9_]` is dropped, a leading
/// digit gets an underscore prefix. Case is preserved.
pub fn normalize_label(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_sep = false;
    for ch in name.trim().chars() {
        if ch.is_whitespace() {
            pending_sep = !out.is_empty();
        } else if ch.is_ascii_alphanumeric() || ch == '_' {
            if pending_sep {
                out.push('_');
                pending_sep = false;
            }
            out.push(ch);
        }
    }
    if out.is_empty() {
        return "Attr".to_string();
    }
    if out.chars().next().unwrap().is_ascii_digit() {
        out.insert(0, '_');
    }
    out
}

/// Relation names are lowercase labels. Idempotent.
pub fn normalize_relation(name: &str) -> String {
    normalize_label(&name.to_lowercase()).to_lowercase()
}

/// The fallback relation for an attribute with no usable LLM output.
pub fn fallback_relation(attribute: &str) -> String {
    format!("has_{}", normalize_relation(attribute))
}

// ---------------------------------------------------------------------------
// Template reply parsing
// ---------------------------------------------------------------------------

/// Parses the three-line identification reply:
///
/// ```text
/// Primary Key: [Title]
/// Primary Key Position: {'column': [1]}
/// Attribute Names Position: column
/// ```
///
/// Key lists may be bracketed or bare comma lists; quotes around names are
/// stripped. Any surrounding chatter is ignored.
pub fn parse_primary_key_reply(reply: &str) -> Result<PrimaryKeySpec, SchemaError> {
    let mut key_line = None;
    let mut position_line = None;
    let mut names_line = None;
    for line in reply.lines() {
        let lower = line.trim().to_lowercase();
        if let Some(rest) = strip_prefix_ci(line, "primary key position:") {
            position_line.get_or_insert(rest.to_string());
        } else if lower.starts_with("primary key:") {
            let rest = strip_prefix_ci(line, "primary key:").unwrap();
            key_line.get_or_insert(rest.to_string());
        } else if let Some(rest) = strip_prefix_ci(line, "attribute names position:") {
            names_line.get_or_insert(rest.to_string());
        }
    }
    let key_line = key_line.ok_or_else(|| parse_err("no 'Primary Key:' line"))?;
    let position_line = position_line.ok_or_else(|| parse_err("no 'Primary Key Position:' line"))?;
    let names_line = names_line.ok_or_else(|| parse_err("no 'Attribute Names Position:' line"))?;

    let key_attributes = parse_name_list(&key_line);
    if key_attributes.is_empty() {
        return Err(parse_err("empty primary key list"));
    }

    let re = Regex::new(r#"['"]?(column|row)['"]?\s*:\s*\[([^\]]*)\]"#).expect("static regex");
    let position_lower = position_line.to_lowercase();
    let caps = re
        .captures(&position_lower)
        .ok_or_else(|| parse_err("unrecognized key position"))?;
    let axis_word = caps.get(1).unwrap().as_str().to_string();
    let mut indices = Vec::new();
    for part in caps.get(2).unwrap().as_str().split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        indices.push(
            part.parse::<i32>()
                .map_err(|_| parse_err(&format!("bad key index '{part}'")))?,
        );
    }
    if indices.is_empty() {
        return Err(parse_err("empty key position list"));
    }
    if indices.len() != key_attributes.len() {
        return Err(parse_err("key name and index counts differ"));
    }
    let synthetic = indices.iter().any(|i| *i < 0);
    if synthetic && (indices.len() != 1) {
        return Err(parse_err("synthetic key must have exactly one index"));
    }

    let names_word = names_line.trim().trim_matches(|c: char| !c.is_alphanumeric());
    let attribute_names_position = match names_word.to_lowercase().as_str() {
        s if s.starts_with("column") => Axis::Column,
        s if s.starts_with("row") => Axis::Row,
        other => return Err(parse_err(&format!("bad attribute names position '{other}'"))),
    };

    let position = match axis_word.as_str() {
        "column" => {
            if attribute_names_position != Axis::Column {
                return Err(parse_err("key position axis disagrees with names position"));
            }
            KeyPosition::Columns(indices)
        }
        _ => {
            if attribute_names_position != Axis::Row {
                return Err(parse_err("key position axis disagrees with names position"));
            }
            KeyPosition::Rows(indices)
        }
    };

    Ok(PrimaryKeySpec {
        key_attributes,
        position,
        attribute_names_position,
        synthetic,
    })
}

/// Re-renders a spec in the reply template; `parse_primary_key_reply` on
/// the output reproduces the spec.
pub fn render_primary_key_reply(spec: &PrimaryKeySpec) -> String {
    let (axis, indices) = match &spec.position {
        KeyPosition::Columns(v) => ("column", v),
        KeyPosition::Rows(v) => ("row", v),
    };
    let idx = indices
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    format!(
        "Primary Key: [{}]\nPrimary Key Position: {{'{}': [{}]}}\nAttribute Names Position: {}",
        spec.key_attributes.join(", "),
        axis,
        idx,
        match spec.attribute_names_position {
            Axis::Column => "column",
            Axis::Row => "row",
        }
    )
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let trimmed = line.trim_start();
    if trimmed.len() >= prefix.len() && trimmed[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(trimmed[prefix.len()..].trim())
    } else {
        None
    }
}

fn parse_name_list(text: &str) -> Vec<String> {
    let inner = text.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(',')
        .map(|s| s.trim().trim_matches(|c| c == '\'' || c == '"').trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_err(msg: &str) -> SchemaError {
    SchemaError::Parse(msg.to_string())
}

/// Parses `- <attribute>: <relation> | <description>` lines. Lines that do
/// not fit the shape are skipped (the affected attribute later falls back
/// to `has_<attribute>`). Returns an error only when nothing parses.
pub fn parse_relations_reply(reply: &str) -> Result<Vec<(String, String, String)>, SchemaError> {
    let re = Regex::new(r"^\s*-\s*([^:]+):\s*([^|]+?)\s*(?:\|\s*(.*))?$").expect("static regex");
    let mut out = Vec::new();
    for line in reply.lines() {
        if let Some(caps) = re.captures(line) {
            let attr = caps.get(1).unwrap().as_str().trim().to_string();
            let rel = caps.get(2).unwrap().as_str().trim().to_string();
            let desc = caps.get(3).map(|m| m.as_str().trim().to_string()).unwrap_or_default();
            if !attr.is_empty() && !rel.is_empty() {
                out.push((attr, rel, desc));
            }
        }
    }
    if out.is_empty() {
        return Err(parse_err("no relation lines parsed"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Identification pipeline
// ---------------------------------------------------------------------------

/// Identifies the primary key by prompting the LLM with the first `h` rows
/// and columns. One re-ask on a parse failure; errors after that are
/// surfaced so the caller can fall back to the heuristic schema.
pub fn identify_primary_key(
    table: &Table,
    gateway: &LlmGateway,
    ledger: &CallLedger,
    prompts: &PromptSet,
    examples: &str,
    h: usize,
) -> Result<PrimaryKeySpec, SchemaError> {
    let mut vars = BTreeMap::new();
    vars.insert("example", examples.to_string());
    vars.insert("table", table.window(h.max(1)));
    let prompt = prompts.render(TemplateId::PrimaryKey, &vars)?;
    let mut last_err = parse_err("unreachable");
    for _attempt in 0..2 {
        let reply = gateway.complete(&ChatRequest::for_tag(CallTag::PrimaryKey, &prompt), ledger)?;
        match parse_primary_key_reply(&reply) {
            Ok(spec) => return Ok(spec),
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Asks the LLM for entity-attribute relations. Attributes whose reply line
/// is missing or malformed get the `has_<attribute>` fallback; a fully
/// unusable reply (after one re-ask) falls back for every attribute.
pub fn generate_relations(
    primary_key: &PrimaryKeySpec,
    attributes: &[AttributeRef],
    gateway: &LlmGateway,
    ledger: &CallLedger,
    prompts: &PromptSet,
    examples: &str,
) -> Result<Vec<RelationSpec>, SchemaError> {
    let value_attrs: Vec<&AttributeRef> = attributes.iter().filter(|a| !a.is_key).collect();
    if value_attrs.is_empty() {
        return Ok(Vec::new());
    }
    let mut vars = BTreeMap::new();
    vars.insert("examples", examples.to_string());
    vars.insert("attributes", python_list(value_attrs.iter().map(|a| a.name.as_str())));
    vars.insert(
        "primary_key",
        python_list(primary_key.key_attributes.iter().map(|s| s.as_str())),
    );
    let prompt = prompts.render(TemplateId::Relations, &vars)?;

    let mut parsed = Vec::new();
    for _attempt in 0..2 {
        let reply = gateway.complete(&ChatRequest::for_tag(CallTag::Relations, &prompt), ledger)?;
        match parse_relations_reply(&reply) {
            Ok(lines) => {
                parsed = lines;
                break;
            }
            Err(_) => continue,
        }
    }

    Ok(value_attrs
        .iter()
        .map(|attr| {
            let line = parsed.iter().find(|(name, _, _)| {
                name.eq_ignore_ascii_case(&attr.name) || name.eq_ignore_ascii_case(&attr.display)
            });
            match line {
                Some((_, rel, desc)) => {
                    let normalized = normalize_relation(rel);
                    RelationSpec {
                        attribute: attr.name.clone(),
                        relation: if normalized.is_empty() {
                            fallback_relation(&attr.name)
                        } else {
                            normalized
                        },
                        description: desc.clone(),
                    }
                }
                None => RelationSpec {
                    attribute: attr.name.clone(),
                    relation: fallback_relation(&attr.name),
                    description: String::new(),
                },
            }
        })
        .collect())
}

fn python_list<'a>(items: impl Iterator<Item = &'a str>) -> String {
    let quoted: Vec<String> = items.map(|s| format!("'{}'", s.replace('\'', "\\'"))).collect();
    format!("[{}]", quoted.join(", "))
}

/// Builds the attribute list for a column-oriented table given a key spec.
/// Names come from row 0; empty headers are synthesized as `col_<i>`;
/// duplicates are suffixed `_2`, `_3`, ... left to right.
fn derive_attributes(table: &Table, pk: &PrimaryKeySpec) -> Result<Vec<AttributeRef>, SchemaError> {
    let KeyPosition::Columns(key_cols) = &pk.position else {
        return Err(parse_err("attributes require a column-oriented key"));
    };
    for c in key_cols {
        if *c >= 0 && *c as usize >= table.n_cols() {
            return Err(parse_err(&format!("key column {c} out of range")));
        }
    }
    let mut attrs = Vec::new();
    if pk.synthetic {
        let name = pk.key_attributes.first().cloned().unwrap_or_else(|| "row_id".into());
        attrs.push(AttributeRef {
            name,
            display: String::new(),
            index: key_cols[0],
            is_key: true,
        });
    }
    for c in 0..table.n_cols() {
        let display = table.cell(0, c).to_string();
        let name = if display.trim().is_empty() {
            format!("col_{c}")
        } else {
            display.trim().to_string()
        };
        attrs.push(AttributeRef {
            name,
            display,
            index: c as i32,
            is_key: !pk.synthetic && key_cols.contains(&(c as i32)),
        });
    }
    disambiguate_names(&mut attrs);
    Ok(attrs)
}

fn disambiguate_names(attrs: &mut [AttributeRef]) {
    let mut seen: BTreeMap<String, u32> = BTreeMap::new();
    for attr in attrs.iter_mut() {
        let count = seen.entry(attr.name.clone()).or_insert(0);
        *count += 1;
        if *count > 1 {
            attr.name = format!("{}_{}", attr.name, count);
        }
    }
}

/// Heuristic schema used when LLM output is unusable twice: attribute names
/// in row 0 (synthesized `col_<i>` for headerless all-numeric tables),
/// primary key = column 0, relations `has_<attribute>`.
pub fn fallback_schema(table: &Table) -> EntitySchema {
    let headerless = table.n_rows() >= 2
        && (0..table.n_cols()).all(|c| {
            let cell = table.cell(0, c).trim();
            !cell.is_empty() && cell.replace(',', "").parse::<f64>().is_ok()
        });
    let mut attrs: Vec<AttributeRef> = (0..table.n_cols())
        .map(|c| {
            let display = if headerless { String::new() } else { table.cell(0, c).to_string() };
            let name = if headerless || display.trim().is_empty() {
                format!("col_{c}")
            } else {
                display.trim().to_string()
            };
            AttributeRef {
                name,
                display,
                index: c as i32,
                is_key: c == 0,
            }
        })
        .collect();
    disambiguate_names(&mut attrs);
    let relations = attrs
        .iter()
        .filter(|a| !a.is_key)
        .map(|a| RelationSpec {
            attribute: a.name.clone(),
            relation: fallback_relation(&a.name),
            description: String::new(),
        })
        .collect();
    EntitySchema {
        primary_key: PrimaryKeySpec {
            key_attributes: vec![attrs[0].name.clone()],
            position: KeyPosition::Columns(vec![0]),
            attribute_names_position: Axis::Column,
            synthetic: false,
        },
        attributes: attrs,
        relations,
        has_header: !headerless,
    }
}

fn fallback_outcome(table: &Table, warnings: Vec<String>) -> SchemaOutcome {
    SchemaOutcome {
        schema: fallback_schema(table),
        table: table.clone(),
        transposed: false,
        used_fallback: true,
        warnings,
    }
}

/// Full identification: primary key, orientation normalization, attributes
/// and relations. LLM transport errors propagate; parse failures fall back
/// to the heuristic schema after one re-ask.
pub fn identify_schema(
    table: &Table,
    gateway: &LlmGateway,
    ledger: &CallLedger,
    prompts: &PromptSet,
    pk_examples: &str,
    relation_examples: &str,
    h: usize,
) -> Result<SchemaOutcome, SchemaError> {
    let pk = match identify_primary_key(table, gateway, ledger, prompts, pk_examples, h) {
        Ok(pk) => pk,
        Err(SchemaError::Llm(e)) => return Err(SchemaError::Llm(e)),
        Err(e) => {
            return Ok(fallback_outcome(
                table,
                vec![format!("identification fell back to heuristic schema: {e}")],
            ));
        }
    };

    let (work_table, pk, transposed) = match pk.attribute_names_position {
        Axis::Column => (table.clone(), pk, false),
        Axis::Row => {
            let indices = pk.position.indices().to_vec();
            (
                table.transposed(),
                PrimaryKeySpec {
                    position: KeyPosition::Columns(indices),
                    attribute_names_position: Axis::Column,
                    ..pk
                },
                true,
            )
        }
    };

    let attributes = match derive_attributes(&work_table, &pk) {
        Ok(a) => a,
        Err(e) => {
            return Ok(fallback_outcome(
                table,
                vec![format!("identification fell back to heuristic schema: {e}")],
            ));
        }
    };
    let relations =
        generate_relations(&pk, &attributes, gateway, ledger, prompts, relation_examples)?;

    Ok(SchemaOutcome {
        schema: EntitySchema {
            primary_key: pk,
            attributes,
            relations,
            has_header: true,
        },
        table: work_table,
        transposed,
        used_fallback: false,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{parse_table, TableFormat};

    fn show_table_path() -> Table {
        parse_table(
            include_str!("../fixtures/shows.csv"),
            TableFormat::Csv,
            "fig1",
        )
        .unwrap()
    }

    #[test]
    fn parses_template_reply() {
        let spec = parse_primary_key_reply(
            "Primary Key: [id]\nPrimary Key Position: {'column': [0]}\nAttribute Names Position: column",
        )
        .unwrap();
        assert_eq!(spec.key_attributes, vec!["id"]);
        assert_eq!(spec.position, KeyPosition::Columns(vec![0]));
        assert_eq!(spec.attribute_names_position, Axis::Column);
        assert!(!spec.synthetic);
    }

    #[test]
    fn negative_index_marks_synthetic() {
        let spec = parse_primary_key_reply(
            "Primary Key: [row_id]\nPrimary Key Position: {'column': [-1]}\nAttribute Names Position: column",
        )
        .unwrap();
        assert!(spec.synthetic);
        assert_eq!(spec.position, KeyPosition::Columns(vec![-1]));
    }

    #[test]
    fn accepts_bare_and_bracketed_lists() {
        let a = parse_primary_key_reply(
            "Primary Key: Title, Year\nPrimary Key Position: {'column': [1, 0]}\nAttribute Names Position: column",
        )
        .unwrap();
        let b = parse_primary_key_reply(
            "Primary Key: ['Title', 'Year']\nPrimary Key Position: {\"column\": [1, 0]}\nAttribute Names Position: column",
        )
        .unwrap();
        assert_eq!(a.key_attributes, b.key_attributes);
        assert_eq!(a.position, b.position);
    }

    #[test]
    fn count_mismatch_is_a_parse_error() {
        assert!(parse_primary_key_reply(
            "Primary Key: [a, b]\nPrimary Key Position: {'column': [0]}\nAttribute Names Position: column",
        )
        .is_err());
    }

    #[test]
    fn render_parse_round_trip() {
        let spec = PrimaryKeySpec {
            key_attributes: vec!["Title".into(), "Year".into()],
            position: KeyPosition::Columns(vec![1, 0]),
            attribute_names_position: Axis::Column,
            synthetic: false,
        };
        let parsed = parse_primary_key_reply(&render_primary_key_reply(&spec)).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn relation_lines_parse_with_per_line_recovery() {
        let lines =
            parse_relations_reply("- Year: air_in | when the show aired\nYear air_in\n- Episodes: has episodes | count")
                .unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].1, "air_in");
        assert_eq!(lines[1].0, "Episodes");
    }

    #[test]
    fn relation_normalization_is_idempotent() {
        for raw in ["Air In", "air-in!", "AIR_IN", "9lives", "  a b  c "] {
            let once = normalize_relation(raw);
            assert_eq!(normalize_relation(&once), once, "raw={raw}");
            assert!(Regex::new("^[A-Za-z_][A-Za-z0-9_]*$").unwrap().is_match(&once));
        }
    }

    #[test]
    fn fallback_relation_matches_contract() {
        assert_eq!(fallback_relation("Episodes"), "has_episodes");
    }

    #[test]
    fn fallback_schema_uses_first_column_and_headers() {
        let s = fallback_schema(&show_table_path());
        assert_eq!(s.primary_key.key_attributes, vec!["Year"]);
        assert!(s.attributes.iter().any(|a| a.name == "Title" && !a.is_key));
        assert_eq!(s.relations.len(), 2);
        assert!(s.has_header);
    }

    #[test]
    fn fallback_schema_single_column() {
        let t = parse_table("Name\nAlice\nBob", TableFormat::Csv, "t").unwrap();
        let s = fallback_schema(&t);
        assert_eq!(s.attributes.len(), 1);
        assert!(s.attributes[0].is_key);
        assert!(s.relations.is_empty());
    }

    #[test]
    fn fallback_schema_headerless_numeric() {
        let t = parse_table("1,2\n3,4", TableFormat::Csv, "t").unwrap();
        let s = fallback_schema(&t);
        assert!(!s.has_header);
        assert_eq!(s.attributes[0].name, "col_0");
        assert_eq!(s.attributes[1].name, "col_1");
    }

    #[test]
    fn duplicate_attribute_names_get_suffixes() {
        let t = parse_table("Score,Score,Score\n1,2,3", TableFormat::Csv, "t").unwrap();
        let s = fallback_schema(&t);
        let names: Vec<&str> = s.attributes.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, vec!["Score", "Score_2", "Score_3"]);
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label("Air Date"), "Air_Date");
        assert_eq!(normalize_label("Yr (est.)"), "Yr_est");
        assert_eq!(normalize_label("2nd Place"), "_2nd_Place");
        assert_eq!(normalize_label("!!!"), "Attr");
    }
}
