//! Prompt templates with `{placeholder}` substitution.
//!
//! Templates are stored as text files; the built-in set is embedded at
//! compile time and can be overridden by a directory of the same file
//! names. A placeholder is `{` followed by a lowercase identifier and `}`;
//! literal braces with any other content (for example the position
//! dictionaries in the identification template) pass through untouched.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("missing placeholder value: {0}")]
    MissingPlaceholder(String),
    #[error("io error reading templates: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateId {
    PrimaryKey,
    Relations,
    TextToCypher,
    Answer,
}

impl TemplateId {
    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::PrimaryKey => "primary_key.txt",
            TemplateId::Relations => "relations.txt",
            TemplateId::TextToCypher => "text_to_cypher.txt",
            TemplateId::Answer => "answer.txt",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromptSet {
    primary_key: String,
    relations: String,
    text_to_cypher: String,
    answer: String,
}

impl PromptSet {
    /// The templates shipped with the engine.
    pub fn builtin() -> Self {
        PromptSet {
            primary_key: include_str!("../../prompts/primary_key.txt").to_string(),
            relations: include_str!("../../prompts/relations.txt").to_string(),
            text_to_cypher: include_str!("../../prompts/text_to_cypher.txt").to_string(),
            answer: include_str!("../../prompts/answer.txt").to_string(),
        }
    }

    /// Loads all four templates from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |id: TemplateId| std::fs::read_to_string(dir.join(id.file_name()));
        Ok(PromptSet {
            primary_key: read(TemplateId::PrimaryKey)?,
            relations: read(TemplateId::Relations)?,
            text_to_cypher: read(TemplateId::TextToCypher)?,
            answer: read(TemplateId::Answer)?,
        })
    }

    pub fn template(&self, id: TemplateId) -> &str {
        match id {
            TemplateId::PrimaryKey => &self.primary_key,
            TemplateId::Relations => &self.relations,
            TemplateId::TextToCypher => &self.text_to_cypher,
            TemplateId::Answer => &self.answer,
        }
    }

    /// Byte-exact substitution of every `{name}` placeholder.
    pub fn render(
        &self,
        id: TemplateId,
        vars: &BTreeMap<&str, String>,
    ) -> Result<String, PromptError> {
        render_template(self.template(id), vars)
    }
}

pub fn render_template(
    template: &str,
    vars: &BTreeMap<&str, String>,
) -> Result<String, PromptError> {
    let re = Regex::new(r"\{([a-z_][a-z0-9_]*)\}").expect("static regex");
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for m in re.captures_iter(template) {
        let whole = m.get(0).unwrap();
        let name = m.get(1).unwrap().as_str();
        let value = vars
            .get(name)
            .ok_or_else(|| PromptError::MissingPlaceholder(name.to_string()))?;
        out.push_str(&template[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn renders_cypher_template() {
        let set = PromptSet::builtin();
        let out = set
            .render(
                TemplateId::TextToCypher,
                &vars(&[
                    ("schema", "(:Entity)"),
                    ("examples", ""),
                    ("question", "how many?"),
                ]),
            )
            .unwrap();
        assert!(out.contains("extract a subgraph containing all necessary nodes"));
        assert!(out.contains("Question: how many?"));
    }

    #[test]
    fn missing_placeholder_is_reported_by_name() {
        let set = PromptSet::builtin();
        let err = set
            .render(
                TemplateId::TextToCypher,
                &vars(&[("schema", "s"), ("examples", "")]),
            )
            .unwrap_err();
        match err {
            PromptError::MissingPlaceholder(name) => assert_eq!(name, "question"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_example_slot_renders() {
        let set = PromptSet::builtin();
        let out = set
            .render(
                TemplateId::PrimaryKey,
                &vars(&[("example", ""), ("table", "a | b")]),
            )
            .unwrap();
        assert!(out.contains("Examples:\n\n"));
    }

    #[test]
    fn literal_braces_pass_through() {
        let set = PromptSet::builtin();
        let out = set
            .render(
                TemplateId::PrimaryKey,
                &vars(&[("example", "e"), ("table", "t")]),
            )
            .unwrap();
        assert!(out.contains("{'column': [<column numbers>]}"));
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        let out = render_template("{a}", &vars(&[("a", "keep {b} literal")])).unwrap();
        assert_eq!(out, "keep {b} literal");
    }
}
