//! Scripted deterministic provider: an ordered list of (regex, response)
//! rules matched against the request content; first match wins.

use regex::Regex;
use serde::Deserialize;

use super::{ChatProvider, ChatRequest, LlmError};

#[derive(Debug, Deserialize)]
struct RuleSpec {
    pattern: String,
    response: String,
}

struct Rule {
    pattern: Regex,
    response: String,
}

/// A pure function of the request content. Rules come from a JSON fixture:
/// `[{"pattern": "...", "response": "..."}, ...]`.
pub struct MockChatProvider {
    rules: Vec<Rule>,
}

impl MockChatProvider {
    pub fn from_rules(pairs: &[(&str, &str)]) -> Result<Self, LlmError> {
        let rules = pairs
            .iter()
            .map(|(p, r)| {
                Ok(Rule {
                    pattern: Regex::new(p)
                        .map_err(|e| LlmError::BadResponse(format!("bad mock pattern: {e}")))?,
                    response: r.to_string(),
                })
            })
            .collect::<Result<Vec<_>, LlmError>>()?;
        Ok(MockChatProvider { rules })
    }

    pub fn from_json(json: &str) -> Result<Self, LlmError> {
        let specs: Vec<RuleSpec> = serde_json::from_str(json)
            .map_err(|e| LlmError::BadResponse(format!("bad mock rules file: {e}")))?;
        let pairs: Vec<(&str, &str)> = specs
            .iter()
            .map(|s| (s.pattern.as_str(), s.response.as_str()))
            .collect();
        Self::from_rules(&pairs)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::BadResponse(format!("cannot read mock rules: {e}")))?;
        Self::from_json(&text)
    }

    /// The rule set used by `--mock`: scripted replies for the bundled
    /// example table and its benchmark questions.
    pub fn builtin() -> Self {
        Self::from_json(include_str!("../../fixtures/mock_rules.json"))
            .expect("builtin mock rules parse")
    }
}

impl ChatProvider for MockChatProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let content = req.content();
        for rule in &self.rules {
            if rule.pattern.is_match(&content) {
                return Ok(rule.response.clone());
            }
        }
        Err(LlmError::BadResponse(
            "no mock rule matched the request".to_string(),
        ))
    }
}
