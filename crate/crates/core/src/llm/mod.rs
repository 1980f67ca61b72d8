//! Uniform chat-completion access: a real HTTP provider, a scripted
//! deterministic mock, prompt template rendering, and call accounting.

pub mod http;
pub mod mock;
pub mod prompts;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpChatProvider;
pub use mock::MockChatProvider;
pub use prompts::{PromptError, PromptSet, TemplateId};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("llm request timed out")]
    Timeout,
    #[error("llm http error: status {0}")]
    Http(u16),
    #[error("bad llm response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// What a call is for. Tags drive temperature defaults and ledger buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CallTag {
    PrimaryKey,
    Relations,
    TextToCypher,
    Answer,
}

impl CallTag {
    pub fn name(self) -> &'static str {
        match self {
            CallTag::PrimaryKey => "primary_key",
            CallTag::Relations => "relations",
            CallTag::TextToCypher => "text_to_cypher",
            CallTag::Answer => "answer",
        }
    }

    /// Cypher generation runs at 0.4, everything else at 0.0.
    pub fn default_temperature(self) -> f64 {
        match self {
            CallTag::TextToCypher => 0.4,
            _ => 0.0,
        }
    }

    pub fn default_max_tokens(self) -> u32 {
        match self {
            CallTag::Answer => 1024,
            _ => 512,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: CallTag,
}

impl ChatRequest {
    pub fn for_tag(tag: CallTag, prompt: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![ChatMessage::user(prompt)],
            temperature: tag.default_temperature(),
            max_tokens: tag.default_max_tokens(),
            tag,
        }
    }

    /// Concatenated message contents; what the mock provider matches on.
    pub fn content(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// A chat-completion backend. Implementations must be safe for concurrent
/// calls.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError>;
}

/// Per-question call accounting. Counts are monotone within a question.
#[derive(Debug, Default)]
pub struct CallLedger {
    counts: Mutex<BTreeMap<CallTag, u32>>,
}

impl CallLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, tag: CallTag) {
        *self.counts.lock().unwrap().entry(tag).or_insert(0) += 1;
    }

    pub fn count(&self, tag: CallTag) -> u32 {
        self.counts.lock().unwrap().get(&tag).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.counts.lock().unwrap().values().sum()
    }

    pub fn snapshot(&self) -> BTreeMap<CallTag, u32> {
        self.counts.lock().unwrap().clone()
    }
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    timestamp_ms: u128,
    tag: &'static str,
    temperature: f64,
    request: &'a [ChatMessage],
    response: &'a str,
}

/// Provider wrapper that records transcripts and bills calls to a ledger.
pub struct LlmGateway {
    provider: Box<dyn ChatProvider>,
    transcript: Option<Mutex<BufWriter<File>>>,
}

impl LlmGateway {
    pub fn new(provider: Box<dyn ChatProvider>) -> Self {
        LlmGateway {
            provider,
            transcript: None,
        }
    }

    /// Appends one JSONL line per call to `path`.
    pub fn with_transcript(mut self, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.transcript = Some(Mutex::new(BufWriter::new(file)));
        Ok(self)
    }

    pub fn complete(&self, req: &ChatRequest, ledger: &CallLedger) -> Result<String, LlmError> {
        ledger.record(req.tag);
        let response = self.provider.complete(req)?;
        if let Some(t) = &self.transcript {
            let line = TranscriptLine {
                timestamp_ms: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis())
                    .unwrap_or(0),
                tag: req.tag.name(),
                temperature: req.temperature,
                request: &req.messages,
                response: &response,
            };
            let mut w = t.lock().unwrap();
            if let Ok(json) = serde_json::to_string(&line) {
                let _ = writeln!(w, "{json}");
                let _ = w.flush();
            }
        }
        Ok(response)
    }
}
