//! Chat-completions-style HTTP provider.
//!
//! Wire contract: `POST {endpoint}` with body
//! `{"model": .., "messages": [{"role","content"},..], "temperature": ..,
//! "max_tokens": ..}`; the reply text is read from
//! `choices[0].message.content`. An `Authorization: Bearer <key>` header is
//! attached when an API key is configured.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{ChatProvider, ChatRequest, LlmError, Role};

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl HttpProviderConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpProviderConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 2,
        }
    }
}

pub struct HttpChatProvider {
    cfg: HttpProviderConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl HttpChatProvider {
    pub fn new(cfg: HttpProviderConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| LlmError::BadResponse(format!("http client: {e}")))?;
        Ok(HttpChatProvider { cfg, client })
    }

    fn attempt(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let messages: Vec<_> = req
            .messages
            .iter()
            .map(|m| {
                json!({
                    "role": match m.role {
                        Role::System => "system",
                        Role::User => "user",
                        Role::Assistant => "assistant",
                    },
                    "content": m.content,
                })
            })
            .collect();
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut http_req = self.client.post(&self.cfg.endpoint).json(&body);
        if let Some(key) = &self.cfg.api_key {
            http_req = http_req.bearer_auth(key);
        }
        let resp = http_req.send().map_err(|e| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::BadResponse(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Http(status.as_u16()));
        }
        let parsed: Completion = resp
            .json()
            .map_err(|e| LlmError::BadResponse(format!("malformed completion: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::BadResponse("completion has no choices".to_string()))
    }

    fn retryable(err: &LlmError) -> bool {
        matches!(err, LlmError::Timeout | LlmError::Http(500..=599))
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let mut delay = Duration::from_millis(250);
        let mut last = None;
        for attempt in 0..=self.cfg.max_retries {
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err(e) if Self::retryable(&e) && attempt < self.cfg.max_retries => {
                    last = Some(e);
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or(LlmError::Timeout))
    }
}
