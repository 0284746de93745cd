//! Minimal OpenAI-compatible chat-completions client.
//!
//! Used by the generative extraction backend and the judge baseline.
//! Configuration comes from explicit values or the `LLM_ENDPOINT` /
//! `LLM_MODEL` / `LLM_API_KEY` environment variables. Requests pass the
//! sampling temperature through verbatim and, when set, the
//! `reasoning_effort` field understood by reasoning-capable servers.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("missing configuration: {0}")]
    MissingConfig(String),
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("malformed backend response: {message}")]
    MalformedResponse { message: String },
}

/// Requested depth of server-side reasoning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Low,
    Medium,
}

impl ReasoningEffort {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReasoningEffort::Low => "low",
            ReasoningEffort::Medium => "medium",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChatConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`; `/chat/completions` is
    /// appended.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub temperature: f64,
    /// Approximate token budget for rendered prompts; history is truncated
    /// oldest-first to fit.
    pub max_context: usize,
    pub reasoning_effort: Option<ReasoningEffort>,
    pub timeout_secs: u64,
    pub retries: usize,
}

impl ChatConfig {
    pub fn new(endpoint: &str, model: &str) -> Self {
        Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: None,
            temperature: 0.01,
            max_context: 8192,
            reasoning_effort: None,
            timeout_secs: 120,
            retries: 2,
        }
    }

    /// Read `LLM_ENDPOINT`, `LLM_MODEL`, and `LLM_API_KEY`.
    pub fn from_env() -> Result<Self, BackendError> {
        let endpoint = std::env::var("LLM_ENDPOINT")
            .map_err(|_| BackendError::MissingConfig("LLM_ENDPOINT".into()))?;
        let model = std::env::var("LLM_MODEL")
            .map_err(|_| BackendError::MissingConfig("LLM_MODEL".into()))?;
        let mut config = Self::new(&endpoint, &model);
        config.api_key = std::env::var("LLM_API_KEY").ok().filter(|k| !k.is_empty());
        Ok(config)
    }
}

/// Crude token estimate (4 characters per token) used only for prompt
/// truncation budgeting.
pub fn approx_tokens(text: &str) -> usize {
    text.chars().count() / 4 + 1
}

#[derive(Debug, Clone)]
pub struct ChatReply {
    pub content: String,
    /// Server-side reasoning transcript, when the backend exposes one.
    pub reasoning: Option<String>,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    reasoning_effort: Option<&'a str>,
}

pub struct ChatClient {
    config: ChatConfig,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish()
    }
}

impl ChatClient {
    pub fn new(config: ChatConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport {
                message: e.to_string(),
            })?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }

    /// One system+user completion round trip.
    pub fn complete(&self, system: &str, user: &str) -> Result<ChatReply, BackendError> {
        let url = format!("{}/chat/completions", self.config.endpoint);
        let request = ChatRequest {
            model: &self.config.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: user,
                },
            ],
            temperature: self.config.temperature,
            reasoning_effort: self.config.reasoning_effort.map(|e| e.as_str()),
        };
        let mut last_err = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(std::time::Duration::from_millis(200 * attempt as u64));
            }
            let mut call = self.client.post(&url).json(&request);
            if let Some(key) = &self.config.api_key {
                call = call.bearer_auth(key);
            }
            match call.send().and_then(|r| r.error_for_status()) {
                Ok(response) => {
                    let body: Value =
                        response
                            .json()
                            .map_err(|e| BackendError::MalformedResponse {
                                message: e.to_string(),
                            })?;
                    return parse_reply(&body);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(BackendError::Transport { message: last_err })
    }
}

fn parse_reply(body: &Value) -> Result<ChatReply, BackendError> {
    let message = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| BackendError::MalformedResponse {
            message: "response has no choices[0].message".into(),
        })?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::MalformedResponse {
            message: "message content is not text".into(),
        })?
        .to_string();
    let reasoning = message
        .get("reasoning_content")
        .or_else(|| message.get("reasoning"))
        .and_then(Value::as_str)
        .map(str::to_string);
    Ok(ChatReply { content, reasoning })
}

/// Scan free-form text for balanced top-level JSON values (objects or
/// arrays) and return the ones that parse, left to right. Code fences and
/// surrounding prose are skipped naturally.
pub fn scan_json_values(text: &str) -> Vec<Value> {
    let bytes = text.as_bytes();
    let mut values = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let open = bytes[i];
        if open != b'{' && open != b'[' {
            i += 1;
            continue;
        }
        match balanced_end(bytes, i) {
            Some(end) => {
                if let Ok(value) = serde_json::from_str::<Value>(&text[i..=end]) {
                    values.push(value);
                    i = end + 1;
                    continue;
                }
                i += 1;
            }
            None => i += 1,
        }
    }
    values
}

/// Index of the byte closing the bracket opened at `start`, honoring JSON
/// string and escape rules.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return Some(start + offset);
                }
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scans_plain_and_embedded_objects() {
        let values = scan_json_values(r#"{"reward": 50}"#);
        assert_eq!(values.len(), 1);
        assert_eq!(values[0]["reward"], 50);

        let values = scan_json_values("Sure! Here you go: {\"reward\": 3} trailing");
        assert_eq!(values[0]["reward"], 3);

        let fenced = "```json\n{\"a\": [1, 2, {\"b\": \"}\"}]}\n```";
        let values = scan_json_values(fenced);
        assert_eq!(values.len(), 1);
        assert_eq!(values[0]["a"][2]["b"], "}");
    }

    #[test]
    fn scans_arrays_and_multiple_values() {
        let values = scan_json_values("[1,2] and then {\"x\": 1}");
        assert_eq!(values.len(), 2);
        assert!(values[0].is_array());
        assert!(values[1].is_object());
    }

    #[test]
    fn ignores_unbalanced_noise() {
        assert!(scan_json_values("{{{ not json").is_empty());
        assert!(scan_json_values("no braces at all").is_empty());
    }

    #[test]
    fn reply_parsing_accepts_reasoning_field() {
        let body: Value = serde_json::from_str(
            r#"{"choices":[{"message":{"content":"hi","reasoning_content":"because"}}]}"#,
        )
        .unwrap();
        let reply = parse_reply(&body).unwrap();
        assert_eq!(reply.content, "hi");
        assert_eq!(reply.reasoning.as_deref(), Some("because"));

        let bad: Value = serde_json::from_str(r#"{"choices":[]}"#).unwrap();
        assert!(parse_reply(&bad).is_err());
    }

    #[test]
    fn config_from_env_requires_endpoint_and_model() {
        // Scoped env mutation: these vars are unset in the test environment.
        std::env::remove_var("LLM_ENDPOINT");
        std::env::remove_var("LLM_MODEL");
        assert!(matches!(
            ChatConfig::from_env(),
            Err(BackendError::MissingConfig(_))
        ));
    }
}
