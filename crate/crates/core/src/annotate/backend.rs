use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AnnotateError, Topic};

pub const API_KEY_ENV: &str = "STANCE_ANNOTATE_API_KEY";

/// Something that classifies one tweet and returns the raw reply body.
pub trait ChatBackend: Send + Sync {
    fn classify(&self, topic: Topic, tweet: &str) -> Result<String, AnnotateError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Full URL of the chat-completion endpoint.
    pub url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Attempts per tweet before the user is recorded as failed.
    pub max_attempts: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "gpt-4".into(),
            temperature: 0.0,
            timeout_secs: 60,
            max_attempts: 3,
            backoff_ms: 1000,
            api_key_env: API_KEY_ENV.into(),
        }
    }
}

/// Request body: the tweet as the user message and a single forced
/// function whose `stance` argument is restricted to the topic's options.
pub fn request_body(cfg: &EndpointConfig, topic: Topic, tweet: &str) -> serde_json::Value {
    json!({
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [{"role": "user", "content": tweet}],
        "tools": [{
            "type": "function",
            "function": {
                "name": "classify_stance",
                "parameters": {
                    "type": "object",
                    "properties": {
                        "stance": {
                            "type": "string",
                            "description": topic.prompt(),
                            "enum": topic.options(),
                        }
                    },
                    "required": ["stance"],
                }
            }
        }],
        "tool_choice": {"type": "function", "function": {"name": "classify_stance"}},
    })
}

/// Blocking HTTP backend. Retries are handled by the caller.
pub struct HttpBackend {
    agent: ureq::Agent,
    cfg: EndpointConfig,
    api_key: String,
}

impl HttpBackend {
    /// Reads the credential from the configured environment variable.
    pub fn from_env(cfg: EndpointConfig) -> Result<Self, AnnotateError> {
        let key = std::env::var(&cfg.api_key_env).map_err(|_| AnnotateError::MissingCredential(cfg.api_key_env.clone()))?;
        Ok(Self::new(cfg, key))
    }

    pub fn new(cfg: EndpointConfig, api_key: String) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build();
        Self { agent, cfg, api_key }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }
}

impl ChatBackend for HttpBackend {
    fn classify(&self, topic: Topic, tweet: &str) -> Result<String, AnnotateError> {
        let body = request_body(&self.cfg, topic, tweet);
        let resp = self
            .agent
            .post(&self.cfg.url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        match resp {
            Ok(r) => r.into_string().map_err(AnnotateError::Io),
            Err(ureq::Error::Status(status, r)) => Err(AnnotateError::Status {
                status,
                body: r.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(AnnotateError::Transport(t.to_string())),
        }
    }
}
