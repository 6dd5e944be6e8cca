//! Provider clients: the real HTTP chat-completions client with retries, and
//! the closure-driven scripted provider for tests.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::wire::{ChatRequest, ChatResponse, ToolCall};
use crate::model::TokenUsage;

/// Where and how to reach one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderEndpoint {
    /// HTTPS endpoint speaking the chat-completions wire protocol.
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the credential. The value is
    /// read from the environment at client construction and never persisted.
    pub api_key_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u64,
}

fn default_max_output_tokens() -> u64 {
    4096
}

impl ProviderEndpoint {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature < 0.0 {
            return Err(format!("temperature {} is negative", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return Err("max_output_tokens must be positive".into());
        }
        if self.base_url.is_empty() {
            return Err("base_url is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("credential environment variable {env_var} is not set")]
    MissingCredential { env_var: String },
    #[error("provider transport failure after {attempts} attempts: {reason}")]
    Transport { reason: String, attempts: u32 },
    #[error("provider protocol error: {reason}")]
    Protocol { reason: String },
    #[error("scripted provider had no answer: {reason}")]
    Scripted { reason: String },
}

/// A synchronous chat-completions backend.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

/// Closure-backed provider for deterministic tests.
pub struct ScriptedProvider<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, ProviderError> + Send + Sync,
{
    respond: F,
}

impl<F> ScriptedProvider<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, ProviderError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self { respond }
    }
}

impl<F> ChatProvider for ScriptedProvider<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, ProviderError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (self.respond)(request)
    }
}

// ---------------------------------------------------------------------------
// HTTP client
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Debug, Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Option<Vec<ToolCall>>,
}

#[derive(Debug, Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Blocking chat-completions client with bounded exponential-backoff retries
/// on transport errors, 429s, and 5xx responses.
#[derive(Debug)]
pub struct HttpProvider {
    endpoint: ProviderEndpoint,
    api_key: String,
    client: reqwest::blocking::Client,
    retries: u32,
    backoff_base: Duration,
}

impl HttpProvider {
    pub fn new(endpoint: ProviderEndpoint) -> Result<Self, ProviderError> {
        Self::with_policy(endpoint, 3, Duration::from_millis(250))
    }

    pub fn with_policy(
        endpoint: ProviderEndpoint,
        retries: u32,
        backoff_base: Duration,
    ) -> Result<Self, ProviderError> {
        let api_key =
            std::env::var(&endpoint.api_key_env).map_err(|_| ProviderError::MissingCredential {
                env_var: endpoint.api_key_env.clone(),
            })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ProviderError::Transport {
                reason: e.to_string(),
                attempts: 0,
            })?;
        Ok(Self {
            endpoint,
            api_key,
            client,
            retries,
            backoff_base,
        })
    }

    pub fn endpoint(&self) -> &ProviderEndpoint {
        &self.endpoint
    }

    fn attempt(&self, request: &ChatRequest) -> Result<ChatResponse, AttemptError> {
        let url = format!(
            "{}/chat/completions",
            self.endpoint.base_url.trim_end_matches('/')
        );
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(request)
            .send()
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Retryable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(AttemptError::Fatal(format!(
                "status {status}: {}",
                response.text().unwrap_or_default()
            )));
        }
        let wire: WireResponse = response
            .json()
            .map_err(|e| AttemptError::Fatal(format!("undecodable response body: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| AttemptError::Fatal("response has no choices".into()))?;
        let usage = wire
            .usage
            .map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                output_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(ChatResponse {
            content: choice.message.content.unwrap_or_default(),
            tool_calls: choice.message.tool_calls.unwrap_or_default(),
            usage,
        })
    }
}

enum AttemptError {
    Retryable(String),
    Fatal(String),
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(request) {
                Ok(response) => return Ok(response),
                Err(AttemptError::Fatal(reason)) => {
                    return Err(ProviderError::Protocol { reason })
                }
                Err(AttemptError::Retryable(reason)) => {
                    if attempts > self.retries {
                        return Err(ProviderError::Transport { reason, attempts });
                    }
                    let wait = self.backoff_base * 2u32.pow(attempts - 1);
                    log::warn!(
                        "provider attempt {attempts} failed ({reason}); retrying in {wait:?}"
                    );
                    std::thread::sleep(wait);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::wire::ChatMessage;

    fn request() -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::user("hello")],
            tools: None,
            temperature: 0.0,
            max_tokens: 64,
            seed: Some(1),
        }
    }

    #[test]
    fn missing_credential_fails_at_construction() {
        let endpoint = ProviderEndpoint {
            base_url: "https://localhost:1".into(),
            model_name: "m".into(),
            api_key_env: "SKILLFORGE_TEST_KEY_THAT_DOES_NOT_EXIST".into(),
            temperature: 0.0,
            max_output_tokens: 64,
        };
        let err = HttpProvider::new(endpoint).unwrap_err();
        assert!(matches!(err, ProviderError::MissingCredential { .. }));
    }

    #[test]
    fn transport_failure_reports_attempt_count() {
        std::env::set_var("SKILLFORGE_TEST_KEY_PRESENT", "k");
        let endpoint = ProviderEndpoint {
            base_url: "http://127.0.0.1:9".into(),
            model_name: "m".into(),
            api_key_env: "SKILLFORGE_TEST_KEY_PRESENT".into(),
            temperature: 0.0,
            max_output_tokens: 64,
        };
        let provider =
            HttpProvider::with_policy(endpoint, 2, Duration::from_millis(1)).unwrap();
        let err = provider.complete(&request()).unwrap_err();
        match err {
            ProviderError::Transport { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn scripted_provider_round_trips() {
        let provider = ScriptedProvider::new(|req: &ChatRequest| Ok(ChatResponse::text("42", req)));
        let response = provider.complete(&request()).unwrap();
        assert_eq!(response.content, "42");
        assert!(response.usage.output_tokens >= 1);
    }

    #[test]
    fn endpoint_validation_catches_bad_values() {
        let endpoint = ProviderEndpoint {
            base_url: "https://x".into(),
            model_name: "m".into(),
            api_key_env: "K".into(),
            temperature: -1.0,
            max_output_tokens: 64,
        };
        assert!(endpoint.validate().is_err());
    }
}
