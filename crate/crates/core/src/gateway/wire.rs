//! Chat-completions wire types shared by the HTTP client and the scripted
//! providers.

use serde::{Deserialize, Serialize};

use crate::model::TokenUsage;

/// One chat message. `tool_calls` appears on assistant messages that invoke
/// tools; `tool_call_id` appears on tool-result messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<ToolCall>>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain("system", content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain("user", content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain("assistant", content)
    }

    pub fn tool_result(tool_call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: "tool".into(),
            content: content.into(),
            tool_call_id: Some(tool_call_id.into()),
            tool_calls: None,
        }
    }

    fn plain(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
            tool_call_id: None,
            tool_calls: None,
        }
    }
}

/// Tool advertisement in a request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    #[serde(rename = "type")]
    pub kind: String,
    pub function: FunctionSpec,
}

impl ToolSpec {
    pub fn function(
        name: impl Into<String>,
        description: impl Into<String>,
        parameters: serde_json::Value,
    ) -> Self {
        Self {
            kind: "function".into(),
            function: FunctionSpec {
                name: name.into(),
                description: description.into(),
                parameters,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

/// Tool invocation emitted by the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub function: FunctionCall,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    pub arguments: String,
}

/// One completion request. Serialized whole into the call cache, so any field
/// change (model, messages, tools, sampling controls, seed) is a new cache
/// key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<Vec<ToolSpec>>,
    pub temperature: f64,
    pub max_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Provider reply in canonical form (already unwrapped from the wire
/// envelope).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    pub usage: TokenUsage,
}

impl ChatResponse {
    /// Plain-text reply with deterministic synthetic usage — the form every
    /// scripted provider returns.
    pub fn text(content: impl Into<String>, request: &ChatRequest) -> Self {
        let content = content.into();
        let usage = synth_usage(request, &content);
        Self {
            content,
            tool_calls: vec![],
            usage,
        }
    }
}

/// Deterministic stand-in token accounting for scripted providers: one token
/// per four characters, at least one per side.
pub fn synth_usage(request: &ChatRequest, content: &str) -> TokenUsage {
    let prompt_chars: usize = request.messages.iter().map(|m| m.content.len()).sum();
    TokenUsage {
        prompt_tokens: (prompt_chars as u64 / 4).max(1),
        output_tokens: (content.len() as u64 / 4).max(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_serialization_omits_empty_optionals() {
        let request = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::system("s"), ChatMessage::user("u")],
            tools: None,
            temperature: 0.0,
            max_tokens: 4096,
            seed: None,
        };
        let json = serde_json::to_value(&request).unwrap();
        assert!(json.get("tools").is_none());
        assert!(json.get("seed").is_none());
        assert_eq!(json["messages"][0]["role"], "system");
    }

    #[test]
    fn tool_call_round_trips() {
        let call = ToolCall {
            id: "call_1".into(),
            kind: "function".into(),
            function: FunctionCall {
                name: "skill_load_reference".into(),
                arguments: "{\"name\":\"units.md\"}".into(),
            },
        };
        let json = serde_json::to_string(&call).unwrap();
        assert!(json.contains("\"type\":\"function\""));
        let back: ToolCall = serde_json::from_str(&json).unwrap();
        assert_eq!(back, call);
    }

    #[test]
    fn synth_usage_is_deterministic_and_positive() {
        let request = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::user("x")],
            tools: None,
            temperature: 0.0,
            max_tokens: 16,
            seed: None,
        };
        let usage = synth_usage(&request, "");
        assert_eq!(usage.prompt_tokens, 1);
        assert_eq!(usage.output_tokens, 1);
        let longer = synth_usage(&request, &"y".repeat(40));
        assert_eq!(longer.output_tokens, 10);
    }
}
