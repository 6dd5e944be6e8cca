//! Agent gateway: chat-completions providers (HTTP and scripted), skill
//! injection into the system prompt, the rollout interaction loop, and the
//! provider hub with its replay cache and token ledger.

mod hub;
mod inject;
mod provider;
mod rollout;
mod scripted;
mod wire;

pub use hub::{
    read_call_records, AgentRole, CallRecord, GatewayError, ProviderHub, RequestDefaults,
    LEDGER_HEADER,
};
pub use inject::{
    inject, AssembledPrompt, Intervention, LOAD_REFERENCE_TOOL, SKILL_CLOSE, SKILL_OPEN,
};
pub use provider::{ChatProvider, HttpProvider, ProviderEndpoint, ProviderError, ScriptedProvider};
pub use rollout::{load_reference, rollout, NotExecutable, RolloutOptions, ScriptExecutor};
pub use scripted::{variant_marker, ScriptedAgentBehavior, ScriptedAuxBehavior};
pub use wire::{
    synth_usage, ChatMessage, ChatRequest, ChatResponse, FunctionCall, FunctionSpec, ToolCall,
    ToolSpec,
};
