//! Provider hub: role registry, replay cache, and token ledger.
//!
//! Every provider call flows through [`ProviderHub::call`]. The full request
//! is hashed; a hit in the persistent call cache (calls.jsonl) returns the
//! recorded response with zero provider traffic, which is what makes crashed
//! or re-invoked runs replay-safe. Misses call the provider, then append one
//! line to calls.jsonl and one row to the token ledger (ledger.csv).

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::provider::{ChatProvider, ProviderError};
use super::wire::{ChatRequest, ChatResponse};

/// What a registered agent is for. Auxiliary roles never perform task
/// rollouts; the base agent is never replaced by auxiliaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentRole {
    BaseAgent,
    InductionAux,
    GenerationAux,
    VerificationAux,
    EmbeddingAux,
    ScriptedDouble,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::BaseAgent => "base-agent",
            AgentRole::InductionAux => "induction-aux",
            AgentRole::GenerationAux => "generation-aux",
            AgentRole::VerificationAux => "verification-aux",
            AgentRole::EmbeddingAux => "embedding-aux",
            AgentRole::ScriptedDouble => "scripted-double",
        }
    }

    pub fn may_rollout(self) -> bool {
        matches!(self, AgentRole::BaseAgent | AgentRole::ScriptedDouble)
    }
}

/// Per-agent request assembly defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestDefaults {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u64,
}

/// One provider call as persisted in calls.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub agent: String,
    pub role: String,
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    pub prompt_sha256: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("gateway io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no agent registered under id {id}")]
    UnknownAgent { id: String },
    #[error("agent {id} has role {role}, which may not {action}")]
    RoleViolation {
        id: String,
        role: String,
        action: &'static str,
    },
    #[error("skill {name} is deprecated and may not be injected")]
    DeprecatedSkillInjected { name: String },
    #[error("skill has no reference named {name}")]
    UnknownReference { name: String },
    #[error("call cache {path} line {line} is corrupt: {reason}")]
    CacheCorrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

struct Registration {
    role: AgentRole,
    defaults: RequestDefaults,
    provider: Arc<dyn ChatProvider>,
}

struct Persistence {
    calls_path: PathBuf,
    ledger_path: PathBuf,
}

/// Registry of providers plus the persistent call cache and token ledger.
pub struct ProviderHub {
    agents: BTreeMap<String, Registration>,
    cache: Mutex<HashMap<(String, String), ChatResponse>>,
    persistence: Option<Persistence>,
    sink: Mutex<()>,
}

pub const LEDGER_HEADER: &str = "role,model,prompt_tokens,output_tokens,stage,round,agent,prompt_sha256";

/// Content hash of a request: the cache key and the audit handle for the
/// prompt.
pub fn request_hash(request: &ChatRequest) -> String {
    let json = serde_json::to_string(request).expect("requests serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Reads every record in a calls.jsonl file (audits, replay, reports).
pub fn read_call_records(path: &Path) -> Result<Vec<CallRecord>, GatewayError> {
    let mut records = Vec::new();
    if !path.exists() {
        return Ok(records);
    }
    let file = File::open(path).map_err(|source| GatewayError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| GatewayError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str::<CallRecord>(&line).map_err(|e| GatewayError::CacheCorrupt {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

impl ProviderHub {
    /// A hub persisting its cache and ledger under `run_dir`
    /// (calls.jsonl / ledger.csv). Existing records are loaded, so re-opened
    /// runs replay cached calls instead of re-issuing them.
    pub fn open(run_dir: &Path) -> Result<Self, GatewayError> {
        let calls_path = run_dir.join("calls.jsonl");
        let ledger_path = run_dir.join("ledger.csv");
        let mut cache = HashMap::new();
        for record in read_call_records(&calls_path)? {
            cache.insert(
                (record.agent.clone(), record.prompt_sha256.clone()),
                record.response,
            );
        }
        if !ledger_path.exists() {
            let mut file = File::create(&ledger_path).map_err(|source| GatewayError::Io {
                path: ledger_path.clone(),
                source,
            })?;
            writeln!(file, "{LEDGER_HEADER}").map_err(|source| GatewayError::Io {
                path: ledger_path.clone(),
                source,
            })?;
        }
        Ok(Self {
            agents: BTreeMap::new(),
            cache: Mutex::new(cache),
            persistence: Some(Persistence {
                calls_path,
                ledger_path,
            }),
            sink: Mutex::new(()),
        })
    }

    /// A hub with an in-memory cache only (unit tests, dry assemblies).
    pub fn in_memory() -> Self {
        Self {
            agents: BTreeMap::new(),
            cache: Mutex::new(HashMap::new()),
            persistence: None,
            sink: Mutex::new(()),
        }
    }

    pub fn register(
        &mut self,
        id: impl Into<String>,
        role: AgentRole,
        defaults: RequestDefaults,
        provider: Arc<dyn ChatProvider>,
    ) {
        self.agents.insert(
            id.into(),
            Registration {
                role,
                defaults,
                provider,
            },
        );
    }

    pub fn role(&self, id: &str) -> Option<AgentRole> {
        self.agents.get(id).map(|r| r.role)
    }

    pub fn defaults(&self, id: &str) -> Option<&RequestDefaults> {
        self.agents.get(id).map(|r| &r.defaults)
    }

    pub fn agent_ids(&self) -> Vec<&str> {
        self.agents.keys().map(String::as_str).collect()
    }

    /// Number of cached responses (diagnostics and replay tests).
    pub fn cached_calls(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Routes one request through the cache. `stage` and `round` label the
    /// pipeline site for the audit trail; they do not affect the cache key.
    pub fn call(
        &self,
        agent_id: &str,
        stage: &str,
        round: Option<u32>,
        request: &ChatRequest,
    ) -> Result<ChatResponse, GatewayError> {
        let registration = self
            .agents
            .get(agent_id)
            .ok_or_else(|| GatewayError::UnknownAgent {
                id: agent_id.to_string(),
            })?;
        let hash = request_hash(request);
        let key = (agent_id.to_string(), hash.clone());
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }

        let response = registration.provider.complete(request)?;

        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(hit) = cache.get(&key) {
            // A concurrent identical call won the race; keep the first record.
            return Ok(hit.clone());
        }
        cache.insert(key, response.clone());
        drop(cache);

        if let Some(persistence) = &self.persistence {
            let record = CallRecord {
                agent: agent_id.to_string(),
                role: registration.role.as_str().to_string(),
                stage: stage.to_string(),
                round,
                prompt_sha256: hash.clone(),
                request: request.clone(),
                response: response.clone(),
            };
            let _guard = self.sink.lock().expect("sink lock");
            append_line(
                &persistence.calls_path,
                &serde_json::to_string(&record).expect("records serialize"),
            )?;
            append_line(
                &persistence.ledger_path,
                &format!(
                    "{},{},{},{},{},{},{},{}",
                    record.role,
                    request.model,
                    response.usage.prompt_tokens,
                    response.usage.output_tokens,
                    stage,
                    round.map(|r| r.to_string()).unwrap_or_default(),
                    agent_id,
                    hash
                ),
            )?;
        }
        Ok(response)
    }
}

fn append_line(path: &Path, line: &str) -> Result<(), GatewayError> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|source| GatewayError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    writeln!(file, "{line}").map_err(|source| GatewayError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::provider::ScriptedProvider;
    use crate::gateway::wire::ChatMessage;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn defaults() -> RequestDefaults {
        RequestDefaults {
            model: "scripted".into(),
            temperature: 0.0,
            max_tokens: 64,
        }
    }

    fn request(text: &str) -> ChatRequest {
        ChatRequest {
            model: "scripted".into(),
            messages: vec![ChatMessage::user(text)],
            tools: None,
            temperature: 0.0,
            max_tokens: 64,
            seed: Some(7),
        }
    }

    fn counting_hub(dir: &Path, counter: Arc<AtomicU32>) -> ProviderHub {
        let mut hub = ProviderHub::open(dir).unwrap();
        hub.register(
            "agent",
            AgentRole::BaseAgent,
            defaults(),
            Arc::new(ScriptedProvider::new(move |req: &ChatRequest| {
                counter.fetch_add(1, Ordering::SeqCst);
                Ok(ChatResponse::text("ok", req))
            })),
        );
        hub
    }

    #[test]
    fn identical_requests_hit_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let counter = Arc::new(AtomicU32::new(0));
        let hub = counting_hub(dir.path(), counter.clone());
        hub.call("agent", "baseline", None, &request("one")).unwrap();
        hub.call("agent", "baseline", None, &request("one")).unwrap();
        hub.call("agent", "baseline", None, &request("two")).unwrap();
        assert_eq!(counter.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn cache_survives_reopen_and_replays_without_calls() {
        let dir = tempfile::tempdir().unwrap();
        let counter = Arc::new(AtomicU32::new(0));
        {
            let hub = counting_hub(dir.path(), counter.clone());
            hub.call("agent", "baseline", None, &request("one")).unwrap();
        }
        {
            let hub = counting_hub(dir.path(), counter.clone());
            let response = hub.call("agent", "baseline", None, &request("one")).unwrap();
            assert_eq!(response.content, "ok");
        }
        assert_eq!(counter.load(Ordering::SeqCst), 1, "replay issued no call");
        let ledger = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
        assert_eq!(ledger.lines().count(), 2, "header plus exactly one row");
    }

    #[test]
    fn ledger_rows_carry_role_stage_and_usage() {
        let dir = tempfile::tempdir().unwrap();
        let hub = counting_hub(dir.path(), Arc::new(AtomicU32::new(0)));
        hub.call("agent", "verify", Some(3), &request("one")).unwrap();
        let ledger = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
        let mut lines = ledger.lines();
        assert_eq!(lines.next().unwrap(), LEDGER_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("base-agent,scripted,"));
        assert!(row.contains(",verify,3,agent,"));
    }

    #[test]
    fn call_records_round_trip_for_audit() {
        let dir = tempfile::tempdir().unwrap();
        let hub = counting_hub(dir.path(), Arc::new(AtomicU32::new(0)));
        hub.call("agent", "induction", None, &request("summarize t017"))
            .unwrap();
        let records = read_call_records(&dir.path().join("calls.jsonl")).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].stage, "induction");
        assert_eq!(records[0].request.messages[0].content, "summarize t017");
        assert_eq!(records[0].prompt_sha256, request_hash(&records[0].request));
    }

    #[test]
    fn unknown_agent_is_rejected() {
        let hub = ProviderHub::in_memory();
        let err = hub.call("ghost", "baseline", None, &request("x")).unwrap_err();
        assert!(matches!(err, GatewayError::UnknownAgent { .. }));
    }

    #[test]
    fn distinct_agents_do_not_share_cache_entries() {
        let dir = tempfile::tempdir().unwrap();
        let counter = Arc::new(AtomicU32::new(0));
        let mut hub = counting_hub(dir.path(), counter.clone());
        let counter_b = counter.clone();
        hub.register(
            "other",
            AgentRole::BaseAgent,
            defaults(),
            Arc::new(ScriptedProvider::new(move |req: &ChatRequest| {
                counter_b.fetch_add(1, Ordering::SeqCst);
                Ok(ChatResponse::text("other", req))
            })),
        );
        hub.call("agent", "s", None, &request("same")).unwrap();
        hub.call("other", "s", None, &request("same")).unwrap();
        assert_eq!(counter.load(Ordering::SeqCst), 2);
    }
}
