//! Skill value types, construction-time validation, and the refinement
//! restriction that freezes the tool interface after round 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Section headers of the serialized skill body. Body text may not contain
/// any of these as a standalone line — that is what keeps the bundle format
/// unambiguous.
pub const HEADER_CTX: &str = "## Task Context";
pub const HEADER_SUCC: &str = "## Success Patterns";
pub const HEADER_FAIL: &str = "## Failure Lessons";

/// Three-part prompt body: task context, success patterns, failure lessons.
/// Sections may be empty strings for degenerate strata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillBody {
    pub ctx: String,
    pub succ: String,
    pub fail: String,
}

impl SkillBody {
    pub fn total_len(&self) -> usize {
        self.ctx.len() + self.succ.len() + self.fail.len()
    }

    /// Rejects bodies the serialized form cannot represent unambiguously:
    /// sections colliding with a section header line, or ending in a newline
    /// (the blank-line delimiter before the next header would absorb it).
    pub fn check_serializable(&self) -> Result<(), ArtifactError> {
        for (section, text) in [("ctx", &self.ctx), ("succ", &self.succ), ("fail", &self.fail)] {
            for header in [HEADER_CTX, HEADER_SUCC, HEADER_FAIL] {
                if text.lines().any(|line| line == header) {
                    return Err(ArtifactError::ReservedHeaderLine {
                        section,
                        header: header.to_string(),
                    });
                }
            }
            if text.ends_with('\n') {
                return Err(ArtifactError::TrailingNewline { section });
            }
        }
        Ok(())
    }

    /// Enforces the configured character cap (applied where new bodies enter
    /// the system; oversize bodies are rejected, never truncated).
    pub fn check_cap(&self, cap: usize) -> Result<(), ArtifactError> {
        let len = self.total_len();
        if len > cap {
            return Err(ArtifactError::BodyTooLong { len, cap });
        }
        Ok(())
    }
}

/// Lifecycle status. Candidates become active or deprecated exactly once,
/// when the deployment gate rules on the selected round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkillStatus {
    Candidate,
    Active,
    Deprecated,
}

impl SkillStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SkillStatus::Candidate => "candidate",
            SkillStatus::Active => "active",
            SkillStatus::Deprecated => "deprecated",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "candidate" => Some(SkillStatus::Candidate),
            "active" => Some(SkillStatus::Active),
            "deprecated" => Some(SkillStatus::Deprecated),
            _ => None,
        }
    }
}

/// Named script stored with the skill; its declared top-level functions are
/// advertised to the agent as callable tools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFile {
    pub name: String,
    pub declared_functions: Vec<String>,
    pub content: String,
}

/// Named reference document, loadable on demand during rollouts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceDoc {
    pub name: String,
    pub content: String,
}

/// Body plus proposed scripts/references, as parsed out of one generation
/// response — the raw material for building or refining an artifact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkillDraft {
    pub body: SkillBody,
    pub scripts: Vec<ScriptFile>,
    pub references: Vec<ReferenceDoc>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArtifactError {
    #[error("script {script} declares function {function}, which lacks the skill_ prefix")]
    ScriptNamingViolation { script: String, function: String },
    #[error("duplicate script name {name}")]
    DuplicateScript { name: String },
    #[error("duplicate reference name {name}")]
    DuplicateReference { name: String },
    #[error("invalid name {name:?}: {reason}")]
    InvalidName { name: String, reason: &'static str },
    #[error("metadata key {key:?} invalid: {reason}")]
    InvalidMetadata { key: String, reason: &'static str },
    #[error("{field} must be a single line")]
    MultilineField { field: &'static str },
    #[error("body section {section} contains the reserved header line {header:?}")]
    ReservedHeaderLine { section: &'static str, header: String },
    #[error("body section {section} ends with a newline, which the bundle format cannot represent")]
    TrailingNewline { section: &'static str },
    #[error("body is {len} characters, over the {cap}-character cap")]
    BodyTooLong { len: usize, cap: usize },
    #[error("status was already set to {current}; the gate stamps a skill exactly once")]
    StatusAlreadySet { current: String },
    #[error("refinement after round 1 attempted to change the {what} interface")]
    ToolInterfaceChanged { what: &'static str },
    #[error("{what} list is not in canonical name order")]
    UnsortedTools { what: &'static str },
}

/// The complete, auditable skill artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillArtifact {
    pub name: String,
    pub body: SkillBody,
    pub metadata: BTreeMap<String, String>,
    pub scripts: Vec<ScriptFile>,
    pub references: Vec<ReferenceDoc>,
    pub status: SkillStatus,
    /// Refinement round that produced this artifact (1-based).
    pub round: u32,
    /// Content hash of the diagnostic summary this skill was generated from.
    pub provenance: String,
}

/// Checks a name against the artifact naming rules without building an
/// artifact (configuration validation happens long before generation).
pub fn validate_name(name: &str) -> Result<(), ArtifactError> {
    check_name(name)
}

/// Checks a metadata map against the artifact metadata rules without
/// building an artifact.
pub fn validate_metadata(metadata: &BTreeMap<String, String>) -> Result<(), ArtifactError> {
    check_metadata(metadata)
}

/// Names double as file names inside the bundle, so they are restricted to
/// key-safe characters — never interpreted as paths.
fn check_name(name: &str) -> Result<(), ArtifactError> {
    let err = |reason| ArtifactError::InvalidName {
        name: name.to_string(),
        reason,
    };
    if name.is_empty() {
        return Err(err("empty"));
    }
    if name.starts_with('.') {
        return Err(err("leading dot"));
    }
    if name.contains("..") {
        return Err(err("path traversal"));
    }
    if !name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
    {
        return Err(err("allowed characters are [A-Za-z0-9._-]"));
    }
    Ok(())
}

fn check_metadata(metadata: &BTreeMap<String, String>) -> Result<(), ArtifactError> {
    for (key, value) in metadata {
        if key.is_empty()
            || !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
        {
            return Err(ArtifactError::InvalidMetadata {
                key: key.clone(),
                reason: "keys are nonempty [A-Za-z0-9._-]",
            });
        }
        if value.contains('\n') {
            return Err(ArtifactError::InvalidMetadata {
                key: key.clone(),
                reason: "values are single-line",
            });
        }
    }
    Ok(())
}

fn check_scripts(scripts: &[ScriptFile]) -> Result<(), ArtifactError> {
    for window in scripts.windows(2) {
        if window[0].name == window[1].name {
            return Err(ArtifactError::DuplicateScript {
                name: window[0].name.clone(),
            });
        }
    }
    for script in scripts {
        check_name(&script.name)?;
        for function in &script.declared_functions {
            if !function.starts_with("skill_") {
                return Err(ArtifactError::ScriptNamingViolation {
                    script: script.name.clone(),
                    function: function.clone(),
                });
            }
            if function.contains('\n') || function.contains(',') {
                return Err(ArtifactError::MultilineField {
                    field: "declared function name",
                });
            }
        }
    }
    Ok(())
}

fn check_references(references: &[ReferenceDoc]) -> Result<(), ArtifactError> {
    for window in references.windows(2) {
        if window[0].name == window[1].name {
            return Err(ArtifactError::DuplicateReference {
                name: window[0].name.clone(),
            });
        }
    }
    for reference in references {
        check_name(&reference.name)?;
    }
    Ok(())
}

fn single_line(field: &'static str, value: &str) -> Result<(), ArtifactError> {
    if value.contains('\n') {
        return Err(ArtifactError::MultilineField { field });
    }
    Ok(())
}

impl SkillArtifact {
    /// Builds a validated candidate artifact. Scripts and references are
    /// canonically ordered by name so equality and hashing are stable.
    pub fn new(
        name: impl Into<String>,
        draft: SkillDraft,
        metadata: BTreeMap<String, String>,
        round: u32,
        provenance: impl Into<String>,
    ) -> Result<Self, ArtifactError> {
        let name = name.into();
        let provenance = provenance.into();
        check_name(&name)?;
        single_line("provenance", &provenance)?;
        check_metadata(&metadata)?;
        draft.body.check_serializable()?;
        let SkillDraft {
            body,
            mut scripts,
            mut references,
        } = draft;
        scripts.sort_by(|a, b| a.name.cmp(&b.name));
        references.sort_by(|a, b| a.name.cmp(&b.name));
        check_scripts(&scripts)?;
        check_references(&references)?;
        Ok(Self {
            name,
            body,
            metadata,
            scripts,
            references,
            status: SkillStatus::Candidate,
            round,
            provenance,
        })
    }

    /// Re-checks every artifact invariant, including canonical name order of
    /// scripts and references. Used on values that bypassed [`Self::new`],
    /// such as parsed bundles.
    pub fn validate(&self) -> Result<(), ArtifactError> {
        check_name(&self.name)?;
        single_line("provenance", &self.provenance)?;
        check_metadata(&self.metadata)?;
        self.body.check_serializable()?;
        check_scripts(&self.scripts)?;
        check_references(&self.references)?;
        if self.scripts.windows(2).any(|w| w[0].name > w[1].name) {
            return Err(ArtifactError::UnsortedTools { what: "script" });
        }
        if self.references.windows(2).any(|w| w[0].name > w[1].name) {
            return Err(ArtifactError::UnsortedTools { what: "reference" });
        }
        Ok(())
    }

    /// Stamps the gate decision. Only candidates can be stamped, and only
    /// once.
    pub fn with_status(mut self, status: SkillStatus) -> Result<Self, ArtifactError> {
        if self.status != SkillStatus::Candidate {
            return Err(ArtifactError::StatusAlreadySet {
                current: self.status.as_str().to_string(),
            });
        }
        self.status = status;
        Ok(self)
    }

    /// Content hash of the script set (names, declared functions, bytes).
    pub fn scripts_hash(&self) -> String {
        let json = serde_json::to_string(&self.scripts).expect("scripts serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Content hash of the reference set (names, bytes).
    pub fn references_hash(&self) -> String {
        let json = serde_json::to_string(&self.references).expect("references serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn reference(&self, name: &str) -> Option<&ReferenceDoc> {
        self.references.iter().find(|r| r.name == name)
    }

    /// All advertised tool function names: every declared script function.
    pub fn script_functions(&self) -> Vec<&str> {
        self.scripts
            .iter()
            .flat_map(|s| s.declared_functions.iter().map(String::as_str))
            .collect()
    }
}

/// Builds the round-`round` artifact from a refinement draft while keeping
/// the tool interface frozen: the returned artifact carries `prev`'s scripts
/// and references, and any attempt by the draft to alter them is an error.
///
/// A draft with empty script/reference lists proposes no change (refinement
/// responses normally carry the body only). Re-emitting a set identical by
/// content hash is also accepted as no change.
pub fn restrict_refinement_edit(
    prev: &SkillArtifact,
    draft: SkillDraft,
    round: u32,
) -> Result<SkillArtifact, ArtifactError> {
    let proposed = SkillArtifact::new(
        prev.name.clone(),
        draft,
        prev.metadata.clone(),
        round,
        prev.provenance.clone(),
    )?;
    if !proposed.scripts.is_empty() && proposed.scripts_hash() != prev.scripts_hash() {
        return Err(ArtifactError::ToolInterfaceChanged { what: "script" });
    }
    if !proposed.references.is_empty() && proposed.references_hash() != prev.references_hash() {
        return Err(ArtifactError::ToolInterfaceChanged { what: "reference" });
    }
    Ok(SkillArtifact {
        scripts: prev.scripts.clone(),
        references: prev.references.clone(),
        ..proposed
    })
}
