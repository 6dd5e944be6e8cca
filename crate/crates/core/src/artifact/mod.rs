//! The skill artifact: a three-part prompt body plus metadata, optional
//! scripts, and optional reference documents, with an auditable on-disk
//! bundle format and a status lifecycle driven by the deployment gate.

mod bundle;
mod skill;

pub use bundle::{parse_skill, serialize_skill, BundleError};
pub use skill::{
    restrict_refinement_edit, validate_metadata, validate_name, ArtifactError, ReferenceDoc,
    ScriptFile, SkillArtifact, SkillBody, SkillDraft, SkillStatus, HEADER_CTX, HEADER_FAIL,
    HEADER_SUCC,
};
