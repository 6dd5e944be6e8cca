//! On-disk skill bundle: SKILL.md with front matter and the three body
//! sections, plus scripts/ and references/ directories.
//!
//! The format is byte-stable — serializing the same artifact twice yields
//! identical files, and parse is the exact inverse of serialize. That works
//! because front matter values are single-line, body sections may not contain
//! the reserved header lines, and scripts/references are kept in canonical
//! name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::skill::{
    ArtifactError, ReferenceDoc, ScriptFile, SkillArtifact, SkillBody, SkillStatus, HEADER_CTX,
    HEADER_FAIL, HEADER_SUCC,
};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no SKILL.md in {dir}")]
    MissingSkillMd { dir: PathBuf },
    #[error("malformed front matter: {reason}")]
    MalformedFrontMatter { reason: String },
    #[error("SKILL.md is missing the {header:?} section")]
    MissingSection { header: String },
    #[error("malformed SKILL.md body: {reason}")]
    MalformedBody { reason: String },
    #[error("script {name} is declared but has no file under scripts/")]
    MissingScriptFile { name: String },
    #[error("scripts/{name} exists but is not declared in the front matter")]
    UndeclaredScriptFile { name: String },
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn front_matter_line(key: &str, value: &str) -> String {
    if value.is_empty() {
        format!("{key}:\n")
    } else {
        format!("{key}: {value}\n")
    }
}

fn render_skill_md(artifact: &SkillArtifact) -> String {
    let mut text = String::from("---\n");
    text.push_str(&front_matter_line("name", &artifact.name));
    text.push_str(&front_matter_line("round", &artifact.round.to_string()));
    text.push_str(&front_matter_line("status", artifact.status.as_str()));
    text.push_str(&front_matter_line("provenance", &artifact.provenance));
    for (key, value) in &artifact.metadata {
        text.push_str(&front_matter_line(&format!("meta.{key}"), value));
    }
    for script in &artifact.scripts {
        text.push_str(&front_matter_line(
            &format!("script.{}", script.name),
            &script.declared_functions.join(","),
        ));
    }
    text.push_str("---\n");
    text.push_str(&format!(
        "\n{HEADER_CTX}\n{}\n\n{HEADER_SUCC}\n{}\n\n{HEADER_FAIL}\n{}\n",
        artifact.body.ctx, artifact.body.succ, artifact.body.fail
    ));
    text
}

/// Writes the bundle directory for `artifact`, replacing any previous bundle
/// content at `dir`. Bundles without scripts or references contain only
/// SKILL.md.
pub fn serialize_skill(artifact: &SkillArtifact, dir: &Path) -> Result<(), BundleError> {
    artifact.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for sub in ["scripts", "references"] {
        let sub_dir = dir.join(sub);
        if sub_dir.exists() {
            fs::remove_dir_all(&sub_dir).map_err(io_err(&sub_dir))?;
        }
    }
    let md_path = dir.join("SKILL.md");
    fs::write(&md_path, render_skill_md(artifact)).map_err(io_err(&md_path))?;
    if !artifact.scripts.is_empty() {
        let scripts_dir = dir.join("scripts");
        fs::create_dir(&scripts_dir).map_err(io_err(&scripts_dir))?;
        for script in &artifact.scripts {
            let path = scripts_dir.join(&script.name);
            fs::write(&path, &script.content).map_err(io_err(&path))?;
        }
    }
    if !artifact.references.is_empty() {
        let refs_dir = dir.join("references");
        fs::create_dir(&refs_dir).map_err(io_err(&refs_dir))?;
        for reference in &artifact.references {
            let path = refs_dir.join(&reference.name);
            fs::write(&path, &reference.content).map_err(io_err(&path))?;
        }
    }
    Ok(())
}

struct FrontMatter {
    name: String,
    round: u32,
    status: SkillStatus,
    provenance: String,
    metadata: BTreeMap<String, String>,
    script_functions: Vec<(String, Vec<String>)>,
}

fn malformed(reason: impl Into<String>) -> BundleError {
    BundleError::MalformedFrontMatter {
        reason: reason.into(),
    }
}

fn parse_front_matter(block: &str) -> Result<FrontMatter, BundleError> {
    let mut name = None;
    let mut round = None;
    let mut status = None;
    let mut provenance = None;
    let mut metadata = BTreeMap::new();
    let mut script_functions: Vec<(String, Vec<String>)> = Vec::new();

    for line in block.lines() {
        let colon = line
            .find(':')
            .ok_or_else(|| malformed(format!("line without key: {line:?}")))?;
        let key = &line[..colon];
        let rest = &line[colon + 1..];
        let value = if rest.is_empty() {
            ""
        } else {
            rest.strip_prefix(' ')
                .ok_or_else(|| malformed(format!("no space after colon in {line:?}")))?
        };
        let set = |slot: &mut Option<String>| {
            if slot.is_some() {
                return Err(malformed(format!("duplicate key {key}")));
            }
            *slot = Some(value.to_string());
            Ok(())
        };
        if key == "name" {
            set(&mut name)?;
        } else if key == "round" {
            set(&mut round)?;
        } else if key == "status" {
            set(&mut status)?;
        } else if key == "provenance" {
            set(&mut provenance)?;
        } else if let Some(meta_key) = key.strip_prefix("meta.") {
            if metadata
                .insert(meta_key.to_string(), value.to_string())
                .is_some()
            {
                return Err(malformed(format!("duplicate key {key}")));
            }
        } else if let Some(script_name) = key.strip_prefix("script.") {
            if script_functions.iter().any(|(n, _)| n == script_name) {
                return Err(malformed(format!("duplicate key {key}")));
            }
            let functions = if value.is_empty() {
                vec![]
            } else {
                value.split(',').map(str::to_string).collect()
            };
            script_functions.push((script_name.to_string(), functions));
        } else {
            return Err(malformed(format!("unknown key {key}")));
        }
    }

    let name = name.ok_or_else(|| malformed("missing name"))?;
    let round = round
        .ok_or_else(|| malformed("missing round"))?
        .parse::<u32>()
        .map_err(|e| malformed(format!("round is not an integer: {e}")))?;
    let status_text = status.ok_or_else(|| malformed("missing status"))?;
    let status = SkillStatus::parse(&status_text)
        .ok_or_else(|| malformed(format!("unknown status {status_text:?}")))?;
    let provenance = provenance.ok_or_else(|| malformed("missing provenance"))?;

    Ok(FrontMatter {
        name,
        round,
        status,
        provenance,
        metadata,
        script_functions,
    })
}

fn parse_body(body_part: &str) -> Result<SkillBody, BundleError> {
    let after_ctx = body_part
        .strip_prefix(&format!("\n{HEADER_CTX}\n"))
        .ok_or_else(|| BundleError::MissingSection {
            header: HEADER_CTX.to_string(),
        })?;
    let succ_sep = format!("\n\n{HEADER_SUCC}\n");
    let succ_at = after_ctx
        .find(&succ_sep)
        .ok_or_else(|| BundleError::MissingSection {
            header: HEADER_SUCC.to_string(),
        })?;
    let ctx = &after_ctx[..succ_at];
    let after_succ = &after_ctx[succ_at + succ_sep.len()..];
    let fail_sep = format!("\n\n{HEADER_FAIL}\n");
    let fail_at = after_succ
        .find(&fail_sep)
        .ok_or_else(|| BundleError::MissingSection {
            header: HEADER_FAIL.to_string(),
        })?;
    let succ = &after_succ[..fail_at];
    let fail = after_succ[fail_at + fail_sep.len()..]
        .strip_suffix('\n')
        .ok_or_else(|| BundleError::MalformedBody {
            reason: "missing trailing newline".into(),
        })?;
    Ok(SkillBody {
        ctx: ctx.to_string(),
        succ: succ.to_string(),
        fail: fail.to_string(),
    })
}

fn read_named_files(dir: &Path) -> Result<Vec<(String, String)>, BundleError> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    for entry in entries {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        let content = fs::read_to_string(&path).map_err(io_err(&path))?;
        out.push((name, content));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Reads a bundle directory back into a validated artifact. Exact inverse of
/// [`serialize_skill`] on its image.
pub fn parse_skill(dir: &Path) -> Result<SkillArtifact, BundleError> {
    let md_path = dir.join("SKILL.md");
    let text = match fs::read_to_string(&md_path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(BundleError::MissingSkillMd {
                dir: dir.to_path_buf(),
            })
        }
        Err(source) => {
            return Err(BundleError::Io {
                path: md_path,
                source,
            })
        }
    };

    let after_open = text
        .strip_prefix("---\n")
        .ok_or_else(|| malformed("missing opening delimiter"))?;
    let close_at = after_open
        .find("\n---\n")
        .ok_or_else(|| malformed("missing closing delimiter"))?;
    let front = parse_front_matter(&after_open[..close_at])?;
    let body = parse_body(&after_open[close_at + "\n---\n".len()..])?;

    let script_files = read_named_files(&dir.join("scripts"))?;
    for (declared, _) in &front.script_functions {
        if !script_files.iter().any(|(name, _)| name == declared) {
            return Err(BundleError::MissingScriptFile {
                name: declared.clone(),
            });
        }
    }
    let mut scripts = Vec::new();
    for (name, content) in script_files {
        let declared_functions = front
            .script_functions
            .iter()
            .find(|(declared, _)| declared == &name)
            .map(|(_, functions)| functions.clone())
            .ok_or(BundleError::UndeclaredScriptFile { name: name.clone() })?;
        scripts.push(ScriptFile {
            name,
            declared_functions,
            content,
        });
    }

    let references = read_named_files(&dir.join("references"))?
        .into_iter()
        .map(|(name, content)| ReferenceDoc { name, content })
        .collect();

    let artifact = SkillArtifact {
        name: front.name,
        body,
        metadata: front.metadata,
        scripts,
        references,
        status: front.status,
        round: front.round,
        provenance: front.provenance,
    };
    artifact.validate()?;
    Ok(artifact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact::skill::SkillDraft;
    use proptest::prelude::*;

    fn artifact_with(scripts: Vec<ScriptFile>, references: Vec<ReferenceDoc>) -> SkillArtifact {
        SkillArtifact::new(
            "unit-skill",
            SkillDraft {
                body: SkillBody {
                    ctx: "Convert units carefully.".into(),
                    succ: "State units.\n\nCheck twice.".into(),
                    fail: "".into(),
                },
                scripts,
                references,
            },
            BTreeMap::from([
                ("benchmark".into(), "unit-mix".into()),
                ("note".into(), "".into()),
            ]),
            2,
            "deadbeef",
        )
        .unwrap()
    }

    fn full_artifact() -> SkillArtifact {
        artifact_with(
            vec![ScriptFile {
                name: "convert.py".into(),
                declared_functions: vec!["skill_convert".into(), "skill_round".into()],
                content: "def skill_convert():\n    pass\n".into(),
            }],
            vec![ReferenceDoc {
                name: "units.md".into(),
                content: "1 mile = 1.609 km\n".into(),
            }],
        )
    }

    fn bundle_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(current) = stack.pop() {
            for entry in fs::read_dir(&current).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                    files.push((rel, fs::read(&path).unwrap()));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn minimal_bundle_contains_only_skill_md() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = artifact_with(vec![], vec![]);
        serialize_skill(&artifact, dir.path()).unwrap();
        let entries: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(entries, vec!["SKILL.md"]);
    }

    #[test]
    fn round_trip_is_value_identical() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = full_artifact();
        serialize_skill(&artifact, dir.path()).unwrap();
        let parsed = parse_skill(dir.path()).unwrap();
        assert_eq!(parsed, artifact);
    }

    #[test]
    fn double_serialize_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let artifact = full_artifact();
        serialize_skill(&artifact, dir_a.path()).unwrap();
        let parsed = parse_skill(dir_a.path()).unwrap();
        serialize_skill(&parsed, dir_b.path()).unwrap();
        assert_eq!(bundle_bytes(dir_a.path()), bundle_bytes(dir_b.path()));
    }

    #[test]
    fn reference_bytes_are_stored_exactly() {
        let dir = tempfile::tempdir().unwrap();
        serialize_skill(&full_artifact(), dir.path()).unwrap();
        let content = fs::read_to_string(dir.path().join("references/units.md")).unwrap();
        assert_eq!(content, "1 mile = 1.609 km\n");
    }

    #[test]
    fn missing_failure_section_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        serialize_skill(&artifact_with(vec![], vec![]), dir.path()).unwrap();
        let md = dir.path().join("SKILL.md");
        let text = fs::read_to_string(&md).unwrap();
        fs::write(&md, text.replace("## Failure Lessons", "## Lessons")).unwrap();
        let err = parse_skill(dir.path()).unwrap_err();
        assert!(
            matches!(err, BundleError::MissingSection { ref header } if header == HEADER_FAIL)
        );
    }

    #[test]
    fn missing_front_matter_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("SKILL.md"), "## Task Context\nx\n").unwrap();
        let err = parse_skill(dir.path()).unwrap_err();
        assert!(matches!(err, BundleError::MalformedFrontMatter { .. }));
    }

    #[test]
    fn unknown_front_matter_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        serialize_skill(&artifact_with(vec![], vec![]), dir.path()).unwrap();
        let md = dir.path().join("SKILL.md");
        let text = fs::read_to_string(&md).unwrap();
        fs::write(&md, text.replace("name:", "surprise: x\nname:")).unwrap();
        let err = parse_skill(dir.path()).unwrap_err();
        assert!(matches!(err, BundleError::MalformedFrontMatter { .. }));
    }

    #[test]
    fn missing_bundle_directory_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let err = parse_skill(&dir.path().join("absent")).unwrap_err();
        assert!(matches!(err, BundleError::MissingSkillMd { .. }));
    }

    #[test]
    fn deprecated_status_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let artifact = artifact_with(vec![], vec![])
            .with_status(SkillStatus::Deprecated)
            .unwrap();
        serialize_skill(&artifact, dir.path()).unwrap();
        assert_eq!(parse_skill(dir.path()).unwrap().status, SkillStatus::Deprecated);
    }

    #[test]
    fn stray_script_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        serialize_skill(&full_artifact(), dir.path()).unwrap();
        fs::write(dir.path().join("scripts/extra.py"), "x").unwrap();
        let err = parse_skill(dir.path()).unwrap_err();
        assert!(matches!(err, BundleError::UndeclaredScriptFile { .. }));
    }

    #[test]
    fn missing_script_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        serialize_skill(&full_artifact(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("scripts/convert.py")).unwrap();
        let err = parse_skill(dir.path()).unwrap_err();
        assert!(matches!(err, BundleError::MissingScriptFile { .. }));
    }

    #[test]
    fn reserialization_replaces_stale_bundle_content() {
        let dir = tempfile::tempdir().unwrap();
        serialize_skill(&full_artifact(), dir.path()).unwrap();
        serialize_skill(&artifact_with(vec![], vec![]), dir.path()).unwrap();
        assert!(!dir.path().join("scripts").exists());
        assert!(!dir.path().join("references").exists());
    }

    fn section_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec("[a-zA-Z0-9 .,#-]{0,30}", 0..5).prop_map(|lines| {
            lines
                .into_iter()
                .filter(|l| l != HEADER_CTX && l != HEADER_SUCC && l != HEADER_FAIL)
                .collect::<Vec<_>>()
                .join("\n")
                .trim_end_matches('\n')
                .to_string()
        })
    }

    fn artifact_strategy() -> impl Strategy<Value = SkillArtifact> {
        let body = (section_strategy(), section_strategy(), section_strategy()).prop_map(
            |(ctx, succ, fail)| SkillBody { ctx, succ, fail },
        );
        let metadata = proptest::collection::btree_map("[a-z]{1,6}", "[a-zA-Z0-9 ]{0,12}", 0..3);
        let scripts = proptest::collection::btree_map(
            "[a-z]{1,6}\\.py",
            (
                proptest::collection::vec("skill_[a-z]{1,6}", 0..3),
                "[ -~\n]{0,40}",
            ),
            0..3,
        )
        .prop_map(|m| {
            m.into_iter()
                .map(|(name, (declared_functions, content))| ScriptFile {
                    name,
                    declared_functions,
                    content,
                })
                .collect::<Vec<_>>()
        });
        let references =
            proptest::collection::btree_map("[a-z]{1,6}\\.md", "[ -~\n]{0,40}", 0..3).prop_map(
                |m| {
                    m.into_iter()
                        .map(|(name, content)| ReferenceDoc { name, content })
                        .collect::<Vec<_>>()
                },
            );
        (
            "[a-z][a-z0-9-]{0,10}",
            body,
            metadata,
            scripts,
            references,
            1u32..9,
            "[0-9a-f]{8}",
            prop_oneof![
                Just(SkillStatus::Candidate),
                Just(SkillStatus::Active),
                Just(SkillStatus::Deprecated)
            ],
        )
            .prop_map(
                |(name, body, metadata, scripts, references, round, provenance, status)| {
                    let mut artifact = SkillArtifact::new(
                        name,
                        SkillDraft {
                            body,
                            scripts,
                            references,
                        },
                        metadata,
                        round,
                        provenance,
                    )
                    .unwrap();
                    artifact.status = status;
                    artifact
                },
            )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_artifacts_round_trip(artifact in artifact_strategy()) {
            let dir_a = tempfile::tempdir().unwrap();
            let dir_b = tempfile::tempdir().unwrap();
            serialize_skill(&artifact, dir_a.path()).unwrap();
            let parsed = parse_skill(dir_a.path()).unwrap();
            prop_assert_eq!(&parsed, &artifact);
            serialize_skill(&parsed, dir_b.path()).unwrap();
            prop_assert_eq!(bundle_bytes(dir_a.path()), bundle_bytes(dir_b.path()));
        }
    }
}
