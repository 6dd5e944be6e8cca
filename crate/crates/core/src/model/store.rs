//! Append-only JSONL cache of rollouts, keyed by instance id.
//!
//! One store file exists per (agent, dataset) pair. Records append as they
//! complete, so a crashed run resumes by reopening the store: cached
//! instances are served from disk and cost zero provider calls.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::instance::{OutcomeRecord, Trajectory};

/// One cached rollout: the trajectory plus its evaluated outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub instance_id: String,
    pub trajectory: Trajectory,
    pub outcome: OutcomeRecord,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("store {path} line {line} is not a valid record: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("store already holds a different record for {instance_id}")]
    ConflictingRecord { instance_id: String },
    #[error("record for {instance_id} references {found} in its {field}")]
    InconsistentRecord {
        instance_id: String,
        field: &'static str,
        found: String,
    },
}

/// In-memory index over a JSONL rollout cache file.
#[derive(Debug)]
pub struct TrajectoryStore {
    path: PathBuf,
    records: BTreeMap<String, RolloutRecord>,
}

fn validate(record: &RolloutRecord) -> Result<(), StoreError> {
    if record.trajectory.instance_id != record.instance_id {
        return Err(StoreError::InconsistentRecord {
            instance_id: record.instance_id.clone(),
            field: "trajectory",
            found: record.trajectory.instance_id.clone(),
        });
    }
    if record.outcome.instance_id != record.instance_id {
        return Err(StoreError::InconsistentRecord {
            instance_id: record.instance_id.clone(),
            field: "outcome",
            found: record.outcome.instance_id.clone(),
        });
    }
    Ok(())
}

impl TrajectoryStore {
    /// Opens (or creates) the store at `path`, loading any existing records.
    ///
    /// A truncated final line — the footprint of a crash mid-append — is
    /// dropped with a warning; corruption anywhere else is an error.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let mut records = BTreeMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|source| StoreError::Io {
                path: path.clone(),
                source,
            })?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
            let last = lines.len();
            for (idx, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<RolloutRecord>(&line) {
                    Ok(record) => {
                        validate(&record)?;
                        if let Some(existing) = records.get(&record.instance_id) {
                            if existing != &record {
                                return Err(StoreError::ConflictingRecord {
                                    instance_id: record.instance_id,
                                });
                            }
                        } else {
                            records.insert(record.instance_id.clone(), record);
                        }
                    }
                    Err(source) if idx + 1 == last => {
                        log::warn!(
                            "dropping truncated final record in {} (crash recovery)",
                            path.display()
                        );
                        let _ = source;
                    }
                    Err(source) => {
                        return Err(StoreError::Corrupt {
                            path: path.clone(),
                            line: idx + 1,
                            source,
                        });
                    }
                }
            }
        }
        Ok(Self { path, records })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, instance_id: &str) -> bool {
        self.records.contains_key(instance_id)
    }

    pub fn get(&self, instance_id: &str) -> Option<&RolloutRecord> {
        self.records.get(instance_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in ascending instance-id order.
    pub fn records(&self) -> impl Iterator<Item = &RolloutRecord> {
        self.records.values()
    }

    /// Appends a record. Re-inserting an identical record is a no-op (cache
    /// semantics); inserting a different record under a cached id is an
    /// error, because cached rollouts are never replaced.
    pub fn insert(&mut self, record: RolloutRecord) -> Result<(), StoreError> {
        validate(&record)?;
        if let Some(existing) = self.records.get(&record.instance_id) {
            if existing == &record {
                return Ok(());
            }
            return Err(StoreError::ConflictingRecord {
                instance_id: record.instance_id,
            });
        }
        let line = serde_json::to_string(&record).expect("rollout records serialize");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|source| StoreError::Io {
                path: self.path.clone(),
                source,
            })?;
        writeln!(file, "{line}").map_err(|source| StoreError::Io {
            path: self.path.clone(),
            source,
        })?;
        self.records.insert(record.instance_id.clone(), record);
        Ok(())
    }
}
