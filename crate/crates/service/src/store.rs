//! On-disk job storage: one directory per job, re-indexed at startup.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use leafsev_core::severity::{QuantConfig, SeverityReport};
use leafsev_core::ErrorInfo;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub const RECORD_FILE: &str = "job.json";
pub const REPORT_FILE: &str = "report.json";
pub const ANNOTATED_FILE: &str = "annotated.png";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum JobStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: Uuid,
    pub received_at: DateTime<Utc>,
    /// Stored upload, relative to the data directory.
    pub image_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upload_name: Option<String>,
    /// Hex SHA-256 of the uploaded bytes.
    pub sha256: String,
    pub config: QuantConfig,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SeverityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

/// Job index over a data directory. Reads are concurrent; each commit
/// writes the record file first and then takes the index lock briefly.
#[derive(Debug)]
pub struct JobStore {
    root: PathBuf,
    index: RwLock<HashMap<Uuid, JobRecord>>,
}

impl JobStore {
    /// Opens (creating if needed) `root` and loads every `*/job.json`.
    /// Unreadable records are skipped with a warning.
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut index = HashMap::new();
        for entry in fs::read_dir(&root)? {
            let path = entry?.path().join(RECORD_FILE);
            if !path.is_file() {
                continue;
            }
            match fs::read(&path).map_err(|e| e.to_string()).and_then(|b| {
                serde_json::from_slice::<JobRecord>(&b).map_err(|e| e.to_string())
            }) {
                Ok(rec) => {
                    index.insert(rec.id, rec);
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable job record"),
            }
        }
        tracing::info!(jobs = index.len(), root = %root.display(), "job index loaded");
        Ok(Self {
            root,
            index: RwLock::new(index),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn job_dir(&self, id: Uuid) -> PathBuf {
        self.root.join(id.to_string())
    }

    pub fn get(&self, id: Uuid) -> Option<JobRecord> {
        self.index.read().expect("job index poisoned").get(&id).cloned()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("job index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persists the record (write to a temporary file, then rename) and
    /// publishes it in the index.
    pub fn commit(&self, record: JobRecord) -> io::Result<()> {
        let dir = self.job_dir(record.id);
        fs::create_dir_all(&dir)?;
        let tmp = dir.join(format!("{RECORD_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&record)?)?;
        fs::rename(&tmp, dir.join(RECORD_FILE))?;
        self.index
            .write()
            .expect("job index poisoned")
            .insert(record.id, record);
        Ok(())
    }
}
