//! On-disk store of recorded judge exchanges, keyed by the digest of the
//! canonicalized request. One JSON file per request; replaying an unrecorded
//! request is an error, never a silent fallback.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{JudgeError, JudgeRequest};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub request: Value,
    pub response_text: String,
    /// Parse of `response_text` at record time, kept for auditing. Replay
    /// re-parses the text so there is exactly one parsing path.
    pub parsed_result: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    /// Open an existing store for replay.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, JudgeError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(JudgeError::Config(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self { dir })
    }

    /// Create (or reuse) a store directory for recording.
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, JudgeError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| {
            JudgeError::Config(format!("cannot create fixture dir {}: {e}", dir.display()))
        })?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, digest: &str) -> PathBuf {
        self.dir.join(format!("{digest}.json"))
    }

    pub fn lookup(&self, digest: &str) -> Result<Option<FixtureRecord>, JudgeError> {
        let path = self.path_for(digest);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(JudgeError::Config(format!(
                    "cannot read fixture {}: {e}",
                    path.display()
                )))
            }
        };
        let record: FixtureRecord = serde_json::from_str(&text)
            .map_err(|e| JudgeError::Config(format!("corrupt fixture {}: {e}", path.display())))?;
        Ok(Some(record))
    }

    /// Write a fixture atomically; returns the request digest.
    pub fn record(
        &self,
        request: &JudgeRequest,
        response_text: &str,
        parsed_result: Option<Value>,
    ) -> Result<String, JudgeError> {
        let digest = request.digest();
        let record = FixtureRecord {
            request: request.canonical_value(),
            response_text: response_text.to_string(),
            parsed_result,
        };
        let body = serde_json::to_string_pretty(&record)
            .map_err(|e| JudgeError::Config(format!("fixture serialization: {e}")))?;
        let path = self.path_for(&digest);
        let tmp = self.dir.join(format!(".{digest}.tmp"));
        fs::write(&tmp, body).map_err(|e| {
            JudgeError::Config(format!("cannot write fixture {}: {e}", tmp.display()))
        })?;
        fs::rename(&tmp, &path).map_err(|e| {
            JudgeError::Config(format!("cannot commit fixture {}: {e}", path.display()))
        })?;
        Ok(digest)
    }
}
