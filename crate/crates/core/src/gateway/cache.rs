//! Content-addressed response cache.
//!
//! Entries live at `<root>/v1/<digest[0..2]>/<digest>.json`, where the digest
//! covers the canonical request (model, prompt, decoding, sample index,
//! seed). The `v1` segment versions the digest algorithm. Writes go through a
//! temp file and rename so concurrent writers can only ever race to install
//! identical content. Auth material is never part of an entry.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::GatewayError;

const LAYOUT_VERSION: &str = "v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_canonical: String,
    pub response_text: String,
    pub timestamp: u64,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, digest: &str) -> PathBuf {
        self.root
            .join(LAYOUT_VERSION)
            .join(&digest[..2])
            .join(format!("{digest}.json"))
    }

    pub fn get(&self, digest: &str) -> Result<Option<String>, GatewayError> {
        let path = self.entry_path(digest);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(GatewayError::Cache(format!(
                    "cannot read cache entry {}: {e}",
                    path.display()
                )))
            }
        };
        let entry: CacheEntry = serde_json::from_str(&text).map_err(|e| {
            GatewayError::Cache(format!("corrupt cache entry {}: {e}", path.display()))
        })?;
        Ok(Some(entry.response_text))
    }

    pub fn put(
        &self,
        digest: &str,
        request_canonical: &str,
        response_text: &str,
    ) -> Result<(), GatewayError> {
        let path = self.entry_path(digest);
        let dir = path.parent().expect("entry path has a parent");
        fs::create_dir_all(dir).map_err(|e| {
            GatewayError::Cache(format!("cannot create cache dir {}: {e}", dir.display()))
        })?;
        let entry = CacheEntry {
            request_canonical: request_canonical.to_string(),
            response_text: response_text.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let body = serde_json::to_string(&entry)
            .map_err(|e| GatewayError::Cache(format!("cache serialization: {e}")))?;
        let tmp = dir.join(format!(".{digest}.tmp.{}", std::process::id()));
        fs::write(&tmp, body).map_err(|e| {
            GatewayError::Cache(format!("cannot write cache temp {}: {e}", tmp.display()))
        })?;
        fs::rename(&tmp, &path).map_err(|e| {
            GatewayError::Cache(format!("cannot commit cache entry {}: {e}", path.display()))
        })?;
        Ok(())
    }
}
