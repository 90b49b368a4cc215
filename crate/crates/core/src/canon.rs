//! Canonical serialization and content digests.
//!
//! Logical requests are hashed over a canonical JSON form: UTF-8, keys in
//! sorted order, no insignificant whitespace. `serde_json`'s default map is
//! ordered by key, so serializing a `Value` built from object maps already
//! yields the canonical byte sequence.

use serde_json::Value;
use sha2::{Digest, Sha256};

/// Canonical compact JSON for a value whose object keys sort deterministically.
pub fn canonical_json(value: &Value) -> String {
    serde_json::to_string(value).expect("JSON value serializes")
}

/// Hex SHA-256 of the canonical form.
pub fn digest(value: &Value) -> String {
    digest_bytes(canonical_json(value).as_bytes())
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut hex = String::with_capacity(out.len() * 2);
    for byte in out {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").expect("writing to string");
    }
    hex
}
