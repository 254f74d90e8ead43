// SPDX-License-Identifier: Apache-2.0

//! Content digests used for dirty tracking and stash integrity.
//!
//! Every digest is SHA-256 rendered as lowercase hex. Variable-length fields
//! are length-prefixed so that no two distinct field sequences share a
//! preimage.

use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};
use walkdir::WalkDir;

/// Name of the digest algorithm, recorded in build metadata.
pub const ALGORITHM: &str = "sha256";

/// Incremental framed hasher.
#[derive(Clone, Default)]
pub struct FramedHasher {
    inner: Sha256,
}

impl FramedHasher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append one length-prefixed field.
    pub fn field(&mut self, bytes: impl AsRef<[u8]>) -> &mut Self {
        let bytes = bytes.as_ref();
        self.inner.update((bytes.len() as u64).to_le_bytes());
        self.inner.update(bytes);
        self
    }

    pub fn finish(self) -> String {
        hex::encode(self.inner.finalize())
    }
}

pub fn hash_bytes(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// Digest of a file, or of a directory tree (relative paths and file bytes in
/// sorted order). Symlinks are followed.
pub fn hash_path(path: &Path) -> io::Result<String> {
    let meta = fs::metadata(path)?;
    if meta.is_file() {
        return Ok(hash_bytes(fs::read(path)?));
    }
    let mut hasher = FramedHasher::new();
    hasher.field(b"tree");
    for entry in WalkDir::new(path).follow_links(true).sort_by_file_name() {
        let entry = entry.map_err(io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(path).unwrap_or(entry.path());
        hasher.field(rel.to_string_lossy().as_bytes());
        hasher.field(fs::read(entry.path())?);
    }
    Ok(hasher.finish())
}
