// SPDX-License-Identifier: Apache-2.0

//! A shared directory of built steps.
//!
//! ```text
//! <root>/<id>/meta.yml
//! <root>/<id>/payload/<output port>...
//! ```
//!
//! Ids are nine random base-36 characters. Entries are staged under
//! `<root>/.tmp-*` and renamed into place, so readers never see a partial
//! entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BuildPlan, BuildState, StepStatus};
use crate::graph::{FlowGraph, GraphError, Prebuilt, StashLookup};
use crate::hash::hash_path;

pub const STASH_ENV: &str = "STASH_PATH";
pub const META_FILE: &str = "meta.yml";
pub const PAYLOAD_DIR: &str = "payload";
const ID_LEN: usize = 9;
const ID_ALPHABET: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";

#[derive(Debug, Error)]
pub enum StashError {
    #[error("no stash given and ${STASH_ENV} is not set")]
    NoStashConfigured,
    #[error("no step named `{0}` in the build plan")]
    NoSuchStep(String),
    #[error("NotBuilt: step `{step}` is {status}, only clean steps can be stashed")]
    NotBuilt { step: String, status: StepStatus },
    #[error("no stash entry `{0}`")]
    UnknownId(String),
    #[error("stash entry `{id}` is corrupt: {reason}")]
    CorruptEntry { id: String, reason: String },
    #[error("stash entry `{id}`: payload for `{port}` does not match its recorded hash")]
    HashMismatch { id: String, port: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StashError + '_ {
    move |e| StashError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StashMeta {
    pub id: String,
    /// Instance name of the step that was pushed.
    pub node: String,
    /// Step content hash at push time.
    pub hash: String,
    pub output_hashes: BTreeMap<String, String>,
    pub author: String,
    /// RFC 3339, nanosecond precision, UTC.
    pub timestamp: String,
    #[serde(default)]
    pub message: String,
}

/// One line of [`Stash::list`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ListedEntry {
    Ok(StashMeta),
    Corrupt { id: String, reason: String },
}

impl ListedEntry {
    pub fn id(&self) -> &str {
        match self {
            ListedEntry::Ok(m) => &m.id,
            ListedEntry::Corrupt { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stash {
    root: PathBuf,
}

impl Stash {
    /// Open (creating if needed) the stash at `root`.
    pub fn open(root: &Path) -> Result<Self, StashError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        let root = fs::canonicalize(root).map_err(io_err(root))?;
        Ok(Stash { root })
    }

    /// `$STASH_PATH`.
    pub fn default_root() -> Result<PathBuf, StashError> {
        std::env::var_os(STASH_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .ok_or(StashError::NoStashConfigured)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn fresh_id(&self) -> String {
        let mut rng = rand::rng();
        loop {
            let id: String = (0..ID_LEN)
                .map(|_| ID_ALPHABET[rng.random_range(0..ID_ALPHABET.len())] as char)
                .collect();
            if !self.root.join(&id).exists() {
                return id;
            }
        }
    }

    /// Copy the outputs of the clean step `step` from the build at
    /// `build_root` into a new entry.
    pub fn push(
        &self,
        plan: &BuildPlan,
        build_root: &Path,
        step: &str,
        author: &str,
        message: &str,
    ) -> Result<StashMeta, StashError> {
        let s = plan.step(step).ok_or_else(|| StashError::NoSuchStep(step.to_string()))?;
        let state = BuildState::load(build_root).map_err(|e| StashError::Io {
            path: build_root.to_path_buf(),
            message: e.to_string(),
        })?;
        let record = state.get(step).filter(|r| r.status == StepStatus::Clean);
        let Some(record) = record else {
            return Err(StashError::NotBuilt {
                step: step.to_string(),
                status: state.status(step),
            });
        };

        let id = self.fresh_id();
        let staging = self.root.join(format!(".tmp-{id}"));
        let payload = staging.join(PAYLOAD_DIR);
        fs::create_dir_all(&payload).map_err(io_err(&payload))?;
        let outputs = build_root.join(&s.dir).join("outputs");
        let mut output_hashes = BTreeMap::new();
        for port in &s.outputs {
            let src = outputs.join(port);
            copy_dereferenced(&src, &payload.join(port)).map_err(io_err(&src))?;
            let h = hash_path(&payload.join(port)).map_err(io_err(&src))?;
            if record.outputs.get(port) != Some(&h) {
                let _ = fs::remove_dir_all(&staging);
                return Err(StashError::NotBuilt {
                    step: step.to_string(),
                    status: StepStatus::Dirty,
                });
            }
            output_hashes.insert(port.clone(), h);
        }
        let meta = StashMeta {
            id: id.clone(),
            node: step.to_string(),
            hash: record.hash.clone().unwrap_or_default(),
            output_hashes,
            author: author.to_string(),
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Nanos, true),
            message: message.to_string(),
        };
        let meta_path = staging.join(META_FILE);
        fs::write(&meta_path, serde_yaml::to_string(&meta).expect("meta serializes")).map_err(io_err(&meta_path))?;
        let dst = self.root.join(&id);
        fs::rename(&staging, &dst).map_err(io_err(&dst))?;
        Ok(meta)
    }

    /// Read an entry's metadata.
    pub fn get(&self, id: &str) -> Result<StashMeta, StashError> {
        let dir = self.root.join(id);
        if id.is_empty() || id.starts_with('.') || id.contains('/') || !dir.is_dir() {
            return Err(StashError::UnknownId(id.to_string()));
        }
        let corrupt = |reason: String| StashError::CorruptEntry {
            id: id.to_string(),
            reason,
        };
        let text = fs::read_to_string(dir.join(META_FILE)).map_err(|e| corrupt(format!("{META_FILE}: {e}")))?;
        let meta: StashMeta = serde_yaml::from_str(&text).map_err(|e| corrupt(format!("{META_FILE}: {e}")))?;
        if meta.id != id {
            return Err(corrupt(format!("{META_FILE} names id `{}`", meta.id)));
        }
        DateTime::parse_from_rfc3339(&meta.timestamp).map_err(|e| corrupt(format!("timestamp: {e}")))?;
        if !dir.join(PAYLOAD_DIR).is_dir() {
            return Err(corrupt("payload directory is missing".into()));
        }
        Ok(meta)
    }

    /// Re-hash an entry's payload against its metadata.
    pub fn verify(&self, id: &str) -> Result<StashMeta, StashError> {
        let meta = self.get(id)?;
        let payload = self.root.join(id).join(PAYLOAD_DIR);
        for (port, want) in &meta.output_hashes {
            let got = hash_path(&payload.join(port)).ok();
            if got.as_ref() != Some(want) {
                return Err(StashError::HashMismatch {
                    id: id.to_string(),
                    port: port.clone(),
                });
            }
        }
        Ok(meta)
    }

    /// Verify entry `id` and make `node` in `g` a pre-built step served
    /// from it.
    pub fn pull(&self, id: &str, g: &mut FlowGraph, node: &str) -> Result<StashMeta, StashError> {
        let meta = self.verify(id)?;
        g.mark_prebuilt(node, id, self)?;
        Ok(meta)
    }

    /// All entries, newest first; corrupt ones last, by id.
    pub fn list(&self) -> Result<Vec<ListedEntry>, StashError> {
        let mut ok = Vec::new();
        let mut bad = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_err(&self.root))? {
            let entry = entry.map_err(io_err(&self.root))?;
            let id = entry.file_name().to_string_lossy().into_owned();
            if id.starts_with('.') || !entry.path().is_dir() {
                continue;
            }
            match self.get(&id) {
                Ok(m) => ok.push(m),
                Err(e) => bad.push(ListedEntry::Corrupt {
                    id,
                    reason: match e {
                        StashError::CorruptEntry { reason, .. } => reason,
                        other => other.to_string(),
                    },
                }),
            }
        }
        let key = |m: &StashMeta| DateTime::parse_from_rfc3339(&m.timestamp).expect("validated by get");
        ok.sort_by(|a, b| key(b).cmp(&key(a)).then_with(|| a.id.cmp(&b.id)));
        bad.sort_by(|a, b| a.id().cmp(b.id()));
        Ok(ok.into_iter().map(ListedEntry::Ok).chain(bad).collect())
    }
}

impl StashLookup for Stash {
    fn lookup(&self, stash_id: &str) -> Option<Prebuilt> {
        let meta = self.get(stash_id).ok()?;
        Some(Prebuilt {
            stash_id: meta.id,
            payload_dir: self.root.join(stash_id).join(PAYLOAD_DIR),
            content_hash: meta.hash,
            output_hashes: meta.output_hashes,
        })
    }
}

fn copy_dereferenced(src: &Path, dst: &Path) -> std::io::Result<()> {
    if src.is_dir() {
        for entry in walkdir::WalkDir::new(src).follow_links(true) {
            let entry = entry.map_err(std::io::Error::other)?;
            let target = dst.join(entry.path().strip_prefix(src).expect("under root"));
            if entry.file_type().is_dir() {
                fs::create_dir_all(&target)?;
            } else {
                fs::copy(entry.path(), &target)?;
            }
        }
        Ok(())
    } else {
        fs::copy(src, dst).map(|_| ())
    }
}
