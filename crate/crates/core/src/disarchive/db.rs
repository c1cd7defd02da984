//! Description databases keyed by the SHA-256 of the described file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::Description;
use crate::http::{send_following, Request, Transport};

#[derive(Debug, Error)]
pub enum DbError {
    #[error("no description for sha256 {0}")]
    NotFound(String),
    #[error("malformed description for sha256 {digest}: {reason}")]
    MalformedDescription { digest: String, reason: String },
    #[error("description store: {0}")]
    Io(String),
    #[error("description server: {0}")]
    Transport(String),
}

pub trait DescriptionDb: Send + Sync {
    fn lookup(&self, sha256: &[u8; 32]) -> Result<Description, DbError>;
}

fn decode(sha256: &[u8; 32], text: &[u8]) -> Result<Description, DbError> {
    let digest = hex::encode(sha256);
    let desc = Description::from_bytes(text)
        .map_err(|e| DbError::MalformedDescription { digest: digest.clone(), reason: e.to_string() })?;
    if desc.digest_sha256() != *sha256 {
        return Err(DbError::MalformedDescription { digest, reason: "description is for a different file".into() });
    }
    Ok(desc)
}

/// A directory of descriptions laid out as `sha256/ab/cdef….sexp`.
#[derive(Debug, Clone)]
pub struct LocalDb {
    root: PathBuf,
}

impl LocalDb {
    pub fn new(root: impl Into<PathBuf>) -> LocalDb {
        LocalDb { root: root.into() }
    }

    pub fn path_for(&self, sha256: &[u8; 32]) -> PathBuf {
        let h = hex::encode(sha256);
        self.root.join("sha256").join(&h[..2]).join(format!("{}.sexp", &h[2..]))
    }

    pub fn store(&self, desc: &Description) -> Result<PathBuf, DbError> {
        let path = self.path_for(&desc.digest_sha256());
        let io = |e: std::io::Error| DbError::Io(format!("{}: {e}", path.display()));
        std::fs::create_dir_all(path.parent().unwrap()).map_err(io)?;
        std::fs::write(&path, desc.to_bytes()).map_err(io)?;
        Ok(path)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl DescriptionDb for LocalDb {
    fn lookup(&self, sha256: &[u8; 32]) -> Result<Description, DbError> {
        let path = self.path_for(sha256);
        match std::fs::read(&path) {
            Ok(text) => decode(sha256, &text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(DbError::NotFound(hex::encode(sha256))),
            Err(e) => Err(DbError::Io(format!("{}: {e}", path.display()))),
        }
    }
}

/// A description server answering `GET <base>/sha256/<hex>`.
#[derive(Clone)]
pub struct RemoteDb {
    base: String,
    transport: Arc<dyn Transport>,
}

impl RemoteDb {
    pub fn new(base: &str, transport: Arc<dyn Transport>) -> RemoteDb {
        RemoteDb { base: base.trim_end_matches('/').to_string(), transport }
    }
}

impl DescriptionDb for RemoteDb {
    fn lookup(&self, sha256: &[u8; 32]) -> Result<Description, DbError> {
        let url = format!("{}/sha256/{}", self.base, hex::encode(sha256));
        let resp = send_following(&*self.transport, Request::get(&url), 10).map_err(|e| DbError::Transport(e.to_string()))?;
        match resp.status {
            200 => decode(sha256, &resp.body),
            404 | 410 => Err(DbError::NotFound(hex::encode(sha256))),
            s => Err(DbError::Transport(format!("{url} answered {s}"))),
        }
    }
}
