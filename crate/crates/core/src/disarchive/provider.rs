//! Where referenced content comes from during assembly.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{ContentRef, DirectoryRef};
use crate::nar::{nar_hash, tree_from_disk, NarDigest, NarNode, TreeOptions};

/// Supplies the content a description refers to. Results are verified by
/// the caller, so a provider may return its best guess.
pub trait ContentProvider: Send + Sync {
    fn directory(&self, r: &DirectoryRef) -> Result<NarNode, String>;
    fn content(&self, r: &ContentRef) -> Result<Vec<u8>, String>;
}

/// Content on the local filesystem. For a directory reference, `path` may be
/// the unpacked directory itself or its parent; for a content reference, the
/// file itself or the directory holding it.
#[derive(Debug, Clone)]
pub struct LocalContent {
    path: PathBuf,
}

impl LocalContent {
    pub fn new(path: impl Into<PathBuf>) -> LocalContent {
        LocalContent { path: path.into() }
    }

    fn candidates(&self, name: &[u8]) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if !name.is_empty() {
            if let Ok(n) = std::str::from_utf8(name) {
                out.push(self.path.join(n));
            }
        }
        out.push(self.path.clone());
        out
    }
}

fn read_tree(path: &Path) -> Result<NarNode, String> {
    let tree = tree_from_disk(path, &TreeOptions::default()).map_err(|e| e.to_string())?;
    match tree {
        NarNode::Directory(_) => Ok(tree),
        _ => Err(format!("{} is not a directory", path.display())),
    }
}

impl ContentProvider for LocalContent {
    fn directory(&self, r: &DirectoryRef) -> Result<NarNode, String> {
        let mut first = None;
        for path in self.candidates(&r.name).into_iter().filter(|p| p.is_dir()) {
            let tree = read_tree(&path)?;
            if nar_hash(&tree) == r.digest {
                return Ok(tree);
            }
            first.get_or_insert(tree);
        }
        first.ok_or_else(|| format!("no directory at {}", self.path.display()))
    }

    fn content(&self, r: &ContentRef) -> Result<Vec<u8>, String> {
        let path = self
            .candidates(&r.name)
            .into_iter()
            .find(|p| p.is_file())
            .ok_or_else(|| format!("no file at {}", self.path.display()))?;
        std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Content held in memory, keyed by digest.
#[derive(Debug, Clone, Default)]
pub struct MemoryContent {
    trees: HashMap<NarDigest, NarNode>,
    blobs: HashMap<[u8; 32], Vec<u8>>,
}

impl MemoryContent {
    pub fn add_tree(&mut self, tree: NarNode) {
        self.trees.insert(nar_hash(&tree), tree);
    }

    /// Stores `tree` under a digest that need not be its own.
    pub fn add_tree_as(&mut self, digest: NarDigest, tree: NarNode) {
        self.trees.insert(digest, tree);
    }

    pub fn add_blob(&mut self, data: Vec<u8>) {
        self.blobs.insert(Sha256::digest(&data).into(), data);
    }
}

impl ContentProvider for MemoryContent {
    fn directory(&self, r: &DirectoryRef) -> Result<NarNode, String> {
        self.trees.get(&r.digest).cloned().ok_or_else(|| format!("no tree with nar hash {}", r.digest.to_hex()))
    }

    fn content(&self, r: &ContentRef) -> Result<Vec<u8>, String> {
        self.blobs.get(&r.digest_sha256).cloned().ok_or_else(|| format!("no blob with sha256 {}", hex::encode(r.digest_sha256)))
    }
}
