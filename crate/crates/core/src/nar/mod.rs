//! Normalized archives: a canonical serialization of a file tree that keeps
//! names, contents, symlink targets, and a single executable bit, and drops
//! timestamps, ownership, and every other permission bit. The SHA-256 of that
//! stream is the digest package definitions declare for VCS checkouts.

pub mod base32;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use base64::Engine as _;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// A file-system tree with exactly the information a nar retains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NarNode {
    Regular { executable: bool, contents: Vec<u8> },
    Directory(BTreeMap<Vec<u8>, NarNode>),
    Symlink { target: Vec<u8> },
}

impl NarNode {
    pub fn empty_dir() -> NarNode {
        NarNode::Directory(BTreeMap::new())
    }

    pub fn file(contents: impl Into<Vec<u8>>) -> NarNode {
        NarNode::Regular { executable: false, contents: contents.into() }
    }

    pub fn executable(contents: impl Into<Vec<u8>>) -> NarNode {
        NarNode::Regular { executable: true, contents: contents.into() }
    }

    pub fn symlink(target: impl Into<Vec<u8>>) -> NarNode {
        NarNode::Symlink { target: target.into() }
    }

    pub fn dir<K: Into<Vec<u8>>>(entries: impl IntoIterator<Item = (K, NarNode)>) -> NarNode {
        NarNode::Directory(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn entries(&self) -> Option<&BTreeMap<Vec<u8>, NarNode>> {
        match self {
            NarNode::Directory(e) => Some(e),
            _ => None,
        }
    }

    /// Look up a slash-separated relative path. The empty path is `self`.
    pub fn get(&self, path: &[u8]) -> Option<&NarNode> {
        let mut node = self;
        for comp in path.split(|&b| b == b'/').filter(|c| !c.is_empty()) {
            node = node.entries()?.get(comp)?;
        }
        Some(node)
    }

    /// Insert `node` at `path`, creating intermediate directories. Fails if an
    /// intermediate component exists and is not a directory.
    pub fn insert(&mut self, path: &[u8], node: NarNode) -> Result<(), NarNode> {
        let comps: Vec<&[u8]> = path.split(|&b| b == b'/').filter(|c| !c.is_empty()).collect();
        let Some((last, parents)) = comps.split_last() else {
            *self = node;
            return Ok(());
        };
        let mut cur = self;
        for comp in parents {
            let NarNode::Directory(entries) = cur else { return Err(node) };
            cur = entries.entry(comp.to_vec()).or_insert_with(NarNode::empty_dir);
        }
        let NarNode::Directory(entries) = cur else { return Err(node) };
        entries.insert(last.to_vec(), node);
        Ok(())
    }

    /// Number of nodes in the tree, including `self`.
    pub fn node_count(&self) -> usize {
        match self {
            NarNode::Directory(e) => 1 + e.values().map(NarNode::node_count).sum::<usize>(),
            _ => 1,
        }
    }

    /// Materialize the tree at `dest`, which must not exist yet. Only the
    /// executable bit is applied; nothing else is recorded in a nar.
    pub fn write_to_disk(&self, dest: &Path) -> std::io::Result<()> {
        match self {
            NarNode::Regular { executable, contents } => {
                std::fs::write(dest, contents)?;
                #[cfg(unix)]
                if *executable {
                    use std::os::unix::fs::PermissionsExt;
                    std::fs::set_permissions(dest, std::fs::Permissions::from_mode(0o755))?;
                }
                Ok(())
            }
            NarNode::Directory(entries) => {
                std::fs::create_dir(dest)?;
                for (name, child) in entries {
                    child.write_to_disk(&dest.join(bytes_to_os(name)))?;
                }
                Ok(())
            }
            NarNode::Symlink { target } => {
                #[cfg(unix)]
                {
                    std::os::unix::fs::symlink(bytes_to_os(target), dest)
                }
                #[cfg(not(unix))]
                {
                    let _ = target;
                    Err(std::io::Error::other("symlinks unsupported on this platform"))
                }
            }
        }
    }
}

#[cfg(unix)]
fn bytes_to_os(b: &[u8]) -> std::ffi::OsString {
    use std::os::unix::ffi::OsStrExt;
    std::ffi::OsStr::from_bytes(b).to_os_string()
}

#[cfg(not(unix))]
fn bytes_to_os(b: &[u8]) -> std::ffi::OsString {
    String::from_utf8_lossy(b).into_owned().into()
}

#[cfg(unix)]
fn os_to_bytes(s: &std::ffi::OsStr) -> Vec<u8> {
    use std::os::unix::ffi::OsStrExt;
    s.as_bytes().to_vec()
}

#[cfg(not(unix))]
fn os_to_bytes(s: &std::ffi::OsStr) -> Vec<u8> {
    s.to_string_lossy().into_owned().into_bytes()
}

/// SHA-256 of a nar stream.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NarDigest(pub [u8; 32]);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("not a sha256 digest in hex, base32, or SRI form: {0:?}")]
pub struct DigestParseError(pub String);

impl NarDigest {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn to_base32(&self) -> String {
        base32::encode(&self.0)
    }

    /// `sha256-<base64>` as used in subresource-integrity strings.
    pub fn to_sri(&self) -> String {
        format!("sha256-{}", base64::engine::general_purpose::STANDARD.encode(self.0))
    }

    pub fn from_hex(s: &str) -> Option<NarDigest> {
        let v = hex::decode(s).ok()?;
        Some(NarDigest(v.try_into().ok()?))
    }

    pub fn from_base32(s: &str) -> Option<NarDigest> {
        Some(NarDigest(base32::decode(s, 32)?.try_into().ok()?))
    }

    pub fn from_sri(s: &str) -> Option<NarDigest> {
        let b64 = s.strip_prefix("sha256-")?;
        let v = base64::engine::general_purpose::STANDARD.decode(b64).ok()?;
        Some(NarDigest(v.try_into().ok()?))
    }

    pub fn of_bytes(data: &[u8]) -> NarDigest {
        NarDigest(Sha256::digest(data).into())
    }
}

impl FromStr for NarDigest {
    type Err = DigestParseError;

    /// Accepts 64 hex digits, 52 base32 digits, or an SRI string.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parsed = match s.len() {
            64 => NarDigest::from_hex(s),
            52 => NarDigest::from_base32(s),
            _ => NarDigest::from_sri(s),
        };
        parsed.ok_or_else(|| DigestParseError(s.to_string()))
    }
}

impl fmt::Debug for NarDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NarDigest({})", self.to_hex())
    }
}

impl fmt::Display for NarDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_base32())
    }
}

fn write_str(out: &mut Vec<u8>, s: &[u8]) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s);
    let pad = (8 - s.len() % 8) % 8;
    out.extend(std::iter::repeat_n(0u8, pad));
}

fn serialize_node(node: &NarNode, out: &mut Vec<u8>) {
    write_str(out, b"(");
    match node {
        NarNode::Regular { executable, contents } => {
            write_str(out, b"type");
            write_str(out, b"regular");
            if *executable {
                write_str(out, b"executable");
                write_str(out, b"");
            }
            write_str(out, b"contents");
            write_str(out, contents);
        }
        NarNode::Symlink { target } => {
            write_str(out, b"type");
            write_str(out, b"symlink");
            write_str(out, b"target");
            write_str(out, target);
        }
        NarNode::Directory(entries) => {
            write_str(out, b"type");
            write_str(out, b"directory");
            for (name, child) in entries {
                write_str(out, b"entry");
                write_str(out, b"(");
                write_str(out, b"name");
                write_str(out, name);
                write_str(out, b"node");
                serialize_node(child, out);
                write_str(out, b")");
            }
        }
    }
    write_str(out, b")");
}

pub fn nar_serialize(tree: &NarNode) -> Vec<u8> {
    let mut out = Vec::new();
    write_str(&mut out, b"nix-archive-1");
    serialize_node(tree, &mut out);
    out
}

pub fn nar_hash(tree: &NarNode) -> NarDigest {
    NarDigest::of_bytes(&nar_serialize(tree))
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("cannot read {path}: {source}")]
    UnreadableEntry {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is neither a regular file, a directory, nor a symlink")]
    UnsupportedNodeType(PathBuf),
}

/// Options for [`tree_from_disk`].
#[derive(Debug, Clone, Default)]
pub struct TreeOptions {
    /// Skip `.git`, `.svn`, and `.hg` directories anywhere in the tree.
    pub checkout: bool,
    /// Additional entry names to skip anywhere in the tree.
    pub exclude: Vec<Vec<u8>>,
}

impl TreeOptions {
    pub fn checkout() -> Self {
        TreeOptions { checkout: true, exclude: Vec::new() }
    }

    fn skips(&self, name: &[u8]) -> bool {
        (self.checkout && matches!(name, b".git" | b".svn" | b".hg")) || self.exclude.iter().any(|e| e == name)
    }
}

/// Read a file, directory, or symlink from disk. Hard links become
/// independent regular files.
pub fn tree_from_disk(path: &Path, opts: &TreeOptions) -> Result<NarNode, TreeError> {
    let unreadable = |source| TreeError::UnreadableEntry { path: path.to_path_buf(), source };
    let meta = std::fs::symlink_metadata(path).map_err(unreadable)?;
    let ft = meta.file_type();
    if ft.is_symlink() {
        let target = std::fs::read_link(path).map_err(unreadable)?;
        Ok(NarNode::Symlink { target: os_to_bytes(target.as_os_str()) })
    } else if ft.is_file() {
        let contents = std::fs::read(path).map_err(unreadable)?;
        Ok(NarNode::Regular { executable: is_executable(&meta), contents })
    } else if ft.is_dir() {
        let mut entries = BTreeMap::new();
        for entry in std::fs::read_dir(path).map_err(unreadable)? {
            let entry = entry.map_err(unreadable)?;
            let name = os_to_bytes(&entry.file_name());
            if opts.skips(&name) {
                continue;
            }
            entries.insert(name, tree_from_disk(&entry.path(), opts)?);
        }
        Ok(NarNode::Directory(entries))
    } else {
        Err(TreeError::UnsupportedNodeType(path.to_path_buf()))
    }
}

#[cfg(unix)]
fn is_executable(meta: &std::fs::Metadata) -> bool {
    use std::os::unix::fs::PermissionsExt;
    meta.permissions().mode() & 0o111 != 0
}

#[cfg(not(unix))]
fn is_executable(_meta: &std::fs::Metadata) -> bool {
    false
}
