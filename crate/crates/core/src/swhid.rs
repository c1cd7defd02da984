//! Software Heritage persistent identifiers (`swh:1:<type>:<sha1>`).
//!
//! Content and directory identifiers coincide with Git blob and tree object
//! hashes, so they can be computed locally. Git trees cannot hold empty
//! directories, and neither can directory SWHIDs: empty directories are
//! skipped here. A nar hash, by contrast, does cover empty directories, which
//! is one reason a nar digest cannot be turned into a SWHID locally and has to
//! be resolved through the archive's ExtID index instead.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::nar::{tree_from_disk, NarNode, TreeError, TreeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectType {
    Content,
    Directory,
    Revision,
    Release,
    Snapshot,
}

impl ObjectType {
    pub fn tag(self) -> &'static str {
        match self {
            ObjectType::Content => "cnt",
            ObjectType::Directory => "dir",
            ObjectType::Revision => "rev",
            ObjectType::Release => "rel",
            ObjectType::Snapshot => "snp",
        }
    }

    fn from_tag(tag: &str) -> Option<ObjectType> {
        Some(match tag {
            "cnt" => ObjectType::Content,
            "dir" => ObjectType::Directory,
            "rev" => ObjectType::Revision,
            "rel" => ObjectType::Release,
            "snp" => ObjectType::Snapshot,
            _ => return None,
        })
    }
}

/// A core SWHID (no qualifiers). The scheme version is always 1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Swhid {
    pub object_type: ObjectType,
    pub digest: [u8; 20],
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed SWHID {text:?}: {reason}")]
pub struct MalformedSwhid {
    pub text: String,
    pub reason: &'static str,
}

impl Swhid {
    pub const SCHEME_VERSION: u32 = 1;

    pub fn new(object_type: ObjectType, digest: [u8; 20]) -> Swhid {
        Swhid { object_type, digest }
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }
}

impl fmt::Display for Swhid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "swh:{}:{}:{}", Self::SCHEME_VERSION, self.object_type.tag(), self.digest_hex())
    }
}

impl fmt::Debug for Swhid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Swhid({self})")
    }
}

impl FromStr for Swhid {
    type Err = MalformedSwhid;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let bad = |reason| MalformedSwhid { text: text.to_string(), reason };
        if text.contains(';') {
            return Err(bad("qualifiers are not supported"));
        }
        let parts: Vec<&str> = text.split(':').collect();
        let [scheme, version, tag, hexdigest] = parts[..] else {
            return Err(bad("expected four colon-separated fields"));
        };
        if scheme != "swh" {
            return Err(bad("prefix must be \"swh\""));
        }
        if version != "1" {
            return Err(bad("unsupported scheme version"));
        }
        let object_type = ObjectType::from_tag(tag).ok_or_else(|| bad("unknown object type"))?;
        if hexdigest.len() != 40 {
            return Err(bad("digest must be 40 hex digits"));
        }
        if !hexdigest.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(bad("digest must be lowercase hex"));
        }
        let mut digest = [0u8; 20];
        hex::decode_to_slice(hexdigest, &mut digest).map_err(|_| bad("digest must be lowercase hex"))?;
        Ok(Swhid { object_type, digest })
    }
}

impl serde::Serialize for Swhid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Swhid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn parse_swhid(text: &str) -> Result<Swhid, MalformedSwhid> {
    text.parse()
}

pub fn format_swhid(id: &Swhid) -> String {
    id.to_string()
}

fn git_object_hash(kind: &str, body: &[u8]) -> [u8; 20] {
    let mut h = Sha1::new();
    h.update(format!("{kind} {}\0", body.len()).as_bytes());
    h.update(body);
    h.finalize().into()
}

pub fn swhid_for_content(data: &[u8]) -> Swhid {
    Swhid::new(ObjectType::Content, git_object_hash("blob", data))
}

/// Directory SWHID of an in-memory tree. Empty subdirectories are omitted
/// from their parent, as Git does; the root itself may be empty.
pub fn swhid_for_directory(tree: &NarNode) -> Result<Swhid, SwhidError> {
    match tree {
        NarNode::Directory(_) => Ok(Swhid::new(ObjectType::Directory, tree_hash(tree).0)),
        _ => Err(SwhidError::NotADirectory),
    }
}

/// Directory SWHID of an on-disk directory. `.git` and friends are skipped
/// when `opts.checkout` is set.
pub fn swhid_for_path(path: &Path, opts: &TreeOptions) -> Result<Swhid, SwhidError> {
    let tree = tree_from_disk(path, opts)?;
    match tree {
        NarNode::Directory(_) => swhid_for_directory(&tree),
        NarNode::Regular { contents, .. } => Ok(swhid_for_content(&contents)),
        NarNode::Symlink { target } => Ok(swhid_for_content(&target)),
    }
}

#[derive(Debug, Error)]
pub enum SwhidError {
    #[error("expected a directory")]
    NotADirectory,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Returns the tree hash and whether the tree has any entries after empty
/// subdirectories are dropped.
fn tree_hash(node: &NarNode) -> ([u8; 20], bool) {
    let NarNode::Directory(entries) = node else { unreachable!() };
    // (sort key, mode, name, hash)
    let mut rows: Vec<(Vec<u8>, &str, &[u8], [u8; 20])> = Vec::with_capacity(entries.len());
    for (name, child) in entries {
        let (mode, hash, key_suffix) = match child {
            NarNode::Regular { executable, contents } => {
                (if *executable { "100755" } else { "100644" }, git_object_hash("blob", contents), None)
            }
            NarNode::Symlink { target } => ("120000", git_object_hash("blob", target), None),
            NarNode::Directory(_) => {
                let (h, non_empty) = tree_hash(child);
                if !non_empty {
                    continue;
                }
                ("40000", h, Some(b'/'))
            }
        };
        let mut key = name.clone();
        key.extend(key_suffix);
        rows.push((key, mode, name, hash));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut body = Vec::new();
    for (_, mode, name, hash) in &rows {
        body.extend_from_slice(mode.as_bytes());
        body.push(b' ');
        body.extend_from_slice(name);
        body.push(0);
        body.extend_from_slice(hash);
    }
    (git_object_hash("tree", &body), !rows.is_empty())
}
