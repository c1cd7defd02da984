//! Tarball disassembly and assembly.
//!
//! A file is peeled into at most one compression layer, at most one tar
//! layer, and a content reference: a directory (for tarballs) or a single
//! blob (for anything else). The [`Description`] records everything needed
//! to rebuild the original bytes from that content, and every layer carries
//! the SHA-256 of the bytes it reproduces.

mod db;
mod description;
mod provider;

pub use db::{DbError, DescriptionDb, LocalDb, RemoteDb};
pub use provider::{ContentProvider, LocalContent, MemoryContent};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compress::{self, CompressError, CompressionSpec, Format};
use crate::nar::{nar_hash, NarDigest, NarNode};
use crate::swhid::{swhid_for_content, swhid_for_directory, Swhid};
use crate::tar::{self, TarError, TarballSpec};

pub const FORMAT_VERSION: u64 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub root: Layer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    Compressed(Box<CompressedLayer>),
    Tarball(Box<TarballLayer>),
    Content(ContentRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedLayer {
    pub name: Vec<u8>,
    pub digest_sha256: [u8; 32],
    pub spec: CompressionSpec,
    /// A tarball or a content reference.
    pub input: Layer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TarballLayer {
    /// `spec.root` mirrors `input.name`.
    pub spec: TarballSpec,
    pub input: DirectoryRef,
}

/// Points at the directory a tarball unpacks to. When the tarball holds a
/// single top-level directory, `name` is that directory and the referenced
/// tree is its contents; otherwise `name` is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectoryRef {
    pub name: Vec<u8>,
    pub addresses: Vec<Swhid>,
    pub digest: NarDigest,
}

/// Points at a single file, for inputs that are not tarballs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentRef {
    pub name: Vec<u8>,
    pub addresses: Vec<Swhid>,
    pub digest_sha256: [u8; 32],
}

/// What a description refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Contents {
    Tree(NarNode),
    Blob(Vec<u8>),
}

#[derive(Debug, Error)]
pub enum DisarchiveError {
    #[error("layer {layer}: {source}")]
    Compress { layer: usize, source: CompressError },
    #[error("layer {layer}: {source}")]
    Tar { layer: usize, source: TarError },
    #[error("layer {layer}: nested compression is not supported")]
    NestedCompression { layer: usize },
    #[error("content unavailable: {0}")]
    ContentUnavailable(String),
    #[error("content digest mismatch: expected {expected}, got {actual}")]
    ContentDigestMismatch { expected: String, actual: String },
    #[error("layer {layer}: reconstruction produced sha256 {actual}, description says {expected}")]
    ReconstructionMismatch { layer: usize, expected: String, actual: String },
    #[error("malformed description: {0}")]
    MalformedDescription(String),
}

impl Description {
    /// SHA-256 of the file this description rebuilds.
    pub fn digest_sha256(&self) -> [u8; 32] {
        self.root.digest_sha256()
    }

    pub fn name(&self) -> &[u8] {
        match &self.root {
            Layer::Compressed(c) => &c.name,
            Layer::Tarball(t) => &t.spec.name,
            Layer::Content(c) => &c.name,
        }
    }

    pub fn directory_ref(&self) -> Option<&DirectoryRef> {
        match &self.root {
            Layer::Compressed(c) => match &c.input {
                Layer::Tarball(t) => Some(&t.input),
                _ => None,
            },
            Layer::Tarball(t) => Some(&t.input),
            Layer::Content(_) => None,
        }
    }

    pub fn content_ref(&self) -> Option<&ContentRef> {
        match &self.root {
            Layer::Compressed(c) => match &c.input {
                Layer::Content(r) => Some(r),
                _ => None,
            },
            Layer::Content(r) => Some(r),
            Layer::Tarball(_) => None,
        }
    }

    /// The SWHIDs under which the referenced content may be retrieved.
    pub fn addresses(&self) -> &[Swhid] {
        match (self.directory_ref(), self.content_ref()) {
            (Some(d), _) => &d.addresses,
            (_, Some(c)) => &c.addresses,
            _ => &[],
        }
    }
}

impl Layer {
    pub fn digest_sha256(&self) -> [u8; 32] {
        match self {
            Layer::Compressed(c) => c.digest_sha256,
            Layer::Tarball(t) => t.spec.digest_sha256,
            Layer::Content(c) => c.digest_sha256,
        }
    }
}

fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Name of the decompressed file: `x.tar.gz` → `x.tar`, `x.tgz` → `x.tar`.
pub fn inner_name(outer: &[u8]) -> Vec<u8> {
    for (suffix, replacement) in [
        (&b".tgz"[..], &b".tar"[..]),
        (b".taz", b".tar"),
        (b".tbz2", b".tar"),
        (b".tbz", b".tar"),
        (b".tb2", b".tar"),
        (b".txz", b".tar"),
        (b".gz", b""),
        (b".z", b""),
        (b".bz2", b""),
        (b".xz", b""),
    ] {
        if outer.len() > suffix.len() && outer.to_ascii_lowercase().ends_with(suffix) {
            let mut n = outer[..outer.len() - suffix.len()].to_vec();
            n.extend_from_slice(replacement);
            return n;
        }
    }
    let mut n = outer.to_vec();
    n.extend_from_slice(b".out");
    n
}

/// Whether `data` starts like a tar archive: a header block whose checksum
/// verifies, or an end-of-archive block.
fn looks_like_tar(data: &[u8]) -> bool {
    if data.len() < tar::BLOCK {
        return false;
    }
    let block = &data[..tar::BLOCK];
    if block.iter().all(|&b| b == 0) {
        return data.len() >= 2 * tar::BLOCK && data[..2 * tar::BLOCK].iter().all(|&b| b == 0);
    }
    tar::decode_block(block).is_ok()
}

fn describe_payload(data: &[u8], name: &[u8], layer: usize) -> Result<(Layer, Contents), DisarchiveError> {
    if looks_like_tar(data) {
        let (mut spec, tree) = tar::parse_tarball(data).map_err(|source| DisarchiveError::Tar { layer, source })?;
        spec.name = name.to_vec();
        let dref = DirectoryRef {
            name: spec.root.clone(),
            addresses: vec![swhid_for_directory(&tree).expect("tar trees are directories")],
            digest: nar_hash(&tree),
        };
        return Ok((Layer::Tarball(Box::new(TarballLayer { spec, input: dref })), Contents::Tree(tree)));
    }
    let cref = ContentRef { name: name.to_vec(), addresses: vec![swhid_for_content(data)], digest_sha256: sha256(data) };
    Ok((Layer::Content(cref), Contents::Blob(data.to_vec())))
}

/// Splits `file` into a description and the content it refers to.
pub fn disassemble(file: &[u8], name: &str) -> Result<(Description, Contents), DisarchiveError> {
    let name = name.as_bytes();
    let (spec, payload) = compress::analyze(file).map_err(|source| DisarchiveError::Compress { layer: 0, source })?;
    let Some(spec) = spec else {
        let (root, contents) = describe_payload(file, name, 0)?;
        return Ok((Description { root }, contents));
    };
    match compress::detect(&payload) {
        Ok(Format::Plain) => {}
        Ok(_) => return Err(DisarchiveError::NestedCompression { layer: 1 }),
        Err(source) => return Err(DisarchiveError::Compress { layer: 1, source }),
    }
    let (input, contents) = describe_payload(&payload, &inner_name(name), 1)?;
    let root = Layer::Compressed(Box::new(CompressedLayer { name: name.to_vec(), digest_sha256: sha256(file), spec, input }));
    Ok((Description { root }, contents))
}

/// Fetches and verifies the content a description refers to.
pub fn fetch_contents(desc: &Description, provider: &dyn ContentProvider) -> Result<Contents, DisarchiveError> {
    if let Some(d) = desc.directory_ref() {
        return Ok(Contents::Tree(fetch_tree(d, provider)?));
    }
    let c = desc.content_ref().expect("a description refers to a tree or a blob");
    Ok(Contents::Blob(fetch_blob(c, provider)?))
}

fn fetch_tree(d: &DirectoryRef, provider: &dyn ContentProvider) -> Result<NarNode, DisarchiveError> {
    let tree = provider.directory(d).map_err(DisarchiveError::ContentUnavailable)?;
    let actual = nar_hash(&tree);
    if actual != d.digest {
        return Err(DisarchiveError::ContentDigestMismatch { expected: d.digest.to_hex(), actual: actual.to_hex() });
    }
    Ok(tree)
}

fn fetch_blob(c: &ContentRef, provider: &dyn ContentProvider) -> Result<Vec<u8>, DisarchiveError> {
    let data = provider.content(c).map_err(DisarchiveError::ContentUnavailable)?;
    let actual = sha256(&data);
    if actual != c.digest_sha256 {
        return Err(DisarchiveError::ContentDigestMismatch {
            expected: hex::encode(c.digest_sha256),
            actual: hex::encode(actual),
        });
    }
    Ok(data)
}

/// Rebuilds the described file. Content is verified before use and the
/// result of every layer is checked against its recorded digest.
pub fn assemble(desc: &Description, provider: &dyn ContentProvider) -> Result<Vec<u8>, DisarchiveError> {
    assemble_layer(&desc.root, 0, provider)
}

fn assemble_layer(layer: &Layer, index: usize, provider: &dyn ContentProvider) -> Result<Vec<u8>, DisarchiveError> {
    let out = match layer {
        Layer::Content(c) => return fetch_blob(c, provider),
        Layer::Tarball(t) => {
            let tree = fetch_tree(&t.input, provider)?;
            tar::serialize_unchecked(&t.spec, &tree).map_err(|source| match source {
                TarError::DigestMismatch { expected, actual } => {
                    DisarchiveError::ReconstructionMismatch { layer: index, expected, actual }
                }
                source => DisarchiveError::Tar { layer: index, source },
            })?
        }
        Layer::Compressed(c) => {
            let inner = assemble_layer(&c.input, index + 1, provider)?;
            compress::recompress(&inner, &c.spec).map_err(|source| DisarchiveError::Compress { layer: index, source })?
        }
    };
    let actual = sha256(&out);
    if actual != layer.digest_sha256() {
        return Err(DisarchiveError::ReconstructionMismatch {
            layer: index,
            expected: hex::encode(layer.digest_sha256()),
            actual: hex::encode(actual),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::CompressorId;

    fn small_tar() -> Vec<u8> {
        let mut h = tar::TarHeaderFields::baseline();
        h.name = b"pkg-1.0/hello.c".to_vec();
        h.size = tar::Num::new(6);
        h.chksum = tar::unsigned_checksum(&tar::encode_block(&h).unwrap());
        let mut block = tar::encode_block(&h).unwrap().to_vec();
        block.extend_from_slice(b"hello\n");
        block.resize(1024, 0);
        block.extend(vec![0; 1024]);
        block
    }

    #[test]
    fn compressed_tarball_round_trip() {
        let t = small_tar();
        let gz = compress::compress_file(CompressorId::Gnu { level: 9, rsyncable: true }, &t);
        let (desc, contents) = disassemble(&gz, "pkg-1.0.tar.gz").unwrap();
        let Layer::Compressed(c) = &desc.root else { panic!() };
        assert_eq!(c.name, b"pkg-1.0.tar.gz");
        let Layer::Tarball(tl) = &c.input else { panic!() };
        assert_eq!(tl.spec.name, b"pkg-1.0.tar");
        assert_eq!(tl.input.name, b"pkg-1.0");
        let Contents::Tree(tree) = contents else { panic!() };
        let mut p = MemoryContent::default();
        p.add_tree(tree.clone());
        assert_eq!(assemble(&desc, &p).unwrap(), gz);

        let mut altered = tree;
        altered.insert(b"hello.c", NarNode::file("HELLO\n")).unwrap();
        let mut bad = MemoryContent::default();
        bad.add_tree_as(desc.directory_ref().unwrap().digest, altered);
        assert!(matches!(assemble(&desc, &bad), Err(DisarchiveError::ContentDigestMismatch { .. })));
        assert!(matches!(assemble(&desc, &MemoryContent::default()), Err(DisarchiveError::ContentUnavailable(_))));
    }

    #[test]
    fn bare_files_get_content_refs() {
        let patch = b"--- a\n+++ b\n@@ -1 +1 @@\n-x\n+y\n".to_vec();
        let (desc, contents) = disassemble(&patch, "fix.patch").unwrap();
        assert_eq!(desc.content_ref().unwrap().addresses[0], swhid_for_content(&patch));
        assert_eq!(contents, Contents::Blob(patch.clone()));
        let mut p = MemoryContent::default();
        p.add_blob(patch.clone());
        assert_eq!(assemble(&desc, &p).unwrap(), patch);

        let xz = compress::compress_file(CompressorId::Xz { preset: 6, extreme: false }, &patch);
        let (desc, _) = disassemble(&xz, "fix.patch.xz").unwrap();
        assert_eq!(desc.content_ref().unwrap().name, b"fix.patch");
        assert_eq!(assemble(&desc, &p).unwrap(), xz);
    }

    #[test]
    fn unsupported_inputs() {
        assert!(matches!(
            disassemble(b"LZIP\x01\x0c\x00rest", "x.tar.lz"),
            Err(DisarchiveError::Compress { layer: 0, source: CompressError::UnknownFormat(_) })
        ));
        let gz = compress::compress_file(CompressorId::Gnu { level: 6, rsyncable: false }, &small_tar());
        let gzgz = compress::compress_file(CompressorId::Gnu { level: 6, rsyncable: false }, &gz);
        assert!(matches!(disassemble(&gzgz, "x.tar.gz.gz"), Err(DisarchiveError::NestedCompression { layer: 1 })));
    }

    #[test]
    fn names() {
        assert_eq!(inner_name(b"sed-4.8.tar.gz"), b"sed-4.8.tar");
        assert_eq!(inner_name(b"a.tgz"), b"a.tar");
        assert_eq!(inner_name(b"a.patch.xz"), b"a.patch");
        assert_eq!(inner_name(b"blob"), b"blob.out");
    }
}
