//! Lossless tar disassembly: a stream becomes header metadata plus a content
//! tree, and the pair serializes back to the identical bytes.
//!
//! Regular file data goes into the content tree. Data of extension members
//! (GNU `L`/`K`, pax `x`/`g`) and of anything that cannot be placed in the
//! tree (duplicate paths, `..` components, unknown data-bearing types) is kept
//! inline with the member.

mod header;

pub use header::{
    compute_default_header, decode_block, default_header_from_sexpr, default_header_to_sexpr, encode_block,
    member_from_sexpr, member_to_sexpr, unsigned_checksum, Field, FieldValue, Num, TarHeaderFields, BLOCK, FIELDS,
};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nar::NarNode;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TarError {
    #[error("archive truncated at byte {offset}")]
    TruncatedArchive { offset: usize },
    #[error("member {index} at byte {offset}: malformed header ({reason})")]
    MalformedHeader { index: usize, offset: usize, reason: &'static str },
    #[error("member {index}: unsupported member type {:?}", *typeflag as char)]
    UnsupportedMemberType { index: usize, typeflag: u8 },
    #[error("no content for {0}")]
    MissingContent(String),
    #[error("reassembled tar has sha256 {actual}, expected {expected}")]
    DigestMismatch { expected: String, actual: String },
    #[error("invalid tarball spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberSpec {
    pub header: TarHeaderFields,
    /// Member data stored in the description rather than the content tree.
    pub inline_data: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TarballSpec {
    /// Output file name, e.g. `sed-4.8.tar`. Filled in by the caller.
    pub name: Vec<u8>,
    pub digest_sha256: [u8; 32],
    pub default_header: TarHeaderFields,
    pub members: Vec<MemberSpec>,
    /// Bytes after the last member, starting at the end-of-archive marker.
    pub padding: u64,
    /// Those bytes verbatim, when they are not all zero.
    pub padding_raw: Option<Vec<u8>>,
    /// Single top-level directory stripped from the content tree, or empty.
    pub root: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Regular,
    Directory,
    Symlink,
    HardLink,
    /// Device nodes and fifos: header only.
    Special,
    LongName,
    LongLink,
    PaxLocal,
    PaxGlobal,
    /// Anything else with a data area; kept inline.
    Opaque,
}

fn classify(index: usize, h: &TarHeaderFields, path: &[u8], size: u64) -> Result<Kind, TarError> {
    Ok(match h.typeflag {
        0 | b'0' | b'7' if path.ends_with(b"/") && size == 0 => Kind::Directory,
        0 | b'0' | b'7' => Kind::Regular,
        b'1' => Kind::HardLink,
        b'2' => Kind::Symlink,
        b'3' | b'4' | b'6' => Kind::Special,
        b'5' => Kind::Directory,
        b'L' => Kind::LongName,
        b'K' => Kind::LongLink,
        b'x' => Kind::PaxLocal,
        b'g' => Kind::PaxGlobal,
        b'S' | b'D' | b'M' | b'N' => return Err(TarError::UnsupportedMemberType { index, typeflag: h.typeflag }),
        _ => Kind::Opaque,
    })
}

fn has_data(kind: Kind) -> bool {
    !matches!(kind, Kind::Directory | Kind::Symlink | Kind::HardLink | Kind::Special)
}

/// Overrides carried from extension members to the next ordinary member.
#[derive(Default)]
struct Pending {
    path: Option<Vec<u8>>,
    linkpath: Option<Vec<u8>>,
    size: Option<u64>,
}

impl Pending {
    fn absorb(&mut self, index: usize, kind: Kind, h: &TarHeaderFields, data: &[u8]) -> Result<(), TarError> {
        let cstr = |d: &[u8]| d[..d.iter().position(|&b| b == 0).unwrap_or(d.len())].to_vec();
        match kind {
            Kind::LongName => self.path = Some(cstr(data)),
            Kind::LongLink => self.linkpath = Some(cstr(data)),
            Kind::PaxLocal => {
                for (key, value) in pax_records(data) {
                    match key {
                        b"path" => self.path = Some(value.to_vec()),
                        b"linkpath" => self.linkpath = Some(value.to_vec()),
                        b"size" => self.size = std::str::from_utf8(value).ok().and_then(|s| s.parse().ok()),
                        k if k.starts_with(b"GNU.sparse.") => {
                            return Err(TarError::UnsupportedMemberType { index, typeflag: h.typeflag })
                        }
                        _ => {}
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Effective path, link target and data size of an ordinary member.
    fn resolve(&mut self, h: &TarHeaderFields) -> (Vec<u8>, Vec<u8>, u64) {
        let path = self.path.take().unwrap_or_else(|| {
            let name = until_nul(&h.name);
            if h.is_ustar() && !h.prefix.is_empty() {
                let mut p = until_nul(&h.prefix);
                p.push(b'/');
                p.extend(name);
                p
            } else {
                name
            }
        });
        let link = self.linkpath.take().unwrap_or_else(|| until_nul(&h.linkname));
        let size = self.size.take().unwrap_or(h.size.value);
        (path, link, size)
    }
}

fn until_nul(b: &[u8]) -> Vec<u8> {
    b[..b.iter().position(|&c| c == 0).unwrap_or(b.len())].to_vec()
}

/// `"<len> <key>=<value>\n"` records; parsing stops at the first bad one.
fn pax_records(mut data: &[u8]) -> Vec<(&[u8], &[u8])> {
    let mut out = Vec::new();
    while !data.is_empty() {
        let Some(sp) = data.iter().position(|&b| b == b' ') else { break };
        let Some(len) = std::str::from_utf8(&data[..sp]).ok().and_then(|s| s.parse::<usize>().ok()) else { break };
        if len <= sp + 1 || len > data.len() || data[len - 1] != b'\n' {
            break;
        }
        let rec = &data[sp + 1..len - 1];
        if let Some(eq) = rec.iter().position(|&b| b == b'=') {
            out.push((&rec[..eq], &rec[eq + 1..]));
        }
        data = &data[len..];
    }
    out
}

/// Normalized tree components of a member path, or None when the path
/// cannot be placed in a tree.
fn components(path: &[u8]) -> Option<Vec<&[u8]>> {
    let mut out = Vec::new();
    for c in path.split(|&b| b == b'/') {
        match c {
            b"" | b"." => {}
            b".." => return None,
            c => out.push(c),
        }
    }
    Some(out)
}

fn join(comps: &[&[u8]]) -> Vec<u8> {
    comps.join(&b'/')
}

fn padding_len(size: u64) -> usize {
    ((BLOCK as u64 - size % BLOCK as u64) % BLOCK as u64) as usize
}

/// Inserts `node` at `comps` unless something already occupies the path or
/// a parent is not a directory.
fn try_insert(tree: &mut NarNode, comps: &[&[u8]], node: NarNode) -> bool {
    if comps.is_empty() || tree.get(&join(comps)).is_some() {
        return false;
    }
    tree.insert(&join(comps), node).is_ok()
}

pub fn parse_tarball(stream: &[u8]) -> Result<(TarballSpec, NarNode), TarError> {
    let mut members = Vec::new();
    let mut tree = NarNode::empty_dir();
    let mut pending = Pending::default();
    let mut pos = 0;
    while pos < stream.len() {
        let index = members.len();
        let rest = &stream[pos..];
        if rest.iter().take(BLOCK).all(|&b| b == 0) {
            break;
        }
        if rest.len() < BLOCK {
            return Err(TarError::TruncatedArchive { offset: stream.len() });
        }
        let mut header = header::decode_block(&rest[..BLOCK])
            .map_err(|reason| TarError::MalformedHeader { index, offset: pos, reason })?;
        let is_ext = matches!(header.typeflag, b'L' | b'K' | b'x' | b'g');
        let (path, link, size) = if is_ext {
            (until_nul(&header.name), Vec::new(), header.size.value)
        } else {
            pending.resolve(&header)
        };
        let kind = classify(index, &header, &path, size)?;
        let data_len = if has_data(kind) { size } else { 0 };
        let data_start = pos + BLOCK;
        let pad = padding_len(data_len);
        let end = usize::try_from(data_len)
            .ok()
            .and_then(|n| data_start.checked_add(n)?.checked_add(pad))
            .filter(|&e| e <= stream.len())
            .ok_or(TarError::TruncatedArchive { offset: stream.len() })?;
        let data = &stream[data_start..end - pad];
        let padding = &stream[end - pad..end];
        if padding.iter().any(|&b| b != 0) {
            header.data_padding = padding.to_vec();
        }
        pending.absorb(index, kind, &header, data)?;

        let comps = components(&path);
        let mut inline_data = None;
        match kind {
            Kind::Regular => {
                let node = if header.mode.value & 0o111 != 0 {
                    NarNode::executable(data)
                } else {
                    NarNode::file(data)
                };
                if !comps.as_deref().is_some_and(|c| try_insert(&mut tree, c, node)) {
                    inline_data = Some(data.to_vec());
                }
            }
            Kind::Directory => {
                if let Some(c) = &comps {
                    if !c.is_empty() && tree.get(&join(c)).is_none() {
                        let _ = tree.insert(&join(c), NarNode::empty_dir());
                    }
                }
            }
            Kind::Symlink => {
                if let Some(c) = &comps {
                    try_insert(&mut tree, c, NarNode::symlink(link));
                }
            }
            Kind::HardLink => {
                let target = components(&link).and_then(|t| tree.get(&join(&t)).cloned());
                if let (Some(c), Some(node @ NarNode::Regular { .. })) = (&comps, target) {
                    try_insert(&mut tree, c, node);
                }
            }
            Kind::Special => {}
            Kind::LongName | Kind::LongLink | Kind::PaxLocal | Kind::PaxGlobal | Kind::Opaque => {
                inline_data = Some(data.to_vec());
            }
        }
        members.push(MemberSpec { header, inline_data });
        pos = end;
    }
    let trailer = &stream[pos..];
    let padding_raw = trailer.iter().any(|&b| b != 0).then(|| trailer.to_vec());

    let (root, tree) = match tree {
        NarNode::Directory(entries) if entries.len() == 1 && matches!(entries.values().next(), Some(NarNode::Directory(_))) => {
            let (name, sub) = entries.into_iter().next().unwrap();
            (name, sub)
        }
        t => (Vec::new(), t),
    };
    let headers: Vec<TarHeaderFields> = members.iter().map(|m: &MemberSpec| m.header.clone()).collect();
    let spec = TarballSpec {
        name: Vec::new(),
        digest_sha256: Sha256::digest(stream).into(),
        default_header: compute_default_header(&headers),
        members,
        padding: trailer.len() as u64,
        padding_raw,
        root,
    };
    Ok((spec, tree))
}

/// Rebuilds the tar stream and checks it against the recorded digest.
pub fn serialize_tarball(spec: &TarballSpec, content: &NarNode) -> Result<Vec<u8>, TarError> {
    let out = serialize_unchecked(spec, content)?;
    let actual: [u8; 32] = Sha256::digest(&out).into();
    if actual != spec.digest_sha256 {
        return Err(TarError::DigestMismatch { expected: hex::encode(spec.digest_sha256), actual: hex::encode(actual) });
    }
    Ok(out)
}

/// Rebuilds the tar stream without the final digest check.
pub fn serialize_unchecked(spec: &TarballSpec, content: &NarNode) -> Result<Vec<u8>, TarError> {
    let mut out = Vec::new();
    let mut pending = Pending::default();
    for (index, m) in spec.members.iter().enumerate() {
        let h = &m.header;
        let is_ext = matches!(h.typeflag, b'L' | b'K' | b'x' | b'g');
        let (path, _, size) = if is_ext {
            (until_nul(&h.name), Vec::new(), h.size.value)
        } else {
            pending.resolve(h)
        };
        let kind = classify(index, h, &path, size)?;
        out.extend_from_slice(&header::encode_block(h).map_err(TarError::InvalidSpec)?);
        if !has_data(kind) {
            continue;
        }
        let data: &[u8] = match &m.inline_data {
            Some(d) => d,
            None => {
                let missing = || TarError::MissingContent(String::from_utf8_lossy(&path).into_owned());
                let comps = components(&path).ok_or_else(missing)?;
                let rel = match comps.split_first() {
                    _ if spec.root.is_empty() => &comps[..],
                    Some((first, rest)) if *first == spec.root.as_slice() => rest,
                    _ => return Err(missing()),
                };
                match content.get(&join(rel)) {
                    Some(NarNode::Regular { contents, .. }) if !rel.is_empty() => contents,
                    _ => return Err(missing()),
                }
            }
        };
        if data.len() as u64 != size {
            return Err(TarError::DigestMismatch {
                expected: format!("{size} bytes for {}", String::from_utf8_lossy(&path)),
                actual: format!("{} bytes", data.len()),
            });
        }
        pending.absorb(index, kind, h, data)?;
        out.extend_from_slice(data);
        let pad = padding_len(size);
        if h.data_padding.is_empty() {
            out.resize(out.len() + pad, 0);
        } else if h.data_padding.len() == pad {
            out.extend_from_slice(&h.data_padding);
        } else {
            return Err(TarError::InvalidSpec(format!("member {index}: data padding has the wrong length")));
        }
    }
    match &spec.padding_raw {
        Some(raw) if raw.len() as u64 == spec.padding => out.extend_from_slice(raw),
        Some(_) => return Err(TarError::InvalidSpec("raw padding length disagrees with padding".into())),
        None => out.resize(out.len() + spec.padding as usize, 0),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(name: &str, typeflag: u8, data: &[u8], mode: u64) -> Vec<u8> {
        let mut h = TarHeaderFields::baseline();
        h.name = name.as_bytes().to_vec();
        h.typeflag = typeflag;
        h.mode = Num::new(mode);
        h.size = Num::new(data.len() as u64);
        h.mtime = Num::new(1_600_000_000);
        let mut block = header::encode_block(&h).unwrap();
        let sum = header::unsigned_checksum(&block);
        block[148..154].copy_from_slice(format!("{sum:06o}").as_bytes());
        let mut out = block.to_vec();
        out.extend_from_slice(data);
        out.resize(out.len() + padding_len(data.len() as u64), 0);
        out
    }

    fn round_trip(stream: &[u8]) -> (TarballSpec, NarNode) {
        let (spec, tree) = parse_tarball(stream).unwrap();
        assert_eq!(serialize_tarball(&spec, &tree).unwrap(), stream);
        (spec, tree)
    }

    #[test]
    fn bare_end_of_archive() {
        let (spec, tree) = round_trip(&[0; 1024]);
        assert!(spec.members.is_empty());
        assert_eq!(spec.padding, 1024);
        assert_eq!(tree, NarNode::empty_dir());
        assert_eq!(serialize_tarball(&spec, &NarNode::empty_dir()).unwrap(), vec![0; 1024]);
    }

    #[test]
    fn single_top_level_directory_is_stripped() {
        let mut t = member("pkg/", b'5', b"", 0o755);
        t.extend(member("pkg/a", b'0', b"alpha", 0o644));
        t.extend(member("pkg/bin/run", b'0', b"#!/bin/sh\n", 0o755));
        t.extend(vec![0; 1024]);
        let (spec, tree) = round_trip(&t);
        assert_eq!(spec.root, b"pkg");
        assert_eq!(spec.padding, 1024);
        assert_eq!(tree.get(b"a"), Some(&NarNode::file("alpha")));
        assert_eq!(tree.get(b"bin/run"), Some(&NarNode::executable("#!/bin/sh\n")));
    }

    #[test]
    fn duplicates_and_dotdot_go_inline() {
        let mut t = member("a", b'0', b"one", 0o644);
        t.extend(member("a", b'0', b"two", 0o644));
        t.extend(member("../evil", b'0', b"x", 0o644));
        t.extend(vec![0; 1024]);
        let (spec, tree) = round_trip(&t);
        assert_eq!(spec.root, b"");
        assert_eq!(tree.get(b"a"), Some(&NarNode::file("one")));
        assert_eq!(spec.members[0].inline_data, None);
        assert_eq!(spec.members[1].inline_data.as_deref(), Some(&b"two"[..]));
        assert_eq!(spec.members[2].inline_data.as_deref(), Some(&b"x"[..]));
    }

    #[test]
    fn gnu_long_names_apply_to_next_member() {
        let long = "d/".to_string() + &"n".repeat(150);
        let mut t = member("././@LongLink", b'L', format!("{long}\0").as_bytes(), 0o644);
        t.extend(member(&long[..100], b'0', b"data", 0o644));
        t.extend(vec![0; 1024]);
        let (spec, tree) = round_trip(&t);
        assert_eq!(spec.root, b"d");
        assert_eq!(tree.get(&long.as_bytes()[2..]), Some(&NarNode::file("data")));
    }

    #[test]
    fn pax_path_and_size() {
        let rec = |k: &str, v: &str| {
            let body = format!(" {k}={v}\n");
            let mut n = body.len() + 1;
            while format!("{n}{body}").len() != n {
                n += 1;
            }
            format!("{n}{body}")
        };
        let pax = rec("path", "p/long-name") + &rec("mtime", "1.5");
        let mut t = member("p/PaxHeaders/x", b'x', pax.as_bytes(), 0o644);
        t.extend(member("p/short", b'0', b"payload", 0o644));
        t.extend(vec![0; 1024]);
        let (_, tree) = round_trip(&t);
        assert_eq!(tree.get(b"long-name"), Some(&NarNode::file("payload")));
    }

    #[test]
    fn hard_links_and_symlinks_are_in_the_tree() {
        let mut t = member("f", b'0', b"body", 0o644);
        let mut link = TarHeaderFields::baseline();
        link.name = b"h".to_vec();
        link.typeflag = b'1';
        link.linkname = b"f".to_vec();
        let mut block = header::encode_block(&link).unwrap();
        let sum = header::unsigned_checksum(&block);
        block[148..154].copy_from_slice(format!("{sum:06o}").as_bytes());
        t.extend(block);
        link.name = b"s".to_vec();
        link.typeflag = b'2';
        let mut block = header::encode_block(&link).unwrap();
        let sum = header::unsigned_checksum(&block);
        block[148..154].copy_from_slice(format!("{sum:06o}").as_bytes());
        t.extend(block);
        t.extend(vec![0; 1024]);
        let (_, tree) = round_trip(&t);
        assert_eq!(tree.get(b"h"), Some(&NarNode::file("body")));
        assert_eq!(tree.get(b"s"), Some(&NarNode::symlink("f")));
    }

    #[test]
    fn garbage_in_paddings_is_kept() {
        let mut t = member("a", b'0', b"abc", 0o644);
        t[512 + 100] = 0xAA;
        t.extend(vec![0; 1024]);
        t.extend(b"trailing junk");
        let (spec, _) = round_trip(&t);
        assert_eq!(spec.members[0].header.data_padding.len(), 509);
        assert!(spec.padding_raw.is_some());
    }

    #[test]
    fn errors() {
        let t = member("a", b'0', b"abcdef", 0o644);
        assert_eq!(parse_tarball(&t[..515]), Err(TarError::TruncatedArchive { offset: 515 }));
        let mut bad = t.clone();
        bad[10] ^= 0x40;
        assert!(matches!(parse_tarball(&bad), Err(TarError::MalformedHeader { index: 0, .. })));
        let sparse = member("s", b'S', b"", 0o644);
        assert_eq!(
            parse_tarball(&sparse),
            Err(TarError::UnsupportedMemberType { index: 0, typeflag: b'S' })
        );

        let mut full = t.clone();
        full.extend(vec![0; 1024]);
        let (spec, tree) = parse_tarball(&full).unwrap();
        assert!(matches!(
            serialize_tarball(&spec, &NarNode::empty_dir()),
            Err(TarError::MissingContent(p)) if p == "a"
        ));
        let mut altered = tree.clone();
        altered.insert(b"a", NarNode::file("abcdeF")).unwrap();
        assert!(matches!(serialize_tarball(&spec, &altered), Err(TarError::DigestMismatch { .. })));
    }
}
