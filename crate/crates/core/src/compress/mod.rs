//! Compression layers: parse gzip/bzip2/xz containers, identify which
//! catalog compressor produced a stream, and regenerate it exactly.
//!
//! Identification is brute force with byte-exact verification. Header hints
//! (gzip XFL, the bzip2 block-size digit, the xz dictionary size) only decide
//! the order in which catalog entries are tried.
//!
//! | id                  | implementation                                  |
//! |---------------------|-------------------------------------------------|
//! | `gnu-1`..`gnu-9`    | in-crate port of GNU gzip 1.10 deflate          |
//! | `gnu-N-rsync`       | same, `--rsyncable`; `gnu-best-rsync` is N = 9  |
//! | `zlib-1`..`zlib-9`  | zlib (bundled by libz-sys), raw deflate, memLevel 8 |
//! | `bzip2-1`..`bzip2-9`| libbzip2 1.0.8 semantics (libbz2-rs-sys)        |
//! | `xz-0`..`xz-9`      | liblzma 5.2 easy presets, single stream         |
//! | `xz-N-extreme`      | same with `LZMA_PRESET_EXTREME`                 |

pub mod gnu_deflate;
pub mod gzip;
pub mod zlib;

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

pub use gzip::{GzipFooter, GzipHeader};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompressError {
    #[error("unsupported format: {0}")]
    UnknownFormat(String),
    #[error("corrupt stream: {0}")]
    CorruptStream(&'static str),
    #[error("no catalog compressor reproduces {what}")]
    NoMatchingCompressor { what: String },
    #[error("unknown compressor id {0:?}")]
    InvalidId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CompressorId {
    Gnu { level: u8, rsyncable: bool },
    Zlib { level: u8 },
    Bzip2 { level: u8 },
    Xz { preset: u8, extreme: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    GnuGzip,
    ZlibGzip,
    Bzip2,
    Xz,
}

impl CompressorId {
    pub fn family(self) -> Family {
        match self {
            CompressorId::Gnu { .. } => Family::GnuGzip,
            CompressorId::Zlib { .. } => Family::ZlibGzip,
            CompressorId::Bzip2 { .. } => Family::Bzip2,
            CompressorId::Xz { .. } => Family::Xz,
        }
    }

    pub fn format(self) -> Format {
        match self.family() {
            Family::GnuGzip | Family::ZlibGzip => Format::Gzip,
            Family::Bzip2 => Format::Bzip2,
            Family::Xz => Format::Xz,
        }
    }

    /// The XFL byte gzip and zlib write for this level.
    fn gzip_extra_flags(self) -> Option<u8> {
        match self {
            CompressorId::Gnu { level, .. } | CompressorId::Zlib { level } => {
                Some(gnu_deflate::extra_flags_for_level(level))
            }
            _ => None,
        }
    }
}

impl fmt::Display for CompressorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CompressorId::Gnu { level: 9, rsyncable: true } => f.write_str("gnu-best-rsync"),
            CompressorId::Gnu { level, rsyncable: true } => write!(f, "gnu-{level}-rsync"),
            CompressorId::Gnu { level, rsyncable: false } => write!(f, "gnu-{level}"),
            CompressorId::Zlib { level } => write!(f, "zlib-{level}"),
            CompressorId::Bzip2 { level } => write!(f, "bzip2-{level}"),
            CompressorId::Xz { preset, extreme: false } => write!(f, "xz-{preset}"),
            CompressorId::Xz { preset, extreme: true } => write!(f, "xz-{preset}-extreme"),
        }
    }
}

impl FromStr for CompressorId {
    type Err = CompressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        catalog().into_iter().find(|c| c.to_string() == s).ok_or_else(|| CompressError::InvalidId(s.to_string()))
    }
}

/// Every catalog entry, in default search order.
pub fn catalog() -> Vec<CompressorId> {
    let mut out = vec![CompressorId::Gnu { level: 9, rsyncable: false }, CompressorId::Gnu { level: 9, rsyncable: true }];
    out.extend((1..=8).rev().map(|level| CompressorId::Gnu { level, rsyncable: false }));
    out.extend((1..=8).rev().map(|level| CompressorId::Gnu { level, rsyncable: true }));
    out.extend((1..=9).rev().map(|level| CompressorId::Zlib { level }));
    out.extend((1..=9).rev().map(|level| CompressorId::Bzip2 { level }));
    for preset in [6, 9, 0, 1, 2, 3, 4, 5, 7, 8] {
        out.push(CompressorId::Xz { preset, extreme: false });
        out.push(CompressorId::Xz { preset, extreme: true });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Gzip,
    Bzip2,
    Xz,
    Plain,
}

const XZ_MAGIC: &[u8] = &[0xfd, b'7', b'z', b'X', b'Z', 0];

/// Classifies a file by magic number. Recognized but unsupported
/// compressors are an error rather than `Plain`.
pub fn detect(data: &[u8]) -> Result<Format, CompressError> {
    let unknown = |what: &str| Err(CompressError::UnknownFormat(what.to_string()));
    match data {
        [0x1f, 0x8b, ..] => Ok(Format::Gzip),
        [b'B', b'Z', b'h', b'1'..=b'9', ..] => Ok(Format::Bzip2),
        d if d.starts_with(XZ_MAGIC) => Ok(Format::Xz),
        d if d.starts_with(b"LZIP") => unknown("lzip"),
        d if d.starts_with(&[0x28, 0xb5, 0x2f, 0xfd]) => unknown("zstd"),
        d if d.starts_with(b"PK\x03\x04") || d.starts_with(b"PK\x05\x06") => unknown("zip"),
        [0x1f, 0x9d, ..] => unknown("compress (.Z)"),
        [0x5d, 0x00, 0x00, ..] => unknown("lzma-alone"),
        _ => Ok(Format::Plain),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum XzCheck {
    None,
    Crc32,
    Crc64,
    Sha256,
}

impl XzCheck {
    pub fn symbol(self) -> &'static str {
        match self {
            XzCheck::None => "none",
            XzCheck::Crc32 => "crc32",
            XzCheck::Crc64 => "crc64",
            XzCheck::Sha256 => "sha256",
        }
    }

    pub fn from_symbol(s: &str) -> Option<XzCheck> {
        [XzCheck::None, XzCheck::Crc32, XzCheck::Crc64, XzCheck::Sha256].into_iter().find(|c| c.symbol() == s)
    }

    fn from_stream_flags(b: u8) -> Option<XzCheck> {
        match b & 0x0f {
            0 => Some(XzCheck::None),
            1 => Some(XzCheck::Crc32),
            4 => Some(XzCheck::Crc64),
            10 => Some(XzCheck::Sha256),
            _ => None,
        }
    }

    fn to_xz2(self) -> xz2::stream::Check {
        match self {
            XzCheck::None => xz2::stream::Check::None,
            XzCheck::Crc32 => xz2::stream::Check::Crc32,
            XzCheck::Crc64 => xz2::stream::Check::Crc64,
            XzCheck::Sha256 => xz2::stream::Check::Sha256,
        }
    }
}

/// Encoder output for `id`: a raw deflate body for the gzip families, a
/// complete stream for bzip2 and xz.
pub fn encode(id: CompressorId, payload: &[u8], check: XzCheck) -> Vec<u8> {
    match id {
        CompressorId::Gnu { level, rsyncable } => gnu_deflate::compress(payload, level, rsyncable),
        CompressorId::Zlib { level } => zlib::compress(payload, level),
        _ => {
            let mut out = Vec::new();
            run_encoder(id, payload, check, &mut out).expect("writing to a Vec cannot fail");
            out
        }
    }
}

fn run_encoder<W: Write>(id: CompressorId, payload: &[u8], check: XzCheck, sink: W) -> io::Result<W> {
    match id {
        CompressorId::Bzip2 { level } => {
            let mut e = bzip2::write::BzEncoder::new(sink, bzip2::Compression::new(level as u32));
            e.write_all(payload)?;
            e.finish()
        }
        CompressorId::Xz { preset, extreme } => {
            let flags = preset as u32 | if extreme { 0x8000_0000 } else { 0 };
            let stream = xz2::stream::Stream::new_easy_encoder(flags, check.to_xz2()).map_err(io::Error::other)?;
            let mut e = xz2::write::XzEncoder::new_stream(sink, stream);
            e.write_all(payload)?;
            e.finish()
        }
        _ => unreachable!("deflate families are not streamed"),
    }
}

/// A sink that fails as soon as the written bytes stop matching `expected`.
struct Compare<'a> {
    expected: &'a [u8],
    pos: usize,
}

impl Write for Compare<'_> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let end = self.pos + buf.len();
        if end > self.expected.len() || self.expected[self.pos..end] != *buf {
            return Err(io::Error::other("diverged"));
        }
        self.pos = end;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Whether `encode(id, payload, check) == expected`, stopping at the first
/// differing output.
pub fn reproduces(id: CompressorId, payload: &[u8], check: XzCheck, expected: &[u8]) -> bool {
    match id {
        CompressorId::Gnu { level, rsyncable } => gnu_deflate::reproduces(payload, level, rsyncable, expected),
        CompressorId::Zlib { level } => zlib::reproduces(payload, level, expected),
        _ => run_encoder(id, payload, check, Compare { expected, pos: 0 })
            .is_ok_and(|c| c.pos == expected.len()),
    }
}

/// Hints read from a compressed stream that narrow the search.
#[derive(Debug, Clone, Copy, Default)]
struct Hints {
    gzip_xfl: Option<u8>,
    bzip2_level: Option<u8>,
    xz_dict: Option<u32>,
}

fn xz_preset_dict(preset: u8) -> u32 {
    [256 << 10, 1 << 20, 2 << 20, 4 << 20, 4 << 20, 8 << 20, 8 << 20, 16 << 20, 32 << 20, 64 << 20][preset as usize]
}

fn candidates(format: Format, hints: Hints) -> Vec<CompressorId> {
    let all: Vec<CompressorId> = catalog().into_iter().filter(|c| c.format() == format).collect();
    let preferred = |c: &CompressorId| match *c {
        CompressorId::Gnu { .. } | CompressorId::Zlib { .. } => hints.gzip_xfl.is_none_or(|x| c.gzip_extra_flags() == Some(x)),
        CompressorId::Bzip2 { level } => hints.bzip2_level.is_none_or(|l| l == level),
        CompressorId::Xz { preset, .. } => hints.xz_dict.is_none_or(|d| d == xz_preset_dict(preset)),
    };
    let (mut first, rest): (Vec<_>, Vec<_>) = all.into_iter().partition(preferred);
    first.extend(rest);
    first
}

/// First candidate, in order, that reproduces `expected`. The deflate
/// families are tried in parallel; bzip2 and xz sequentially, since their
/// encoders are memory-hungry at high presets.
fn search(cands: &[CompressorId], payload: &[u8], check: XzCheck, expected: &[u8]) -> Option<CompressorId> {
    let (parallel, sequential): (Vec<_>, Vec<_>) =
        cands.iter().partition(|c| matches!(c.format(), Format::Gzip));
    parallel
        .par_iter()
        .find_first(|&&c| reproduces(c, payload, check, expected))
        .copied()
        .or_else(|| sequential.into_iter().find(|&c| reproduces(c, payload, check, expected)))
}

/// Reads the LZMA2 dictionary size from the first block header. Returns
/// Err for filter chains no preset produces.
fn xz_dict_hint(data: &[u8]) -> Result<Option<u32>, ()> {
    let Some(&size_byte) = data.get(12) else { return Ok(None) };
    if size_byte == 0 {
        return Ok(None);
    }
    let header = data.get(12..12 + (size_byte as usize + 1) * 4).ok_or(())?;
    let flags = header[1];
    if flags & 0x03 != 0 {
        return Err(());
    }
    let mut pos = 2;
    let mut vli = || -> Result<u64, ()> {
        let mut v = 0u64;
        for i in 0..9 {
            let b = *header.get(pos).ok_or(())?;
            pos += 1;
            v |= ((b & 0x7f) as u64) << (7 * i);
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(())
    };
    if flags & 0x40 != 0 {
        vli()?;
    }
    if flags & 0x80 != 0 {
        vli()?;
    }
    let (id, props_len) = (vli()?, vli()?);
    if id != 0x21 || props_len != 1 {
        return Err(());
    }
    let p = *header.get(pos).ok_or(())?;
    if p > 40 {
        return Err(());
    }
    Ok(Some(if p == 40 { u32::MAX } else { (2 | (p as u32 & 1)) << (p / 2 + 11) }))
}

fn bzip2_stream(data: &[u8]) -> Result<(Vec<u8>, usize), CompressError> {
    let mut d = bzip2::Decompress::new(false);
    let mut out = Vec::with_capacity(data.len() * 4);
    loop {
        if out.capacity() - out.len() < 1 << 16 {
            out.reserve(out.len().max(1 << 16));
        }
        let (before_in, before_out) = (d.total_in(), d.total_out());
        let status = d
            .decompress_vec(&data[d.total_in() as usize..], &mut out)
            .map_err(|_| CompressError::CorruptStream("invalid bzip2 data"))?;
        if status == bzip2::Status::StreamEnd {
            return Ok((out, d.total_in() as usize));
        }
        if d.total_in() == before_in && d.total_out() == before_out {
            return Err(CompressError::CorruptStream("truncated bzip2 data"));
        }
    }
}

fn xz_stream(data: &[u8]) -> Result<(Vec<u8>, usize), CompressError> {
    let mut d = xz2::stream::Stream::new_stream_decoder(u64::MAX, 0)
        .map_err(|_| CompressError::CorruptStream("cannot initialize xz decoder"))?;
    let mut out = Vec::with_capacity(data.len() * 4);
    loop {
        if out.capacity() - out.len() < 1 << 16 {
            out.reserve(out.len().max(1 << 16));
        }
        let (before_in, before_out) = (d.total_in(), d.total_out());
        let status = d
            .process_vec(&data[d.total_in() as usize..], &mut out, xz2::stream::Action::Run)
            .map_err(|_| CompressError::CorruptStream("invalid xz data"))?;
        if status == xz2::stream::Status::StreamEnd {
            return Ok((out, d.total_in() as usize));
        }
        if d.total_in() == before_in && d.total_out() == before_out {
            return Err(CompressError::CorruptStream("truncated xz data"));
        }
    }
}

/// Decodes consecutive streams sharing `magic`; returns the concatenated
/// payload, the number of streams and the byte offset where they end.
fn streams(
    data: &[u8],
    magic: fn(&[u8]) -> bool,
    decode: fn(&[u8]) -> Result<(Vec<u8>, usize), CompressError>,
) -> Result<(Vec<u8>, usize, usize), CompressError> {
    let (mut payload, mut end) = decode(data)?;
    let mut count = 1;
    while magic(&data[end..]) {
        let (more, used) = decode(&data[end..])?;
        payload.extend(more);
        end += used;
        count += 1;
    }
    Ok((payload, count, end))
}

/// Everything about a compressed file except its payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompressionSpec {
    Gzip { members: Vec<GzipMemberSpec>, trailing: Vec<u8> },
    Bzip2 { compressor: CompressorId, trailing: Vec<u8> },
    Xz { compressor: CompressorId, check: XzCheck, trailing: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GzipMemberSpec {
    pub header: GzipHeader,
    pub footer: GzipFooter,
    pub compressor: CompressorId,
}

/// The decoded contents of a compressed file and its container metadata.
#[derive(Debug, Clone)]
pub struct Decompressed {
    pub format: Format,
    pub payload: Vec<u8>,
    /// Per gzip member: header, footer and raw deflate body.
    pub gzip_members: Vec<gzip::RawMember>,
    pub xz_check: Option<XzCheck>,
    /// Number of concatenated bzip2 or xz streams.
    pub stream_count: usize,
    /// Bytes after the last recognized member or stream.
    pub trailing: Vec<u8>,
}

pub fn decompress(data: &[u8]) -> Result<Decompressed, CompressError> {
    let format = detect(data)?;
    let mut d = Decompressed {
        format,
        payload: Vec::new(),
        gzip_members: Vec::new(),
        xz_check: None,
        stream_count: 1,
        trailing: Vec::new(),
    };
    match format {
        Format::Plain => d.payload = data.to_vec(),
        Format::Gzip => {
            let (members, trailing) = gzip::parse(data)?;
            d.payload = members.iter().flat_map(|m| m.payload.iter().copied()).collect();
            d.stream_count = members.len();
            d.gzip_members = members;
            d.trailing = trailing;
        }
        Format::Bzip2 => {
            let magic = |b: &[u8]| matches!(b, [b'B', b'Z', b'h', b'1'..=b'9', ..]);
            let (payload, count, end) = streams(data, magic, bzip2_stream)?;
            (d.payload, d.stream_count, d.trailing) = (payload, count, data[end..].to_vec());
        }
        Format::Xz => {
            let check = data.get(7).and_then(|&b| XzCheck::from_stream_flags(b));
            d.xz_check = Some(check.ok_or(CompressError::CorruptStream("unsupported xz check type"))?);
            let magic = |b: &[u8]| b.starts_with(XZ_MAGIC);
            let (payload, count, end) = streams(data, magic, xz_stream)?;
            (d.payload, d.stream_count, d.trailing) = (payload, count, data[end..].to_vec());
        }
    }
    Ok(d)
}

/// Decompresses `data` and identifies the compressor of every member.
/// Plain files yield `None`.
pub fn analyze(data: &[u8]) -> Result<(Option<CompressionSpec>, Vec<u8>), CompressError> {
    let d = decompress(data)?;
    let no_match = |what: String| CompressError::NoMatchingCompressor { what };
    let spec = match d.format {
        Format::Plain => None,
        Format::Gzip => {
            let members = d
                .gzip_members
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let hints = Hints { gzip_xfl: Some(m.header.extra_flags), ..Default::default() };
                    let cands = candidates(Format::Gzip, hints);
                    let compressor = search(&cands, &m.payload, XzCheck::None, &m.body)
                        .ok_or_else(|| no_match(format!("gzip member {i}")))?;
                    Ok(GzipMemberSpec { header: m.header.clone(), footer: m.footer, compressor })
                })
                .collect::<Result<Vec<_>, CompressError>>()?;
            Some(CompressionSpec::Gzip { members, trailing: d.trailing })
        }
        Format::Bzip2 | Format::Xz if d.stream_count > 1 => {
            return Err(no_match(format!("a {}-stream file", d.stream_count)))
        }
        Format::Bzip2 => {
            let hints = Hints { bzip2_level: Some(data[3] - b'0'), ..Default::default() };
            let body = &data[..data.len() - d.trailing.len()];
            let compressor = search(&candidates(Format::Bzip2, hints), &d.payload, XzCheck::None, body)
                .ok_or_else(|| no_match("bzip2 stream".into()))?;
            Some(CompressionSpec::Bzip2 { compressor, trailing: d.trailing })
        }
        Format::Xz => {
            let dict = xz_dict_hint(data).map_err(|_| no_match("xz stream with a non-preset filter chain".into()))?;
            let hints = Hints { xz_dict: dict, ..Default::default() };
            let check = d.xz_check.expect("set for xz");
            let body = &data[..data.len() - d.trailing.len()];
            let compressor = search(&candidates(Format::Xz, hints), &d.payload, check, body)
                .ok_or_else(|| no_match("xz stream".into()))?;
            Some(CompressionSpec::Xz { compressor, check, trailing: d.trailing })
        }
    };
    Ok((spec, d.payload))
}

/// Identifies the catalog compressor that turns `payload` into `original`,
/// a single-member gzip file or a bzip2/xz stream.
pub fn guess_compressor(payload: &[u8], original: &[u8]) -> Result<CompressorId, CompressError> {
    let (spec, decoded) = analyze(original)?;
    if decoded != payload {
        return Err(CompressError::CorruptStream("payload does not decompress from original"));
    }
    match spec {
        Some(CompressionSpec::Gzip { members, .. }) if members.len() == 1 => Ok(members[0].compressor),
        Some(CompressionSpec::Bzip2 { compressor, .. }) | Some(CompressionSpec::Xz { compressor, .. }) => Ok(compressor),
        Some(CompressionSpec::Gzip { .. }) => {
            Err(CompressError::NoMatchingCompressor { what: "a multi-member gzip file as a single compressor".into() })
        }
        None => Err(CompressError::UnknownFormat("not compressed".into())),
    }
}

/// Rebuilds a compressed file from its payload and spec.
pub fn recompress(payload: &[u8], spec: &CompressionSpec) -> Result<Vec<u8>, CompressError> {
    match spec {
        CompressionSpec::Gzip { members, trailing } => {
            let mut out = Vec::new();
            let mut rest = payload;
            for (i, m) in members.iter().enumerate() {
                let n = if i + 1 == members.len() { rest.len() } else { m.footer.isize as usize };
                if n > rest.len() || m.compressor.format() != Format::Gzip {
                    return Err(CompressError::CorruptStream("payload does not match gzip member sizes"));
                }
                let (chunk, tail) = rest.split_at(n);
                gzip::write_member(&mut out, &m.header, &encode(m.compressor, chunk, XzCheck::None), m.footer);
                rest = tail;
            }
            out.extend_from_slice(trailing);
            Ok(out)
        }
        CompressionSpec::Bzip2 { compressor, trailing } => {
            let mut out = encode(*compressor, payload, XzCheck::None);
            out.extend_from_slice(trailing);
            Ok(out)
        }
        CompressionSpec::Xz { compressor, check, trailing } => {
            let mut out = encode(*compressor, payload, *check);
            out.extend_from_slice(trailing);
            Ok(out)
        }
    }
}

/// A complete single-member gzip file as `gzip -n` or zlib's gzip writer
/// would produce it.
pub fn gzip_file(id: CompressorId, payload: &[u8], mtime: u32, os: u8) -> Vec<u8> {
    let header = GzipHeader::new(mtime, id.gzip_extra_flags().unwrap_or(0), os);
    let mut out = Vec::new();
    gzip::write_member(&mut out, &header, &encode(id, payload, XzCheck::None), gzip::footer_for(payload));
    out
}

/// Compresses with any catalog entry into a complete file with default
/// container settings (gzip mtime 0 and OS 3, xz CRC64).
pub fn compress_file(id: CompressorId, payload: &[u8]) -> Vec<u8> {
    match id.format() {
        Format::Gzip => gzip_file(id, payload, 0, 3),
        _ => encode(id, payload, XzCheck::Crc64),
    }
}
