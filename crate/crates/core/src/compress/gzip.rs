//! The gzip container (RFC 1952): member headers, raw deflate bodies and
//! CRC/size footers.

use flate2::{Decompress, FlushDecompress, Status};

use super::CompressError;

const FHCRC: u8 = 2;
const FEXTRA: u8 = 4;
const FNAME: u8 = 8;
const FCOMMENT: u8 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GzipHeader {
    pub mtime: u32,
    pub extra_flags: u8,
    pub os: u8,
    /// FTEXT and reserved flag bits; the others follow from the fields below.
    pub other_flags: u8,
    pub extra: Option<Vec<u8>>,
    pub file_name: Option<Vec<u8>>,
    pub comment: Option<Vec<u8>>,
    /// The stored header CRC16, verbatim.
    pub header_crc: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GzipFooter {
    pub crc: u32,
    pub isize: u32,
}

/// One parsed member: metadata, the raw deflate body, and the payload.
#[derive(Debug, Clone)]
pub struct RawMember {
    pub header: GzipHeader,
    pub footer: GzipFooter,
    pub body: Vec<u8>,
    pub payload: Vec<u8>,
}

impl GzipHeader {
    pub fn new(mtime: u32, extra_flags: u8, os: u8) -> GzipHeader {
        GzipHeader { mtime, extra_flags, os, ..Default::default() }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut flags = self.other_flags & !(FHCRC | FEXTRA | FNAME | FCOMMENT);
        flags |= if self.header_crc.is_some() { FHCRC } else { 0 };
        flags |= if self.extra.is_some() { FEXTRA } else { 0 };
        flags |= if self.file_name.is_some() { FNAME } else { 0 };
        flags |= if self.comment.is_some() { FCOMMENT } else { 0 };
        let mut out = vec![0x1f, 0x8b, 8, flags];
        out.extend_from_slice(&self.mtime.to_le_bytes());
        out.push(self.extra_flags);
        out.push(self.os);
        if let Some(extra) = &self.extra {
            out.extend_from_slice(&(extra.len() as u16).to_le_bytes());
            out.extend_from_slice(extra);
        }
        for s in [&self.file_name, &self.comment].into_iter().flatten() {
            out.extend_from_slice(s);
            out.push(0);
        }
        if let Some(crc) = self.header_crc {
            out.extend_from_slice(&crc.to_le_bytes());
        }
        out
    }
}

fn take<'a>(data: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], CompressError> {
    let s = data.get(*pos..*pos + n).ok_or(CompressError::CorruptStream("truncated gzip header"))?;
    *pos += n;
    Ok(s)
}

fn take_cstr(data: &[u8], pos: &mut usize) -> Result<Vec<u8>, CompressError> {
    let rest = &data[*pos..];
    let end = rest.iter().position(|&b| b == 0).ok_or(CompressError::CorruptStream("unterminated gzip header string"))?;
    *pos += end + 1;
    Ok(rest[..end].to_vec())
}

fn parse_header(data: &[u8], pos: &mut usize) -> Result<GzipHeader, CompressError> {
    let fixed = take(data, pos, 10)?;
    if fixed[..2] != [0x1f, 0x8b] {
        return Err(CompressError::CorruptStream("bad gzip magic"));
    }
    if fixed[2] != 8 {
        return Err(CompressError::UnknownFormat("gzip with a compression method other than deflate".into()));
    }
    let flags = fixed[3];
    let mut h = GzipHeader {
        mtime: u32::from_le_bytes(fixed[4..8].try_into().unwrap()),
        extra_flags: fixed[8],
        os: fixed[9],
        other_flags: flags & !(FHCRC | FEXTRA | FNAME | FCOMMENT),
        ..Default::default()
    };
    if flags & FEXTRA != 0 {
        let len = u16::from_le_bytes(take(data, pos, 2)?.try_into().unwrap()) as usize;
        h.extra = Some(take(data, pos, len)?.to_vec());
    }
    if flags & FNAME != 0 {
        h.file_name = Some(take_cstr(data, pos)?);
    }
    if flags & FCOMMENT != 0 {
        h.comment = Some(take_cstr(data, pos)?);
    }
    if flags & FHCRC != 0 {
        h.header_crc = Some(u16::from_le_bytes(take(data, pos, 2)?.try_into().unwrap()));
    }
    Ok(h)
}

/// Inflates one raw deflate stream at the start of `data`; returns the
/// payload and the number of compressed bytes consumed.
fn inflate_raw(data: &[u8]) -> Result<(Vec<u8>, usize), CompressError> {
    let mut d = Decompress::new(false);
    let mut out = Vec::with_capacity(data.len() * 3);
    loop {
        if out.capacity() - out.len() < 1 << 16 {
            out.reserve(out.len().max(1 << 16));
        }
        let before_in = d.total_in();
        let before_out = d.total_out();
        let status = d
            .decompress_vec(&data[d.total_in() as usize..], &mut out, FlushDecompress::None)
            .map_err(|_| CompressError::CorruptStream("invalid deflate data"))?;
        match status {
            Status::StreamEnd => return Ok((out, d.total_in() as usize)),
            _ if d.total_in() == before_in && d.total_out() == before_out && out.len() < out.capacity() => {
                return Err(CompressError::CorruptStream("truncated deflate data"));
            }
            _ => {}
        }
    }
}

/// Splits a gzip file into members and whatever follows the last one.
pub fn parse(data: &[u8]) -> Result<(Vec<RawMember>, Vec<u8>), CompressError> {
    let mut members = Vec::new();
    let mut pos = 0;
    loop {
        let mut p = pos;
        let header = parse_header(data, &mut p)?;
        let (payload, used) = inflate_raw(&data[p..])?;
        let body = data[p..p + used].to_vec();
        p += used;
        let f = take(data, &mut p, 8)?;
        let footer = GzipFooter {
            crc: u32::from_le_bytes(f[..4].try_into().unwrap()),
            isize: u32::from_le_bytes(f[4..].try_into().unwrap()),
        };
        if crc32fast::hash(&payload) != footer.crc {
            return Err(CompressError::CorruptStream("gzip CRC mismatch"));
        }
        if payload.len() as u32 != footer.isize {
            return Err(CompressError::CorruptStream("gzip size mismatch"));
        }
        members.push(RawMember { header, footer, body, payload });
        pos = p;
        if !data[pos..].starts_with(&[0x1f, 0x8b]) {
            return Ok((members, data[pos..].to_vec()));
        }
    }
}

pub fn footer_for(payload: &[u8]) -> GzipFooter {
    GzipFooter { crc: crc32fast::hash(payload), isize: payload.len() as u32 }
}

pub fn write_member(out: &mut Vec<u8>, header: &GzipHeader, body: &[u8], footer: GzipFooter) {
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(body);
    out.extend_from_slice(&footer.crc.to_le_bytes());
    out.extend_from_slice(&footer.isize.to_le_bytes());
}
