//! The 512-byte tar header block and its per-field representation.

use std::collections::HashMap;

use crate::sexpr::Sexpr;

pub const BLOCK: usize = 512;

/// A numeric header field. `raw` holds the on-disk bytes whenever they are
/// not the canonical encoding of `value` (zero-padded octal, one digit short
/// of the field width, then NUL).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Num {
    pub value: u64,
    pub raw: Option<Vec<u8>>,
}

impl Num {
    pub fn new(value: u64) -> Num {
        Num { value, raw: None }
    }

    /// Returns the field and whether its value could be decoded at all.
    pub fn decode(field: &[u8]) -> (Num, bool) {
        let decoded = decode_numeric(field);
        let value = decoded.unwrap_or(0);
        let raw = match canonical_octal(value, field.len()) {
            Some(c) if decoded.is_some() && c == field => None,
            _ => Some(field.to_vec()),
        };
        (Num { value, raw }, decoded.is_some())
    }

    fn encode(&self, width: usize) -> Result<Vec<u8>, String> {
        match &self.raw {
            Some(r) if r.len() == width => Ok(r.clone()),
            Some(r) => Err(format!("raw numeric field has {} bytes, expected {width}", r.len())),
            None => canonical_octal(self.value, width)
                .ok_or_else(|| format!("value {} does not fit a {width}-byte field", self.value)),
        }
    }
}

fn canonical_octal(value: u64, width: usize) -> Option<Vec<u8>> {
    let digits = format!("{:0w$o}", value, w = width - 1);
    if digits.len() > width - 1 {
        return None;
    }
    let mut out = digits.into_bytes();
    out.push(0);
    Some(out)
}

/// Octal text with optional leading spaces and NUL/space terminators, or
/// GNU base-256 for non-negative values.
fn decode_numeric(field: &[u8]) -> Option<u64> {
    if let Some(&first) = field.first() {
        if first == 0x80 {
            return field[1..].iter().try_fold(0u64, |acc, &b| acc.checked_mul(256)?.checked_add(b as u64));
        }
        if first & 0x80 != 0 {
            return None;
        }
    }
    let mut i = 0;
    while i < field.len() && field[i] == b' ' {
        i += 1;
    }
    let mut value: u64 = 0;
    while i < field.len() && (b'0'..=b'7').contains(&field[i]) {
        value = value.checked_mul(8)?.checked_add((field[i] - b'0') as u64)?;
        i += 1;
    }
    field[i..].iter().all(|&b| b == 0 || b == b' ').then_some(value)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TarHeaderFields {
    pub name: Vec<u8>,
    pub mode: Num,
    pub uid: Num,
    pub gid: Num,
    pub size: Num,
    pub mtime: Num,
    pub chksum: u64,
    /// The two bytes after six checksum digits, normally NUL and space.
    pub chksum_trailer: Vec<u8>,
    /// All eight checksum bytes, when they are not six octal digits.
    pub chksum_raw: Option<Vec<u8>>,
    pub typeflag: u8,
    pub linkname: Vec<u8>,
    pub magic: Vec<u8>,
    pub version: Vec<u8>,
    pub uname: Vec<u8>,
    pub gname: Vec<u8>,
    pub devmajor: Num,
    pub devminor: Num,
    pub prefix: Vec<u8>,
    /// Bytes 500..512, trailing NULs trimmed.
    pub header_padding: Vec<u8>,
    /// The zero padding after member data, verbatim, if any of it is nonzero.
    pub data_padding: Vec<u8>,
}

impl TarHeaderFields {
    /// Values assumed for fields a description does not mention at all.
    pub fn baseline() -> TarHeaderFields {
        TarHeaderFields {
            name: Vec::new(),
            mode: Num::new(0o644),
            uid: Num::new(0),
            gid: Num::new(0),
            size: Num::new(0),
            mtime: Num::new(0),
            chksum: 0,
            chksum_trailer: b"\0 ".to_vec(),
            chksum_raw: None,
            typeflag: b'0',
            linkname: Vec::new(),
            magic: b"ustar\0".to_vec(),
            version: b"00".to_vec(),
            uname: Vec::new(),
            gname: Vec::new(),
            devmajor: Num::new(0),
            devminor: Num::new(0),
            prefix: Vec::new(),
            header_padding: Vec::new(),
            data_padding: Vec::new(),
        }
    }

    pub fn is_ustar(&self) -> bool {
        self.magic == b"ustar\0"
    }
}

fn trim_nuls(b: &[u8]) -> Vec<u8> {
    let end = b.iter().rposition(|&c| c != 0).map_or(0, |p| p + 1);
    b[..end].to_vec()
}

pub fn unsigned_checksum(block: &[u8]) -> u64 {
    block.iter().enumerate().map(|(i, &b)| if (148..156).contains(&i) { 32 } else { b as u64 }).sum()
}

fn signed_checksum(block: &[u8]) -> i64 {
    block.iter().enumerate().map(|(i, &b)| if (148..156).contains(&i) { 32 } else { b as i8 as i64 }).sum()
}

/// Decodes one header block. Fails when the checksum does not verify or the
/// size field is unreadable; either means this is not a tar header.
pub fn decode_block(block: &[u8]) -> Result<TarHeaderFields, &'static str> {
    debug_assert_eq!(block.len(), BLOCK);
    let ck = &block[148..156];
    let (chksum, chksum_trailer, chksum_raw) = if ck[..6].iter().all(|b| (b'0'..=b'7').contains(b)) {
        let v = ck[..6].iter().fold(0u64, |a, &b| a * 8 + (b - b'0') as u64);
        (v, ck[6..].to_vec(), None)
    } else {
        let Some(v) = decode_numeric(ck) else { return Err("unreadable checksum") };
        (v, b"\0 ".to_vec(), Some(ck.to_vec()))
    };
    if chksum != unsigned_checksum(block) && chksum as i64 != signed_checksum(block) {
        return Err("checksum mismatch");
    }
    let (size, size_ok) = Num::decode(&block[124..136]);
    if !size_ok {
        return Err("unreadable size field");
    }
    Ok(TarHeaderFields {
        name: trim_nuls(&block[0..100]),
        mode: Num::decode(&block[100..108]).0,
        uid: Num::decode(&block[108..116]).0,
        gid: Num::decode(&block[116..124]).0,
        size,
        mtime: Num::decode(&block[136..148]).0,
        chksum,
        chksum_trailer,
        chksum_raw,
        typeflag: block[156],
        linkname: trim_nuls(&block[157..257]),
        magic: block[257..263].to_vec(),
        version: block[263..265].to_vec(),
        uname: trim_nuls(&block[265..297]),
        gname: trim_nuls(&block[297..329]),
        devmajor: Num::decode(&block[329..337]).0,
        devminor: Num::decode(&block[337..345]).0,
        prefix: trim_nuls(&block[345..500]),
        header_padding: trim_nuls(&block[500..512]),
        data_padding: Vec::new(),
    })
}

pub fn encode_block(h: &TarHeaderFields) -> Result<[u8; BLOCK], String> {
    let mut b = [0u8; BLOCK];
    let mut put = |range: std::ops::Range<usize>, bytes: &[u8], what: &str| -> Result<(), String> {
        if bytes.len() > range.len() {
            return Err(format!("{what} is {} bytes, field holds {}", bytes.len(), range.len()));
        }
        b[range.start..range.start + bytes.len()].copy_from_slice(bytes);
        Ok(())
    };
    put(0..100, &h.name, "name")?;
    put(100..108, &h.mode.encode(8)?, "mode")?;
    put(108..116, &h.uid.encode(8)?, "uid")?;
    put(116..124, &h.gid.encode(8)?, "gid")?;
    put(124..136, &h.size.encode(12)?, "size")?;
    put(136..148, &h.mtime.encode(12)?, "mtime")?;
    match &h.chksum_raw {
        Some(raw) if raw.len() == 8 => put(148..156, raw, "chksum")?,
        Some(_) => return Err("raw chksum must be 8 bytes".into()),
        None => {
            if h.chksum > 0o777777 || h.chksum_trailer.len() != 2 {
                return Err("chksum does not fit six digits plus a two-byte trailer".into());
            }
            let mut ck = format!("{:06o}", h.chksum).into_bytes();
            ck.extend_from_slice(&h.chksum_trailer);
            put(148..156, &ck, "chksum")?;
        }
    }
    put(156..157, &[h.typeflag], "typeflag")?;
    put(157..257, &h.linkname, "linkname")?;
    put(257..263, &h.magic, "magic")?;
    put(263..265, &h.version, "version")?;
    put(265..297, &h.uname, "uname")?;
    put(297..329, &h.gname, "gname")?;
    put(329..337, &h.devmajor.encode(8)?, "devmajor")?;
    put(337..345, &h.devminor.encode(8)?, "devminor")?;
    put(345..500, &h.prefix, "prefix")?;
    put(500..512, &h.header_padding, "header-padding")?;
    Ok(b)
}

/// Header fields that take part in defaulting. The member name and checksum
/// value are always stored per member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Mode,
    Uid,
    Gid,
    Size,
    Mtime,
    ChksumTrailer,
    Typeflag,
    Linkname,
    Magic,
    Version,
    Uname,
    Gname,
    Devmajor,
    Devminor,
    Prefix,
    HeaderPadding,
    DataPadding,
}

/// Description order, which follows the header layout.
pub const FIELDS: [Field; 17] = [
    Field::Mode,
    Field::Uid,
    Field::Gid,
    Field::Size,
    Field::Mtime,
    Field::ChksumTrailer,
    Field::Typeflag,
    Field::Linkname,
    Field::Magic,
    Field::Version,
    Field::Uname,
    Field::Gname,
    Field::Devmajor,
    Field::Devminor,
    Field::Prefix,
    Field::HeaderPadding,
    Field::DataPadding,
];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FieldValue {
    Num(Num),
    Bytes(Vec<u8>),
    Byte(u8),
}

impl Field {
    pub fn symbol(self) -> &'static str {
        match self {
            Field::Mode => "mode",
            Field::Uid => "uid",
            Field::Gid => "gid",
            Field::Size => "size",
            Field::Mtime => "mtime",
            Field::ChksumTrailer => "chksum",
            Field::Typeflag => "typeflag",
            Field::Linkname => "linkname",
            Field::Magic => "magic",
            Field::Version => "version",
            Field::Uname => "uname",
            Field::Gname => "gname",
            Field::Devmajor => "devmajor",
            Field::Devminor => "devminor",
            Field::Prefix => "prefix",
            Field::HeaderPadding => "header-padding",
            Field::DataPadding => "data-padding",
        }
    }

    fn from_symbol(s: &str) -> Option<Field> {
        FIELDS.iter().copied().find(|f| f.symbol() == s)
    }

    pub fn get(self, h: &TarHeaderFields) -> FieldValue {
        use FieldValue::*;
        match self {
            Field::Mode => Num(h.mode.clone()),
            Field::Uid => Num(h.uid.clone()),
            Field::Gid => Num(h.gid.clone()),
            Field::Size => Num(h.size.clone()),
            Field::Mtime => Num(h.mtime.clone()),
            Field::ChksumTrailer => Bytes(h.chksum_trailer.clone()),
            Field::Typeflag => Byte(h.typeflag),
            Field::Linkname => Bytes(h.linkname.clone()),
            Field::Magic => Bytes(h.magic.clone()),
            Field::Version => Bytes(h.version.clone()),
            Field::Uname => Bytes(h.uname.clone()),
            Field::Gname => Bytes(h.gname.clone()),
            Field::Devmajor => Num(h.devmajor.clone()),
            Field::Devminor => Num(h.devminor.clone()),
            Field::Prefix => Bytes(h.prefix.clone()),
            Field::HeaderPadding => Bytes(h.header_padding.clone()),
            Field::DataPadding => Bytes(h.data_padding.clone()),
        }
    }

    pub fn set(self, h: &mut TarHeaderFields, v: FieldValue) -> Result<(), String> {
        use FieldValue as V;
        match (self, v) {
            (Field::Mode, V::Num(n)) => h.mode = n,
            (Field::Uid, V::Num(n)) => h.uid = n,
            (Field::Gid, V::Num(n)) => h.gid = n,
            (Field::Size, V::Num(n)) => h.size = n,
            (Field::Mtime, V::Num(n)) => h.mtime = n,
            (Field::Devmajor, V::Num(n)) => h.devmajor = n,
            (Field::Devminor, V::Num(n)) => h.devminor = n,
            (Field::ChksumTrailer, V::Bytes(b)) => h.chksum_trailer = b,
            (Field::Typeflag, V::Byte(b)) => h.typeflag = b,
            (Field::Linkname, V::Bytes(b)) => h.linkname = b,
            (Field::Magic, V::Bytes(b)) => h.magic = b,
            (Field::Version, V::Bytes(b)) => h.version = b,
            (Field::Uname, V::Bytes(b)) => h.uname = b,
            (Field::Gname, V::Bytes(b)) => h.gname = b,
            (Field::Prefix, V::Bytes(b)) => h.prefix = b,
            (Field::HeaderPadding, V::Bytes(b)) => h.header_padding = b,
            (Field::DataPadding, V::Bytes(b)) => h.data_padding = b,
            (f, _) => return Err(format!("wrong value kind for {}", f.symbol())),
        }
        Ok(())
    }
}

/// Per field, the most frequent value across `members`; ties go to the value
/// seen first. Name and checksum value are taken from the baseline.
pub fn compute_default_header(members: &[TarHeaderFields]) -> TarHeaderFields {
    let mut out = TarHeaderFields::baseline();
    if members.is_empty() {
        return out;
    }
    for field in FIELDS {
        let mut counts: HashMap<FieldValue, (usize, usize)> = HashMap::new();
        for (i, m) in members.iter().enumerate() {
            counts.entry(field.get(m)).or_insert((0, i)).0 += 1;
        }
        let (best, _) = counts
            .into_iter()
            .max_by(|(_, (ca, fa)), (_, (cb, fb))| ca.cmp(cb).then(fb.cmp(fa)))
            .expect("non-empty");
        field.set(&mut out, best).expect("same field kind");
    }
    out
}

/// Fields listed in a default header even when they equal the baseline.
const ALWAYS_IN_DEFAULTS: [Field; 5] =
    [Field::ChksumTrailer, Field::Typeflag, Field::Magic, Field::Version, Field::DataPadding];

fn num_form(sym: &str, n: &Num) -> Sexpr {
    let mut items = vec![Sexpr::int(n.value)];
    if let Some(raw) = &n.raw {
        items.push(Sexpr::tagged("raw", [Sexpr::str(raw)]));
    }
    Sexpr::tagged(sym, items)
}

fn field_form(field: Field, v: &FieldValue) -> Sexpr {
    match v {
        FieldValue::Num(n) => num_form(field.symbol(), n),
        FieldValue::Byte(b) => Sexpr::tagged(field.symbol(), [Sexpr::int(*b)]),
        FieldValue::Bytes(b) if field == Field::ChksumTrailer => {
            Sexpr::tagged("chksum", [Sexpr::tagged("trailer", [Sexpr::str(b)])])
        }
        FieldValue::Bytes(b) => Sexpr::tagged(field.symbol(), [Sexpr::str(b)]),
    }
}

/// `(default-header ...)`: fields that differ from the baseline, plus the
/// handful that are always spelled out.
pub fn default_header_to_sexpr(d: &TarHeaderFields) -> Sexpr {
    let base = TarHeaderFields::baseline();
    let items = FIELDS.iter().filter_map(|&f| {
        let v = f.get(d);
        (ALWAYS_IN_DEFAULTS.contains(&f) || v != f.get(&base)).then(|| field_form(f, &v))
    });
    Sexpr::tagged("default-header", items)
}

/// `("name" ...)`: the fields of `h` that differ from `d`. The checksum is
/// always present.
pub fn member_to_sexpr(h: &TarHeaderFields, d: &TarHeaderFields, extra: Option<Sexpr>) -> Sexpr {
    let mut items = vec![Sexpr::str(&h.name)];
    for f in FIELDS {
        if f == Field::ChksumTrailer {
            let mut ck = vec![Sexpr::int(h.chksum)];
            if h.chksum_trailer != d.chksum_trailer {
                ck.push(Sexpr::tagged("trailer", [Sexpr::str(&h.chksum_trailer)]));
            }
            if let Some(raw) = &h.chksum_raw {
                ck.push(Sexpr::tagged("raw", [Sexpr::str(raw)]));
            }
            items.push(Sexpr::tagged("chksum", ck));
            continue;
        }
        let v = f.get(h);
        if v != f.get(d) {
            items.push(field_form(f, &v));
        }
    }
    items.extend(extra);
    Sexpr::List(items)
}

fn parse_num(form: &Sexpr) -> Result<Num, String> {
    let mut value = None;
    let mut raw = None;
    for item in form.tail() {
        match item {
            Sexpr::Integer(_) => value = Some(item.as_u64().ok_or("numeric field out of range")?),
            _ if item.head() == Some("raw") => {
                raw = Some(item.tail().first().and_then(Sexpr::as_bytes).ok_or("raw takes a string")?.to_vec())
            }
            _ => return Err(format!("unexpected item in {}", form.head().unwrap_or("?"))),
        }
    }
    Ok(Num { value: value.ok_or("numeric field without a value")?, raw })
}

fn single_bytes(form: &Sexpr) -> Result<Vec<u8>, String> {
    match form.tail() {
        [v] => v.as_bytes().map(<[u8]>::to_vec).ok_or_else(|| format!("{} takes a string", form.head().unwrap())),
        _ => Err(format!("{} takes exactly one string", form.head().unwrap_or("?"))),
    }
}

/// Applies one `(field ...)` form. Returns true for a `chksum` form, which
/// in member position must carry the checksum value.
fn apply_form(h: &mut TarHeaderFields, form: &Sexpr) -> Result<bool, String> {
    let head = form.head().ok_or("header field must be a tagged list")?;
    if head == "chksum" {
        let mut saw_value = false;
        for item in form.tail() {
            match item {
                Sexpr::Integer(_) => {
                    h.chksum = item.as_u64().ok_or("chksum out of range")?;
                    saw_value = true;
                }
                _ if item.head() == Some("trailer") => h.chksum_trailer = single_bytes(item)?,
                _ if item.head() == Some("raw") => h.chksum_raw = Some(single_bytes(item)?),
                _ => return Err("unexpected item in chksum".into()),
            }
        }
        return Ok(saw_value);
    }
    let field = Field::from_symbol(head).ok_or_else(|| format!("unknown header field {head}"))?;
    let value = match field.get(h) {
        FieldValue::Num(_) => FieldValue::Num(parse_num(form)?),
        FieldValue::Byte(_) => {
            let b = form.tail().first().and_then(Sexpr::as_u64).filter(|&v| v <= 255);
            FieldValue::Byte(b.ok_or("typeflag must be an integer 0..255")? as u8)
        }
        FieldValue::Bytes(_) => FieldValue::Bytes(single_bytes(form)?),
    };
    field.set(h, value)?;
    Ok(false)
}

pub fn default_header_from_sexpr(form: &Sexpr) -> Result<TarHeaderFields, String> {
    if form.head() != Some("default-header") {
        return Err("expected default-header".into());
    }
    let mut h = TarHeaderFields::baseline();
    for f in form.tail() {
        apply_form(&mut h, f)?;
    }
    Ok(h)
}

/// Parses a member entry against the defaults. Forms not naming a header
/// field are returned for the caller to interpret.
pub fn member_from_sexpr<'a>(
    form: &'a Sexpr,
    d: &TarHeaderFields,
) -> Result<(TarHeaderFields, Vec<&'a Sexpr>), String> {
    let items = form.as_list().ok_or("member entry must be a list")?;
    let (name, rest) = items.split_first().ok_or("empty member entry")?;
    let mut h = d.clone();
    h.name = name.as_bytes().ok_or("member entry must start with its name")?.to_vec();
    h.chksum_raw = None;
    let mut saw_chksum = false;
    let mut others = Vec::new();
    for f in rest {
        match f.head() {
            Some("data") => others.push(f),
            _ => saw_chksum |= apply_form(&mut h, f)?,
        }
    }
    if !saw_chksum {
        return Err(format!("member {:?} lacks a chksum", String::from_utf8_lossy(&h.name)));
    }
    Ok((h, others))
}
