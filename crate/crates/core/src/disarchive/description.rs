//! Descriptions as s-expressions.
//!
//! ```text
//! (disarchive (version 0)
//!   (gzip-member (name ..) (digest (sha256 ..)) (header ..) (footer ..)
//!     (compressor gnu-best-rsync)
//!     (input (tarball (name ..) (digest (sha256 ..)) (default-header ..)
//!              (headers ..) (padding 1024)
//!              (input (directory-ref (version 0) (name ..)
//!                       (addresses (swhid ..)) (digest (sha256 ..))))))))
//! ```

use super::{CompressedLayer, ContentRef, Description, DirectoryRef, DisarchiveError, Layer, TarballLayer, FORMAT_VERSION};
use crate::compress::{CompressionSpec, CompressorId, GzipFooter, GzipHeader, GzipMemberSpec, XzCheck};
use crate::nar::NarDigest;
use crate::sexpr::{self, Sexpr};
use crate::swhid::Swhid;
use crate::tar::{self, MemberSpec, TarballSpec};

type Result<T> = std::result::Result<T, DisarchiveError>;

fn bad(msg: impl Into<String>) -> DisarchiveError {
    DisarchiveError::MalformedDescription(msg.into())
}

fn field<'a>(form: &'a Sexpr, name: &str) -> Result<&'a Sexpr> {
    form.find(name).ok_or_else(|| bad(format!("{} lacks ({name} ...)", form.head().unwrap_or("form"))))
}

fn single<'a>(form: &'a Sexpr, name: &str) -> Result<&'a Sexpr> {
    match field(form, name)?.tail() {
        [v] => Ok(v),
        _ => Err(bad(format!("({name} ...) takes one value"))),
    }
}

fn bytes_of(form: &Sexpr, name: &str) -> Result<Vec<u8>> {
    single(form, name)?.as_bytes().map(<[u8]>::to_vec).ok_or_else(|| bad(format!("({name} ...) takes a string")))
}

fn opt_bytes(form: &Sexpr, name: &str) -> Result<Option<Vec<u8>>> {
    form.find(name).map(|_| bytes_of(form, name)).transpose()
}

fn uint(form: &Sexpr, name: &str, max: u64) -> Result<u64> {
    single(form, name)?
        .as_u64()
        .filter(|&v| v <= max)
        .ok_or_else(|| bad(format!("({name} ...) takes an integer up to {max}")))
}

fn symbol_of<'a>(form: &'a Sexpr, name: &str) -> Result<&'a str> {
    single(form, name)?.as_symbol().ok_or_else(|| bad(format!("({name} ...) takes a symbol")))
}

fn sha256_form(d: &[u8; 32]) -> Sexpr {
    Sexpr::tagged("digest", [Sexpr::tagged("sha256", [Sexpr::str(hex::encode(d))])])
}

fn sha256_of(form: &Sexpr) -> Result<[u8; 32]> {
    let hex_text = bytes_of(field(form, "digest")?, "sha256")?;
    let mut out = [0u8; 32];
    hex::decode_to_slice(&hex_text, &mut out).map_err(|_| bad("sha256 digest must be 64 hex digits"))?;
    Ok(out)
}

fn name_form(name: &[u8]) -> Sexpr {
    Sexpr::tagged("name", [Sexpr::str(name)])
}

fn addresses_form(addresses: &[Swhid]) -> Sexpr {
    Sexpr::tagged("addresses", addresses.iter().map(|s| Sexpr::tagged("swhid", [Sexpr::str(s.to_string())])))
}

fn addresses_of(form: &Sexpr) -> Result<Vec<Swhid>> {
    field(form, "addresses")?
        .tail()
        .iter()
        .filter(|a| a.head() == Some("swhid"))
        .map(|a| {
            let text = a.tail().first().and_then(Sexpr::as_bytes).ok_or_else(|| bad("swhid takes a string"))?;
            std::str::from_utf8(text)
                .ok()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(format!("bad swhid {:?}", String::from_utf8_lossy(text))))
        })
        .collect()
}

fn check_version(form: &Sexpr) -> Result<()> {
    match uint(form, "version", u64::MAX)? {
        FORMAT_VERSION => Ok(()),
        v => Err(bad(format!("unsupported {} version {v}", form.head().unwrap_or("form")))),
    }
}

fn gzip_header_form(h: &GzipHeader) -> Sexpr {
    let mut items = vec![
        Sexpr::tagged("mtime", [Sexpr::int(h.mtime)]),
        Sexpr::tagged("extra-flags", [Sexpr::int(h.extra_flags)]),
        Sexpr::tagged("os", [Sexpr::int(h.os)]),
    ];
    if h.other_flags != 0 {
        items.push(Sexpr::tagged("flags", [Sexpr::int(h.other_flags)]));
    }
    for (name, v) in [("extra", &h.extra), ("file-name", &h.file_name), ("comment", &h.comment)] {
        if let Some(v) = v {
            items.push(Sexpr::tagged(name, [Sexpr::str(v)]));
        }
    }
    if let Some(crc) = h.header_crc {
        items.push(Sexpr::tagged("header-crc", [Sexpr::int(crc)]));
    }
    Sexpr::tagged("header", items)
}

fn gzip_header_of(form: &Sexpr) -> Result<GzipHeader> {
    let h = field(form, "header")?;
    Ok(GzipHeader {
        mtime: uint(h, "mtime", u32::MAX as u64)? as u32,
        extra_flags: uint(h, "extra-flags", 255)? as u8,
        os: uint(h, "os", 255)? as u8,
        other_flags: h.find("flags").map(|_| uint(h, "flags", 255)).transpose()?.unwrap_or(0) as u8,
        extra: opt_bytes(h, "extra")?,
        file_name: opt_bytes(h, "file-name")?,
        comment: opt_bytes(h, "comment")?,
        header_crc: h.find("header-crc").map(|_| uint(h, "header-crc", 0xffff)).transpose()?.map(|v| v as u16),
    })
}

fn gzip_footer_form(f: &GzipFooter) -> Sexpr {
    Sexpr::tagged(
        "footer",
        [Sexpr::tagged("crc", [Sexpr::int(f.crc)]), Sexpr::tagged("isize", [Sexpr::int(f.isize)])],
    )
}

fn gzip_footer_of(form: &Sexpr) -> Result<GzipFooter> {
    let f = field(form, "footer")?;
    Ok(GzipFooter { crc: uint(f, "crc", u32::MAX as u64)? as u32, isize: uint(f, "isize", u32::MAX as u64)? as u32 })
}

fn compressor_form(id: CompressorId) -> Sexpr {
    Sexpr::tagged("compressor", [Sexpr::sym(&id.to_string())])
}

fn compressor_of(form: &Sexpr) -> Result<CompressorId> {
    let text = symbol_of(form, "compressor")?;
    text.parse().map_err(|_| bad(format!("unknown compressor {text}")))
}

fn push_trailing(items: &mut Vec<Sexpr>, trailing: &[u8]) {
    if !trailing.is_empty() {
        items.push(Sexpr::tagged("trailing", [Sexpr::str(trailing)]));
    }
}

fn layer_to_sexpr(layer: &Layer) -> Sexpr {
    match layer {
        Layer::Compressed(c) => compressed_to_sexpr(c),
        Layer::Tarball(t) => tarball_to_sexpr(t),
        Layer::Content(c) => Sexpr::tagged(
            "content-ref",
            [
                Sexpr::tagged("version", [Sexpr::int(FORMAT_VERSION)]),
                name_form(&c.name),
                addresses_form(&c.addresses),
                sha256_form(&c.digest_sha256),
            ],
        ),
    }
}

fn compressed_to_sexpr(c: &CompressedLayer) -> Sexpr {
    let mut items = vec![name_form(&c.name), sha256_form(&c.digest_sha256)];
    let head = match &c.spec {
        CompressionSpec::Gzip { members, trailing } => {
            if let [m] = &members[..] {
                items.push(gzip_header_form(&m.header));
                items.push(gzip_footer_form(&m.footer));
                items.push(compressor_form(m.compressor));
            } else {
                items.push(Sexpr::tagged(
                    "members",
                    members.iter().map(|m| {
                        Sexpr::tagged(
                            "member",
                            [gzip_header_form(&m.header), gzip_footer_form(&m.footer), compressor_form(m.compressor)],
                        )
                    }),
                ));
            }
            push_trailing(&mut items, trailing);
            if members.len() == 1 {
                "gzip-member"
            } else {
                "gzip-members"
            }
        }
        CompressionSpec::Bzip2 { compressor, trailing } => {
            items.push(compressor_form(*compressor));
            push_trailing(&mut items, trailing);
            "bzip2-stream"
        }
        CompressionSpec::Xz { compressor, check, trailing } => {
            items.push(compressor_form(*compressor));
            items.push(Sexpr::tagged("check", [Sexpr::sym(check.symbol())]));
            push_trailing(&mut items, trailing);
            "xz-stream"
        }
    };
    items.push(Sexpr::tagged("input", [layer_to_sexpr(&c.input)]));
    Sexpr::tagged(head, items)
}

fn tarball_to_sexpr(t: &TarballLayer) -> Sexpr {
    let s = &t.spec;
    let d = &s.default_header;
    let headers = s.members.iter().map(|m| {
        let data = m.inline_data.as_ref().map(|b| Sexpr::tagged("data", [Sexpr::str(b)]));
        tar::member_to_sexpr(&m.header, d, data)
    });
    let mut items = vec![
        name_form(&s.name),
        sha256_form(&s.digest_sha256),
        tar::default_header_to_sexpr(d),
        Sexpr::tagged("headers", headers),
        Sexpr::tagged("padding", [Sexpr::int(s.padding)]),
    ];
    if let Some(raw) = &s.padding_raw {
        items.push(Sexpr::tagged("padding-bytes", [Sexpr::str(raw)]));
    }
    let r = &t.input;
    let dref = Sexpr::tagged(
        "directory-ref",
        [
            Sexpr::tagged("version", [Sexpr::int(FORMAT_VERSION)]),
            name_form(&r.name),
            addresses_form(&r.addresses),
            Sexpr::tagged("digest", [Sexpr::tagged("sha256", [Sexpr::str(r.digest.to_hex())])]),
        ],
    );
    items.push(Sexpr::tagged("input", [dref]));
    Sexpr::tagged("tarball", items)
}

fn input_of(form: &Sexpr) -> Result<&Sexpr> {
    single(form, "input")
}

fn layer_from_sexpr(form: &Sexpr, depth: usize) -> Result<Layer> {
    match form.head() {
        Some("gzip-member" | "gzip-members" | "bzip2-stream" | "xz-stream") if depth == 0 => {
            compressed_from_sexpr(form).map(|c| Layer::Compressed(Box::new(c)))
        }
        Some("gzip-member" | "gzip-members" | "bzip2-stream" | "xz-stream") => {
            Err(bad("nested compression layers are not supported"))
        }
        Some("tarball") => tarball_from_sexpr(form).map(|t| Layer::Tarball(Box::new(t))),
        Some("content-ref") => {
            check_version(form)?;
            Ok(Layer::Content(ContentRef {
                name: bytes_of(form, "name")?,
                addresses: addresses_of(form)?,
                digest_sha256: sha256_of(form)?,
            }))
        }
        Some(other) => Err(bad(format!("unexpected layer {other}"))),
        None => Err(bad("layer must be a tagged list")),
    }
}

fn trailing_of(form: &Sexpr) -> Result<Vec<u8>> {
    Ok(opt_bytes(form, "trailing")?.unwrap_or_default())
}

fn compressed_from_sexpr(form: &Sexpr) -> Result<CompressedLayer> {
    let spec = match form.head() {
        Some("gzip-member") => CompressionSpec::Gzip {
            members: vec![GzipMemberSpec {
                header: gzip_header_of(form)?,
                footer: gzip_footer_of(form)?,
                compressor: compressor_of(form)?,
            }],
            trailing: trailing_of(form)?,
        },
        Some("gzip-members") => {
            let members = field(form, "members")?
                .tail()
                .iter()
                .map(|m| {
                    Ok(GzipMemberSpec { header: gzip_header_of(m)?, footer: gzip_footer_of(m)?, compressor: compressor_of(m)? })
                })
                .collect::<Result<Vec<_>>>()?;
            if members.len() < 2 {
                return Err(bad("gzip-members needs at least two members"));
            }
            CompressionSpec::Gzip { members, trailing: trailing_of(form)? }
        }
        Some("bzip2-stream") => CompressionSpec::Bzip2 { compressor: compressor_of(form)?, trailing: trailing_of(form)? },
        _ => {
            let check = symbol_of(form, "check")?;
            CompressionSpec::Xz {
                compressor: compressor_of(form)?,
                check: XzCheck::from_symbol(check).ok_or_else(|| bad(format!("unknown xz check {check}")))?,
                trailing: trailing_of(form)?,
            }
        }
    };
    let family_ok = match &spec {
        CompressionSpec::Gzip { members, .. } => members.iter().all(|m| m.compressor.format() == crate::compress::Format::Gzip),
        CompressionSpec::Bzip2 { compressor, .. } | CompressionSpec::Xz { compressor, .. } => {
            Some(compressor.format()) == spec_format(&spec)
        }
    };
    if !family_ok {
        return Err(bad(format!("compressor does not match {}", form.head().unwrap())));
    }
    Ok(CompressedLayer {
        name: bytes_of(form, "name")?,
        digest_sha256: sha256_of(form)?,
        spec,
        input: layer_from_sexpr(input_of(form)?, 1)?,
    })
}

fn spec_format(spec: &CompressionSpec) -> Option<crate::compress::Format> {
    use crate::compress::Format;
    Some(match spec {
        CompressionSpec::Gzip { .. } => Format::Gzip,
        CompressionSpec::Bzip2 { .. } => Format::Bzip2,
        CompressionSpec::Xz { .. } => Format::Xz,
    })
}

fn tarball_from_sexpr(form: &Sexpr) -> Result<TarballLayer> {
    let default_header = tar::default_header_from_sexpr(field(form, "default-header")?).map_err(bad)?;
    let members = field(form, "headers")?
        .tail()
        .iter()
        .map(|m| {
            let (header, others) = tar::member_from_sexpr(m, &default_header).map_err(bad)?;
            let inline_data = match &others[..] {
                [] => None,
                [d] => Some(d.tail().first().and_then(Sexpr::as_bytes).ok_or_else(|| bad("data takes a string"))?.to_vec()),
                _ => return Err(bad("member has more than one data form")),
            };
            Ok(MemberSpec { header, inline_data })
        })
        .collect::<Result<Vec<_>>>()?;
    let input = input_of(form)?;
    if input.head() != Some("directory-ref") {
        return Err(bad("tarball input must be a directory-ref"));
    }
    check_version(input)?;
    let hex_digest = bytes_of(field(input, "digest")?, "sha256")?;
    let digest = std::str::from_utf8(&hex_digest)
        .ok()
        .and_then(NarDigest::from_hex)
        .ok_or_else(|| bad("directory digest must be 64 hex digits"))?;
    let dref = DirectoryRef { name: bytes_of(input, "name")?, addresses: addresses_of(input)?, digest };
    let spec = TarballSpec {
        name: bytes_of(form, "name")?,
        digest_sha256: sha256_of(form)?,
        default_header,
        members,
        padding: uint(form, "padding", u64::MAX)?,
        padding_raw: opt_bytes(form, "padding-bytes")?,
        root: dref.name.clone(),
    };
    Ok(TarballLayer { spec, input: dref })
}

impl Description {
    pub fn to_sexpr(&self) -> Sexpr {
        Sexpr::tagged(
            "disarchive",
            [Sexpr::tagged("version", [Sexpr::int(FORMAT_VERSION)]), layer_to_sexpr(&self.root)],
        )
    }

    pub fn from_sexpr(form: &Sexpr) -> Result<Description> {
        if form.head() != Some("disarchive") {
            return Err(bad("expected (disarchive ...)"));
        }
        check_version(form)?;
        let layers: Vec<&Sexpr> = form.tail().iter().filter(|f| f.head() != Some("version")).collect();
        match &layers[..] {
            [layer] => Ok(Description { root: layer_from_sexpr(layer, 0)? }),
            _ => Err(bad("a description holds exactly one top layer")),
        }
    }

    /// Canonical text, newline-terminated.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = sexpr::write_canonical(&self.to_sexpr());
        out.push(b'\n');
        out
    }

    pub fn from_bytes(text: &[u8]) -> Result<Description> {
        let form = sexpr::parse(text).map_err(|e| bad(e.to_string()))?;
        Description::from_sexpr(&form)
    }
}
