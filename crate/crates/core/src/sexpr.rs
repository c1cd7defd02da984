//! Reader and canonical writer for the s-expression text used by disassembly
//! descriptions.
//!
//! The grammar is deliberately small: lists, lowercase symbols, decimal
//! integers, and byte strings. Strings carry arbitrary bytes (tar member names
//! need not be UTF-8) and escape everything outside printable ASCII as
//! `\xNN`. `;` starts a comment running to the end of the line; comments are
//! accepted on input and never written.
//!
//! [`write_canonical`] separates list items with a single space and emits no
//! other whitespace, so equal values always serialize to identical bytes.

use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sexpr {
    Symbol(String),
    String(Vec<u8>),
    Integer(BigInt),
    List(Vec<Sexpr>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unbalanced parentheses at byte {0}")]
    UnbalancedParens(usize),
    #[error("invalid escape sequence at byte {0}")]
    InvalidEscape(usize),
    #[error("unexpected data after the top-level value at byte {0}")]
    TrailingGarbage(usize),
    #[error("unterminated string starting at byte {0}")]
    UnterminatedString(usize),
    #[error("invalid token {token:?} at byte {offset}")]
    InvalidToken { token: String, offset: usize },
    #[error("nesting deeper than {MAX_DEPTH} levels at byte {0}")]
    TooDeep(usize),
    #[error("empty input")]
    Empty,
}

/// Nesting limit for parsed input. Descriptions nest a handful of levels;
/// the cap keeps recursive drop and printing of parsed values bounded.
pub const MAX_DEPTH: usize = 4096;

/// True when `s` is usable as a symbol: non-empty, `a-z0-9-` only, and not
/// spelled like an integer.
pub fn is_valid_symbol(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
        && !looks_like_integer(s)
}

fn looks_like_integer(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

impl Sexpr {
    /// Panics if `name` is not a valid symbol; symbols are compile-time
    /// vocabulary in this crate.
    pub fn sym(name: &str) -> Sexpr {
        assert!(is_valid_symbol(name), "invalid symbol {name:?}");
        Sexpr::Symbol(name.to_string())
    }

    pub fn str(bytes: impl AsRef<[u8]>) -> Sexpr {
        Sexpr::String(bytes.as_ref().to_vec())
    }

    pub fn int(v: impl Into<BigInt>) -> Sexpr {
        Sexpr::Integer(v.into())
    }

    pub fn list(items: impl IntoIterator<Item = Sexpr>) -> Sexpr {
        Sexpr::List(items.into_iter().collect())
    }

    /// `(name v1 v2 ...)`
    pub fn tagged(name: &str, items: impl IntoIterator<Item = Sexpr>) -> Sexpr {
        let mut v = vec![Sexpr::sym(name)];
        v.extend(items);
        Sexpr::List(v)
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            Sexpr::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            Sexpr::String(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexpr]> {
        match self {
            Sexpr::List(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match self {
            Sexpr::Integer(i) => i.to_u64(),
            _ => None,
        }
    }

    /// For `(name ...)` forms, the head symbol.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_symbol()
    }

    /// For `(name ...)` forms, everything after the head.
    pub fn tail(&self) -> &[Sexpr] {
        match self.as_list() {
            Some([_, rest @ ..]) => rest,
            _ => &[],
        }
    }

    /// First child form of a tagged list whose head is `name`.
    pub fn find(&self, name: &str) -> Option<&Sexpr> {
        self.tail().iter().find(|c| c.head() == Some(name))
    }
}

impl fmt::Display for Sexpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&write_canonical(self)))
    }
}

pub fn write_canonical(value: &Sexpr) -> Vec<u8> {
    let mut out = Vec::new();
    write_into(value, &mut out);
    out
}

fn write_into(value: &Sexpr, out: &mut Vec<u8>) {
    match value {
        Sexpr::Symbol(s) => out.extend_from_slice(s.as_bytes()),
        Sexpr::Integer(i) => out.extend_from_slice(i.to_string().as_bytes()),
        Sexpr::String(bytes) => {
            out.push(b'"');
            for &b in bytes {
                match b {
                    b'"' => out.extend_from_slice(b"\\\""),
                    b'\\' => out.extend_from_slice(b"\\\\"),
                    0x20..=0x7e => out.push(b),
                    _ => out.extend_from_slice(format!("\\x{b:02x}").as_bytes()),
                }
            }
            out.push(b'"');
        }
        Sexpr::List(items) => {
            out.push(b'(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b' ');
                }
                write_into(item, out);
            }
            out.push(b')');
        }
    }
}

pub fn parse(input: &[u8]) -> Result<Sexpr, ParseError> {
    let mut p = Parser { input, pos: 0 };
    p.skip_ws();
    if p.pos >= input.len() {
        return Err(ParseError::Empty);
    }
    let value = p.value()?;
    p.skip_ws();
    if p.pos < input.len() {
        return Err(ParseError::TrailingGarbage(p.pos));
    }
    Ok(value)
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            match b {
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                b';' => {
                    while let Some(c) = self.peek() {
                        self.pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
    }

    fn value(&mut self) -> Result<Sexpr, ParseError> {
        // Iterative over nesting so adversarial depth cannot overflow the stack.
        let mut stack: Vec<(usize, Vec<Sexpr>)> = Vec::new();
        loop {
            self.skip_ws();
            let start = self.pos;
            let item = match self.peek() {
                None => return Err(ParseError::UnbalancedParens(start)),
                Some(b'(') => {
                    if stack.len() >= MAX_DEPTH {
                        return Err(ParseError::TooDeep(start));
                    }
                    self.pos += 1;
                    stack.push((start, Vec::new()));
                    continue;
                }
                Some(b')') => {
                    let Some((_, items)) = stack.pop() else {
                        return Err(ParseError::UnbalancedParens(start));
                    };
                    self.pos += 1;
                    Sexpr::List(items)
                }
                Some(b'"') => self.string()?,
                Some(_) => self.atom()?,
            };
            match stack.last_mut() {
                Some((_, items)) => items.push(item),
                None => return Ok(item),
            }
        }
    }

    fn string(&mut self) -> Result<Sexpr, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut bytes = Vec::new();
        loop {
            let Some(b) = self.peek() else {
                return Err(ParseError::UnterminatedString(start));
            };
            self.pos += 1;
            match b {
                b'"' => return Ok(Sexpr::String(bytes)),
                b'\\' => {
                    let esc_at = self.pos - 1;
                    match self.peek() {
                        Some(b'"') => bytes.push(b'"'),
                        Some(b'\\') => bytes.push(b'\\'),
                        Some(b'x') => {
                            let hex = self
                                .input
                                .get(self.pos + 1..self.pos + 3)
                                .ok_or(ParseError::InvalidEscape(esc_at))?;
                            let s = std::str::from_utf8(hex).map_err(|_| ParseError::InvalidEscape(esc_at))?;
                            if !s.bytes().all(|c| c.is_ascii_hexdigit()) {
                                return Err(ParseError::InvalidEscape(esc_at));
                            }
                            bytes.push(u8::from_str_radix(s, 16).map_err(|_| ParseError::InvalidEscape(esc_at))?);
                            self.pos += 2;
                        }
                        _ => return Err(ParseError::InvalidEscape(esc_at)),
                    }
                    self.pos += 1;
                }
                _ => bytes.push(b),
            }
        }
    }

    fn atom(&mut self) -> Result<Sexpr, ParseError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'(' | b')' | b'"' | b';') {
                break;
            }
            self.pos += 1;
        }
        let token = String::from_utf8_lossy(&self.input[start..self.pos]).into_owned();
        if looks_like_integer(&token) {
            let digits = token.strip_prefix('-').unwrap_or(&token);
            let canonical = digits == "0" || !digits.starts_with('0');
            if !canonical || token == "-0" {
                return Err(ParseError::InvalidToken { token, offset: start });
            }
            let value: BigInt = token.parse().map_err(|_| ParseError::InvalidToken {
                token: token.clone(),
                offset: start,
            })?;
            return Ok(Sexpr::Integer(value));
        }
        if is_valid_symbol(&token) {
            Ok(Sexpr::Symbol(token))
        } else {
            Err(ParseError::InvalidToken { token, offset: start })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_version_form() {
        let v = parse(b"(version 0)").unwrap();
        assert_eq!(v, Sexpr::list([Sexpr::sym("version"), Sexpr::int(0)]));
    }

    #[test]
    fn parses_empty_list() {
        assert_eq!(parse(b"()").unwrap(), Sexpr::List(vec![]));
    }

    #[test]
    fn parses_hex_escapes() {
        let v = parse(br#"(magic "\x00\x00")"#).unwrap();
        assert_eq!(v, Sexpr::list([Sexpr::sym("magic"), Sexpr::str([0u8, 0])]));
    }

    #[test]
    fn writes_flat_form() {
        let v = Sexpr::list([Sexpr::sym("mtime"), Sexpr::int(0)]);
        assert_eq!(write_canonical(&v), b"(mtime 0)");
        assert_eq!(write_canonical(&Sexpr::int(0)), b"0");
    }

    #[test]
    fn escape_table() {
        assert_eq!(write_canonical(&Sexpr::str([0u8, 1])), br#""\x00\x01""#);
        assert_eq!(write_canonical(&Sexpr::str(b"a\"b\\c")), br#""a\"b\\c""#);
        assert_eq!(write_canonical(&Sexpr::str([0x7fu8, 0xff, b'~', b' '])), br#""\x7f\xff~ ""#);
        // Re-emitting a parsed fixture reproduces it exactly.
        let fixture = br#"(header "\x00\x7f\xc3\xa9 \"q\" \\")"#;
        assert_eq!(write_canonical(&parse(fixture).unwrap()), fixture.to_vec());
    }

    #[test]
    fn comments_and_whitespace_are_ignored() {
        let text = b"(headers\n  (\"a\" (mode 493))\n  ;; many headers omitted\n  (\"b\"))  ;; trailing\n";
        let v = parse(text).unwrap();
        assert_eq!(write_canonical(&v), br#"(headers ("a" (mode 493)) ("b"))"#);
    }

    #[test]
    fn errors() {
        assert_eq!(parse(b"(a (b)"), Err(ParseError::UnbalancedParens(6)));
        assert_eq!(parse(b"a)"), Err(ParseError::TrailingGarbage(1)));
        assert_eq!(parse(b"(a) (b)"), Err(ParseError::TrailingGarbage(4)));
        assert!(matches!(parse(br#""\q""#), Err(ParseError::InvalidEscape(1))));
        assert!(matches!(parse(br#""\x4""#), Err(ParseError::InvalidEscape(1))));
        assert!(matches!(parse(b"007"), Err(ParseError::InvalidToken { .. })));
        assert!(matches!(parse(b"Foo"), Err(ParseError::InvalidToken { .. })));
        assert_eq!(parse(b"  ;; nothing\n"), Err(ParseError::Empty));
    }

    #[test]
    fn unbounded_integers() {
        let text = b"(big 123456789012345678901234567890 -42)";
        assert_eq!(write_canonical(&parse(text).unwrap()), text.to_vec());
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let nested = |depth| {
            let mut text = vec![b'('; depth];
            text.extend(vec![b')'; depth]);
            text
        };
        assert!(parse(&nested(MAX_DEPTH)).is_ok());
        assert_eq!(parse(&nested(100_000)), Err(ParseError::TooDeep(MAX_DEPTH)));
    }

    fn arb_symbol() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9-]{0,12}".prop_filter("valid", |s| is_valid_symbol(s))
    }

    fn arb_sexpr() -> impl Strategy<Value = Sexpr> {
        let leaf = prop_oneof![
            arb_symbol().prop_map(Sexpr::Symbol),
            proptest::collection::vec(any::<u8>(), 0..24).prop_map(Sexpr::String),
            any::<i64>().prop_map(|i| Sexpr::Integer(i.into())),
            any::<u128>().prop_map(|i| Sexpr::Integer(i.into())),
        ];
        leaf.prop_recursive(8, 256, 8, |inner| {
            proptest::collection::vec(inner, 0..8).prop_map(Sexpr::List)
        })
    }

    proptest! {
        #[test]
        fn round_trip(v in arb_sexpr()) {
            let text = write_canonical(&v);
            prop_assert_eq!(parse(&text).unwrap(), v.clone());
            prop_assert_eq!(write_canonical(&v), text);
        }
    }
}
