//! The base32 dialect used for store paths and package hashes. It omits
//! `e o u t` and emits the most significant 5-bit group first.

const ALPHABET: &[u8; 32] = b"0123456789abcdfghijklmnpqrsvwxyz";

pub fn encoded_len(byte_len: usize) -> usize {
    if byte_len == 0 {
        0
    } else {
        (byte_len * 8 - 1) / 5 + 1
    }
}

pub fn encode(bytes: &[u8]) -> String {
    let len = encoded_len(bytes.len());
    (0..len)
        .rev()
        .map(|n| {
            let b = n * 5;
            let i = b / 8;
            let j = b % 8;
            let low = bytes[i] as u16 >> j;
            let high = if i + 1 < bytes.len() { (bytes[i + 1] as u16) << (8 - j) } else { 0 };
            ALPHABET[((low | high) & 0x1f) as usize] as char
        })
        .collect()
}

/// Decode into exactly `byte_len` bytes. Rejects unknown characters, a wrong
/// length, and set bits beyond `byte_len`.
pub fn decode(text: &str, byte_len: usize) -> Option<Vec<u8>> {
    if text.len() != encoded_len(byte_len) {
        return None;
    }
    let mut out = vec![0u8; byte_len];
    for (n, c) in text.bytes().rev().enumerate() {
        let digit = ALPHABET.iter().position(|&a| a == c)? as u16;
        let b = n * 5;
        let i = b / 8;
        let j = b % 8;
        let v = digit << j;
        out[i] |= v as u8;
        let carry = (v >> 8) as u8;
        if i + 1 < byte_len {
            out[i + 1] |= carry;
        } else if carry != 0 {
            return None;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vectors() {
        let cases = [
            (
                "ab335240fd942ab8191c5e628cd4ff3903c577bda961fb75df08e0303a00527b",
                "0ysj00x31q08vxsznqd9pmvwa0rrzza8qqjy3hcvhallzm054cxb",
            ),
            (
                "99a2da84cec54d17325bcee0a079669c1b15eb7ead32246514b75b97862f1e00",
                "000y5y39fnxp2ijj8cmdgvmia6wwcrws1q6fbcr1fkf5rs2dm8lr",
            ),
            ("1f74d74729abdc08f4f84e8f7f8c808c8ed92ee5", "wlpdk3lch267z3sfz3s0ip5b553xfx0z"),
        ];
        for (hex, b32) in cases {
            let bytes = hex::decode(hex).unwrap();
            assert_eq!(encode(&bytes), b32);
            assert_eq!(decode(b32, bytes.len()).unwrap(), bytes);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode("e", 1).is_none());
        assert!(decode("00", 2).is_none());
        // 52 chars encode 260 bits; the top digit may only use 1 bit.
        let mut s = "z".to_string();
        s.push_str(&"0".repeat(51));
        assert!(decode(&s, 32).is_none());
    }

    #[test]
    fn round_trips() {
        for len in [1usize, 5, 20, 32, 64] {
            let bytes: Vec<u8> = (0..len).map(|i| (i * 37 + 11) as u8).collect();
            assert_eq!(decode(&encode(&bytes), len).unwrap(), bytes);
        }
    }
}
