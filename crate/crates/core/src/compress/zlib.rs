//! Raw deflate through the bundled zlib, with the settings of zlib's own
//! gzip writers: 15-bit window, memLevel 8, default strategy.

use std::ffi::{c_int, c_uint, c_void};
use std::mem::MaybeUninit;

use libz_sys as z;

extern "C" {
    fn calloc(n: usize, size: usize) -> *mut c_void;
    fn free(p: *mut c_void);
}

unsafe extern "C" fn zalloc(_: z::voidpf, items: z::uInt, size: z::uInt) -> z::voidpf {
    calloc(items as usize, size as usize)
}

unsafe extern "C" fn zfree(_: z::voidpf, p: z::voidpf) {
    free(p)
}

pub fn version() -> String {
    unsafe { std::ffi::CStr::from_ptr(z::zlibVersion()) }.to_string_lossy().into_owned()
}

struct Deflater {
    strm: Box<z::z_stream>,
}

impl Deflater {
    fn new(level: u8) -> Deflater {
        let mut strm: Box<MaybeUninit<z::z_stream>> = Box::new(MaybeUninit::zeroed());
        unsafe {
            let p = strm.as_mut_ptr();
            std::ptr::addr_of_mut!((*p).zalloc).write(zalloc);
            std::ptr::addr_of_mut!((*p).zfree).write(zfree);
            let rc = z::deflateInit2_(
                p,
                level as c_int,
                z::Z_DEFLATED,
                -15,
                8,
                z::Z_DEFAULT_STRATEGY,
                z::zlibVersion(),
                std::mem::size_of::<z::z_stream>() as c_int,
            );
            assert_eq!(rc, z::Z_OK, "deflateInit2 failed");
            Deflater { strm: Box::from_raw(Box::into_raw(strm).cast()) }
        }
    }

    /// Feeds all of `input` and finishes, handing each output chunk to `sink`.
    /// Stops early when `sink` returns false.
    fn run(&mut self, input: &[u8], mut sink: impl FnMut(&[u8]) -> bool) -> bool {
        let mut buf = vec![0u8; 1 << 16];
        let mut offset = 0;
        loop {
            let chunk = (input.len() - offset).min(c_uint::MAX as usize);
            let flush = if offset + chunk == input.len() { z::Z_FINISH } else { z::Z_NO_FLUSH };
            self.strm.next_in = input[offset..].as_ptr() as *mut u8;
            self.strm.avail_in = chunk as c_uint;
            loop {
                self.strm.next_out = buf.as_mut_ptr();
                self.strm.avail_out = buf.len() as c_uint;
                let rc = unsafe { z::deflate(&mut *self.strm, flush) };
                assert!(rc == z::Z_OK || rc == z::Z_STREAM_END || rc == z::Z_BUF_ERROR, "deflate failed: {rc}");
                let produced = buf.len() - self.strm.avail_out as usize;
                if produced > 0 && !sink(&buf[..produced]) {
                    return false;
                }
                if rc == z::Z_STREAM_END {
                    return true;
                }
                if self.strm.avail_out != 0 && self.strm.avail_in == 0 && flush != z::Z_FINISH {
                    break;
                }
            }
            offset += chunk;
        }
    }
}

impl Drop for Deflater {
    fn drop(&mut self) {
        unsafe { z::deflateEnd(&mut *self.strm) };
    }
}

pub fn compress(input: &[u8], level: u8) -> Vec<u8> {
    let mut out = Vec::new();
    Deflater::new(level).run(input, |c| {
        out.extend_from_slice(c);
        true
    });
    out
}

/// Whether `compress(input, level) == expected`, giving up at the first
/// differing chunk.
pub fn reproduces(input: &[u8], level: u8, expected: &[u8]) -> bool {
    let mut pos = 0;
    let finished = Deflater::new(level).run(input, |c| {
        let ok = expected.len() >= pos + c.len() && expected[pos..pos + c.len()] == *c;
        pos += c.len();
        ok
    });
    finished && pos == expected.len()
}
