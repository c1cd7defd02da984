//! A faithful re-implementation of the deflate encoder shipped with GNU gzip
//! 1.10, including its `--rsyncable` mode.
//!
//! GNU gzip and zlib share ancestry but make different block-splitting
//! decisions (gzip flushes on its own literal-buffer size and on a
//! "compression is good enough" heuristic every 4096 symbols), so zlib cannot
//! reproduce gzip output. Reproducing it bit for bit requires mirroring the
//! original state machine: the sliding window including stale bytes, the hash
//! chains, the lazy-match loop, and the Huffman tree construction with its
//! exact tie-breaking. The structure below follows `deflate.c` and `trees.c`
//! closely on purpose; resist the urge to "simplify" any of it.

const WSIZE: usize = 0x8000;
const WMASK: usize = WSIZE - 1;
const WINDOW_SIZE: usize = 2 * WSIZE;
const HASH_BITS: u32 = 15;
const HASH_SIZE: usize = 1 << HASH_BITS;
const HASH_MASK: usize = HASH_SIZE - 1;
const H_SHIFT: u32 = (HASH_BITS + MIN_MATCH as u32 - 1) / MIN_MATCH as u32;
const MIN_MATCH: usize = 3;
const MAX_MATCH: usize = 258;
const MIN_LOOKAHEAD: usize = MAX_MATCH + MIN_MATCH + 1;
const MAX_DIST: usize = WSIZE - MIN_LOOKAHEAD;
const TOO_FAR: usize = 4096;
const NIL: usize = 0;

const RSYNC_WIN: usize = 4096;
const RSYNC_NONE: u64 = 0xFFFF_FFFF;

const LIT_BUFSIZE: usize = 0x8000;
const DIST_BUFSIZE: usize = LIT_BUFSIZE;

const MAX_BITS: usize = 15;
const MAX_BL_BITS: usize = 7;
const LENGTH_CODES: usize = 29;
const LITERALS: usize = 256;
const END_BLOCK: usize = 256;
const L_CODES: usize = LITERALS + 1 + LENGTH_CODES;
const D_CODES: usize = 30;
const BL_CODES: usize = 19;
const HEAP_SIZE: usize = 2 * L_CODES + 1;
const REP_3_6: usize = 16;
const REPZ_3_10: usize = 17;
const REPZ_11_138: usize = 18;

const STORED_BLOCK: u32 = 0;
const STATIC_TREES: u32 = 1;
const DYN_TREES: u32 = 2;

const EXTRA_LBITS: [u32; LENGTH_CODES] = [
    0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0,
];
const EXTRA_DBITS: [u32; D_CODES] = [
    0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13,
    13,
];
const EXTRA_BLBITS: [u32; BL_CODES] = [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 3, 7];
const BL_ORDER: [usize; BL_CODES] = [16, 17, 18, 0, 8, 7, 9, 6, 10, 5, 11, 4, 12, 3, 13, 2, 14, 1, 15];

/// (good_length, max_lazy, nice_length, max_chain) per level.
const CONFIG_TABLE: [(usize, usize, usize, usize); 10] = [
    (0, 0, 0, 0),
    (4, 4, 8, 4),
    (4, 5, 16, 8),
    (4, 6, 32, 32),
    (4, 4, 16, 16),
    (8, 16, 32, 32),
    (8, 16, 128, 128),
    (8, 32, 128, 256),
    (32, 128, 258, 1024),
    (32, 258, 258, 4096),
];

/// The XFL byte GNU gzip writes for a level.
pub fn extra_flags_for_level(level: u8) -> u8 {
    match level {
        1 => 4,
        9 => 2,
        _ => 0,
    }
}

/// Compress `input` the way `gzip -<level> [--rsyncable]` does, returning the
/// raw deflate stream (no gzip header or trailer).
pub fn compress(input: &[u8], level: u8, rsyncable: bool) -> Vec<u8> {
    let mut d = Deflater::new(input, level, rsyncable, None);
    d.run();
    d.trees.out.bytes
}

/// Run the encoder against an expected raw deflate stream, stopping at the
/// first diverging byte. Returns true iff the full output is identical.
pub fn reproduces(input: &[u8], level: u8, rsyncable: bool, expected: &[u8]) -> bool {
    let mut d = Deflater::new(input, level, rsyncable, Some(expected));
    d.run();
    !d.trees.out.diverged && d.trees.out.bytes.len() == expected.len()
}

struct Output<'e> {
    bytes: Vec<u8>,
    bit_buf: u64,
    bit_count: u32,
    expected: Option<&'e [u8]>,
    diverged: bool,
}

impl Output<'_> {
    fn put_byte(&mut self, b: u8) {
        if let Some(exp) = self.expected {
            if exp.get(self.bytes.len()) != Some(&b) {
                self.diverged = true;
            }
        }
        self.bytes.push(b);
    }

    fn send_bits(&mut self, value: u32, length: u32) {
        self.bit_buf |= (value as u64) << self.bit_count;
        self.bit_count += length;
        while self.bit_count >= 16 {
            let v = self.bit_buf as u16;
            self.put_byte(v as u8);
            self.put_byte((v >> 8) as u8);
            self.bit_buf >>= 16;
            self.bit_count -= 16;
        }
    }

    fn windup(&mut self) {
        if self.bit_count > 8 {
            let v = self.bit_buf as u16;
            self.put_byte(v as u8);
            self.put_byte((v >> 8) as u8);
        } else if self.bit_count > 0 {
            self.put_byte(self.bit_buf as u8);
        }
        self.bit_buf = 0;
        self.bit_count = 0;
    }
}

/// One tree node; `fc` holds freq or code, `dl` holds dad or len, matching
/// the unions of the original so that aliasing side effects are preserved.
#[derive(Clone, Copy, Default)]
struct Ct {
    fc: u32,
    dl: u32,
}

struct HeapState {
    heap: [usize; HEAP_SIZE],
    heap_len: usize,
    heap_max: usize,
    depth: [u8; HEAP_SIZE],
    bl_count: [u32; MAX_BITS + 1],
}

struct TreeDesc<'a> {
    stree: Option<&'a [Ct]>,
    extra: &'a [u32],
    base: usize,
    elems: usize,
    max_length: usize,
}

fn smaller(tree: &[Ct], depth: &[u8], n: usize, m: usize) -> bool {
    tree[n].fc < tree[m].fc || (tree[n].fc == tree[m].fc && depth[n] <= depth[m])
}

fn pqdownheap(hs: &mut HeapState, tree: &[Ct], mut k: usize) {
    let v = hs.heap[k];
    let mut j = k << 1;
    while j <= hs.heap_len {
        if j < hs.heap_len && smaller(tree, &hs.depth, hs.heap[j + 1], hs.heap[j]) {
            j += 1;
        }
        if smaller(tree, &hs.depth, v, hs.heap[j]) {
            break;
        }
        hs.heap[k] = hs.heap[j];
        k = j;
        j <<= 1;
    }
    hs.heap[k] = v;
}

fn bi_reverse(mut code: u32, mut len: u32) -> u32 {
    let mut res = 0;
    loop {
        res |= code & 1;
        code >>= 1;
        res <<= 1;
        len -= 1;
        if len == 0 {
            break;
        }
    }
    res >> 1
}

fn gen_codes(tree: &mut [Ct], max_code: usize, bl_count: &[u32; MAX_BITS + 1]) {
    let mut next_code = [0u32; MAX_BITS + 1];
    let mut code = 0u32;
    for bits in 1..=MAX_BITS {
        code = (code + bl_count[bits - 1]) << 1;
        next_code[bits] = code;
    }
    for n in 0..=max_code {
        let len = tree[n].dl as usize;
        if len == 0 {
            continue;
        }
        tree[n].fc = bi_reverse(next_code[len], len as u32);
        next_code[len] += 1;
    }
}

fn gen_bitlen(
    hs: &mut HeapState,
    tree: &mut [Ct],
    desc: &TreeDesc,
    max_code: usize,
    opt_len: &mut u64,
    static_len: &mut u64,
) {
    hs.bl_count = [0; MAX_BITS + 1];
    tree[hs.heap[hs.heap_max]].dl = 0;
    let mut overflow = 0i32;
    let mut h = hs.heap_max + 1;
    while h < HEAP_SIZE {
        let n = hs.heap[h];
        let mut bits = tree[tree[n].dl as usize].dl as usize + 1;
        if bits > desc.max_length {
            bits = desc.max_length;
            overflow += 1;
        }
        tree[n].dl = bits as u32;
        h += 1;
        if n > max_code {
            continue;
        }
        hs.bl_count[bits] += 1;
        let xbits = if n >= desc.base { desc.extra[n - desc.base] } else { 0 };
        let f = tree[n].fc as u64;
        *opt_len = opt_len.wrapping_add(f * (bits as u64 + xbits as u64));
        if let Some(stree) = desc.stree {
            *static_len = static_len.wrapping_add(f * (stree[n].dl as u64 + xbits as u64));
        }
    }
    if overflow == 0 {
        return;
    }
    loop {
        let mut bits = desc.max_length - 1;
        while hs.bl_count[bits] == 0 {
            bits -= 1;
        }
        hs.bl_count[bits] -= 1;
        hs.bl_count[bits + 1] += 2;
        hs.bl_count[desc.max_length] -= 1;
        overflow -= 2;
        if overflow <= 0 {
            break;
        }
    }
    let mut bits = desc.max_length;
    while bits != 0 {
        let mut n = hs.bl_count[bits];
        while n != 0 {
            h -= 1;
            let m = hs.heap[h];
            if m > max_code {
                continue;
            }
            if tree[m].dl as usize != bits {
                let delta = (bits as i64 - tree[m].dl as i64) * tree[m].fc as i64;
                *opt_len = opt_len.wrapping_add(delta as u64);
                tree[m].dl = bits as u32;
            }
            n -= 1;
        }
        bits -= 1;
    }
}

/// Returns max_code.
fn build_tree(
    hs: &mut HeapState,
    tree: &mut [Ct],
    desc: &TreeDesc,
    opt_len: &mut u64,
    static_len: &mut u64,
) -> usize {
    let elems = desc.elems;
    let mut max_code: i64 = -1;
    let mut node = elems;
    hs.heap_len = 0;
    hs.heap_max = HEAP_SIZE;
    for n in 0..elems {
        if tree[n].fc != 0 {
            hs.heap_len += 1;
            hs.heap[hs.heap_len] = n;
            max_code = n as i64;
            hs.depth[n] = 0;
        } else {
            tree[n].dl = 0;
        }
    }
    while hs.heap_len < 2 {
        let new = if max_code < 2 {
            max_code += 1;
            max_code as usize
        } else {
            0
        };
        hs.heap_len += 1;
        hs.heap[hs.heap_len] = new;
        tree[new].fc = 1;
        hs.depth[new] = 0;
        *opt_len = opt_len.wrapping_sub(1);
        if let Some(stree) = desc.stree {
            *static_len = static_len.wrapping_sub(stree[new].dl as u64);
        }
    }
    let max_code = max_code as usize;
    let mut n = hs.heap_len / 2;
    while n >= 1 {
        pqdownheap(hs, tree, n);
        n -= 1;
    }
    loop {
        // pqremove
        let n = hs.heap[1];
        hs.heap[1] = hs.heap[hs.heap_len];
        hs.heap_len -= 1;
        pqdownheap(hs, tree, 1);
        let m = hs.heap[1];

        hs.heap_max -= 1;
        hs.heap[hs.heap_max] = n;
        hs.heap_max -= 1;
        hs.heap[hs.heap_max] = m;

        tree[node].fc = tree[n].fc + tree[m].fc;
        hs.depth[node] = hs.depth[n].max(hs.depth[m]) + 1;
        tree[n].dl = node as u32;
        tree[m].dl = node as u32;
        hs.heap[1] = node;
        node += 1;
        pqdownheap(hs, tree, 1);
        if hs.heap_len < 2 {
            break;
        }
    }
    hs.heap_max -= 1;
    hs.heap[hs.heap_max] = hs.heap[1];

    gen_bitlen(hs, tree, desc, max_code, opt_len, static_len);
    let bl_count = hs.bl_count;
    gen_codes(tree, max_code, &bl_count);
    max_code
}

fn scan_tree(tree: &mut [Ct], bl_tree: &mut [Ct], max_code: usize) {
    let mut prevlen: i64 = -1;
    let mut nextlen = tree[0].dl as i64;
    let mut count = 0;
    let (mut max_count, mut min_count) = if nextlen == 0 { (138, 3) } else { (7, 4) };
    tree[max_code + 1].dl = 0xffff;
    for n in 0..=max_code {
        let curlen = nextlen;
        nextlen = tree[n + 1].dl as i64;
        count += 1;
        if count < max_count && curlen == nextlen {
            continue;
        } else if count < min_count {
            bl_tree[curlen as usize].fc += count as u32;
        } else if curlen != 0 {
            if curlen != prevlen {
                bl_tree[curlen as usize].fc += 1;
            }
            bl_tree[REP_3_6].fc += 1;
        } else if count <= 10 {
            bl_tree[REPZ_3_10].fc += 1;
        } else {
            bl_tree[REPZ_11_138].fc += 1;
        }
        count = 0;
        prevlen = curlen;
        (max_count, min_count) = if nextlen == 0 {
            (138, 3)
        } else if curlen == nextlen {
            (6, 3)
        } else {
            (7, 4)
        };
    }
}

fn send_code(out: &mut Output, c: usize, tree: &[Ct]) {
    out.send_bits(tree[c].fc, tree[c].dl);
}

fn send_tree(out: &mut Output, tree: &[Ct], bl_tree: &[Ct], max_code: usize) {
    let mut prevlen: i64 = -1;
    let mut nextlen = tree[0].dl as i64;
    let mut count = 0;
    let (mut max_count, mut min_count) = if nextlen == 0 { (138, 3) } else { (7, 4) };
    for n in 0..=max_code {
        let curlen = nextlen;
        nextlen = tree[n + 1].dl as i64;
        count += 1;
        if count < max_count && curlen == nextlen {
            continue;
        } else if count < min_count {
            while count != 0 {
                send_code(out, curlen as usize, bl_tree);
                count -= 1;
            }
        } else if curlen != 0 {
            if curlen != prevlen {
                send_code(out, curlen as usize, bl_tree);
                count -= 1;
            }
            send_code(out, REP_3_6, bl_tree);
            out.send_bits(count as u32 - 3, 2);
        } else if count <= 10 {
            send_code(out, REPZ_3_10, bl_tree);
            out.send_bits(count as u32 - 3, 3);
        } else {
            send_code(out, REPZ_11_138, bl_tree);
            out.send_bits(count as u32 - 11, 7);
        }
        count = 0;
        prevlen = curlen;
        (max_count, min_count) = if nextlen == 0 {
            (138, 3)
        } else if curlen == nextlen {
            (6, 3)
        } else {
            (7, 4)
        };
    }
}

struct Trees<'e> {
    out: Output<'e>,
    level: u8,
    dyn_ltree: Vec<Ct>,
    dyn_dtree: Vec<Ct>,
    bl_tree: Vec<Ct>,
    static_ltree: Vec<Ct>,
    static_dtree: Vec<Ct>,
    hs: Box<HeapState>,
    l_max_code: usize,
    d_max_code: usize,
    l_buf: Vec<u8>,
    d_buf: Vec<u16>,
    flag_buf: Vec<u8>,
    last_lit: usize,
    last_dist: usize,
    last_flags: usize,
    flags: u8,
    flag_bit: u8,
    opt_len: u64,
    static_len: u64,
    compressed_len: u64,
    length_code: [u8; 256],
    dist_code: [u8; 512],
    base_length: [u32; LENGTH_CODES],
    base_dist: [u32; D_CODES],
}

impl<'e> Trees<'e> {
    fn new(level: u8, expected: Option<&'e [u8]>) -> Self {
        let mut length_code = [0u8; 256];
        let mut dist_code = [0u8; 512];
        let mut base_length = [0u32; LENGTH_CODES];
        let mut base_dist = [0u32; D_CODES];

        let mut length = 0usize;
        let mut code = 0usize;
        while code < LENGTH_CODES - 1 {
            base_length[code] = length as u32;
            for _ in 0..(1 << EXTRA_LBITS[code]) {
                length_code[length] = code as u8;
                length += 1;
            }
            code += 1;
        }
        length_code[length - 1] = code as u8;

        let mut dist = 0usize;
        code = 0;
        while code < 16 {
            base_dist[code] = dist as u32;
            for _ in 0..(1 << EXTRA_DBITS[code]) {
                dist_code[dist] = code as u8;
                dist += 1;
            }
            code += 1;
        }
        dist >>= 7;
        while code < D_CODES {
            base_dist[code] = (dist << 7) as u32;
            for _ in 0..(1 << (EXTRA_DBITS[code] - 7)) {
                dist_code[256 + dist] = code as u8;
                dist += 1;
            }
            code += 1;
        }

        let mut static_ltree = vec![Ct::default(); L_CODES + 2];
        let mut bl_count = [0u32; MAX_BITS + 1];
        for (n, ct) in static_ltree.iter_mut().enumerate() {
            let len = match n {
                0..=143 => 8,
                144..=255 => 9,
                256..=279 => 7,
                _ => 8,
            };
            ct.dl = len;
            bl_count[len as usize] += 1;
        }
        gen_codes(&mut static_ltree, L_CODES + 1, &bl_count);
        let static_dtree = (0..D_CODES)
            .map(|n| Ct { fc: bi_reverse(n as u32, 5), dl: 5 })
            .collect();

        let mut t = Trees {
            out: Output { bytes: Vec::new(), bit_buf: 0, bit_count: 0, expected, diverged: false },
            level,
            dyn_ltree: vec![Ct::default(); HEAP_SIZE],
            dyn_dtree: vec![Ct::default(); 2 * D_CODES + 1],
            bl_tree: vec![Ct::default(); 2 * BL_CODES + 1],
            static_ltree,
            static_dtree,
            hs: Box::new(HeapState {
                heap: [0; HEAP_SIZE],
                heap_len: 0,
                heap_max: 0,
                depth: [0; HEAP_SIZE],
                bl_count: [0; MAX_BITS + 1],
            }),
            l_max_code: 0,
            d_max_code: 0,
            l_buf: vec![0; LIT_BUFSIZE],
            d_buf: vec![0; DIST_BUFSIZE],
            flag_buf: vec![0; LIT_BUFSIZE / 8],
            last_lit: 0,
            last_dist: 0,
            last_flags: 0,
            flags: 0,
            flag_bit: 1,
            opt_len: 0,
            static_len: 0,
            compressed_len: 0,
            length_code,
            dist_code,
            base_length,
            base_dist,
        };
        t.init_block();
        t
    }

    fn init_block(&mut self) {
        for ct in &mut self.dyn_ltree[..L_CODES] {
            ct.fc = 0;
        }
        for ct in &mut self.dyn_dtree[..D_CODES] {
            ct.fc = 0;
        }
        for ct in &mut self.bl_tree[..BL_CODES] {
            ct.fc = 0;
        }
        self.dyn_ltree[END_BLOCK].fc = 1;
        self.opt_len = 0;
        self.static_len = 0;
        self.last_lit = 0;
        self.last_dist = 0;
        self.last_flags = 0;
        self.flags = 0;
        self.flag_bit = 1;
    }

    fn d_code(&self, dist: usize) -> usize {
        if dist < 256 {
            self.dist_code[dist] as usize
        } else {
            self.dist_code[256 + (dist >> 7)] as usize
        }
    }

    /// Record a literal (dist == 0) or a match; returns true when the block
    /// should be flushed.
    fn tally(&mut self, dist: usize, lc: usize, strstart: usize, block_start: i64) -> bool {
        self.l_buf[self.last_lit] = lc as u8;
        self.last_lit += 1;
        if dist == 0 {
            self.dyn_ltree[lc].fc += 1;
        } else {
            let dist = dist - 1;
            self.dyn_ltree[self.length_code[lc] as usize + LITERALS + 1].fc += 1;
            let dc = self.d_code(dist);
            self.dyn_dtree[dc].fc += 1;
            self.d_buf[self.last_dist] = dist as u16;
            self.last_dist += 1;
            self.flags |= self.flag_bit;
        }
        self.flag_bit = self.flag_bit.wrapping_shl(1);
        if self.last_lit & 7 == 0 {
            self.flag_buf[self.last_flags] = self.flags;
            self.last_flags += 1;
            self.flags = 0;
            self.flag_bit = 1;
        }
        if self.level > 2 && self.last_lit & 0xfff == 0 {
            let mut out_length = self.last_lit as u64 * 8;
            let in_length = (strstart as i64 - block_start) as u64;
            for dcode in 0..D_CODES {
                out_length += self.dyn_dtree[dcode].fc as u64 * (5 + EXTRA_DBITS[dcode] as u64);
            }
            out_length >>= 3;
            if self.last_dist < self.last_lit / 2 && out_length < in_length / 2 {
                return true;
            }
        }
        self.last_lit == LIT_BUFSIZE - 1 || self.last_dist == DIST_BUFSIZE
    }

    fn build_bl_tree(&mut self) -> usize {
        scan_tree(&mut self.dyn_ltree, &mut self.bl_tree, self.l_max_code);
        scan_tree(&mut self.dyn_dtree, &mut self.bl_tree, self.d_max_code);
        let desc = TreeDesc {
            stree: None,
            extra: &EXTRA_BLBITS,
            base: 0,
            elems: BL_CODES,
            max_length: MAX_BL_BITS,
        };
        build_tree(&mut self.hs, &mut self.bl_tree, &desc, &mut self.opt_len, &mut self.static_len);
        let mut max_blindex = BL_CODES - 1;
        while max_blindex >= 3 {
            if self.bl_tree[BL_ORDER[max_blindex]].dl != 0 {
                break;
            }
            max_blindex -= 1;
        }
        self.opt_len = self.opt_len.wrapping_add(3 * (max_blindex as u64 + 1) + 5 + 5 + 4);
        max_blindex
    }

    fn send_all_trees(&mut self, lcodes: usize, dcodes: usize, blcodes: usize) {
        self.out.send_bits((lcodes - 257) as u32, 5);
        self.out.send_bits((dcodes - 1) as u32, 5);
        self.out.send_bits((blcodes - 4) as u32, 4);
        for rank in 0..blcodes {
            self.out.send_bits(self.bl_tree[BL_ORDER[rank]].dl, 3);
        }
        send_tree(&mut self.out, &self.dyn_ltree, &self.bl_tree, lcodes - 1);
        send_tree(&mut self.out, &self.dyn_dtree, &self.bl_tree, dcodes - 1);
    }

    fn compress_block(&mut self, dynamic: bool) {
        let (ltree, dtree) = if dynamic {
            (&self.dyn_ltree, &self.dyn_dtree)
        } else {
            (&self.static_ltree, &self.static_dtree)
        };
        let mut lx = 0;
        let mut dx = 0;
        let mut fx = 0;
        let mut flag = 0u8;
        while lx < self.last_lit {
            if lx & 7 == 0 {
                flag = self.flag_buf[fx];
                fx += 1;
            }
            let mut lc = self.l_buf[lx] as u32;
            lx += 1;
            if flag & 1 == 0 {
                send_code(&mut self.out, lc as usize, ltree);
            } else {
                let code = self.length_code[lc as usize] as usize;
                send_code(&mut self.out, code + LITERALS + 1, ltree);
                let extra = EXTRA_LBITS[code];
                if extra != 0 {
                    lc -= self.base_length[code];
                    self.out.send_bits(lc, extra);
                }
                let mut dist = self.d_buf[dx] as u32;
                dx += 1;
                let code = if dist < 256 {
                    self.dist_code[dist as usize] as usize
                } else {
                    self.dist_code[256 + (dist as usize >> 7)] as usize
                };
                send_code(&mut self.out, code, dtree);
                let extra = EXTRA_DBITS[code];
                if extra != 0 {
                    dist -= self.base_dist[code];
                    self.out.send_bits(dist, extra);
                }
            }
            flag >>= 1;
        }
        send_code(&mut self.out, END_BLOCK, ltree);
    }

    fn copy_block(&mut self, buf: &[u8], header: bool) {
        self.out.windup();
        if header {
            let len = buf.len() as u16;
            self.out.put_byte(len as u8);
            self.out.put_byte((len >> 8) as u8);
            self.out.put_byte(!len as u8);
            self.out.put_byte((!len >> 8) as u8);
        }
        for &b in buf {
            self.out.put_byte(b);
        }
    }

    fn flush_block(&mut self, buf: Option<&[u8]>, stored_len: u64, pad: bool, eof: bool) {
        self.flag_buf[self.last_flags] = self.flags;

        let ldesc = TreeDesc {
            stree: Some(&self.static_ltree),
            extra: &EXTRA_LBITS,
            base: LITERALS + 1,
            elems: L_CODES,
            max_length: MAX_BITS,
        };
        self.l_max_code =
            build_tree(&mut self.hs, &mut self.dyn_ltree, &ldesc, &mut self.opt_len, &mut self.static_len);
        let ddesc = TreeDesc {
            stree: Some(&self.static_dtree),
            extra: &EXTRA_DBITS,
            base: 0,
            elems: D_CODES,
            max_length: MAX_BITS,
        };
        self.d_max_code =
            build_tree(&mut self.hs, &mut self.dyn_dtree, &ddesc, &mut self.opt_len, &mut self.static_len);
        let max_blindex = self.build_bl_tree();

        let mut opt_lenb = self.opt_len.wrapping_add(3 + 7) >> 3;
        let static_lenb = self.static_len.wrapping_add(3 + 7) >> 3;
        if static_lenb <= opt_lenb {
            opt_lenb = static_lenb;
        }
        let eof_bit = eof as u32;
        match buf {
            Some(data) if stored_len + 4 <= opt_lenb => {
                self.out.send_bits((STORED_BLOCK << 1) + eof_bit, 3);
                self.compressed_len = (self.compressed_len + 3 + 7) & !7;
                self.compressed_len += (stored_len + 4) << 3;
                self.copy_block(data, true);
            }
            _ if static_lenb == opt_lenb => {
                self.out.send_bits((STATIC_TREES << 1) + eof_bit, 3);
                self.compress_block(false);
                self.compressed_len = self.compressed_len.wrapping_add(3).wrapping_add(self.static_len);
            }
            _ => {
                self.out.send_bits((DYN_TREES << 1) + eof_bit, 3);
                self.send_all_trees(self.l_max_code + 1, self.d_max_code + 1, max_blindex + 1);
                self.compress_block(true);
                self.compressed_len = self.compressed_len.wrapping_add(3).wrapping_add(self.opt_len);
            }
        }
        self.init_block();
        if eof {
            self.out.windup();
            self.compressed_len += 7;
        } else if pad && self.compressed_len % 8 != 0 {
            self.out.send_bits(STORED_BLOCK << 1, 3);
            self.compressed_len = (self.compressed_len + 3 + 7) & !7;
            self.copy_block(&[], true);
        }
    }
}

struct Deflater<'a, 'e> {
    input: &'a [u8],
    in_pos: usize,
    window: Vec<u8>,
    prev: Vec<u16>,
    head: Vec<u16>,
    ins_h: usize,
    prev_length: usize,
    strstart: usize,
    match_start: usize,
    eofile: bool,
    lookahead: usize,
    block_start: i64,
    max_lazy_match: usize,
    good_match: usize,
    nice_match: usize,
    max_chain_length: usize,
    level: u8,
    rsync: bool,
    rsync_sum: u64,
    rsync_chunk_end: u64,
    trees: Trees<'e>,
}

impl<'a, 'e> Deflater<'a, 'e> {
    fn new(input: &'a [u8], level: u8, rsync: bool, expected: Option<&'e [u8]>) -> Self {
        assert!((1..=9).contains(&level), "gzip level must be in 1..=9");
        let (good, lazy, nice, chain) = CONFIG_TABLE[level as usize];
        let mut d = Deflater {
            input,
            in_pos: 0,
            window: vec![0; WINDOW_SIZE],
            prev: vec![0; WSIZE],
            head: vec![0; HASH_SIZE],
            ins_h: 0,
            prev_length: 0,
            strstart: 0,
            match_start: 0,
            eofile: false,
            lookahead: 0,
            block_start: 0,
            max_lazy_match: lazy,
            good_match: good,
            nice_match: nice,
            max_chain_length: chain,
            level,
            rsync,
            rsync_sum: 0,
            rsync_chunk_end: RSYNC_NONE,
            trees: Trees::new(level, expected),
        };
        d.lm_init();
        d
    }

    fn read_buf(&mut self, at: usize, size: usize) -> usize {
        let n = size.min(self.input.len() - self.in_pos);
        self.window[at..at + n].copy_from_slice(&self.input[self.in_pos..self.in_pos + n]);
        self.in_pos += n;
        n
    }

    fn lm_init(&mut self) {
        self.lookahead = self.read_buf(0, 2 * WSIZE);
        if self.lookahead == 0 {
            self.eofile = true;
            self.lookahead = 0;
            return;
        }
        self.eofile = false;
        while self.lookahead < MIN_LOOKAHEAD && !self.eofile {
            self.fill_window();
        }
        self.ins_h = 0;
        for j in 0..MIN_MATCH - 1 {
            self.update_hash(self.window[j]);
        }
    }

    #[inline]
    fn update_hash(&mut self, c: u8) {
        self.ins_h = ((self.ins_h << H_SHIFT) ^ c as usize) & HASH_MASK;
    }

    #[inline]
    fn insert_string(&mut self, s: usize) -> usize {
        self.update_hash(self.window[s + MIN_MATCH - 1]);
        let match_head = self.head[self.ins_h] as usize;
        self.prev[s & WMASK] = match_head as u16;
        self.head[self.ins_h] = s as u16;
        match_head
    }

    fn fill_window(&mut self) {
        let mut more = WINDOW_SIZE - self.lookahead - self.strstart;
        if self.strstart >= WSIZE + MAX_DIST {
            self.window.copy_within(WSIZE..2 * WSIZE, 0);
            self.match_start = self.match_start.wrapping_sub(WSIZE);
            self.strstart -= WSIZE;
            if self.rsync_chunk_end != RSYNC_NONE {
                self.rsync_chunk_end = self.rsync_chunk_end.wrapping_sub(WSIZE as u64);
            }
            self.block_start -= WSIZE as i64;
            for h in self.head.iter_mut() {
                *h = if *h as usize >= WSIZE { *h - WSIZE as u16 } else { NIL as u16 };
            }
            for p in self.prev.iter_mut() {
                *p = if *p as usize >= WSIZE { *p - WSIZE as u16 } else { NIL as u16 };
            }
            more += WSIZE;
        }
        if !self.eofile {
            let at = self.strstart + self.lookahead;
            let n = self.read_buf(at, more);
            if n == 0 {
                self.eofile = true;
                let end = (at + MIN_MATCH - 1).min(WINDOW_SIZE);
                self.window[at..end].fill(0);
            } else {
                self.lookahead += n;
            }
        }
    }

    fn longest_match(&mut self, mut cur_match: usize) -> usize {
        let mut chain_length = self.max_chain_length;
        let scan = self.strstart;
        let mut best_len = self.prev_length;
        let limit = if self.strstart > MAX_DIST { self.strstart - MAX_DIST } else { NIL };
        let w = &self.window;
        let mut scan_end1 = w[scan + best_len - 1];
        let mut scan_end = w[scan + best_len];
        if self.prev_length >= self.good_match {
            chain_length >>= 2;
        }
        loop {
            let m = cur_match;
            if w[m + best_len] == scan_end
                && w[m + best_len - 1] == scan_end1
                && w[m] == w[scan]
                && w[m + 1] == w[scan + 1]
            {
                // Byte 2 is implied equal by the hash, as in the original.
                let mut len = 3;
                while len < MAX_MATCH && w[scan + len] == w[m + len] {
                    len += 1;
                }
                if len > best_len {
                    self.match_start = cur_match;
                    best_len = len;
                    if len >= self.nice_match {
                        break;
                    }
                    scan_end1 = w[scan + best_len - 1];
                    scan_end = w[scan + best_len];
                }
            }
            cur_match = self.prev[cur_match & WMASK] as usize;
            if cur_match <= limit {
                break;
            }
            chain_length -= 1;
            if chain_length == 0 {
                break;
            }
        }
        best_len
    }

    fn rsync_roll(&mut self, mut start: usize, mut num: usize) {
        if start < RSYNC_WIN {
            let mut i = start;
            while i < RSYNC_WIN {
                if i == start + num {
                    return;
                }
                self.rsync_sum = self.rsync_sum.wrapping_add(self.window[i] as u64);
                i += 1;
            }
            num -= RSYNC_WIN - start;
            start = RSYNC_WIN;
        }
        for i in start..start + num {
            self.rsync_sum = self.rsync_sum.wrapping_add(self.window[i] as u64);
            self.rsync_sum = self.rsync_sum.wrapping_sub(self.window[i - RSYNC_WIN] as u64);
            if self.rsync_chunk_end == RSYNC_NONE && self.rsync_sum & (RSYNC_WIN as u64 - 1) == 0 {
                self.rsync_chunk_end = i as u64;
            }
        }
    }

    #[inline]
    fn roll(&mut self, start: usize, num: usize) {
        if self.rsync {
            self.rsync_roll(start, num);
        }
    }

    fn rsync_boundary(&mut self) -> bool {
        if self.rsync && self.strstart as u64 > self.rsync_chunk_end {
            self.rsync_chunk_end = RSYNC_NONE;
            true
        } else {
            false
        }
    }

    /// `flush` carries the C code's tri-state: 0 none, 1 flush, 2 flush+pad.
    fn flush_block(&mut self, flush: u8, eof: bool) {
        let stored_len = (self.strstart as i64 - self.block_start) as u64;
        let buf = if self.block_start >= 0 {
            let s = self.block_start as usize;
            Some(&self.window[s..s + stored_len as usize])
        } else {
            None
        };
        self.trees.flush_block(buf, stored_len, flush == 2, eof);
    }

    fn run(&mut self) {
        if self.level <= 3 {
            self.deflate_fast();
        } else {
            self.deflate_lazy();
        }
    }

    fn aborted(&self) -> bool {
        self.trees.out.diverged
    }

    fn deflate_fast(&mut self) {
        let mut flush: u8 = 0;
        let mut match_length = 0usize;
        self.prev_length = MIN_MATCH - 1;
        while self.lookahead != 0 {
            let hash_head = self.insert_string(self.strstart);
            if hash_head != NIL
                && self.strstart - hash_head <= MAX_DIST
                && self.strstart <= WINDOW_SIZE - MIN_LOOKAHEAD
            {
                match_length = self.longest_match(hash_head);
                if match_length > self.lookahead {
                    match_length = self.lookahead;
                }
            }
            if match_length >= MIN_MATCH {
                flush = self.trees.tally(
                    self.strstart - self.match_start,
                    match_length - MIN_MATCH,
                    self.strstart,
                    self.block_start,
                ) as u8;
                self.lookahead -= match_length;
                self.roll(self.strstart, match_length);
                if match_length <= self.max_lazy_match {
                    match_length -= 1;
                    loop {
                        self.strstart += 1;
                        self.insert_string(self.strstart);
                        match_length -= 1;
                        if match_length == 0 {
                            break;
                        }
                    }
                    self.strstart += 1;
                } else {
                    self.strstart += match_length;
                    match_length = 0;
                    self.ins_h = self.window[self.strstart] as usize;
                    self.update_hash(self.window[self.strstart + 1]);
                }
            } else {
                let lit = self.window[self.strstart] as usize;
                flush = self.trees.tally(0, lit, self.strstart, self.block_start) as u8;
                self.roll(self.strstart, 1);
                self.lookahead -= 1;
                self.strstart += 1;
            }
            if self.rsync_boundary() {
                flush = 2;
            }
            if flush != 0 {
                self.flush_block(flush, false);
                self.block_start = self.strstart as i64;
                if self.aborted() {
                    return;
                }
            }
            while self.lookahead < MIN_LOOKAHEAD && !self.eofile {
                self.fill_window();
            }
        }
        self.flush_block(flush, true);
    }

    fn deflate_lazy(&mut self) {
        let mut flush: u8 = 0;
        let mut match_available = false;
        let mut match_length = MIN_MATCH - 1;
        while self.lookahead != 0 {
            let hash_head = self.insert_string(self.strstart);
            self.prev_length = match_length;
            let prev_match = self.match_start;
            match_length = MIN_MATCH - 1;

            if hash_head != NIL
                && self.prev_length < self.max_lazy_match
                && self.strstart - hash_head <= MAX_DIST
                && self.strstart <= WINDOW_SIZE - MIN_LOOKAHEAD
            {
                match_length = self.longest_match(hash_head);
                if match_length > self.lookahead {
                    match_length = self.lookahead;
                }
                if match_length == MIN_MATCH && self.strstart - self.match_start > TOO_FAR {
                    match_length -= 1;
                }
            }
            if self.prev_length >= MIN_MATCH && match_length <= self.prev_length {
                flush = self.trees.tally(
                    self.strstart - 1 - prev_match,
                    self.prev_length - MIN_MATCH,
                    self.strstart,
                    self.block_start,
                ) as u8;
                self.lookahead -= self.prev_length - 1;
                self.prev_length -= 2;
                self.roll(self.strstart, self.prev_length + 1);
                loop {
                    self.strstart += 1;
                    self.insert_string(self.strstart);
                    self.prev_length -= 1;
                    if self.prev_length == 0 {
                        break;
                    }
                }
                match_available = false;
                match_length = MIN_MATCH - 1;
                self.strstart += 1;
                if self.rsync_boundary() {
                    flush = 2;
                }
                if flush != 0 {
                    self.flush_block(flush, false);
                    self.block_start = self.strstart as i64;
                    if self.aborted() {
                        return;
                    }
                }
            } else if match_available {
                let lit = self.window[self.strstart - 1] as usize;
                flush = self.trees.tally(0, lit, self.strstart, self.block_start) as u8;
                if self.rsync_boundary() {
                    flush = 2;
                }
                if flush != 0 {
                    self.flush_block(flush, false);
                    self.block_start = self.strstart as i64;
                    if self.aborted() {
                        return;
                    }
                }
                self.roll(self.strstart, 1);
                self.strstart += 1;
                self.lookahead -= 1;
            } else {
                if self.rsync_boundary() {
                    flush = 2;
                    self.flush_block(flush, false);
                    self.block_start = self.strstart as i64;
                    if self.aborted() {
                        return;
                    }
                }
                match_available = true;
                self.roll(self.strstart, 1);
                self.strstart += 1;
                self.lookahead -= 1;
            }
            while self.lookahead < MIN_LOOKAHEAD && !self.eofile {
                self.fill_window();
            }
        }
        if match_available {
            let lit = self.window[self.strstart - 1] as usize;
            self.trees.tally(0, lit, self.strstart, self.block_start);
        }
        self.flush_block(flush, true);
    }
}
