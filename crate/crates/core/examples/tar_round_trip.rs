//! Parses a tarball into its metadata and file tree, then writes it back
//! byte for byte.
//!
//!     cargo run --example tar_round_trip -- some.tar

use heirloom::nar::NarNode;
use heirloom::swhid::swhid_for_directory;
use heirloom::{compress, heritage, tar};

fn main() {
    let bytes = match std::env::args_os().nth(1) {
        Some(p) => std::fs::read(p).expect("readable tarball"),
        None => sample(),
    };
    let (spec, tree) = tar::parse_tarball(&bytes).unwrap_or_else(|e| {
        eprintln!("not a tarball: {e}");
        std::process::exit(1)
    });
    println!("{} members, {} bytes", spec.members.len(), bytes.len());
    for m in spec.members.iter().take(10) {
        println!("  {}", String::from_utf8_lossy(&m.header.name));
    }
    let rebuilt = tar::serialize_tarball(&spec, &tree).expect("serializable");
    println!("identical after round trip: {}", rebuilt == bytes);
}

/// A small uncompressed tarball.
fn sample() -> Vec<u8> {
    let tree = NarNode::dir([
        ("README", NarNode::file("hello\n")),
        ("configure", NarNode::executable("#!/bin/sh\n")),
        ("doc", NarNode::dir([("index", NarNode::symlink("../README"))])),
    ]);
    let gz = heritage::make_bundle(&swhid_for_directory(&tree).unwrap(), &tree);
    compress::decompress(&gz).unwrap().payload
}
