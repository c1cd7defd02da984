//! Splits a compressed tarball into a description and a file tree, then
//! rebuilds the original from the two.
//!
//!     cargo run --example disassemble -- sed-4.8.tar.gz

use heirloom::compress::{self, CompressorId};
use heirloom::disarchive::{self, Contents, Description, MemoryContent};
use heirloom::heritage;
use heirloom::nar::NarNode;
use heirloom::swhid::swhid_for_directory;

fn main() {
    let (name, bytes) = match std::env::args().nth(1) {
        Some(p) => (p.rsplit('/').next().unwrap().to_string(), std::fs::read(&p).expect("readable file")),
        None => ("sample.tar.gz".to_string(), sample()),
    };
    let (desc, contents) = disarchive::disassemble(&bytes, &name).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(1)
    });
    let text = desc.to_bytes();
    let gz = compress::compress_file(CompressorId::Gnu { level: 9, rsyncable: false }, &text);
    println!("{name}: {} bytes", bytes.len());
    println!("description: {} bytes, {} gzipped", text.len(), gz.len());
    for line in String::from_utf8_lossy(&text).lines().take(12) {
        println!("  {line}");
    }

    let mut store = MemoryContent::default();
    match contents {
        Contents::Tree(t) => store.add_tree(t),
        Contents::Blob(b) => store.add_blob(b),
    }
    let parsed = Description::from_bytes(&text).unwrap();
    let rebuilt = disarchive::assemble(&parsed, &store).unwrap();
    println!("rebuilt identical: {}", rebuilt == bytes);
}

fn sample() -> Vec<u8> {
    let tree = NarNode::dir([
        ("NEWS", NarNode::file("* Noteworthy changes\n".repeat(40))),
        ("src", NarNode::dir([("sed.c", NarNode::file("int main(void) { return 0; }\n"))])),
    ]);
    heritage::make_bundle(&swhid_for_directory(&tree).unwrap(), &tree)
}
