//! Finds which compressor settings reproduce a compressed file.
//!
//!     cargo run --example guess_compressor -- file.gz

use heirloom::compress::{self, CompressorId};

fn main() {
    let file = match std::env::args_os().nth(1) {
        Some(p) => std::fs::read(p).expect("readable file"),
        None => {
            let payload: Vec<u8> = (0..20_000u32).flat_map(|i| format!("line {}\n", i % 700).into_bytes()).collect();
            compress::compress_file(CompressorId::Gnu { level: 7, rsyncable: true }, &payload)
        }
    };
    let (spec, payload) = match compress::analyze(&file) {
        Ok((Some(spec), payload)) => (spec, payload),
        Ok((None, _)) => {
            println!("not compressed");
            return;
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    match compress::guess_compressor(&payload, &file) {
        Ok(id) => println!("reproduced by {id}"),
        Err(e) => println!("no catalog entry reproduces it: {e}"),
    }
    let again = compress::recompress(&payload, &spec).expect("recompressible");
    println!("{} -> {} bytes, identical: {}", payload.len(), file.len(), again == file);
}
