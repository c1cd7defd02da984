//! Prints the nar hash and directory SWHID of a path.
//!
//!     cargo run --example identifiers -- path/to/dir

use std::path::PathBuf;

use heirloom::nar::{nar_hash, tree_from_disk, TreeOptions};
use heirloom::swhid::swhid_for_directory;

fn main() {
    let path = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    let tree = match tree_from_disk(&path, &TreeOptions::checkout()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            std::process::exit(1);
        }
    };
    let nar = nar_hash(&tree);
    println!("nar sha256  {}", nar.to_base32());
    println!("sri         {}", nar.to_sri());
    match swhid_for_directory(&tree) {
        Ok(id) => println!("swhid       {id}"),
        Err(e) => println!("swhid       ({e})"),
    }
}
