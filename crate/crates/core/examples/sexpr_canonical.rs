//! Reads an s-expression from the command line (or a sample) and prints
//! its canonical form.
//!
//!     cargo run --example sexpr_canonical -- '(a   "b\x00" 42)'

use heirloom::sexpr::{self, Sexpr};

fn main() {
    let input = std::env::args().nth(1).unwrap_or_else(|| r#"(disarchive (version 0) (name "sed-4.8.tar.gz") (size 2197600))"#.into());
    let value = match sexpr::parse(input.as_bytes()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("parse error: {e}");
            std::process::exit(1);
        }
    };
    let canonical = sexpr::write_canonical(&value);
    println!("{}", String::from_utf8_lossy(&canonical));
    assert_eq!(sexpr::parse(&canonical).unwrap(), value);

    if let Some(size) = value.find("size").and_then(|s| s.tail().first()).and_then(Sexpr::as_u64) {
        println!("size field: {size}");
    }
}
