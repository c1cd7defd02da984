//! Counts how many packages would be lost with each source: the source's
//! own package plus everything that depends on it, directly or not.

use heirloom::audit;
use heirloom::resolver::SourceRecord;

fn main() {
    let names = ["glibc", "zlib", "openssl", "curl", "git", "python"];
    let records: Vec<SourceRecord> = names
        .iter()
        .map(|n| SourceRecord::url_fetch(&[&format!("https://dl.example.org/{n}.tar.gz")], [0; 32]).with_name(n))
        .collect();
    let edges = audit::parse_edges(
        b"dependent,dependency\nzlib,glibc\nopenssl,glibc\ncurl,openssl\ncurl,zlib\ngit,curl\ngit,zlib\npython,openssl\npython,zlib\n",
    )
    .unwrap();
    let ranks = audit::impact_rank(&records, &edges).unwrap();
    let mut rows: Vec<_> = names.iter().zip(&ranks).collect();
    rows.sort_by(|a, b| b.1.cmp(a.1));
    for (name, rank) in rows {
        println!("{rank:>3}  {name}");
    }
}
