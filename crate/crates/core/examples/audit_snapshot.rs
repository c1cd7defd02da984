//! Audits a small snapshot: which sources still download, which the archive
//! holds, and what kinds of sources they are. Prints the CSV tables.

use std::sync::Arc;

use heirloom::audit::{self, SnapshotReport};
use heirloom::heritage::{endpoints, ArchiveEndpoint, HeritageClient};
use heirloom::http::{Method, MockTransport, Response};
use heirloom::nar::NarNode;
use heirloom::resolver::{Fetcher, GitRef, SourceRecord};
use serde_json::json;
use sha2::{Digest, Sha256};

struct Hosts;

impl Fetcher for Hosts {
    fn fetch_url(&self, url: &str) -> Result<Vec<u8>, String> {
        match url {
            u if u.ends_with("alive.patch") => Ok(b"--- a\n+++ b\n".to_vec()),
            u if u.ends_with("changed.patch") => Ok(b"--- a\n+++ c\n".to_vec()),
            _ => Err("HTTP 404".into()),
        }
    }

    fn fetch_git(&self, _: &str, _: &GitRef) -> Result<NarNode, String> {
        Err("repository not found".into())
    }

    fn fetch_svn(&self, _: &str, _: Option<u64>) -> Result<NarNode, String> {
        Err("no such repository".into())
    }
}

fn main() {
    let sha = |d: &[u8]| -> [u8; 32] { Sha256::digest(d).into() };
    let records = vec![
        SourceRecord::url_fetch(&["https://dl.example.org/alive.patch"], sha(b"--- a\n+++ b\n")).with_name("alive"),
        SourceRecord::url_fetch(&["https://dl.example.org/changed.patch"], sha(b"--- a\n+++ b\n")).with_name("changed"),
        SourceRecord::url_fetch(&["https://dl.example.org/gone-1.0.tar.gz"], [1; 32]).with_name("gone"),
        SourceRecord::git_fetch("https://git.example.org/x.git", GitRef::Tag("v2".into()), heirloom::nar::nar_hash(&NarNode::empty_dir())).with_name("x"),
    ];

    let mock = Arc::new(MockTransport::new());
    mock.on_fn(Method::Post, &format!("https://archive.example/api/1/{}", endpoints::known()), |req| {
        let ids: Vec<String> = serde_json::from_slice(&req.body).unwrap();
        let answer: serde_json::Map<_, _> = ids.into_iter().map(|id| (id, json!({"known": true}))).collect();
        Response::json(200, &serde_json::Value::Object(answer))
    });
    let client = HeritageClient::new(ArchiveEndpoint::new("https://archive.example/api/1/", None), mock);

    let audited = audit::audit_snapshot(&records, "example", &Hosts, 4);
    let audited = audit::coverage(audited, &client).unwrap();
    for a in &audited {
        println!("{:<8} {:?} / {:?}", a.source.name.as_deref().unwrap_or("?"), a.rot_status, a.coverage_status);
    }
    let reports = [SnapshotReport::new("example", "2024-06-01", &audited)];
    let mut out = std::io::stdout().lock();
    audit::write_rot_csv(&mut out, &reports).unwrap();
    audit::write_coverage_csv(&mut out, &reports).unwrap();
    audit::write_census_csv(&mut out, &reports).unwrap();
}
