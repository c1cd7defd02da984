//! Recovers a git checkout whose upstream now serves something else. The
//! archive answers on the extid rung.

use std::collections::HashMap;
use std::sync::Arc;

use heirloom::disarchive::LocalDb;
use heirloom::heritage::{endpoints, make_bundle, ArchiveEndpoint, HeritageClient};
use heirloom::http::{Method, MockTransport, Response};
use heirloom::nar::{nar_hash, NarNode};
use heirloom::resolver::{resolve, Fetcher, GitRef, Outcome, ResolveOptions, SourceRecord};
use heirloom::swhid::swhid_for_directory;
use serde_json::json;

const BASE: &str = "https://archive.example/api/1/";

/// Upstream hosting from a fixed table.
struct Table(HashMap<String, NarNode>);

impl Fetcher for Table {
    fn fetch_url(&self, url: &str) -> Result<Vec<u8>, String> {
        Err(format!("{url}: HTTP 404"))
    }

    fn fetch_git(&self, url: &str, r: &GitRef) -> Result<NarNode, String> {
        self.0.get(&format!("{url}#{}", r.as_string())).cloned().ok_or_else(|| "repository not found".into())
    }

    fn fetch_svn(&self, url: &str, _: Option<u64>) -> Result<NarNode, String> {
        Err(format!("{url}: no such repository"))
    }
}

fn main() {
    let original = NarNode::dir([("lib.c", NarNode::file("int f(void) { return 1; }\n"))]);
    let retagged = NarNode::dir([("lib.c", NarNode::file("int f(void) { return 2; }\n"))]);
    let url = "https://git.example.org/lib.git";
    let record = SourceRecord::git_fetch(url, GitRef::Tag("v1.0".into()), nar_hash(&original)).with_name("lib");

    let upstream = Table(HashMap::from([(format!("{url}#v1.0"), retagged)]));
    let dir = swhid_for_directory(&original).unwrap();
    let mock = Arc::new(MockTransport::new());
    let api = |p: &str| format!("{BASE}{p}");
    mock.on(Method::Get, &api(&endpoints::extid_nar_sha256(&record_nar(&record))), Response::json(200, &json!({
        "extid_type": "nar-sha256", "target": dir.to_string(), "target_type": "directory"
    })));
    mock.on(Method::Get, &api(&endpoints::vault_flat(&dir)), Response::json(200, &json!({
        "status": "done", "fetch_url": "https://objects.example/b"
    })));
    mock.on(Method::Get, "https://objects.example/b", Response::new(200, make_bundle(&dir, &original)));

    let client = Arc::new(HeritageClient::new(ArchiveEndpoint::new(BASE, None), mock));
    let tmp = tempfile::tempdir().unwrap();
    let db = LocalDb::new(tmp.path());
    match resolve(&record, &client, &db, &upstream, &ResolveOptions::default()) {
        Ok(res) => {
            println!("recovered via {} (verified: {})", res.provenance.as_str(), res.verified);
            for f in &res.trail {
                println!("  tried {f}");
            }
            assert_eq!(res.outcome, Outcome::Tree(original));
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}

fn record_nar(r: &SourceRecord) -> heirloom::nar::NarDigest {
    match &r.expected {
        heirloom::resolver::Expected::Nar(d) => *d,
        _ => unreachable!(),
    }
}
