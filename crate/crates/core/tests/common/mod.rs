//! Scripted archive and upstream doubles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use heirloom::heritage::{endpoints, make_bundle, ArchiveEndpoint, HeritageClient, ManualClock};
use heirloom::http::{Method, MockTransport, Response};
use heirloom::nar::{nar_hash, NarDigest, NarNode};
use heirloom::resolver::{Fetcher, GitRef};
use heirloom::swhid::{swhid_for_directory, Swhid};
use serde_json::json;

pub const BASE: &str = "https://swh.test/api/1/";

pub struct Archive {
    pub mock: Arc<MockTransport>,
    pub clock: Arc<ManualClock>,
}

impl Archive {
    pub fn new() -> Archive {
        Archive { mock: Arc::new(MockTransport::new()), clock: Arc::new(ManualClock::default()) }
    }

    pub fn url(path: &str) -> String {
        format!("{BASE}{path}")
    }

    pub fn client(&self) -> Arc<HeritageClient> {
        Arc::new(HeritageClient::with_clock(ArchiveEndpoint::new(BASE, None), self.mock.clone(), self.clock.clone()))
    }

    /// Makes `tree` cookable in the Vault and returns its directory SWHID.
    pub fn store_tree(&self, tree: &NarNode) -> Swhid {
        let dir = swhid_for_directory(tree).unwrap();
        self.store_tree_at(&dir, tree);
        dir
    }

    /// Serves `tree` as the Vault bundle of `dir`, whether or not it is.
    pub fn store_tree_at(&self, dir: &Swhid, tree: &NarNode) {
        let dir = *dir;
        let raw = format!("https://objects.swh.test/{}", dir.digest_hex());
        self.mock.on(Method::Get, &Self::url(&endpoints::vault_flat(&dir)), Response::json(200, &json!({
            "status": "done", "fetch_url": raw
        })));
        self.mock.on(Method::Get, &raw, Response::new(200, make_bundle(&dir, tree)));
    }

    pub fn extid(&self, nar: &NarDigest, dir: &Swhid) {
        self.mock.on(Method::Get, &Self::url(&endpoints::extid_nar_sha256(nar)), Response::json(200, &json!({
            "extid_type": "nar-sha256", "extid": format!("hex:{}", nar.to_hex()),
            "target": dir.to_string(), "target_type": "directory"
        })));
    }

    pub fn revision(&self, commit: &[u8; 20], dir: &Swhid) {
        self.mock.on(Method::Get, &Self::url(&endpoints::revision(commit)), Response::json(200, &json!({
            "id": hex::encode(commit), "directory": dir.digest_hex()
        })));
    }

    pub fn tag(&self, origin: &str, tag: &str, commit: &[u8; 20]) {
        let snap = hex::encode(&commit[..10]);
        self.mock.on(Method::Get, &Self::url(&endpoints::latest_visit(origin)), Response::json(200, &json!({
            "origin": origin, "snapshot": snap, "status": "full"
        })));
        self.mock.on(Method::Get, &Self::url(&endpoints::snapshot(&snap, None)), Response::json(200, &json!({
            "branches": {format!("refs/tags/{tag}"): {"target": hex::encode(commit), "target_type": "revision"}},
            "next_branch": null
        })));
    }

    pub fn content(&self, data: &[u8]) -> Swhid {
        use sha2::Digest;
        let sha: [u8; 32] = sha2::Sha256::digest(data).into();
        let cnt = heirloom::swhid::swhid_for_content(data);
        self.mock.on(Method::Get, &Self::url(&endpoints::content_sha256(&sha)), Response::json(200, &json!({
            "checksums": {"sha256": hex::encode(sha), "sha1_git": cnt.digest_hex()}
        })));
        self.mock.on(Method::Get, &Self::url(&endpoints::content_raw(&cnt)), Response::new(200, data.to_vec()));
        cnt
    }

    /// Requests that reached the archive rather than an upstream host.
    pub fn archive_requests(&self) -> usize {
        self.mock.count_matching("swh.test")
    }
}

/// Upstream hosts answering from a table; anything absent is a 404.
#[derive(Default)]
pub struct Upstream {
    pub files: Mutex<HashMap<String, Vec<u8>>>,
    pub repos: Mutex<HashMap<(String, String), NarNode>>,
    pub calls: Mutex<Vec<String>>,
}

impl Upstream {
    pub fn file(&self, url: &str, data: &[u8]) {
        self.files.lock().unwrap().insert(url.into(), data.to_vec());
    }

    pub fn repo(&self, url: &str, r: &str, tree: NarNode) {
        self.repos.lock().unwrap().insert((url.into(), r.into()), tree);
    }
}

impl Fetcher for Upstream {
    fn fetch_url(&self, url: &str) -> Result<Vec<u8>, String> {
        self.calls.lock().unwrap().push(url.into());
        self.files.lock().unwrap().get(url).cloned().ok_or_else(|| format!("{url}: HTTP 404"))
    }

    fn fetch_git(&self, url: &str, r: &GitRef) -> Result<NarNode, String> {
        self.calls.lock().unwrap().push(url.into());
        self.repos.lock().unwrap().get(&(url.to_string(), r.as_string())).cloned().ok_or_else(|| format!("{url}: repository not found"))
    }

    fn fetch_svn(&self, url: &str, rev: Option<u64>) -> Result<NarNode, String> {
        self.calls.lock().unwrap().push(url.into());
        let r = rev.map(|r| r.to_string()).unwrap_or_default();
        self.repos.lock().unwrap().get(&(url.to_string(), r)).cloned().ok_or_else(|| format!("{url}: svn: E170013"))
    }
}

pub fn project_tree(seed: u8) -> NarNode {
    NarNode::dir([
        ("README".to_string(), NarNode::file(format!("project {seed}\n"))),
        ("configure".to_string(), NarNode::executable("#!/bin/sh\nexit 0\n")),
        ("src".to_string(), NarNode::dir([("main.c", NarNode::file(vec![seed; 700]))])),
    ])
}

pub fn nar_of(tree: &NarNode) -> NarDigest {
    nar_hash(tree)
}
