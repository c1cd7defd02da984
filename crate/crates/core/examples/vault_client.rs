//! Talks to a scripted archive: resolves a nar digest to a directory and
//! cooks it in the Vault, following the redirect to the bundle.

use std::sync::Arc;
use std::time::Duration;

use heirloom::heritage::{endpoints, make_bundle, ArchiveEndpoint, HeritageClient};
use heirloom::http::{Method, MockTransport, Response};
use heirloom::nar::{nar_hash, NarNode};
use heirloom::swhid::swhid_for_directory;
use serde_json::json;

const BASE: &str = "https://archive.example/api/1/";

fn main() {
    let tree = NarNode::dir([("README", NarNode::file("archived\n"))]);
    let nar = nar_hash(&tree);
    let dir = swhid_for_directory(&tree).unwrap();

    let mock = Arc::new(MockTransport::new());
    let url = |p: &str| format!("{BASE}{p}");
    mock.on(Method::Get, &url(&endpoints::extid_nar_sha256(&nar)), Response::json(200, &json!({
        "extid_type": "nar-sha256", "target": dir.to_string(), "target_type": "directory"
    })));
    mock.on_seq(Method::Get, &url(&endpoints::vault_flat(&dir)), vec![
        Response::new(404, ""),
        Response::json(200, &json!({"status": "pending"})),
        Response::json(200, &json!({"status": "done", "fetch_url": "https://objects.example/bundle"})),
    ]);
    mock.on(Method::Post, &url(&endpoints::vault_flat(&dir)), Response::json(200, &json!({"status": "new"})));
    mock.on(Method::Get, "https://objects.example/bundle", Response::redirect(302, "/signed?sig=1"));
    mock.on(Method::Get, "https://objects.example/signed?sig=1", Response::new(200, make_bundle(&dir, &tree)));

    let client = HeritageClient::new(ArchiveEndpoint::new(BASE, None), mock.clone());
    let found = client.resolve_extid_nar_sha256(&nar).unwrap();
    println!("{} -> {found}", nar.to_sri());
    let cooked = client.vault_fetch(&found, Duration::from_millis(10), Duration::from_secs(5)).unwrap();
    println!("vault bundle matches: {}", cooked == tree);
    for r in mock.requests() {
        println!("  {:?} {}", r.method, r.url);
    }
}
