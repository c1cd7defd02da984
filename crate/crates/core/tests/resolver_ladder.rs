//! The recovery ladder against a scripted archive: which rung answers, what
//! the trail records, and which requests are never made.

mod common;

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;

use common::{nar_of, project_tree, Archive, Upstream};
use heirloom::disarchive::{self, Contents, LocalDb};
use heirloom::http::{Method, Response};
use heirloom::nar::{tree_from_disk, NarDigest, TreeOptions};
use heirloom::resolver::{
    check_archival, emit_sources_manifest, load_sources_manifest, resolve, ArchivalState, FailureKind, Fetcher, GitRef,
    Outcome, Provenance, ResolveError, ResolveOptions, SourceRecord, SvnSubdir, UpstreamFetcher,
};
use serde_json::json;
use sha2::{Digest, Sha256};

fn sha(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

fn empty_db() -> (tempfile::TempDir, LocalDb) {
    let d = tempfile::tempdir().unwrap();
    let db = LocalDb::new(d.path());
    (d, db)
}

fn opts_without(rungs: &[Provenance]) -> ResolveOptions {
    ResolveOptions { disabled: rungs.iter().copied().collect::<HashSet<_>>(), ..Default::default() }
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn healthy_upstream_never_touches_the_archive() {
    let archive = Archive::new();
    let up = Upstream::default();
    let data = b"release tarball bytes".to_vec();
    up.file("https://ftp.example.org/hello-2.12.tar.gz", &data);
    let rec = SourceRecord::url_fetch(&["https://ftp.example.org/hello-2.12.tar.gz"], sha(&data));
    let (_d, db) = empty_db();
    let res = resolve(&rec, &archive.client(), &db, &up, &ResolveOptions::default()).unwrap();
    assert_eq!(res.provenance, Provenance::Upstream);
    assert_eq!(res.outcome, Outcome::Bytes(data));
    assert!(res.verified && res.trail.is_empty());
    assert_eq!(archive.mock.request_count(), 0);
}

#[test]
fn mirrors_are_tried_in_order() {
    let archive = Archive::new();
    let up = Upstream::default();
    let data = b"mirror copy".to_vec();
    up.file("https://mirror-b.example.org/x.tar.gz", &data);
    let rec = SourceRecord::url_fetch(
        &["https://mirror-a.example.org/x.tar.gz", "https://mirror-b.example.org/x.tar.gz"],
        sha(&data),
    );
    let (_d, db) = empty_db();
    let res = resolve(&rec, &archive.client(), &db, &up, &ResolveOptions::default()).unwrap();
    assert_eq!(res.provenance, Provenance::Upstream);
    assert_eq!(res.trail.len(), 1);
    assert_eq!(res.trail[0].path, "https://mirror-a.example.org/x.tar.gz");
}

#[test]
fn missing_repository_recovered_through_extid() {
    let archive = Archive::new();
    let tree = project_tree(1);
    let dir = archive.store_tree(&tree);
    archive.extid(&nar_of(&tree), &dir);
    let rec = SourceRecord::git_fetch("https://git.example.org/gone.git", GitRef::Tag("v1.0".into()), nar_of(&tree));
    let (_d, db) = empty_db();
    let res = resolve(&rec, &archive.client(), &db, &Upstream::default(), &ResolveOptions::default()).unwrap();
    assert_eq!(res.provenance, Provenance::SwhExtid);
    assert_eq!(res.outcome, Outcome::Tree(tree));
    assert_eq!(res.trail.len(), 1);
    assert_eq!(res.trail[0].rung, Provenance::Upstream);
    assert!(matches!(res.trail[0].kind, FailureKind::Unavailable(_)));
}

#[test]
fn tampered_upstream_falls_through_to_the_tag() {
    let archive = Archive::new();
    let good = project_tree(2);
    let url = "https://git.example.org/proj.git";
    let commit = [0x42; 20];
    let dir = archive.store_tree(&good);
    archive.revision(&commit, &dir);
    archive.tag(url, "v2.0", &commit);

    let up = Upstream::default();
    up.repo(url, "v2.0", project_tree(99));
    let rec = SourceRecord::git_fetch(url, GitRef::Tag("v2.0".into()), nar_of(&good));
    let (_d, db) = empty_db();
    let res = resolve(&rec, &archive.client(), &db, &up, &ResolveOptions::default()).unwrap();
    assert_eq!(res.provenance, Provenance::SwhTag);
    assert_eq!(res.outcome, Outcome::Tree(good.clone()));
    let rungs: Vec<Provenance> = res.trail.iter().map(|f| f.rung).collect();
    assert_eq!(rungs, [Provenance::Upstream, Provenance::SwhExtid]);
    match &res.trail[0].kind {
        FailureKind::HashMismatch { expected, actual } => {
            assert_eq!(expected, &nar_of(&good).to_hex());
            assert_eq!(actual, &nar_of(&project_tree(99)).to_hex());
        }
        k => panic!("expected a hash mismatch, got {k:?}"),
    }
}

#[test]
fn pinned_commit_recovered_through_revision() {
    let archive = Archive::new();
    let tree = project_tree(3);
    let commit = [0x5c; 20];
    let dir = archive.store_tree(&tree);
    archive.revision(&commit, &dir);
    let rec = SourceRecord::git_fetch("https://git.example.org/r.git", GitRef::Commit(commit), nar_of(&tree));
    let (_d, db) = empty_db();
    let res = resolve(&rec, &archive.client(), &db, &Upstream::default(), &ResolveOptions::default()).unwrap();
    assert_eq!(res.provenance, Provenance::SwhRevision);
    assert_eq!(archive.mock.count_matching("/origin/"), 0);
}

#[test]
fn archive_tree_with_wrong_digest_is_rejected() {
    let archive = Archive::new();
    let claimed = project_tree(4);
    let served = project_tree(5);
    let dir = archive.store_tree(&served);
    archive.extid(&nar_of(&claimed), &dir);
    let rec = SourceRecord::git_fetch("https://git.example.org/x.git", GitRef::Tag("1".into()), nar_of(&claimed));
    let (_d, db) = empty_db();
    let err = resolve(&rec, &archive.client(), &db, &Upstream::default(), &ResolveOptions::default()).unwrap_err();
    let ResolveError::AllPathsFailed(trail) = err else { panic!("{err:?}") };
    assert!(trail.iter().any(|f| f.rung == Provenance::SwhExtid && matches!(f.kind, FailureKind::HashMismatch { .. })));
    assert!(trail.iter().any(|f| f.rung == Provenance::SwhTag));
}

fn gnu_tarball(root: &Path) -> Vec<u8> {
    let src = root.join("pkg-1.0");
    std::fs::create_dir_all(src.join("lib")).unwrap();
    std::fs::write(src.join("README"), "a package\n").unwrap();
    std::fs::write(src.join("lib/util.c"), "int util(void) { return 1; }\n".repeat(30)).unwrap();
    let tar = root.join("pkg-1.0.tar");
    let st = Command::new("tar")
        .args(["--format=gnu", "--sort=name", "--mtime=2020-01-01", "--owner=0", "--group=0", "-cf"])
        .arg(&tar)
        .arg("-C")
        .arg(root)
        .arg("pkg-1.0")
        .status()
        .unwrap();
    assert!(st.success());
    let st = Command::new("gzip").args(["-9", "-n", "-f"]).arg(&tar).status().unwrap();
    assert!(st.success());
    std::fs::read(root.join("pkg-1.0.tar.gz")).unwrap()
}

#[test]
fn vanished_tarball_rebuilt_from_description() {
    if !have("tar") || !have("gzip") {
        eprintln!("skipping: tar or gzip missing");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bytes = gnu_tarball(tmp.path());
    let (desc, contents) = disarchive::disassemble(&bytes, "pkg-1.0.tar.gz").unwrap();
    let Contents::Tree(tree) = contents else { panic!("expected a tree") };

    let archive = Archive::new();
    let dir = archive.store_tree(&tree);
    assert_eq!(desc.addresses(), vec![dir]);
    let (_d, db) = empty_db();
    db.store(&desc).unwrap();

    let url = "https://ftp.example.org/pkg-1.0.tar.gz";
    let rec = SourceRecord::url_fetch(&[url], sha(&bytes));
    let res = resolve(&rec, &archive.client(), &db, &Upstream::default(), &ResolveOptions::default()).unwrap();
    assert_eq!(res.provenance, Provenance::DisarchiveRebuild);
    assert_eq!(res.outcome, Outcome::Bytes(bytes.clone()));

    let err = resolve(&rec, &archive.client(), &db, &Upstream::default(), &opts_without(&[Provenance::DisarchiveRebuild]))
        .unwrap_err();
    assert!(matches!(err, ResolveError::AllPathsFailed(t) if t.len() == 1));
}

#[test]
fn rungs_can_be_disabled_one_at_a_time() {
    let archive = Archive::new();
    let tree = project_tree(6);
    let commit = [0x77; 20];
    let url = "https://git.example.org/all.git";
    let dir = archive.store_tree(&tree);
    archive.extid(&nar_of(&tree), &dir);
    archive.revision(&commit, &dir);
    let up = Upstream::default();
    up.repo(url, &hex::encode(commit), tree.clone());
    let rec = SourceRecord::git_fetch(url, GitRef::Commit(commit), nar_of(&tree));
    let (_d, db) = empty_db();
    let client = archive.client();

    let mut disabled = Vec::new();
    for expect in [Provenance::Upstream, Provenance::SwhExtid, Provenance::SwhRevision] {
        let res = resolve(&rec, &client, &db, &up, &opts_without(&disabled)).unwrap();
        assert_eq!(res.provenance, expect, "with {disabled:?} disabled");
        assert!(res.trail.is_empty());
        disabled.push(expect);
    }
    let err = resolve(&rec, &client, &db, &up, &opts_without(&disabled)).unwrap_err();
    assert!(matches!(err, ResolveError::AllPathsFailed(t) if t.is_empty()));
}

#[test]
fn combined_svn_checkout_is_unsupported_by_the_archive() {
    let archive = Archive::new();
    let mut rec = SourceRecord::svn_fetch("svn://svn.example.org/texlive", 58_000, NarDigest([3; 32]));
    rec.svn_subdirs = Some(vec![
        SvnSubdir { path: "a".into(), digest: None },
        SvnSubdir { path: "b".into(), digest: None },
    ]);
    let (_d, db) = empty_db();
    let err = resolve(&rec, &archive.client(), &db, &Upstream::default(), &ResolveOptions::default()).unwrap_err();
    let ResolveError::UnsupportedCombination(trail) = err else { panic!("{err:?}") };
    assert!(trail.iter().any(|f| f.rung == Provenance::SwhExtid && matches!(f.kind, FailureKind::Unsupported(_))));
    assert_eq!(archive.mock.request_count(), 0);
}

#[test]
fn svn_subdirectories_with_digests_come_from_the_archive() {
    let archive = Archive::new();
    let (a, b) = (project_tree(7), project_tree(8));
    for t in [&a, &b] {
        let dir = archive.store_tree(t);
        archive.extid(&nar_of(t), &dir);
    }
    let whole = heirloom::nar::NarNode::dir([("a", a.clone()), ("b", b.clone())]);
    let mut rec = SourceRecord::svn_fetch("svn://svn.example.org/tl", 100, nar_of(&whole));
    rec.svn_subdirs = Some(vec![
        SvnSubdir { path: "a".into(), digest: Some(nar_of(&a)) },
        SvnSubdir { path: "b".into(), digest: Some(nar_of(&b)) },
    ]);
    let (_d, db) = empty_db();
    let res = resolve(&rec, &archive.client(), &db, &Upstream::default(), &ResolveOptions::default()).unwrap();
    assert_eq!(res.provenance, Provenance::SwhExtid);
    assert_eq!(res.outcome, Outcome::Tree(whole));
}

#[test]
fn archival_checks() {
    let archive = Archive::new();
    let client = archive.client();

    let tree = project_tree(9);
    let dir = archive.store_tree(&tree);
    archive.extid(&nar_of(&tree), &dir);
    let rec = SourceRecord::git_fetch("https://git.example.org/kept.git", GitRef::Tag("1".into()), nar_of(&tree));
    let s = check_archival(&rec, &client).unwrap();
    assert_eq!((s.state, s.swhid), (ArchivalState::Archived, Some(dir)));

    let fresh = "https://git.example.org/fresh.git";
    let save = Archive::url(&heirloom::heritage::endpoints::save("git", fresh));
    archive.mock.on(Method::Post, &save, Response::json(200, &json!({
        "origin_url": fresh, "visit_type": "git", "save_request_status": "accepted", "save_task_status": "pending"
    })));
    let rec = SourceRecord::git_fetch(fresh, GitRef::Tag("1".into()), NarDigest([1; 32]));
    let s = check_archival(&rec, &client).unwrap();
    assert_eq!(s.state, ArchivalState::NotArchived);
    assert_eq!(s.save_request.unwrap().request_status, "accepted");

    let data = b"archived tarball";
    let cnt = archive.content(data);
    let rec = SourceRecord::url_fetch(&["https://ftp.example.org/a.tar.gz"], sha(data));
    assert_eq!(check_archival(&rec, &client).unwrap().swhid, Some(cnt));

    let before = archive.mock.count_matching("/origin/save/");
    let rec = SourceRecord::url_fetch(&["https://ftp.example.org/b.tar.gz"], sha(b"unknown"));
    let s = check_archival(&rec, &client).unwrap();
    assert_eq!(s.state, ArchivalState::NotArchived);
    assert!(s.note.is_some() && s.save_request.is_none());
    assert_eq!(archive.mock.count_matching("/origin/save/"), before);
}

fn manifest_records() -> Vec<SourceRecord> {
    let mut svn = SourceRecord::svn_fetch("svn://svn.example.org/texlive/trunk", 58_000, NarDigest([0x33; 32]))
        .with_name("texlive-bin");
    svn.svn_subdirs = Some(vec![
        SvnSubdir { path: "Master/texmf-dist/fonts".into(), digest: Some(NarDigest([0x44; 32])) },
        SvnSubdir { path: "Master/texmf-dist/tex".into(), digest: None },
    ]);
    vec![
        SourceRecord::url_fetch(
            &["https://ftpmirror.gnu.org/sed/sed-4.8.tar.gz", "https://ftp.gnu.org/gnu/sed/sed-4.8.tar.gz"],
            [0x11; 32],
        )
        .with_name("sed"),
        SourceRecord::git_fetch("https://github.com/example/lib.git", GitRef::Tag("v1.2.3".into()), NarDigest([0x22; 32])),
        SourceRecord::git_fetch("https://git.example.org/pinned.git", GitRef::Commit([0xab; 20]), NarDigest([0x55; 32]))
            .with_name("pinned"),
        svn,
    ]
}

#[test]
fn manifest_matches_golden_file() {
    let golden = include_bytes!("golden/sources.json");
    let emitted = emit_sources_manifest(&manifest_records());
    assert_eq!(String::from_utf8_lossy(&emitted), String::from_utf8_lossy(golden));
    let mut reversed = manifest_records();
    reversed.reverse();
    assert_eq!(emit_sources_manifest(&reversed), emitted);
    let loaded = load_sources_manifest(golden).unwrap();
    assert_eq!(emit_sources_manifest(&loaded), emitted);
}

fn git(dir: &Path, args: &[&str]) -> String {
    let out = Command::new("git")
        .args(["-c", "user.name=t", "-c", "user.email=t@example.org", "-c", "commit.gpgsign=false", "-c", "tag.gpgsign=false"])
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap().trim().to_string()
}

#[test]
fn git_fetcher_checks_out_local_repositories() {
    if !have("git") {
        eprintln!("skipping: git missing");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let repo = tmp.path().join("repo");
    std::fs::create_dir_all(repo.join("src")).unwrap();
    git(&repo, &["init", "-q"]);
    std::fs::write(repo.join("src/lib.c"), "int f(void);\n").unwrap();
    git(&repo, &["add", "-A"]);
    git(&repo, &["commit", "-qm", "one"]);
    git(&repo, &["tag", "v1"]);
    let first = tree_from_disk(&repo, &TreeOptions::checkout()).unwrap();
    let c1 = git(&repo, &["rev-parse", "HEAD"]);
    std::fs::write(repo.join("NEWS"), "two\n").unwrap();
    git(&repo, &["add", "-A"]);
    git(&repo, &["commit", "-qm", "two"]);

    let url = format!("file://{}", repo.display());
    let f = UpstreamFetcher::new(std::sync::Arc::new(heirloom::http::RefusingTransport));
    assert_eq!(f.fetch_git(&url, &GitRef::Tag("v1".into())).unwrap(), first);
    assert_eq!(f.fetch_git(&url, &GitRef::parse(&c1)).unwrap(), first);
    assert!(f.fetch_git(&url, &GitRef::Tag("v9".into())).is_err());

    let rec = SourceRecord::git_fetch(&url, GitRef::Tag("v1".into()), nar_of(&first));
    let archive = Archive::new();
    let (_d, db) = empty_db();
    let res = resolve(&rec, &archive.client(), &db, &f, &ResolveOptions::default()).unwrap();
    assert_eq!(res.provenance, Provenance::Upstream);
}
