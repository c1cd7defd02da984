//! Source recovery: upstream first, then the archive, with every candidate
//! checked against the digest the record declares.

use std::collections::HashSet;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::disarchive::{self, DbError, DescriptionDb};
use crate::heritage::{HeritageClient, HeritageError, VaultContent, VisitType};
use crate::http::{send_following, Request, Transport};
use crate::nar::{nar_hash, tree_from_disk, NarDigest, NarNode, TreeOptions};
use crate::swhid::{ObjectType, Swhid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FetchMethod {
    UrlFetch,
    GitFetch,
    SvnFetch,
}

impl FetchMethod {
    pub fn is_vcs(self) -> bool {
        self != FetchMethod::UrlFetch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Expected {
    /// SHA-256 of the downloaded file.
    File([u8; 32]),
    /// nar SHA-256 of a checkout.
    Nar(NarDigest),
}

impl Expected {
    pub fn to_sri(&self) -> String {
        match self {
            Expected::File(d) => format!("sha256-{}", base64::engine::general_purpose::STANDARD.encode(d)),
            Expected::Nar(d) => d.to_sri(),
        }
    }

    fn hex(&self) -> String {
        match self {
            Expected::File(d) => hex::encode(d),
            Expected::Nar(d) => d.to_hex(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GitRef {
    Commit([u8; 20]),
    Tag(String),
}

impl GitRef {
    pub fn as_string(&self) -> String {
        match self {
            GitRef::Commit(c) => hex::encode(c),
            GitRef::Tag(t) => t.clone(),
        }
    }

    /// Forty hex digits name a commit; anything else is a tag.
    pub fn parse(s: &str) -> GitRef {
        let mut c = [0u8; 20];
        match hex::decode_to_slice(s, &mut c) {
            Ok(()) => GitRef::Commit(c),
            Err(_) => GitRef::Tag(s.to_string()),
        }
    }
}

/// One sub-directory of a Subversion checkout.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SvnSubdir {
    pub path: String,
    /// nar SHA-256 of this sub-directory alone, when known.
    pub digest: Option<NarDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourceRecord {
    /// Package the source belongs to, if known.
    pub name: Option<String>,
    pub method: FetchMethod,
    pub urls: Vec<String>,
    pub expected: Expected,
    pub git_ref: Option<GitRef>,
    pub svn_rev: Option<u64>,
    pub svn_subdirs: Option<Vec<SvnSubdir>>,
}

impl SourceRecord {
    pub fn url_fetch(urls: &[&str], sha256: [u8; 32]) -> SourceRecord {
        SourceRecord {
            name: None,
            method: FetchMethod::UrlFetch,
            urls: urls.iter().map(|u| u.to_string()).collect(),
            expected: Expected::File(sha256),
            git_ref: None,
            svn_rev: None,
            svn_subdirs: None,
        }
    }

    pub fn git_fetch(url: &str, git_ref: GitRef, nar: NarDigest) -> SourceRecord {
        SourceRecord {
            name: None,
            method: FetchMethod::GitFetch,
            urls: vec![url.to_string()],
            expected: Expected::Nar(nar),
            git_ref: Some(git_ref),
            svn_rev: None,
            svn_subdirs: None,
        }
    }

    pub fn svn_fetch(url: &str, rev: u64, nar: NarDigest) -> SourceRecord {
        SourceRecord {
            name: None,
            method: FetchMethod::SvnFetch,
            urls: vec![url.to_string()],
            expected: Expected::Nar(nar),
            git_ref: None,
            svn_rev: Some(rev),
            svn_subdirs: None,
        }
    }

    pub fn with_name(mut self, name: &str) -> SourceRecord {
        self.name = Some(name.to_string());
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.urls.is_empty() {
            return Err("record has no URL".into());
        }
        match (self.method, &self.expected) {
            (FetchMethod::UrlFetch, Expected::File(_)) | (FetchMethod::GitFetch | FetchMethod::SvnFetch, Expected::Nar(_)) => {}
            _ => return Err("digest kind does not match the fetch method".into()),
        }
        if self.method == FetchMethod::GitFetch && self.git_ref.is_none() {
            return Err("git-fetch record without a commit or tag".into());
        }
        if self.method != FetchMethod::SvnFetch && self.svn_subdirs.is_some() {
            return Err("sub-directories only apply to svn-fetch".into());
        }
        Ok(())
    }

    /// Sub-directory lists whose parts carry no digests of their own. The
    /// archive holds no object for such a combination.
    pub fn is_combined_checkout(&self) -> bool {
        self.svn_subdirs.as_ref().is_some_and(|s| s.iter().any(|d| d.digest.is_none()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Bytes(Vec<u8>),
    Tree(NarNode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    Upstream,
    SwhExtid,
    SwhRevision,
    SwhTag,
    DisarchiveRebuild,
}

impl Provenance {
    pub const LADDER: [Provenance; 5] = [
        Provenance::Upstream,
        Provenance::SwhExtid,
        Provenance::SwhRevision,
        Provenance::SwhTag,
        Provenance::DisarchiveRebuild,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Upstream => "upstream",
            Provenance::SwhExtid => "swh-extid",
            Provenance::SwhRevision => "swh-revision",
            Provenance::SwhTag => "swh-tag",
            Provenance::DisarchiveRebuild => "disarchive-rebuild",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailureKind {
    HashMismatch { expected: String, actual: String },
    Unavailable(String),
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub rung: Provenance,
    /// URL, identifier, or digest that was tried.
    pub path: String,
    pub kind: FailureKind,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            FailureKind::HashMismatch { expected, actual } => {
                write!(f, "{} {}: hash mismatch: expected {expected}, got {actual}", self.rung.as_str(), self.path)
            }
            FailureKind::Unavailable(m) => write!(f, "{} {}: {m}", self.rung.as_str(), self.path),
            FailureKind::Unsupported(m) => write!(f, "{} {}: unsupported: {m}", self.rung.as_str(), self.path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub outcome: Outcome,
    pub provenance: Provenance,
    /// Always true: unverified outcomes are never returned.
    pub verified: bool,
    /// Failures on the rungs tried before the successful one.
    pub trail: Vec<Failure>,
}

fn trail_text(trail: &[Failure]) -> String {
    trail.iter().map(|f| format!("\n  {f}")).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("invalid source record: {0}")]
    InvalidRecord(String),
    #[error("all recovery paths failed:{}", trail_text(.0))]
    AllPathsFailed(Vec<Failure>),
    #[error("sub-directory combination cannot be recovered from the archive:{}", trail_text(.0))]
    UnsupportedCombination(Vec<Failure>),
}

/// Access to upstream hosting, with no archive fallback.
pub trait Fetcher: Send + Sync {
    fn fetch_url(&self, url: &str) -> Result<Vec<u8>, String>;
    fn fetch_git(&self, url: &str, r: &GitRef) -> Result<NarNode, String>;
    fn fetch_svn(&self, url: &str, rev: Option<u64>) -> Result<NarNode, String>;
}

/// HTTP downloads through a [`Transport`] (at most 10 redirects); git and
/// Subversion through the `git` and `svn` commands.
pub struct UpstreamFetcher {
    transport: Arc<dyn Transport>,
}

impl UpstreamFetcher {
    pub fn new(transport: Arc<dyn Transport>) -> UpstreamFetcher {
        UpstreamFetcher { transport }
    }
}

fn run(cmd: &mut Command) -> Result<(), String> {
    let out = cmd.output().map_err(|e| format!("{:?}: {e}", cmd.get_program()))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{:?} failed: {}", cmd.get_program(), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn read_checkout(dir: &Path) -> Result<NarNode, String> {
    tree_from_disk(dir, &TreeOptions::checkout()).map_err(|e| e.to_string())
}

impl Fetcher for UpstreamFetcher {
    fn fetch_url(&self, url: &str) -> Result<Vec<u8>, String> {
        let resp = send_following(&*self.transport, Request::get(url), 10).map_err(|e| e.to_string())?;
        if resp.status == 200 {
            Ok(resp.body)
        } else {
            Err(format!("HTTP {}", resp.status))
        }
    }

    fn fetch_git(&self, url: &str, r: &GitRef) -> Result<NarNode, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let dir = tmp.path().join("checkout");
        run(Command::new("git").args(["clone", "--quiet", "--no-checkout", url]).arg(&dir))?;
        let rev = match r {
            GitRef::Commit(c) => hex::encode(c),
            GitRef::Tag(t) => format!("refs/tags/{t}"),
        };
        run(Command::new("git").arg("-C").arg(&dir).args(["-c", "advice.detachedHead=false", "checkout", "--quiet", &rev]))?;
        read_checkout(&dir)
    }

    fn fetch_svn(&self, url: &str, rev: Option<u64>) -> Result<NarNode, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let dir = tmp.path().join("export");
        let mut cmd = Command::new("svn");
        cmd.args(["export", "--quiet", "--non-interactive"]);
        if let Some(r) = rev {
            cmd.args(["-r", &r.to_string()]);
        }
        run(cmd.arg(url).arg(&dir))?;
        read_checkout(&dir)
    }
}

#[derive(Debug, Clone)]
pub struct ResolveOptions {
    /// Rungs to skip.
    pub disabled: HashSet<Provenance>,
    pub vault_poll: Duration,
    pub vault_deadline: Duration,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        ResolveOptions {
            disabled: HashSet::new(),
            vault_poll: Duration::from_secs(10),
            vault_deadline: Duration::from_secs(3600),
        }
    }
}

fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Checks `outcome` against `expected`, returning the actual digest in hex
/// on mismatch.
pub fn verify(outcome: &Outcome, expected: &Expected) -> Result<(), String> {
    let (ok, actual) = match (outcome, expected) {
        (Outcome::Bytes(b), Expected::File(d)) => {
            let a = sha256(b);
            (a == *d, hex::encode(a))
        }
        (Outcome::Tree(t), Expected::Nar(d)) => {
            let a = nar_hash(t);
            (a == *d, a.to_hex())
        }
        (Outcome::Bytes(b), Expected::Nar(_)) => return Err(format!("file of sha256 {}", hex::encode(sha256(b)))),
        (Outcome::Tree(t), Expected::File(_)) => return Err(format!("tree of nar sha256 {}", nar_hash(t).to_hex())),
    };
    if ok {
        Ok(())
    } else {
        Err(actual)
    }
}

fn subdir_url(url: &str, path: &str) -> String {
    format!("{}/{}", url.trim_end_matches('/'), path.trim_matches('/'))
}

struct Ladder<'a> {
    record: &'a SourceRecord,
    trail: Vec<Failure>,
}

impl Ladder<'_> {
    fn fail(&mut self, rung: Provenance, path: impl Into<String>, kind: FailureKind) {
        self.trail.push(Failure { rung, path: path.into(), kind });
    }

    /// Verifies a candidate; on mismatch records it and returns None.
    fn accept(&mut self, rung: Provenance, path: &str, outcome: Outcome) -> Option<Outcome> {
        self.accept_against(rung, path, outcome, &self.record.expected.clone())
    }

    fn accept_against(&mut self, rung: Provenance, path: &str, outcome: Outcome, expected: &Expected) -> Option<Outcome> {
        match verify(&outcome, expected) {
            Ok(()) => Some(outcome),
            Err(actual) => {
                self.fail(rung, path, FailureKind::HashMismatch { expected: expected.hex(), actual });
                None
            }
        }
    }

    /// Builds a sub-directory checkout from per-part fetches, verifying each
    /// part that declares its own digest.
    fn assemble_subdirs(
        &mut self,
        rung: Provenance,
        subdirs: &[SvnSubdir],
        mut fetch: impl FnMut(&SvnSubdir) -> Result<NarNode, (String, String)>,
    ) -> Option<Outcome> {
        let mut tree = NarNode::empty_dir();
        for s in subdirs {
            let part = match fetch(s) {
                Ok(p) => p,
                Err((path, msg)) => {
                    self.fail(rung, path, FailureKind::Unavailable(msg));
                    return None;
                }
            };
            if let Some(d) = s.digest {
                self.accept_against(rung, &s.path, Outcome::Tree(part.clone()), &Expected::Nar(d))?;
            }
            if tree.insert(s.path.trim_matches('/').as_bytes(), part).is_err() {
                self.fail(rung, &s.path, FailureKind::Unsupported("overlapping sub-directories".into()));
                return None;
            }
        }
        Some(Outcome::Tree(tree))
    }

    fn upstream(&mut self, fetcher: &dyn Fetcher) -> Option<Outcome> {
        let rung = Provenance::Upstream;
        for url in &self.record.urls {
            let got = match self.record.method {
                FetchMethod::UrlFetch => fetcher.fetch_url(url).map(Outcome::Bytes),
                FetchMethod::GitFetch => fetcher.fetch_git(url, self.record.git_ref.as_ref().unwrap()).map(Outcome::Tree),
                FetchMethod::SvnFetch => match &self.record.svn_subdirs {
                    None => fetcher.fetch_svn(url, self.record.svn_rev).map(Outcome::Tree),
                    Some(subdirs) => {
                        let rev = self.record.svn_rev;
                        let Some(o) = self.assemble_subdirs(rung, subdirs, |s| {
                            let u = subdir_url(url, &s.path);
                            fetcher.fetch_svn(&u, rev).map_err(|e| (u, e))
                        }) else {
                            continue;
                        };
                        Ok(o)
                    }
                },
            };
            match got {
                Ok(o) => {
                    if let Some(o) = self.accept(rung, url, o) {
                        return Some(o);
                    }
                }
                Err(e) => self.fail(rung, url.as_str(), FailureKind::Unavailable(e)),
            }
        }
        None
    }

    fn vault_tree(&mut self, rung: Provenance, client: &HeritageClient, dir: &Swhid, opts: &ResolveOptions) -> Option<NarNode> {
        match client.vault_fetch(dir, opts.vault_poll, opts.vault_deadline) {
            Ok(t) => Some(t),
            Err(e) => {
                self.fail(rung, dir.to_string(), FailureKind::Unavailable(e.to_string()));
                None
            }
        }
    }

    fn extid_tree(&mut self, client: &HeritageClient, digest: &NarDigest, opts: &ResolveOptions) -> Option<NarNode> {
        let rung = Provenance::SwhExtid;
        match client.resolve_extid_nar_sha256(digest) {
            Ok(dir) => self.vault_tree(rung, client, &dir, opts),
            Err(e) => {
                self.fail(rung, format!("nar-sha256:{}", digest.to_hex()), FailureKind::Unavailable(e.to_string()));
                None
            }
        }
    }

    fn extid(&mut self, client: &HeritageClient, opts: &ResolveOptions) -> Option<Outcome> {
        let Expected::Nar(digest) = self.record.expected else { return None };
        match &self.record.svn_subdirs {
            Some(subdirs) => {
                let mut trees = Vec::new();
                for s in subdirs {
                    let tree = self.extid_tree(client, &s.digest.expect("combined checkouts never reach the archive"), opts)?;
                    trees.push(tree);
                }
                let mut parts = trees.into_iter();
                let o = self.assemble_subdirs(Provenance::SwhExtid, subdirs, |_| Ok(parts.next().unwrap()))?;
                self.accept(Provenance::SwhExtid, "sub-directories", o)
            }
            None => {
                let tree = self.extid_tree(client, &digest, opts)?;
                self.accept(Provenance::SwhExtid, &format!("nar-sha256:{}", digest.to_hex()), Outcome::Tree(tree))
            }
        }
    }

    fn by_commit(&mut self, rung: Provenance, client: &HeritageClient, commit: &[u8; 20], opts: &ResolveOptions) -> Option<Outcome> {
        let dir = match client.lookup_revision(commit) {
            Ok((_, dir)) => dir,
            Err(e) => {
                self.fail(rung, format!("swh:1:rev:{}", hex::encode(commit)), FailureKind::Unavailable(e.to_string()));
                return None;
            }
        };
        let tree = self.vault_tree(rung, client, &dir, opts)?;
        self.accept(rung, &dir.to_string(), Outcome::Tree(tree))
    }

    fn by_tag(&mut self, client: &HeritageClient, tag: &str, opts: &ResolveOptions) -> Option<Outcome> {
        let rung = Provenance::SwhTag;
        for url in &self.record.urls {
            match client.lookup_origin_tag(url, tag) {
                Ok(commit) => {
                    if let Some(o) = self.by_commit(rung, client, &commit, opts) {
                        return Some(o);
                    }
                }
                Err(e) => self.fail(rung, format!("{url}@{tag}"), FailureKind::Unavailable(e.to_string())),
            }
        }
        None
    }

    fn rebuild(&mut self, client: &Arc<HeritageClient>, db: &dyn DescriptionDb, opts: &ResolveOptions) -> Option<Outcome> {
        let rung = Provenance::DisarchiveRebuild;
        let Expected::File(sha) = self.record.expected else { return None };
        let path = format!("sha256:{}", hex::encode(sha));
        let desc = match db.lookup(&sha) {
            Ok(d) => d,
            Err(e) => {
                let kind = match e {
                    DbError::NotFound(_) => FailureKind::Unavailable("no description".into()),
                    e => FailureKind::Unavailable(e.to_string()),
                };
                self.fail(rung, path, kind);
                return None;
            }
        };
        let provider = VaultContent::new(client.clone(), opts.vault_poll, opts.vault_deadline);
        match disarchive::assemble(&desc, &provider) {
            Ok(bytes) => self.accept(rung, &path, Outcome::Bytes(bytes)),
            Err(e) => {
                let kind = match e {
                    disarchive::DisarchiveError::ContentDigestMismatch { expected, actual } => {
                        FailureKind::HashMismatch { expected, actual }
                    }
                    disarchive::DisarchiveError::ReconstructionMismatch { expected, actual, .. } => {
                        FailureKind::HashMismatch { expected, actual }
                    }
                    e => FailureKind::Unavailable(e.to_string()),
                };
                self.fail(rung, path, kind);
                None
            }
        }
    }
}

/// Runs the recovery ladder for one record.
pub fn resolve(
    record: &SourceRecord,
    client: &Arc<HeritageClient>,
    db: &dyn DescriptionDb,
    fetcher: &dyn Fetcher,
    opts: &ResolveOptions,
) -> Result<Resolution, ResolveError> {
    record.validate().map_err(ResolveError::InvalidRecord)?;
    let mut ladder = Ladder { record, trail: Vec::new() };
    let combined = record.is_combined_checkout();
    for rung in Provenance::LADDER {
        if opts.disabled.contains(&rung) {
            continue;
        }
        let applies = match rung {
            Provenance::Upstream => true,
            Provenance::SwhExtid => record.method.is_vcs(),
            Provenance::SwhRevision => matches!(record.git_ref, Some(GitRef::Commit(_))),
            Provenance::SwhTag => matches!(record.git_ref, Some(GitRef::Tag(_))),
            Provenance::DisarchiveRebuild => record.method == FetchMethod::UrlFetch,
        };
        if !applies {
            continue;
        }
        if combined && rung != Provenance::Upstream {
            ladder.fail(rung, record.urls[0].as_str(), FailureKind::Unsupported("sub-directories without individual digests".into()));
            continue;
        }
        let found = match rung {
            Provenance::Upstream => ladder.upstream(fetcher),
            Provenance::SwhExtid => ladder.extid(client, opts),
            Provenance::SwhRevision => match &record.git_ref {
                Some(GitRef::Commit(c)) => ladder.by_commit(rung, client, c, opts),
                _ => None,
            },
            Provenance::SwhTag => match &record.git_ref {
                Some(GitRef::Tag(t)) => ladder.by_tag(client, t, opts),
                _ => None,
            },
            Provenance::DisarchiveRebuild => ladder.rebuild(client, db, opts),
        };
        if let Some(outcome) = found {
            debug_assert!(verify(&outcome, &record.expected).is_ok());
            return Ok(Resolution { outcome, provenance: rung, verified: true, trail: ladder.trail });
        }
    }
    if combined {
        Err(ResolveError::UnsupportedCombination(ladder.trail))
    } else {
        Err(ResolveError::AllPathsFailed(ladder.trail))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchivalState {
    Archived,
    NotArchived,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchivalStatus {
    pub state: ArchivalState,
    pub swhid: Option<Swhid>,
    /// Filed when a VCS source was missing.
    pub save_request: Option<crate::heritage::SaveRequest>,
    pub note: Option<String>,
}

/// Whether the archive already holds a record's source; if it does not and
/// the source is a VCS checkout, asks the archive to save it.
pub fn check_archival(record: &SourceRecord, client: &HeritageClient) -> Result<ArchivalStatus, HeritageError> {
    record.validate().map_err(HeritageError::InvalidArgument)?;
    let archived = |swhid| ArchivalStatus { state: ArchivalState::Archived, swhid: Some(swhid), save_request: None, note: None };
    match record.expected {
        Expected::Nar(d) => {
            match client.resolve_extid_nar_sha256(&d) {
                Ok(s) => return Ok(archived(s)),
                Err(HeritageError::NotFound(_)) => {}
                Err(e) => return Err(e),
            }
            if let Some(GitRef::Commit(c)) = &record.git_ref {
                let rev = Swhid { object_type: ObjectType::Revision, digest: *c };
                if client.known(&[rev])?.get(&rev) == Some(&true) {
                    return Ok(archived(rev));
                }
            }
            let visit = if record.method == FetchMethod::GitFetch { VisitType::Git } else { VisitType::Svn };
            let req = client.save_code_now(&record.urls[0], visit)?;
            Ok(ArchivalStatus { state: ArchivalState::NotArchived, swhid: None, save_request: Some(req), note: None })
        }
        Expected::File(sha) => match client.content_by_sha256(&sha) {
            Ok(s) => Ok(archived(s)),
            Err(HeritageError::NotFound(_)) => Ok(ArchivalStatus {
                state: ArchivalState::NotArchived,
                swhid: None,
                save_request: None,
                note: Some("file downloads cannot be submitted for saving".into()),
            }),
            Err(e) => Err(e),
        },
    }
}

fn method_type(m: FetchMethod) -> &'static str {
    match m {
        FetchMethod::UrlFetch => "url",
        FetchMethod::GitFetch => "git",
        FetchMethod::SvnFetch => "svn",
    }
}

fn record_to_json(r: &SourceRecord) -> Value {
    let mut v = json!({
        "type": method_type(r.method),
        "urls": r.urls,
        "integrity": r.expected.to_sri(),
    });
    let o = v.as_object_mut().unwrap();
    if let Some(n) = &r.name {
        o.insert("name".into(), json!(n));
    }
    match r.method {
        FetchMethod::UrlFetch => {}
        FetchMethod::GitFetch => {
            o.insert("git_url".into(), json!(r.urls[0]));
            if let Some(g) = &r.git_ref {
                o.insert("git_ref".into(), json!(g.as_string()));
            }
        }
        FetchMethod::SvnFetch => {
            o.insert("svn_url".into(), json!(r.urls[0]));
            if let Some(rev) = r.svn_rev {
                o.insert("svn_revision".into(), json!(rev));
            }
            if let Some(subdirs) = &r.svn_subdirs {
                let list: Vec<Value> = subdirs
                    .iter()
                    .map(|s| match &s.digest {
                        Some(d) => json!({"path": s.path, "integrity": d.to_sri()}),
                        None => json!({"path": s.path}),
                    })
                    .collect();
                o.insert("svn_subdirs".into(), Value::Array(list));
            }
        }
    }
    v
}

/// The machine-readable list of sources: sorted by first URL, keys in
/// lexicographic order, so equal record sets give identical bytes.
pub fn emit_sources_manifest(records: &[SourceRecord]) -> Vec<u8> {
    let mut entries: Vec<Value> = records.iter().map(record_to_json).collect();
    entries.sort_by_cached_key(|e| (e["urls"][0].as_str().unwrap_or_default().to_string(), e.to_string()));
    let mut out = serde_json::to_vec_pretty(&json!({"sources": entries, "version": "1"})).unwrap();
    out.push(b'\n');
    out
}

fn parse_sri(s: &str) -> Option<[u8; 32]> {
    let b64 = s.strip_prefix("sha256-")?;
    base64::engine::general_purpose::STANDARD.decode(b64).ok()?.try_into().ok()
}

fn record_from_json(v: &Value) -> Result<SourceRecord, String> {
    let s = |k: &str| v.get(k).and_then(Value::as_str);
    let method = match s("type") {
        Some("url") => FetchMethod::UrlFetch,
        Some("git") => FetchMethod::GitFetch,
        Some("svn") => FetchMethod::SvnFetch,
        other => return Err(format!("unsupported source type {other:?}")),
    };
    let mut urls: Vec<String> = match v.get("urls").and_then(Value::as_array) {
        Some(a) => a.iter().map(|u| u.as_str().map(str::to_string).ok_or("urls must be strings")).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    for key in ["git_url", "svn_url"] {
        if let Some(u) = s(key) {
            if !urls.iter().any(|x| x == u) {
                urls.insert(0, u.to_string());
            }
        }
    }
    let sri = s("integrity").ok_or("missing integrity")?;
    let digest = parse_sri(sri).ok_or_else(|| format!("bad integrity {sri}"))?;
    let expected = if method.is_vcs() { Expected::Nar(NarDigest(digest)) } else { Expected::File(digest) };
    let svn_subdirs = match v.get("svn_subdirs").and_then(Value::as_array) {
        Some(list) => Some(
            list.iter()
                .map(|e| {
                    let path = e.get("path").and_then(Value::as_str).ok_or("sub-directory without path")?.to_string();
                    let digest = match e.get("integrity").and_then(Value::as_str) {
                        Some(i) => Some(NarDigest(parse_sri(i).ok_or_else(|| format!("bad integrity {i}"))?)),
                        None => None,
                    };
                    Ok(SvnSubdir { path, digest })
                })
                .collect::<Result<Vec<_>, String>>()?,
        ),
        None => None,
    };
    let svn_rev = match v.get("svn_revision") {
        Some(Value::String(r)) => Some(r.parse().map_err(|_| format!("bad svn_revision {r}"))?),
        Some(r) => Some(r.as_u64().ok_or("bad svn_revision")?),
        None => None,
    };
    let r = SourceRecord {
        name: s("name").map(str::to_string),
        method,
        urls,
        expected,
        git_ref: s("git_ref").map(GitRef::parse),
        svn_rev,
        svn_subdirs,
    };
    r.validate()?;
    Ok(r)
}

pub fn load_sources_manifest(text: &[u8]) -> Result<Vec<SourceRecord>, String> {
    let v: Value = serde_json::from_slice(text).map_err(|e| e.to_string())?;
    let list = v.get("sources").and_then(Value::as_array).ok_or("manifest lacks a sources array")?;
    list.iter().enumerate().map(|(i, e)| record_from_json(e).map_err(|m| format!("source {i}: {m}"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_canonical() {
        assert_eq!(emit_sources_manifest(&[]), b"{\n  \"sources\": [],\n  \"version\": \"1\"\n}\n");
        let a = SourceRecord::url_fetch(&["https://ftp.gnu.org/gnu/sed/sed-4.8.tar.gz"], [1; 32]).with_name("sed");
        let b = SourceRecord::git_fetch("https://github.com/x/y", GitRef::Commit([0xab; 20]), NarDigest([2; 32]));
        let c = SourceRecord::git_fetch("https://codeberg.org/z", GitRef::Tag("v1.0".into()), NarDigest([3; 32]));
        let mut d = SourceRecord::svn_fetch("svn://tug.org/texlive/trunk", 66594, NarDigest([4; 32]));
        d.svn_subdirs = Some(vec![
            SvnSubdir { path: "Master/texmf-dist/doc".into(), digest: None },
            SvnSubdir { path: "Master/tlpkg".into(), digest: Some(NarDigest([5; 32])) },
        ]);
        let all = vec![a, b, c, d];
        let bytes = emit_sources_manifest(&all);
        let mut rev = all.clone();
        rev.reverse();
        assert_eq!(emit_sources_manifest(&rev), bytes);
        let back = load_sources_manifest(&bytes).unwrap();
        assert_eq!(back.len(), 4);
        for r in &all {
            assert!(back.contains(r), "{r:?}");
        }
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains(&format!("\"git_ref\": \"{}\"", hex::encode([0xab; 20]))));
        assert!(text.contains("\"git_url\": \"https://github.com/x/y\""));
        assert!(text.contains("\"svn_revision\": 66594"));
    }

    #[test]
    fn records_are_validated() {
        let mut r = SourceRecord::git_fetch("https://g/x", GitRef::Tag("1".into()), NarDigest([0; 32]));
        r.git_ref = None;
        assert!(r.validate().is_err());
        let mut r = SourceRecord::url_fetch(&["https://x/a.tar.gz"], [0; 32]);
        r.expected = Expected::Nar(NarDigest([0; 32]));
        assert!(r.validate().is_err());
        assert!(SourceRecord::url_fetch(&[], [0; 32]).validate().is_err());
    }
}
