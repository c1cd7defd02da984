//! Client for the Software Heritage Web API.
//!
//! Every request passes through a shared rate limiter and a retry policy;
//! redirects are followed hop by hop so each hop is budgeted. All endpoint
//! paths are built by the functions in [`endpoints`].

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

use crate::compress;
use crate::disarchive::{ContentProvider, ContentRef, DirectoryRef};
use crate::http::{resolve_location, Method, Request, Response, Transport};
use crate::nar::{NarDigest, NarNode};
use crate::swhid::{ObjectType, Swhid};
use crate::tar;

pub const PUBLIC_ARCHIVE: &str = "https://archive.softwareheritage.org/api/1/";
pub const TOKEN_ENV: &str = "SWH_TOKEN";
pub const URL_ENV: &str = "SWH_URL";
pub const KNOWN_BATCH: usize = 1000;
const MAX_HOPS: usize = 10;

/// Paths relative to the API base.
pub mod endpoints {
    use crate::nar::NarDigest;
    use crate::swhid::Swhid;

    pub fn known() -> String {
        "known/".into()
    }

    pub fn extid_nar_sha256(d: &NarDigest) -> String {
        format!("extid/nar-sha256/hex:{}/", d.to_hex())
    }

    pub fn revision(commit: &[u8; 20]) -> String {
        format!("revision/{}/", hex::encode(commit))
    }

    pub fn latest_visit(origin: &str) -> String {
        format!("origin/{origin}/visit/latest/?require_snapshot=true")
    }

    pub fn snapshot(id: &str, branches_from: Option<&str>) -> String {
        match branches_from {
            Some(b) => format!("snapshot/{id}/?branches_from={b}"),
            None => format!("snapshot/{id}/"),
        }
    }

    pub fn release(id: &str) -> String {
        format!("release/{id}/")
    }

    pub fn vault_flat(dir: &Swhid) -> String {
        format!("vault/flat/{dir}/")
    }

    pub fn save(visit_type: &str, origin: &str) -> String {
        format!("origin/save/{visit_type}/url/{origin}/")
    }

    pub fn content_sha256(sha256: &[u8; 32]) -> String {
        format!("content/sha256:{}/", hex::encode(sha256))
    }

    pub fn content_raw(cnt: &Swhid) -> String {
        format!("content/sha1_git:{}/raw/", hex::encode(cnt.digest))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeritageError {
    #[error("invalid request: {0}")]
    InvalidArgument(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("origin not archived: {0}")]
    OriginNotFound(String),
    #[error("tag {tag} not found in the latest snapshot of {origin}")]
    TagNotFound { origin: String, tag: String },
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("authentication required: {0}")]
    AuthRequired(String),
    #[error("transport: {0}")]
    TransportError(String),
    #[error("vault cooking failed: {0}")]
    CookingFailed(String),
    #[error("vault deadline exceeded; last status {0}")]
    DeadlineExceeded(VaultStatus),
    #[error("save request rejected: {0}")]
    Rejected(String),
}

type Result<T> = std::result::Result<T, HeritageError>;

fn decode_error(what: &str, detail: impl std::fmt::Display) -> HeritageError {
    HeritageError::TransportError(format!("decode {what}: {detail}"))
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { start: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// A clock that only moves when slept on.
#[derive(Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateBudget {
    pub requests: u32,
    pub window: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, initial_backoff: Duration::from_secs(1) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveEndpoint {
    pub base_url: String,
    pub auth_token: Option<String>,
    pub rate_budget: RateBudget,
    pub retry_policy: RetryPolicy,
}

impl ArchiveEndpoint {
    /// The public archive's published quotas: 120 requests per hour
    /// anonymously, 1200 with a token.
    pub fn new(base_url: &str, auth_token: Option<String>) -> ArchiveEndpoint {
        let requests = if auth_token.is_some() { 1200 } else { 120 };
        let mut base_url = base_url.to_string();
        if !base_url.ends_with('/') {
            base_url.push('/');
        }
        ArchiveEndpoint {
            base_url,
            auth_token,
            rate_budget: RateBudget { requests, window: Duration::from_secs(3600) },
            retry_policy: RetryPolicy::default(),
        }
    }

    pub fn from_env() -> ArchiveEndpoint {
        let base = std::env::var(URL_ENV).unwrap_or_else(|_| PUBLIC_ARCHIVE.to_string());
        ArchiveEndpoint::new(&base, std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()))
    }
}

/// Fixed-window limiter shared by all callers of one client.
struct RateLimiter {
    budget: RateBudget,
    state: Mutex<(Duration, u32)>,
}

impl RateLimiter {
    fn acquire(&self, clock: &dyn Clock) {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = clock.now();
                if now >= st.0 + self.budget.window {
                    *st = (now, 0);
                }
                if st.1 < self.budget.requests {
                    st.1 += 1;
                    return;
                }
                st.0 + self.budget.window - now
            };
            clock.sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VaultFlavor {
    Flat,
    GitBare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VaultStatus {
    New,
    Pending,
    Done,
    Failed,
}

impl std::fmt::Display for VaultStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VaultStatus::New => "new",
            VaultStatus::Pending => "pending",
            VaultStatus::Done => "done",
            VaultStatus::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultJob {
    pub target: Swhid,
    pub flavor: VaultFlavor,
    pub status: VaultStatus,
    /// Present exactly when `status` is done.
    pub fetch_url: Option<String>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitType {
    Git,
    Svn,
    Hg,
}

impl VisitType {
    pub fn as_str(self) -> &'static str {
        match self {
            VisitType::Git => "git",
            VisitType::Svn => "svn",
            VisitType::Hg => "hg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaveStatus {
    Accepted,
    Rejected,
    Pending,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaveRequest {
    pub origin_url: String,
    pub visit_type: VisitType,
    pub status: SaveStatus,
    /// `save_request_status` and `save_task_status` as the server sent them.
    pub request_status: String,
    pub task_status: String,
}

/// Extensions of files the archive will not save as origins.
const FILE_SUFFIXES: &[&str] = &[
    ".tar", ".tar.gz", ".tgz", ".tar.bz2", ".tbz2", ".tar.xz", ".txz", ".tar.lz", ".tar.zst", ".zip", ".gz", ".bz2",
    ".xz", ".lz", ".zst", ".patch", ".diff", ".jar", ".gem", ".crate", ".whl", ".rpm", ".deb",
];

fn looks_like_file_url(url: &str) -> bool {
    let lower = url.to_ascii_lowercase();
    let path = lower.split(['?', '#']).next().unwrap_or(&lower);
    lower.starts_with("file:") || FILE_SUFFIXES.iter().any(|s| path.ends_with(s))
}

pub struct HeritageClient {
    endpoint: ArchiveEndpoint,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    saves: Mutex<HashMap<(String, VisitType), SaveRequest>>,
}

impl HeritageClient {
    pub fn new(endpoint: ArchiveEndpoint, transport: Arc<dyn Transport>) -> HeritageClient {
        HeritageClient::with_clock(endpoint, transport, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(endpoint: ArchiveEndpoint, transport: Arc<dyn Transport>, clock: Arc<dyn Clock>) -> HeritageClient {
        let limiter = RateLimiter { budget: endpoint.rate_budget, state: Mutex::new((clock.now(), 0)) };
        HeritageClient { endpoint, transport, clock, limiter, saves: Mutex::new(HashMap::new()) }
    }

    pub fn endpoint(&self) -> &ArchiveEndpoint {
        &self.endpoint
    }

    pub fn clock(&self) -> &dyn Clock {
        &*self.clock
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.endpoint.base_url)
    }

    /// One logical request: redirects followed, each hop budgeted, the whole
    /// exchange retried on 429, 5xx, and transport failures when `retry`.
    fn exchange(&self, req: Request, retry: bool) -> Result<Response> {
        let policy = self.endpoint.retry_policy;
        let mut last = HeritageError::TransportError("no attempt made".into());
        for attempt in 0..policy.max_attempts.max(1) {
            if attempt > 0 {
                self.clock.sleep(policy.initial_backoff * 2u32.pow(attempt - 1));
            }
            match self.follow(req.clone()) {
                Ok(resp) if resp.status == 429 => last = HeritageError::RateLimited(req.url.clone()),
                Ok(resp) if resp.status >= 500 => {
                    last = HeritageError::TransportError(format!("{} answered {}", req.url, resp.status))
                }
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(HeritageError::AuthRequired(format!("{} answered {}", req.url, resp.status)))
                }
                Ok(resp) => return Ok(resp),
                Err(e) => last = e,
            }
            if !retry {
                break;
            }
        }
        Err(last)
    }

    fn follow(&self, mut req: Request) -> Result<Response> {
        for _ in 0..=MAX_HOPS {
            self.limiter.acquire(&*self.clock);
            let mut wire = req.clone();
            if let Some(token) = &self.endpoint.auth_token {
                if wire.url.starts_with(&self.endpoint.base_url) {
                    wire = wire.header("Authorization", format!("Bearer {token}"));
                }
            }
            let resp = self.transport.send(&wire).map_err(|e| HeritageError::TransportError(e.0))?;
            if !resp.is_redirect() {
                return Ok(resp);
            }
            let loc = resp
                .header("location")
                .ok_or_else(|| HeritageError::TransportError(format!("redirect from {} without Location", req.url)))?;
            req.url = resolve_location(&req.url, loc);
            if matches!(resp.status, 301..=303) {
                req.method = Method::Get;
                req.body.clear();
            }
        }
        Err(HeritageError::TransportError(format!("more than {MAX_HOPS} redirects")))
    }

    fn get_json(&self, path: &str) -> Result<Option<Value>> {
        let resp = self.exchange(Request::get(self.url(path)).header("Accept", "application/json"), true)?;
        json_body(path, resp)
    }

    /// Existence of each identifier in the archive.
    pub fn known(&self, ids: &[Swhid]) -> Result<HashMap<Swhid, bool>> {
        if ids.is_empty() {
            return Err(HeritageError::InvalidArgument("known needs at least one identifier".into()));
        }
        let mut out = HashMap::with_capacity(ids.len());
        for chunk in ids.chunks(KNOWN_BATCH) {
            let body: Vec<String> = chunk.iter().map(Swhid::to_string).collect();
            let req = Request::post(self.url(&endpoints::known()), serde_json::to_vec(&body).unwrap())
                .header("Content-Type", "application/json");
            let resp = self.exchange(req, true)?;
            let v = json_body("known", resp)?.ok_or_else(|| decode_error("known", "endpoint missing"))?;
            for id in chunk {
                let known = v
                    .get(id.to_string())
                    .and_then(|e| e.get("known"))
                    .and_then(Value::as_bool)
                    .ok_or_else(|| decode_error("known", format!("no answer for {id}")))?;
                out.insert(*id, known);
            }
        }
        Ok(out)
    }

    pub fn resolve_extid_nar_sha256(&self, digest: &NarDigest) -> Result<Swhid> {
        let v = self
            .get_json(&endpoints::extid_nar_sha256(digest))?
            .ok_or_else(|| HeritageError::NotFound(format!("nar-sha256 {}", digest.to_hex())))?;
        let target = v.get("target").and_then(Value::as_str).ok_or_else(|| decode_error("extid", "no target"))?;
        target.parse().map_err(|e| decode_error("extid", e))
    }

    /// The revision and its root directory.
    pub fn lookup_revision(&self, commit: &[u8; 20]) -> Result<(Swhid, Swhid)> {
        let v = self
            .get_json(&endpoints::revision(commit))?
            .ok_or_else(|| HeritageError::NotFound(format!("revision {}", hex::encode(commit))))?;
        let dir = v.get("directory").and_then(Value::as_str).ok_or_else(|| decode_error("revision", "no directory"))?;
        let dir = sha1_of(dir).ok_or_else(|| decode_error("revision", "bad directory id"))?;
        Ok((Swhid { object_type: ObjectType::Revision, digest: *commit }, Swhid { object_type: ObjectType::Directory, digest: dir }))
    }

    /// Commit a tag pointed to in the origin's latest snapshot.
    pub fn lookup_origin_tag(&self, origin: &str, tag: &str) -> Result<[u8; 20]> {
        let visit = self
            .get_json(&endpoints::latest_visit(origin))?
            .ok_or_else(|| HeritageError::OriginNotFound(origin.to_string()))?;
        let snapshot = visit
            .get("snapshot")
            .and_then(Value::as_str)
            .ok_or_else(|| HeritageError::OriginNotFound(format!("{origin} has no snapshot")))?
            .to_string();
        let not_found = || HeritageError::TagNotFound { origin: origin.to_string(), tag: tag.to_string() };
        let branches = self.snapshot_branches(&snapshot)?;
        let mut branch = [format!("refs/tags/{tag}"), tag.to_string()]
            .into_iter()
            .find_map(|n| branches.get(&n).cloned())
            .ok_or_else(not_found)?;
        for _ in 0..8 {
            let kind = branch.get("target_type").and_then(Value::as_str).unwrap_or_default();
            let target = branch.get("target").and_then(Value::as_str).ok_or_else(|| decode_error("snapshot", "no target"))?;
            match kind {
                "revision" => return sha1_of(target).ok_or_else(|| decode_error("snapshot", "bad revision id")),
                "alias" => branch = branches.get(target).cloned().ok_or_else(not_found)?,
                "release" => {
                    branch = self
                        .get_json(&endpoints::release(target))?
                        .ok_or_else(|| HeritageError::NotFound(format!("release {target}")))?
                }
                other => return Err(decode_error("snapshot", format!("tag points to a {other}"))),
            }
        }
        Err(decode_error("snapshot", "release chain too long"))
    }

    fn snapshot_branches(&self, id: &str) -> Result<serde_json::Map<String, Value>> {
        let mut all = serde_json::Map::new();
        let mut from: Option<String> = None;
        loop {
            let page = self
                .get_json(&endpoints::snapshot(id, from.as_deref()))?
                .ok_or_else(|| HeritageError::NotFound(format!("snapshot {id}")))?;
            if let Some(b) = page.get("branches").and_then(Value::as_object) {
                all.extend(b.clone());
            }
            match page.get("next_branch").and_then(Value::as_str) {
                Some(next) if Some(next) != from.as_deref() => from = Some(next.to_string()),
                _ => return Ok(all),
            }
        }
    }

    fn vault_job(&self, target: &Swhid, v: &Value) -> Result<VaultJob> {
        let status = match v.get("status").and_then(Value::as_str) {
            Some("new") => VaultStatus::New,
            Some("pending") => VaultStatus::Pending,
            Some("done") => VaultStatus::Done,
            Some("failed") => VaultStatus::Failed,
            other => return Err(decode_error("vault", format!("status {other:?}"))),
        };
        let fetch_url = v.get("fetch_url").and_then(Value::as_str).map(str::to_string);
        if status == VaultStatus::Done && fetch_url.is_none() {
            return Err(decode_error("vault", "done without fetch_url"));
        }
        Ok(VaultJob {
            target: *target,
            flavor: VaultFlavor::Flat,
            status,
            fetch_url: fetch_url.filter(|_| status == VaultStatus::Done),
            message: v.get("progress_message").and_then(Value::as_str).map(str::to_string),
        })
    }

    /// Current cooking job for `target`, requesting one if there is none.
    pub fn vault_request(&self, target: &Swhid) -> Result<VaultJob> {
        let path = endpoints::vault_flat(target);
        if let Some(v) = self.get_json(&path)? {
            return self.vault_job(target, &v);
        }
        let resp = self.exchange(Request::post(self.url(&path), Vec::new()), true)?;
        let v = json_body("vault", resp)?.ok_or_else(|| HeritageError::NotFound(format!("{target} is not archived")))?;
        self.vault_job(target, &v)
    }

    /// Cooks `target`, waits for it, and unpacks the bundle.
    pub fn vault_fetch(&self, target: &Swhid, poll_interval: Duration, deadline: Duration) -> Result<NarNode> {
        if target.object_type != ObjectType::Directory {
            return Err(HeritageError::InvalidArgument(format!("{target} is not a directory")));
        }
        if deadline.is_zero() {
            return Err(HeritageError::InvalidArgument("vault deadline must be positive".into()));
        }
        let start = self.clock.now();
        let mut job = self.vault_request(target)?;
        loop {
            match job.status {
                VaultStatus::Done => break,
                VaultStatus::Failed => {
                    return Err(HeritageError::CookingFailed(job.message.unwrap_or_else(|| target.to_string())))
                }
                _ => {}
            }
            if self.clock.now() - start + poll_interval > deadline {
                return Err(HeritageError::DeadlineExceeded(job.status));
            }
            self.clock.sleep(poll_interval);
            let v = self
                .get_json(&endpoints::vault_flat(target))?
                .ok_or_else(|| HeritageError::CookingFailed(format!("{target}: cooking job disappeared")))?;
            job = self.vault_job(target, &v)?;
        }
        let fetch = job.fetch_url.expect("done jobs carry a fetch url");
        let url = if fetch.contains("://") { fetch } else { resolve_location(&self.endpoint.base_url, &fetch) };
        let resp = self.exchange(Request::get(url.clone()), true)?;
        if !resp.is_success() {
            return Err(HeritageError::TransportError(format!("{url} answered {}", resp.status)));
        }
        unpack_bundle(&resp.body)
    }

    /// Content SWHID of an archived file, looked up by its SHA-256.
    pub fn content_by_sha256(&self, sha256: &[u8; 32]) -> Result<Swhid> {
        let v = self
            .get_json(&endpoints::content_sha256(sha256))?
            .ok_or_else(|| HeritageError::NotFound(format!("content sha256:{}", hex::encode(sha256))))?;
        let id = v
            .get("checksums")
            .and_then(|c| c.get("sha1_git"))
            .and_then(Value::as_str)
            .and_then(sha1_of)
            .ok_or_else(|| decode_error("content", "no sha1_git checksum"))?;
        Ok(Swhid { object_type: ObjectType::Content, digest: id })
    }

    pub fn content_raw(&self, cnt: &Swhid) -> Result<Vec<u8>> {
        let resp = self.exchange(Request::get(self.url(&endpoints::content_raw(cnt))), true)?;
        match resp.status {
            200 => Ok(resp.body),
            404 => Err(HeritageError::NotFound(cnt.to_string())),
            s => Err(HeritageError::TransportError(format!("content {cnt} answered {s}"))),
        }
    }

    /// Asks the archive to visit a VCS origin. Repeated calls for the same
    /// origin query the existing request instead of filing a new one.
    pub fn save_code_now(&self, origin: &str, visit_type: VisitType) -> Result<SaveRequest> {
        if looks_like_file_url(origin) {
            return Err(HeritageError::InvalidArgument(format!("{origin} is a file, not a {} repository", visit_type.as_str())));
        }
        let key = (origin.to_string(), visit_type);
        let path = endpoints::save(visit_type.as_str(), origin);
        let previous = self.saves.lock().unwrap().get(&key).cloned();
        let v = match previous {
            Some(_) => {
                let v = self.get_json(&path)?.ok_or_else(|| decode_error("save", "request vanished"))?;
                match v {
                    Value::Array(mut items) => items.pop().ok_or_else(|| decode_error("save", "empty request list"))?,
                    v => v,
                }
            }
            None => {
                let resp = self.exchange(Request::post(self.url(&path), Vec::new()), true)?;
                if resp.status == 400 {
                    return Err(HeritageError::Rejected(String::from_utf8_lossy(&resp.body).into_owned()));
                }
                json_body("save", resp)?.ok_or_else(|| decode_error("save", "endpoint missing"))?
            }
        };
        let field = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let (request_status, task_status) = (field("save_request_status"), field("save_task_status"));
        let status = match (request_status.as_str(), task_status.as_str()) {
            ("rejected", _) => return Err(HeritageError::Rejected(format!("{origin}: {task_status}"))),
            (_, "succeeded") => SaveStatus::Succeeded,
            (_, "failed") => SaveStatus::Failed,
            ("pending", _) => SaveStatus::Pending,
            ("accepted", _) => SaveStatus::Accepted,
            (other, _) => return Err(decode_error("save", format!("request status {other:?}"))),
        };
        let req = SaveRequest { origin_url: origin.to_string(), visit_type, status, request_status, task_status };
        self.saves.lock().unwrap().insert(key, req.clone());
        Ok(req)
    }
}

fn json_body(what: &str, resp: Response) -> Result<Option<Value>> {
    match resp.status {
        200..=299 => serde_json::from_slice(&resp.body).map(Some).map_err(|e| decode_error(what, e)),
        404 => Ok(None),
        s => Err(HeritageError::TransportError(format!("{what} answered {s}"))),
    }
}

fn sha1_of(hex_text: &str) -> Option<[u8; 20]> {
    let mut out = [0u8; 20];
    hex::decode_to_slice(hex_text, &mut out).ok()?;
    Some(out)
}

/// A flat Vault bundle is a gzipped tarball holding one directory named
/// after the cooked SWHID.
pub fn unpack_bundle(bundle: &[u8]) -> Result<NarNode> {
    let bad = |e: String| HeritageError::TransportError(format!("vault bundle: {e}"));
    let d = compress::decompress(bundle).map_err(|e| bad(e.to_string()))?;
    let (_, tree) = tar::parse_tarball(&d.payload).map_err(|e| bad(e.to_string()))?;
    Ok(tree)
}

/// Fetches referenced content from the archive: directories through the
/// Vault (looked up by nar-sha256 when the reference has no SWHID), files
/// through the raw content endpoint.
pub struct VaultContent {
    client: Arc<HeritageClient>,
    poll_interval: Duration,
    deadline: Duration,
}

impl VaultContent {
    pub fn new(client: Arc<HeritageClient>, poll_interval: Duration, deadline: Duration) -> VaultContent {
        VaultContent { client, poll_interval, deadline }
    }
}

impl ContentProvider for VaultContent {
    fn directory(&self, r: &DirectoryRef) -> std::result::Result<NarNode, String> {
        let mut targets: Vec<Swhid> = r.addresses.iter().filter(|s| s.object_type == ObjectType::Directory).copied().collect();
        if targets.is_empty() {
            targets.push(self.client.resolve_extid_nar_sha256(&r.digest).map_err(|e| e.to_string())?);
        }
        let mut errors = Vec::new();
        for t in targets {
            match self.client.vault_fetch(&t, self.poll_interval, self.deadline) {
                Ok(tree) => return Ok(tree),
                Err(e) => errors.push(format!("{t}: {e}")),
            }
        }
        Err(errors.join("; "))
    }

    fn content(&self, r: &ContentRef) -> std::result::Result<Vec<u8>, String> {
        let mut errors = Vec::new();
        for s in r.addresses.iter().filter(|s| s.object_type == ObjectType::Content) {
            match self.client.content_raw(s) {
                Ok(b) => return Ok(b),
                Err(e) => errors.push(format!("{s}: {e}")),
            }
        }
        Err(if errors.is_empty() { "no content SWHID to fetch".into() } else { errors.join("; ") })
    }
}

/// Builds a flat Vault bundle for `tree`, as the archive would serve it.
pub fn make_bundle(target: &Swhid, tree: &NarNode) -> Vec<u8> {
    let mut out = Vec::new();
    let root = target.to_string();
    append_entry(&mut out, root.as_bytes(), tree);
    out.resize(out.len() + 2 * tar::BLOCK, 0);
    compress::compress_file(compress::CompressorId::Gnu { level: 6, rsyncable: false }, &out)
}

fn append_entry(out: &mut Vec<u8>, path: &[u8], node: &NarNode) {
    let mut h = tar::TarHeaderFields::baseline();
    let mut data: &[u8] = &[];
    match node {
        NarNode::Directory(entries) => {
            h.name = [path, b"/"].concat();
            h.mode = tar::Num::new(0o755);
            h.typeflag = b'5';
            push_header(out, &mut h);
            for (name, child) in entries {
                append_entry(out, &[path, b"/", name].concat(), child);
            }
            return;
        }
        NarNode::Regular { executable, contents } => {
            h.name = path.to_vec();
            h.mode = tar::Num::new(if *executable { 0o755 } else { 0o644 });
            h.size = tar::Num::new(contents.len() as u64);
            data = contents;
        }
        NarNode::Symlink { target } => {
            h.name = path.to_vec();
            h.mode = tar::Num::new(0o777);
            h.typeflag = b'2';
            h.linkname = target.clone();
        }
    }
    push_header(out, &mut h);
    out.extend_from_slice(data);
    out.resize(out.len().div_ceil(tar::BLOCK) * tar::BLOCK, 0);
}

fn push_header(out: &mut Vec<u8>, h: &mut tar::TarHeaderFields) {
    // Names and targets past the ustar fields go in GNU long-name records.
    if h.linkname.len() > 100 {
        push_long(out, b'K', &h.linkname);
        h.linkname.truncate(100);
    }
    if h.name.len() > 100 {
        push_long(out, b'L', &h.name);
        h.name.truncate(100);
    }
    h.chksum = tar::unsigned_checksum(&tar::encode_block(h).expect("bundle header fits"));
    out.extend_from_slice(&tar::encode_block(h).expect("bundle header fits"));
}

fn push_long(out: &mut Vec<u8>, typeflag: u8, value: &[u8]) {
    let mut h = tar::TarHeaderFields::baseline();
    h.name = b"././@LongLink".to_vec();
    h.typeflag = typeflag;
    h.size = tar::Num::new(value.len() as u64 + 1);
    push_header(out, &mut h);
    out.extend_from_slice(value);
    out.push(0);
    out.resize(out.len().div_ceil(tar::BLOCK) * tar::BLOCK, 0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::MockTransport;
    use serde_json::json;

    const BASE: &str = "https://swh.test/api/1/";

    fn client(mock: &Arc<MockTransport>) -> (HeritageClient, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::default());
        let c = HeritageClient::with_clock(ArchiveEndpoint::new(BASE, None), mock.clone(), clock.clone());
        (c, clock)
    }

    fn u(path: &str) -> String {
        format!("{BASE}{path}")
    }

    fn dir_id(n: u8) -> Swhid {
        Swhid { object_type: ObjectType::Directory, digest: [n; 20] }
    }

    #[test]
    fn known_is_total_and_chunked() {
        let mock = Arc::new(MockTransport::new());
        let a = dir_id(1);
        mock.on_fn(Method::Post, &u("known/"), move |req| {
            let ids: Vec<String> = serde_json::from_slice(&req.body).unwrap();
            let map: serde_json::Map<String, Value> =
                ids.into_iter().map(|i| { let k = i == a.to_string(); (i, json!({ "known": k })) }).collect();
            Response::json(200, &Value::Object(map))
        });
        let (c, _) = client(&mock);
        let r = c.known(&[a, dir_id(2)]).unwrap();
        assert_eq!(r, HashMap::from([(a, true), (dir_id(2), false)]));
        assert!(matches!(c.known(&[]), Err(HeritageError::InvalidArgument(_))));

        let many: Vec<Swhid> = (0..2500u32)
            .map(|i| { let mut d = [0u8; 20]; d[..4].copy_from_slice(&i.to_be_bytes()); Swhid { object_type: ObjectType::Content, digest: d } })
            .collect();
        let before = mock.request_count();
        assert_eq!(c.known(&many).unwrap().len(), 2500);
        assert_eq!(mock.request_count() - before, 3);
    }

    #[test]
    fn known_surfaces_errors() {
        let mock = Arc::new(MockTransport::new());
        mock.on(Method::Post, &u("known/"), Response::new(503, ""));
        let (c, clock) = client(&mock);
        assert!(matches!(c.known(&[dir_id(1)]), Err(HeritageError::TransportError(_))));
        assert_eq!(mock.request_count(), 3);
        assert_eq!(clock.now(), Duration::from_secs(3));

        mock.on(Method::Post, &u("known/"), Response::new(429, ""));
        assert!(matches!(c.known(&[dir_id(1)]), Err(HeritageError::RateLimited(_))));
        mock.on(Method::Post, &u("known/"), Response::new(401, ""));
        assert!(matches!(c.known(&[dir_id(1)]), Err(HeritageError::AuthRequired(_))));
        mock.on(Method::Post, &u("known/"), Response::json(200, &json!({})));
        assert!(matches!(c.known(&[dir_id(1)]), Err(HeritageError::TransportError(_))));
    }

    #[test]
    fn extid_resolution() {
        let mock = Arc::new(MockTransport::new());
        let d = NarDigest([7; 32]);
        mock.on(Method::Get, &u(&endpoints::extid_nar_sha256(&d)), Response::json(200, &json!({
            "extid_type": "nar-sha256", "target": dir_id(9).to_string(), "target_type": "directory"
        })));
        let (c, _) = client(&mock);
        assert_eq!(c.resolve_extid_nar_sha256(&d).unwrap(), dir_id(9));
        assert!(matches!(c.resolve_extid_nar_sha256(&NarDigest([8; 32])), Err(HeritageError::NotFound(_))));
        let truncated = NarDigest([9; 32]);
        mock.on(Method::Get, &u(&endpoints::extid_nar_sha256(&truncated)), Response::new(200, "{\"target\": \"swh:1:d"));
        assert!(matches!(c.resolve_extid_nar_sha256(&truncated), Err(HeritageError::TransportError(m)) if m.starts_with("decode")));
    }

    #[test]
    fn revisions_and_tags() {
        let mock = Arc::new(MockTransport::new());
        let commit = [0xab; 20];
        mock.on(Method::Get, &u(&endpoints::revision(&commit)), Response::json(200, &json!({
            "id": hex::encode(commit), "directory": hex::encode([0xcd; 20])
        })));
        let origin = "https://github.com/x/y";
        mock.on(Method::Get, &u(&endpoints::latest_visit(origin)), Response::json(200, &json!({"snapshot": "5a"})));
        mock.on(Method::Get, &u(&endpoints::snapshot("5a", None)), Response::json(200, &json!({
            "branches": {"refs/tags/1.3.2": {"target": hex::encode(commit), "target_type": "revision"}},
            "next_branch": "refs/tags/v2"
        })));
        mock.on(Method::Get, &u(&endpoints::snapshot("5a", Some("refs/tags/v2"))), Response::json(200, &json!({
            "branches": {"refs/tags/v2": {"target": "e1", "target_type": "release"}, "HEAD": {"target": "refs/tags/v2", "target_type": "alias"}},
            "next_branch": null
        })));
        mock.on(Method::Get, &u(&endpoints::release("e1")), Response::json(200, &json!({
            "target": hex::encode([0x11; 20]), "target_type": "revision"
        })));
        let (c, _) = client(&mock);
        let (rev, dir) = c.lookup_revision(&commit).unwrap();
        assert_eq!(rev.to_string(), format!("swh:1:rev:{}", hex::encode(commit)));
        assert_eq!(dir.to_string(), format!("swh:1:dir:{}", hex::encode([0xcd; 20])));
        assert!(matches!(c.lookup_revision(&[0; 20]), Err(HeritageError::NotFound(_))));
        assert_eq!(c.lookup_origin_tag(origin, "1.3.2").unwrap(), commit);
        assert_eq!(c.lookup_origin_tag(origin, "v2").unwrap(), [0x11; 20]);
        assert_eq!(c.lookup_origin_tag(origin, "HEAD").unwrap(), [0x11; 20]);
        assert!(matches!(c.lookup_origin_tag(origin, "9.9"), Err(HeritageError::TagNotFound { .. })));
        assert!(matches!(c.lookup_origin_tag("https://nowhere", "1"), Err(HeritageError::OriginNotFound(_))));
    }

    fn sample_tree() -> NarNode {
        NarNode::dir([
            ("README", NarNode::file("hi\n")),
            ("bin", NarNode::dir([("run", NarNode::executable("#!/bin/sh\n"))])),
            ("link", NarNode::symlink("README")),
        ])
    }

    #[test]
    fn bundle_long_names() {
        let long = "n".repeat(140);
        let tree = NarNode::dir([
            (long.as_str(), NarNode::dir([("f", NarNode::file("x"))])),
            ("l", NarNode::symlink("../".repeat(60))),
        ]);
        assert_eq!(unpack_bundle(&make_bundle(&dir_id(9), &tree)).unwrap(), tree);
    }

    #[test]
    fn vault_done_immediately_and_redirected() {
        let mock = Arc::new(MockTransport::new());
        let t = dir_id(3);
        let tree = sample_tree();
        mock.on(Method::Get, &u(&endpoints::vault_flat(&t)), Response::json(200, &json!({
            "status": "done", "fetch_url": format!("/api/1/vault/flat/{t}/raw/")
        })));
        mock.on(Method::Get, &u(&format!("vault/flat/{t}/raw/")), Response::redirect(302, "https://objstore.test/bundle"));
        mock.on(Method::Get, "https://objstore.test/bundle", Response::new(200, make_bundle(&t, &tree)));
        let (c, _) = client(&mock);
        assert_eq!(c.vault_fetch(&t, Duration::from_secs(10), Duration::from_secs(60)).unwrap(), tree);
        assert_eq!(mock.count_matching("objstore.test"), 1);
    }

    #[test]
    fn vault_cooks_polls_and_gives_up() {
        let mock = Arc::new(MockTransport::new());
        let t = dir_id(4);
        let path = u(&endpoints::vault_flat(&t));
        mock.on_seq(Method::Get, &path, vec![
            Response::new(404, ""),
            Response::json(200, &json!({"status": "pending"})),
            Response::json(200, &json!({"status": "done", "fetch_url": "https://swh.test/raw4"})),
        ]);
        mock.on(Method::Post, &path, Response::json(200, &json!({"status": "new"})));
        mock.on(Method::Get, "https://swh.test/raw4", Response::new(200, make_bundle(&t, &NarNode::empty_dir())));
        let (c, clock) = client(&mock);
        assert_eq!(c.vault_fetch(&t, Duration::from_secs(5), Duration::from_secs(60)).unwrap(), NarNode::empty_dir());
        assert_eq!(clock.now(), Duration::from_secs(10));

        let forever = dir_id(5);
        mock.on(Method::Get, &u(&endpoints::vault_flat(&forever)), Response::json(200, &json!({"status": "pending"})));
        let (c, _) = client(&mock);
        let before = mock.count_matching(&forever.to_string());
        assert_eq!(
            c.vault_fetch(&forever, Duration::from_secs(5), Duration::from_secs(15)),
            Err(HeritageError::DeadlineExceeded(VaultStatus::Pending))
        );
        assert_eq!(mock.count_matching(&forever.to_string()) - before, 4);

        let failed = dir_id(6);
        mock.on(Method::Get, &u(&endpoints::vault_flat(&failed)), Response::json(200, &json!({"status": "failed", "progress_message": "boom"})));
        assert_eq!(c.vault_fetch(&failed, Duration::from_secs(1), Duration::from_secs(5)), Err(HeritageError::CookingFailed("boom".into())));
    }

    #[test]
    fn save_code_now_policy() {
        let mock = Arc::new(MockTransport::new());
        let origin = "https://git.example/repo.git";
        let path = u(&endpoints::save("git", origin));
        mock.on(Method::Post, &path, Response::json(200, &json!({"save_request_status": "accepted", "save_task_status": "not yet scheduled"})));
        mock.on(Method::Get, &path, Response::json(200, &json!([{"save_request_status": "accepted", "save_task_status": "pending"}])));
        let (c, _) = client(&mock);
        let r = c.save_code_now(origin, VisitType::Git).unwrap();
        assert_eq!(r.status, SaveStatus::Accepted);
        let again = c.save_code_now(origin, VisitType::Git).unwrap();
        assert_eq!(again.task_status, "pending");
        assert_eq!(mock.requests().iter().filter(|r| r.method == Method::Post).count(), 1);

        let n = mock.request_count();
        assert!(matches!(c.save_code_now("https://ftp.gnu.org/gnu/sed/sed-4.8.tar.gz", VisitType::Git), Err(HeritageError::InvalidArgument(_))));
        assert_eq!(mock.request_count(), n);

        let bad = "https://evil.example/repo";
        mock.on(Method::Post, &u(&endpoints::save("hg", bad)), Response::json(200, &json!({"save_request_status": "rejected", "save_task_status": "not created"})));
        assert!(matches!(c.save_code_now(bad, VisitType::Hg), Err(HeritageError::Rejected(_))));
    }

    #[test]
    fn rate_budget_holds_under_concurrency() {
        let mock = Arc::new(MockTransport::new());
        let clock = Arc::new(ManualClock::default());
        let stamps = Arc::new(Mutex::new(Vec::new()));
        let (seen, at) = (stamps.clone(), clock.clone());
        mock.on_fn(Method::Get, &u("content/*"), move |_| {
            seen.lock().unwrap().push(at.now());
            Response::new(200, "x")
        });
        let mut ep = ArchiveEndpoint::new(BASE, Some("tok".into()));
        ep.rate_budget = RateBudget { requests: 5, window: Duration::from_secs(60) };
        let c = Arc::new(HeritageClient::with_clock(ep, mock.clone(), clock.clone()));
        std::thread::scope(|s| {
            for i in 0..23u8 {
                let c = c.clone();
                s.spawn(move || c.content_raw(&Swhid { object_type: ObjectType::Content, digest: [i; 20] }).unwrap());
            }
        });
        assert_eq!(mock.request_count(), 23);
        let mut per_window: HashMap<u64, usize> = HashMap::new();
        for s in stamps.lock().unwrap().iter() {
            *per_window.entry(s.as_secs() / 60).or_default() += 1;
        }
        assert!(per_window.values().all(|&n| n <= 5), "{per_window:?}");
        assert!(per_window.len() >= 5);
        assert!(mock.requests().iter().all(|r| r.headers.contains(&("Authorization".into(), "Bearer tok".into()))));
    }

    #[test]
    fn vault_provider_fetches_by_swhid_and_extid() {
        let mock = Arc::new(MockTransport::new());
        let tree = sample_tree();
        let t = crate::swhid::swhid_for_directory(&tree).unwrap();
        let digest = crate::nar::nar_hash(&tree);
        mock.on(Method::Get, &u(&endpoints::vault_flat(&t)), Response::json(200, &json!({"status": "done", "fetch_url": "https://swh.test/b"})));
        mock.on(Method::Get, "https://swh.test/b", Response::new(200, make_bundle(&t, &tree)));
        mock.on(Method::Get, &u(&endpoints::extid_nar_sha256(&digest)), Response::json(200, &json!({"target": t.to_string()})));
        let (c, _) = client(&mock);
        let p = VaultContent::new(Arc::new(c), Duration::from_secs(1), Duration::from_secs(10));
        let with_swhid = DirectoryRef { name: b"x".to_vec(), addresses: vec![t], digest };
        assert_eq!(p.directory(&with_swhid).unwrap(), tree);
        let without = DirectoryRef { addresses: vec![], ..with_swhid };
        assert_eq!(p.directory(&without).unwrap(), tree);
    }
}
