//! The `heirloom` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::audit::{self, CoverageStatus, RotStatus, SnapshotReport};
use crate::disarchive::{self, Contents, DescriptionDb, LocalContent, LocalDb, RemoteDb};
use crate::heritage::{ArchiveEndpoint, HeritageClient, VaultContent};
use crate::http::{MockTransport, RefusingTransport, Transport, UreqTransport};
use crate::nar::{nar_hash, tree_from_disk, NarNode, TreeOptions};
use crate::resolver::{self, Fetcher, GitRef, Outcome, ResolveOptions, SourceRecord, UpstreamFetcher};
use crate::swhid;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "heirloom", version, about = "Tarball disassembly, intrinsic identifiers, and archive-backed source recovery")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Archive Web API base URL
    #[arg(long, env = "SWH_URL", global = true)]
    swh_url: Option<String>,
    /// Archive API token
    #[arg(long, env = "SWH_TOKEN", global = true, hide_env_values = true)]
    swh_token: Option<String>,
    /// Description database: a directory or an http(s) URL
    #[arg(long, env = "HEIRLOOM_DB", global = true)]
    db: Option<String>,
    /// JSON configuration file with swh_url, db, timeout, parallelism
    #[arg(long, env = "HEIRLOOM_CONFIG", global = true)]
    config: Option<PathBuf>,
    /// Per-request timeout in seconds
    #[arg(long, global = true)]
    timeout: Option<u64>,
    /// Concurrent downloads during audits
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Refuse all network access
    #[arg(long, global = true)]
    offline: bool,
    /// Serve HTTP from DIR/routes.json instead of the network
    #[arg(long, global = true, value_name = "DIR")]
    offline_mocks: Option<PathBuf>,
    /// Print one JSON document instead of text
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a tarball into a description and its content
    Disassemble {
        file: PathBuf,
        /// File name recorded in the description (default: FILE's name)
        #[arg(long)]
        name: Option<String>,
        /// Write the description here instead of standard output
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Unpack the referenced content into this directory
        #[arg(long)]
        content_dir: Option<PathBuf>,
        /// Store the description in the database given by --db
        #[arg(long)]
        store: bool,
    },
    /// Rebuild a file from its description and content
    Assemble {
        /// Description file
        #[arg(long, conflicts_with = "sha256")]
        description: Option<PathBuf>,
        /// Look the description up in --db by the file's SHA-256
        #[arg(long)]
        sha256: Option<String>,
        /// Directory (or file) holding the referenced content
        #[arg(long, conflicts_with = "from_archive")]
        content: Option<PathBuf>,
        /// Fetch the referenced content from the archive
        #[arg(long)]
        from_archive: bool,
        /// Output file (default: the recorded name, in the current directory)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// nar SHA-256 of a file or directory
    NarHash {
        path: PathBuf,
        /// Skip .git, .svn, and .hg directories
        #[arg(long)]
        checkout: bool,
    },
    /// SWHID of a file or directory
    Swhid {
        path: PathBuf,
        /// Skip .git, .svn, and .hg directories
        #[arg(long)]
        checkout: bool,
    },
    /// Recover one source from a manifest
    Resolve {
        #[arg(long)]
        manifest: PathBuf,
        /// Index in the manifest, or one of the source's URLs
        #[arg(long)]
        source: String,
        /// Where to write the result (default: derived from the URL)
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Seconds between Vault status polls
        #[arg(long, default_value_t = 10)]
        vault_poll: u64,
        /// Give up on Vault cooking after this many seconds
        #[arg(long, default_value_t = 3600)]
        vault_deadline: u64,
    },
    /// Report whether each source is archived, requesting saves for VCS sources
    LintArchival {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a canonical sources manifest
    EmitManifest {
        /// Existing manifests to merge
        #[arg(long = "from")]
        inputs: Vec<PathBuf>,
        /// A downloaded file: URL=PATH
        #[arg(long = "file", value_name = "URL=PATH")]
        files: Vec<String>,
        /// A git checkout: URL#REF=DIR
        #[arg(long = "git", value_name = "URL#REF=DIR")]
        gits: Vec<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Link rot, coverage, census, and impact reports
    Audit {
        #[arg(value_enum)]
        report: AuditReport,
        /// One manifest per snapshot
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        /// Label per manifest (default: the manifest's file stem)
        #[arg(long)]
        snapshot_label: Vec<String>,
        /// Date per manifest
        #[arg(long)]
        date: Vec<String>,
        /// `dependent,dependency` CSV for impact
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Also write pog-types-{high,vcs,dl}-rel.csv into this directory
        #[arg(long)]
        split_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AuditReport {
    Rot,
    Coverage,
    Census,
    Impact,
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(default)]
struct ConfigFile {
    swh_url: Option<String>,
    db: Option<String>,
    timeout: Option<u64>,
    parallelism: Option<usize>,
}

/// Settings after flags, environment, and configuration file are merged.
pub struct GlobalConfig {
    pub archive_base_url: String,
    pub auth_token: Option<String>,
    pub db_url: Option<String>,
    pub timeout: Duration,
    pub parallelism: usize,
    pub offline_mode: bool,
    pub transport: Arc<dyn Transport>,
    json: bool,
}

impl GlobalConfig {
    fn from_args(g: &GlobalArgs) -> Result<GlobalConfig, String> {
        let file: ConfigFile = match &g.config {
            Some(p) => {
                let text = std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?;
                serde_json::from_slice(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => ConfigFile::default(),
        };
        let timeout = Duration::from_secs(g.timeout.or(file.timeout).unwrap_or(60));
        let offline_mode = g.offline || g.offline_mocks.is_some();
        let transport: Arc<dyn Transport> = match &g.offline_mocks {
            Some(dir) => Arc::new(MockTransport::from_dir(dir)?),
            None if g.offline => Arc::new(RefusingTransport),
            None => Arc::new(UreqTransport::new(timeout)),
        };
        Ok(GlobalConfig {
            archive_base_url: g.swh_url.clone().or(file.swh_url).unwrap_or_else(|| crate::heritage::PUBLIC_ARCHIVE.into()),
            auth_token: g.swh_token.clone().filter(|t| !t.is_empty()),
            db_url: g.db.clone().or(file.db),
            timeout,
            parallelism: g.parallelism.or(file.parallelism).unwrap_or(8),
            offline_mode,
            transport,
            json: g.json,
        })
    }

    fn client(&self) -> Arc<HeritageClient> {
        Arc::new(HeritageClient::new(ArchiveEndpoint::new(&self.archive_base_url, self.auth_token.clone()), self.transport.clone()))
    }

    fn db(&self) -> Result<Box<dyn DescriptionDb>, String> {
        match self.db_url.as_deref() {
            Some(u) if u.starts_with("http://") || u.starts_with("https://") => {
                Ok(Box::new(RemoteDb::new(u, self.transport.clone())))
            }
            Some(dir) => Ok(Box::new(LocalDb::new(dir))),
            None => Err("no description database; pass --db or set HEIRLOOM_DB".into()),
        }
    }

    fn fetcher(&self) -> OfflineAware {
        OfflineAware { inner: UpstreamFetcher::new(self.transport.clone()), offline: self.offline_mode }
    }
}

/// Lets git and svn reach only local repositories in offline mode.
struct OfflineAware {
    inner: UpstreamFetcher,
    offline: bool,
}

impl OfflineAware {
    fn check(&self, url: &str) -> Result<(), String> {
        let local = url.starts_with("file://") || url.starts_with('/');
        if self.offline && !local {
            Err(format!("offline mode: refusing to contact {url}"))
        } else {
            Ok(())
        }
    }
}

impl Fetcher for OfflineAware {
    fn fetch_url(&self, url: &str) -> Result<Vec<u8>, String> {
        self.inner.fetch_url(url)
    }

    fn fetch_git(&self, url: &str, r: &GitRef) -> Result<NarNode, String> {
        self.check(url)?;
        self.inner.fetch_git(url, r)
    }

    fn fetch_svn(&self, url: &str, rev: Option<u64>) -> Result<NarNode, String> {
        self.check(url)?;
        self.inner.fetch_svn(url, rev)
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = GlobalConfig::from_args(&cli.global).and_then(|cfg| run(&cfg, cli.command));
    match result {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(&out.stdout);
            let _ = stdout.flush();
            out.code
        }
        Err(msg) => {
            eprintln!("heirloom: {msg}");
            EXIT_FAILURE
        }
    }
}

struct Output {
    stdout: Vec<u8>,
    code: i32,
}

fn emit(cfg: &GlobalConfig, value: Value, text: String) -> Output {
    let stdout = if cfg.json {
        let mut v = serde_json::to_vec_pretty(&value).unwrap();
        v.push(b'\n');
        v
    } else {
        text.into_bytes()
    };
    Output { stdout, code: EXIT_OK }
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, data: &[u8]) -> Result<(), String> {
    std::fs::write(path, data).map_err(|e| format!("{}: {e}", path.display()))
}

fn tree_options(checkout: bool) -> TreeOptions {
    if checkout {
        TreeOptions::checkout()
    } else {
        TreeOptions::default()
    }
}

fn run(cfg: &GlobalConfig, cmd: Command) -> Result<Output, String> {
    match cmd {
        Command::Disassemble { file, name, output, content_dir, store } => {
            let data = read(&file)?;
            let name = name.unwrap_or_else(|| file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
            let (desc, contents) = disarchive::disassemble(&data, &name).map_err(|e| e.to_string())?;
            let text = desc.to_bytes();
            let mut stored = None;
            if store {
                let db = cfg.db_url.as_deref().ok_or("--store needs --db")?;
                stored = Some(LocalDb::new(db).store(&desc).map_err(|e| e.to_string())?);
            }
            if let Some(dir) = &content_dir {
                match &contents {
                    Contents::Tree(t) => t.write_to_disk(dir),
                    Contents::Blob(b) => std::fs::create_dir_all(dir).and_then(|_| {
                        let n = desc.content_ref().map(|c| String::from_utf8_lossy(&c.name).into_owned()).unwrap_or_default();
                        std::fs::write(dir.join(n), b)
                    }),
                }
                .map_err(|e| format!("{}: {e}", dir.display()))?;
            }
            if let Some(o) = &output {
                write(o, &text)?;
            }
            let value = json!({
                "name": name,
                "sha256": hex::encode(desc.digest_sha256()),
                "swhids": desc.addresses().iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                "nar_sha256": desc.directory_ref().map(|d| d.digest.to_hex()),
                "description_bytes": text.len(),
                "stored": stored.as_ref().map(|p| p.display().to_string()),
                "description": if output.is_none() { Some(String::from_utf8_lossy(&text).into_owned()) } else { None },
            });
            let human = if output.is_some() || stored.is_some() {
                let mut s = String::new();
                for p in output.iter().chain(stored.iter()) {
                    s.push_str(&format!("{}\n", p.display()));
                }
                s
            } else {
                String::from_utf8_lossy(&text).into_owned()
            };
            Ok(emit(cfg, value, human))
        }
        Command::Assemble { description, sha256, content, from_archive, output } => {
            let desc = match (description, sha256) {
                (Some(p), _) => disarchive::Description::from_bytes(&read(&p)?).map_err(|e| e.to_string())?,
                (None, Some(h)) => {
                    let mut d = [0u8; 32];
                    hex::decode_to_slice(&h, &mut d).map_err(|_| format!("bad sha256 {h}"))?;
                    cfg.db()?.lookup(&d).map_err(|e| e.to_string())?
                }
                (None, None) => return Err("pass --description or --sha256".into()),
            };
            let bytes = if from_archive {
                let p = VaultContent::new(cfg.client(), Duration::from_secs(10), Duration::from_secs(3600));
                disarchive::assemble(&desc, &p)
            } else {
                let dir = content.ok_or("pass --content DIR or --from-archive")?;
                disarchive::assemble(&desc, &LocalContent::new(dir))
            }
            .map_err(|e| e.to_string())?;
            let out = output.unwrap_or_else(|| PathBuf::from(String::from_utf8_lossy(desc.name()).into_owned()));
            write(&out, &bytes)?;
            let value = json!({"output": out.display().to_string(), "sha256": hex::encode(desc.digest_sha256()), "bytes": bytes.len()});
            Ok(emit(cfg, value, format!("{}\n", out.display())))
        }
        Command::NarHash { path, checkout } => {
            let tree = tree_from_disk(&path, &tree_options(checkout)).map_err(|e| e.to_string())?;
            let d = nar_hash(&tree);
            let value = json!({"base32": d.to_base32(), "hex": d.to_hex(), "sri": d.to_sri()});
            Ok(emit(cfg, value, format!("{}\n{}\n", d.to_base32(), d.to_hex())))
        }
        Command::Swhid { path, checkout } => {
            let id = swhid::swhid_for_path(&path, &tree_options(checkout)).map_err(|e| e.to_string())?;
            Ok(emit(cfg, json!({"swhid": id.to_string()}), format!("{id}\n")))
        }
        Command::Resolve { manifest, source, output, vault_poll, vault_deadline } => {
            let records = resolver::load_sources_manifest(&read(&manifest)?)?;
            let record = pick(&records, &source)?;
            let db: Box<dyn DescriptionDb> = match cfg.db() {
                Ok(db) => db,
                Err(_) => Box::new(LocalDb::new(std::env::temp_dir().join("heirloom-empty-db"))),
            };
            let opts = ResolveOptions {
                vault_poll: Duration::from_secs(vault_poll),
                vault_deadline: Duration::from_secs(vault_deadline),
                ..Default::default()
            };
            match resolver::resolve(record, &cfg.client(), &*db, &cfg.fetcher(), &opts) {
                Ok(res) => {
                    let out = output.unwrap_or_else(|| default_output(record));
                    match &res.outcome {
                        Outcome::Bytes(b) => write(&out, b)?,
                        Outcome::Tree(t) => t.write_to_disk(&out).map_err(|e| format!("{}: {e}", out.display()))?,
                    }
                    let trail: Vec<String> = res.trail.iter().map(|f| f.to_string()).collect();
                    let value = json!({"provenance": res.provenance.as_str(), "output": out.display().to_string(), "verified": res.verified, "trail": trail});
                    for t in &trail {
                        eprintln!("heirloom: {t}");
                    }
                    Ok(emit(cfg, value, format!("{}\t{}\n", res.provenance.as_str(), out.display())))
                }
                Err(e) => Err(e.to_string()),
            }
        }
        Command::LintArchival { manifest } => {
            let records = resolver::load_sources_manifest(&read(&manifest)?)?;
            let client = cfg.client();
            let mut rows = Vec::new();
            let mut text = String::new();
            let mut failed = false;
            for r in &records {
                let (status, detail) = match resolver::check_archival(r, &client) {
                    Ok(s) => {
                        let status = match s.state {
                            resolver::ArchivalState::Archived => "archived",
                            resolver::ArchivalState::NotArchived => "not-archived",
                        };
                        let detail = s
                            .swhid
                            .map(|x| x.to_string())
                            .or(s.save_request.map(|q| format!("save request {}", q.request_status)))
                            .or(s.note)
                            .unwrap_or_default();
                        (status, detail)
                    }
                    Err(e) => {
                        failed = true;
                        ("error", e.to_string())
                    }
                };
                text.push_str(&format!("{}\t{status}\t{detail}\n", r.urls[0]));
                rows.push(json!({"url": r.urls[0], "status": status, "detail": detail}));
            }
            let mut out = emit(cfg, Value::Array(rows), text);
            if failed {
                out.code = EXIT_FAILURE;
            }
            Ok(out)
        }
        Command::EmitManifest { inputs, files, gits, out } => {
            let mut records = Vec::new();
            for p in &inputs {
                records.extend(resolver::load_sources_manifest(&read(p)?)?);
            }
            for f in &files {
                let (url, path) = f.split_once('=').ok_or_else(|| format!("--file expects URL=PATH, got {f}"))?;
                let sha: [u8; 32] = Sha256::digest(read(Path::new(path))?).into();
                records.push(SourceRecord::url_fetch(&[url], sha));
            }
            for g in &gits {
                let (spec, dir) = g.split_once('=').ok_or_else(|| format!("--git expects URL#REF=DIR, got {g}"))?;
                let (url, r) = spec.rsplit_once('#').ok_or_else(|| format!("--git expects URL#REF=DIR, got {g}"))?;
                let tree = tree_from_disk(Path::new(dir), &TreeOptions::checkout()).map_err(|e| e.to_string())?;
                records.push(SourceRecord::git_fetch(url, GitRef::parse(r), nar_hash(&tree)));
            }
            records.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
            records.dedup();
            let bytes = resolver::emit_sources_manifest(&records);
            match out {
                Some(p) => {
                    write(&p, &bytes)?;
                    Ok(emit(cfg, json!({"output": p.display().to_string(), "sources": records.len()}), format!("{}\n", p.display())))
                }
                None => Ok(Output { stdout: bytes, code: EXIT_OK }),
            }
        }
        Command::Audit { report, manifest, snapshot_label, date, edges, split_dir, out } => {
            audit_command(cfg, report, &manifest, &snapshot_label, &date, edges.as_deref(), split_dir.as_deref(), out.as_deref())
        }
    }
}

fn pick<'a>(records: &'a [SourceRecord], source: &str) -> Result<&'a SourceRecord, String> {
    if let Ok(i) = source.parse::<usize>() {
        return records.get(i).ok_or_else(|| format!("manifest has {} sources; no index {i}", records.len()));
    }
    records.iter().find(|r| r.urls.iter().any(|u| u == source)).ok_or_else(|| format!("no source with URL {source}"))
}

fn default_output(r: &SourceRecord) -> PathBuf {
    let url = r.urls[0].split(['?', '#']).next().unwrap_or_default().trim_end_matches('/');
    let base = url.rsplit('/').next().filter(|s| !s.is_empty()).unwrap_or("source");
    PathBuf::from(base.trim_end_matches(".git"))
}

#[allow(clippy::too_many_arguments)]
fn audit_command(
    cfg: &GlobalConfig,
    report: AuditReport,
    manifests: &[PathBuf],
    labels: &[String],
    dates: &[String],
    edges: Option<&Path>,
    split_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<Output, String> {
    let mut snapshots = Vec::new();
    for (i, m) in manifests.iter().enumerate() {
        let records = resolver::load_sources_manifest(&read(m)?)?;
        let label = labels.get(i).cloned().unwrap_or_else(|| m.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        snapshots.push((label, dates.get(i).cloned().unwrap_or_default(), records));
    }
    let mut buf = Vec::new();
    let summary: Value;
    match report {
        AuditReport::Impact => {
            let edges = match edges {
                Some(p) => audit::parse_edges(&read(p)?)?,
                None => Vec::new(),
            };
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["label", "url", "name", "rank"]).map_err(|e| e.to_string())?;
            let mut rows = Vec::new();
            for (label, _, records) in &snapshots {
                let ranks = audit::impact_rank(records, &edges).map_err(|e| e.to_string())?;
                for (r, n) in records.iter().zip(ranks) {
                    let name = r.name.clone().unwrap_or_default();
                    w.write_record([label.as_str(), &r.urls[0], &name, &n.to_string()]).map_err(|e| e.to_string())?;
                    rows.push(json!({"label": label, "url": r.urls[0], "name": name, "rank": n}));
                }
            }
            w.flush().map_err(|e| e.to_string())?;
            drop(w);
            summary = Value::Array(rows);
        }
        _ => {
            let mut reports = Vec::new();
            for (label, date, records) in &snapshots {
                let audited = match report {
                    AuditReport::Census => records
                        .iter()
                        .map(|r| audit::AuditRecord {
                            source: r.clone(),
                            snapshot_label: label.clone(),
                            rot_status: RotStatus::Skipped,
                            swhids: Vec::new(),
                            coverage_status: CoverageStatus::Undetermined,
                        })
                        .collect(),
                    _ => audit::audit_snapshot(records, label, &cfg.fetcher(), cfg.parallelism),
                };
                let audited = if report == AuditReport::Coverage {
                    audit::coverage(audited, &cfg.client()).map_err(|e| e.to_string())?
                } else {
                    audited
                };
                reports.push(SnapshotReport::new(label, date, &audited));
            }
            let io = |e: std::io::Error| e.to_string();
            match report {
                AuditReport::Rot => audit::write_rot_csv(&mut buf, &reports).map_err(io)?,
                AuditReport::Coverage => audit::write_coverage_csv(&mut buf, &reports).map_err(io)?,
                _ => audit::write_census_csv(&mut buf, &reports).map_err(io)?,
            }
            if let Some(dir) = split_dir {
                std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
                let file = |n: &str| std::fs::File::create(dir.join(n)).map_err(|e| format!("{n}: {e}"));
                audit::write_census_high_csv(file("pog-types-high-rel.csv")?, &reports).map_err(io)?;
                audit::write_census_vcs_csv(file("pog-types-vcs-rel.csv")?, &reports).map_err(io)?;
                audit::write_census_dl_csv(file("pog-types-dl-rel.csv")?, &reports).map_err(io)?;
            }
            summary = Value::Array(
                reports
                    .iter()
                    .map(|r| {
                        json!({
                            "label": r.label, "date": r.date, "total": r.total,
                            "available": r.rot_count(RotStatus::Available), "missing": r.rot_count(RotStatus::Missing),
                            "hash_mismatch": r.rot_count(RotStatus::HashMismatch),
                            "stored": r.coverage_count(CoverageStatus::Stored),
                            "coverage_missing": r.coverage_count(CoverageStatus::Missing),
                            "undetermined": r.coverage_count(CoverageStatus::Undetermined),
                        })
                    })
                    .collect(),
            );
        }
    }
    match out {
        Some(p) => {
            write(p, &buf)?;
            Ok(emit(cfg, json!({"output": p.display().to_string(), "snapshots": summary}), format!("{}\n", p.display())))
        }
        None if cfg.json => Ok(emit(cfg, summary, String::new())),
        None => Ok(Output { stdout: buf, code: EXIT_OK }),
    }
}
