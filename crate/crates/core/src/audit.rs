//! Link rot, archive coverage, and source-type census over source manifests.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::disarchive;
use crate::heritage::{HeritageClient, HeritageError};
use crate::resolver::{verify, Fetcher, FetchMethod, Outcome, SourceRecord};
use crate::swhid::{swhid_for_content, swhid_for_directory, Swhid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RotStatus {
    Available,
    Missing,
    HashMismatch,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CoverageStatus {
    Stored,
    Missing,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub source: SourceRecord,
    pub snapshot_label: String,
    pub rot_status: RotStatus,
    /// One identifier, or one per sub-directory; empty when the source could
    /// not be obtained or processed.
    pub swhids: Vec<Swhid>,
    pub coverage_status: CoverageStatus,
}

/// Downloads a source from its upstream locations only.
pub fn fetch_upstream(record: &SourceRecord, fetcher: &dyn Fetcher) -> (RotStatus, Option<Outcome>) {
    if record.validate().is_err() {
        return (RotStatus::Skipped, None);
    }
    let mut mismatched = false;
    for url in &record.urls {
        let got = match record.method {
            FetchMethod::UrlFetch => fetcher.fetch_url(url).map(Outcome::Bytes),
            FetchMethod::GitFetch => fetcher.fetch_git(url, record.git_ref.as_ref().unwrap()).map(Outcome::Tree),
            FetchMethod::SvnFetch => fetch_svn_checkout(record, url, fetcher).map(Outcome::Tree),
        };
        if let Ok(o) = got {
            if verify(&o, &record.expected).is_ok() {
                return (RotStatus::Available, Some(o));
            }
            mismatched = true;
        }
    }
    (if mismatched { RotStatus::HashMismatch } else { RotStatus::Missing }, None)
}

fn fetch_svn_checkout(record: &SourceRecord, url: &str, fetcher: &dyn Fetcher) -> Result<crate::nar::NarNode, String> {
    let Some(subdirs) = &record.svn_subdirs else { return fetcher.fetch_svn(url, record.svn_rev) };
    let mut tree = crate::nar::NarNode::empty_dir();
    for s in subdirs {
        let part = fetcher.fetch_svn(&format!("{}/{}", url.trim_end_matches('/'), s.path.trim_matches('/')), record.svn_rev)?;
        tree.insert(s.path.trim_matches('/').as_bytes(), part).map_err(|_| "overlapping sub-directories".to_string())?;
    }
    Ok(tree)
}

pub fn classify_rot(record: &SourceRecord, fetcher: &dyn Fetcher) -> RotStatus {
    fetch_upstream(record, fetcher).0
}

fn file_name(url: &str) -> &str {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    path.trim_end_matches('/').rsplit('/').next().unwrap_or(path)
}

/// Identifiers under which the archive would hold a fetched source: the
/// directory of a tarball, the content of a bare file, the directory of a
/// checkout, or one directory per Subversion sub-directory.
pub fn compute_swhids(record: &SourceRecord, artifact: &Outcome) -> Vec<Swhid> {
    match artifact {
        Outcome::Bytes(bytes) => match disarchive::disassemble(bytes, file_name(&record.urls[0])) {
            Ok((desc, _)) => desc.addresses().iter().take(1).copied().collect(),
            Err(_) => Vec::new(),
        },
        Outcome::Tree(tree) => match &record.svn_subdirs {
            Some(subdirs) => {
                let ids: Option<Vec<Swhid>> = subdirs
                    .iter()
                    .map(|s| tree.get(s.path.trim_matches('/').as_bytes()).and_then(|t| swhid_for_directory(t).ok()))
                    .collect();
                ids.unwrap_or_default()
            }
            None => match swhid_for_directory(tree) {
                Ok(s) => vec![s],
                Err(_) => match tree {
                    crate::nar::NarNode::Regular { contents, .. } => vec![swhid_for_content(contents)],
                    _ => Vec::new(),
                },
            },
        },
    }
}

/// Link rot and identifiers for every record, with at most `parallelism`
/// downloads in flight. Coverage is left undetermined.
pub fn audit_snapshot(records: &[SourceRecord], label: &str, fetcher: &dyn Fetcher, parallelism: usize) -> Vec<AuditRecord> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build().expect("thread pool");
    pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let (rot_status, artifact) = fetch_upstream(r, fetcher);
                let swhids = artifact.map(|a| compute_swhids(r, &a)).unwrap_or_default();
                AuditRecord {
                    source: r.clone(),
                    snapshot_label: label.to_string(),
                    rot_status,
                    swhids,
                    coverage_status: CoverageStatus::Undetermined,
                }
            })
            .collect()
    })
}

/// Sets coverage from bulk existence queries. A record is stored when all
/// its identifiers are known and undetermined when it has none. Any client
/// error fails the whole batch.
pub fn coverage(mut records: Vec<AuditRecord>, client: &HeritageClient) -> Result<Vec<AuditRecord>, HeritageError> {
    let ids: Vec<Swhid> = records.iter().flat_map(|r| r.swhids.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let known = if ids.is_empty() { HashMap::new() } else { client.known(&ids)? };
    for r in &mut records {
        r.coverage_status = if r.swhids.is_empty() {
            CoverageStatus::Undetermined
        } else if r.swhids.iter().all(|s| known.get(s) == Some(&true)) {
            CoverageStatus::Stored
        } else {
            CoverageStatus::Missing
        };
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VcsKind {
    Git,
    Svn,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DownloadKind {
    TarGz,
    TarXz,
    TarBz2,
    Tar,
    Zip,
    Text,
    Other,
}

impl DownloadKind {
    pub const ALL: [DownloadKind; 7] = [
        DownloadKind::TarGz,
        DownloadKind::TarXz,
        DownloadKind::TarBz2,
        DownloadKind::Tar,
        DownloadKind::Zip,
        DownloadKind::Text,
        DownloadKind::Other,
    ];

    pub fn column(self) -> &'static str {
        match self {
            DownloadKind::TarGz => "tar-gz",
            DownloadKind::TarXz => "tar-xz",
            DownloadKind::TarBz2 => "tar-bz2",
            DownloadKind::Tar => "tar",
            DownloadKind::Zip => "zip",
            DownloadKind::Text => "text",
            DownloadKind::Other => "other",
        }
    }
}

const TEXT_SUFFIXES: &[&str] = &[
    ".patch", ".diff", ".txt", ".el", ".scm", ".py", ".pl", ".sh", ".c", ".h", ".md", ".tex", ".sty", ".cls", ".json",
    ".xml", ".html", ".lisp", ".lua", ".rb", ".js", ".css", ".conf", ".cfg", ".in",
];

/// Bucket of a downloaded file, from its URL suffix.
pub fn download_kind(url: &str) -> DownloadKind {
    let name = file_name(url).to_ascii_lowercase();
    let ends = |sfx: &[&str]| sfx.iter().any(|s| name.ends_with(s));
    if ends(&[".tar.gz", ".tgz"]) {
        DownloadKind::TarGz
    } else if ends(&[".tar.xz", ".txz"]) {
        DownloadKind::TarXz
    } else if ends(&[".tar.bz2", ".tbz2", ".tbz"]) {
        DownloadKind::TarBz2
    } else if ends(&[".tar"]) {
        DownloadKind::Tar
    } else if ends(&[".zip"]) {
        DownloadKind::Zip
    } else if ends(TEXT_SUFFIXES) {
        DownloadKind::Text
    } else {
        DownloadKind::Other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Vcs(VcsKind),
    Download(DownloadKind),
}

pub fn source_kind(r: &SourceRecord) -> SourceKind {
    match r.method {
        FetchMethod::GitFetch => SourceKind::Vcs(VcsKind::Git),
        FetchMethod::SvnFetch => SourceKind::Vcs(VcsKind::Svn),
        FetchMethod::UrlFetch => SourceKind::Download(download_kind(r.urls.first().map_or("", String::as_str))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Census {
    pub vcs: BTreeMap<VcsKind, usize>,
    pub download: BTreeMap<DownloadKind, usize>,
}

impl Census {
    pub fn vcs_total(&self) -> usize {
        self.vcs.values().sum()
    }

    pub fn download_total(&self) -> usize {
        self.download.values().sum()
    }

    pub fn total(&self) -> usize {
        self.vcs_total() + self.download_total()
    }

    /// `vcs-rel` and `download-rel`.
    pub fn high_rel(&self) -> (f64, f64) {
        (ratio(self.vcs_total(), self.total()), ratio(self.download_total(), self.total()))
    }

    /// `git-rel`, `svn-rel`, `other-rel` among VCS sources.
    pub fn vcs_rel(&self) -> [f64; 3] {
        let t = self.vcs_total();
        [VcsKind::Git, VcsKind::Svn, VcsKind::Other].map(|k| ratio(self.vcs.get(&k).copied().unwrap_or(0), t))
    }

    /// Download buckets in [`DownloadKind::ALL`] order, among downloads.
    pub fn download_rel(&self) -> [f64; 7] {
        let t = self.download_total();
        DownloadKind::ALL.map(|k| ratio(self.download.get(&k).copied().unwrap_or(0), t))
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn census(records: &[SourceRecord]) -> Census {
    let mut c = Census::default();
    for r in records {
        match source_kind(r) {
            SourceKind::Vcs(k) => *c.vcs.entry(k).or_default() += 1,
            SourceKind::Download(k) => *c.download.entry(k).or_default() += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnapshotReport {
    pub label: String,
    pub date: String,
    pub total: usize,
    pub rot: BTreeMap<RotStatus, usize>,
    pub coverage: BTreeMap<CoverageStatus, usize>,
    pub census: Census,
}

impl SnapshotReport {
    pub fn new(label: &str, date: &str, records: &[AuditRecord]) -> SnapshotReport {
        let mut rep = SnapshotReport { label: label.into(), date: date.into(), total: records.len(), ..Default::default() };
        for r in records {
            *rep.rot.entry(r.rot_status).or_default() += 1;
            *rep.coverage.entry(r.coverage_status).or_default() += 1;
        }
        let sources: Vec<SourceRecord> = records.iter().map(|r| r.source.clone()).collect();
        rep.census = census(&sources);
        rep
    }

    pub fn rot_count(&self, s: RotStatus) -> usize {
        self.rot.get(&s).copied().unwrap_or(0)
    }

    pub fn coverage_count(&self, s: CoverageStatus) -> usize {
        self.coverage.get(&s).copied().unwrap_or(0)
    }

    pub fn rot_rel(&self, s: RotStatus) -> f64 {
        ratio(self.rot_count(s), self.total)
    }

    /// Share of all sources, as in the coverage table: stored, missing, and
    /// undetermined add up to the total.
    pub fn coverage_rel(&self, s: CoverageStatus) -> f64 {
        ratio(self.coverage_count(s), self.total)
    }
}

fn csv_err(e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

fn write_rows(out: impl Write, header: &[&str], rows: Vec<Vec<String>>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

/// Link rot per snapshot. `missing` excludes hash mismatches; everything no
/// longer downloadable as pinned is `missing-rel + hash-mismatch-rel`.
pub fn write_rot_csv(out: impl Write, reports: &[SnapshotReport]) -> std::io::Result<()> {
    let rows = reports
        .iter()
        .map(|r| {
            let c = |s| r.rot_count(s).to_string();
            vec![
                r.date.clone(),
                r.label.clone(),
                r.total.to_string(),
                c(RotStatus::Available),
                c(RotStatus::Missing),
                c(RotStatus::HashMismatch),
                c(RotStatus::Skipped),
                f(r.rot_rel(RotStatus::Available)),
                f(r.rot_rel(RotStatus::Missing)),
                f(r.rot_rel(RotStatus::HashMismatch)),
                f(r.rot_rel(RotStatus::Skipped)),
            ]
        })
        .collect();
    write_rows(
        out,
        &[
            "date", "label", "total", "available", "missing", "hash-mismatch", "skipped", "available-rel", "missing-rel",
            "hash-mismatch-rel", "skipped-rel",
        ],
        rows,
    )
}

/// Coverage per snapshot, with the columns of `pog-status-rel.csv`.
pub fn write_coverage_csv(out: impl Write, reports: &[SnapshotReport]) -> std::io::Result<()> {
    let rows = reports
        .iter()
        .map(|r| {
            let c = |s| r.coverage_count(s).to_string();
            vec![
                r.date.clone(),
                r.label.clone(),
                c(CoverageStatus::Stored),
                c(CoverageStatus::Missing),
                c(CoverageStatus::Undetermined),
                r.total.to_string(),
                f(r.coverage_rel(CoverageStatus::Stored)),
                f(r.coverage_rel(CoverageStatus::Missing)),
                f(r.coverage_rel(CoverageStatus::Undetermined)),
            ]
        })
        .collect();
    write_rows(
        out,
        &["date", "label", "stored", "missing", "unknown", "total", "stored-rel", "missing-rel", "unknown-rel"],
        rows,
    )
}

/// `pog-types-high-rel.csv`.
pub fn write_census_high_csv(out: impl Write, reports: &[SnapshotReport]) -> std::io::Result<()> {
    let rows = reports
        .iter()
        .map(|r| {
            let (v, d) = r.census.high_rel();
            vec![r.date.clone(), r.label.clone(), f(v), f(d)]
        })
        .collect();
    write_rows(out, &["date", "label", "vcs-rel", "download-rel"], rows)
}

/// `pog-types-vcs-rel.csv`.
pub fn write_census_vcs_csv(out: impl Write, reports: &[SnapshotReport]) -> std::io::Result<()> {
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.date.clone(), r.label.clone()];
            row.extend(r.census.vcs_rel().map(f));
            row
        })
        .collect();
    write_rows(out, &["date", "label", "git-rel", "svn-rel", "other-rel"], rows)
}

/// `pog-types-dl-rel.csv`.
pub fn write_census_dl_csv(out: impl Write, reports: &[SnapshotReport]) -> std::io::Result<()> {
    let header: Vec<String> = DownloadKind::ALL.iter().map(|k| format!("{}-rel", k.column())).collect();
    let mut cols = vec!["date", "label"];
    cols.extend(header.iter().map(String::as_str));
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![r.date.clone(), r.label.clone()];
            row.extend(r.census.download_rel().map(f));
            row
        })
        .collect();
    write_rows(out, &cols, rows)
}

/// All census columns in one table; the VCS "other" bucket is `vcs-other-rel`.
pub fn write_census_csv(out: impl Write, reports: &[SnapshotReport]) -> std::io::Result<()> {
    let mut cols: Vec<String> =
        ["date", "label", "total", "vcs-rel", "download-rel", "git-rel", "svn-rel", "vcs-other-rel"].map(String::from).to_vec();
    cols.extend(DownloadKind::ALL.iter().map(|k| format!("{}-rel", k.column())));
    let rows = reports
        .iter()
        .map(|r| {
            let (v, d) = r.census.high_rel();
            let mut row = vec![r.date.clone(), r.label.clone(), r.total.to_string(), f(v), f(d)];
            row.extend(r.census.vcs_rel().map(f));
            row.extend(r.census.download_rel().map(f));
            row
        })
        .collect();
    write_rows(out, &cols.iter().map(String::as_str).collect::<Vec<_>>(), rows)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImpactError {
    #[error("dependency cycle among: {}", .0.join(", "))]
    CycleDetected(Vec<String>),
}

/// For each record, the number of packages lost with its source: the
/// transitive dependents of its package plus the package itself. Edges are
/// `(dependent, dependency)`; records without a package name count 1.
pub fn impact_rank(records: &[SourceRecord], edges: &[(String, String)]) -> Result<Vec<usize>, ImpactError> {
    let mut dependents: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut dependencies: HashMap<&str, Vec<&str>> = HashMap::new();
    for (a, b) in edges {
        dependents.entry(b.as_str()).or_default().push(a.as_str());
        dependencies.entry(a.as_str()).or_default().push(b.as_str());
    }
    let stuck_up = unsorted(edges.iter().map(|(a, b)| (a.as_str(), b.as_str())), &dependents);
    if !stuck_up.is_empty() {
        let stuck_down = unsorted(edges.iter().map(|(a, b)| (b.as_str(), a.as_str())), &dependencies);
        let cycle = stuck_up.intersection(&stuck_down).map(|s| s.to_string()).collect();
        return Err(ImpactError::CycleDetected(cycle));
    }
    let mut memo: HashMap<String, usize> = HashMap::new();
    let mut rank = |name: &str| -> usize {
        if let Some(&n) = memo.get(name) {
            return n;
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut stack: Vec<&str> = dependents.get(name).cloned().unwrap_or_default();
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(dependents.get(n).into_iter().flatten());
            }
        }
        memo.insert(name.to_string(), seen.len() + 1);
        seen.len() + 1
    };
    Ok(records.iter().map(|r| r.name.as_deref().map_or(1, &mut rank)).collect())
}

/// Nodes left over by Kahn's algorithm on edges `(from, to)`, where `to`
/// must come first and `next[to]` lists the nodes waiting on it.
fn unsorted<'a>(edges: impl Iterator<Item = (&'a str, &'a str)>, next: &HashMap<&'a str, Vec<&'a str>>) -> BTreeSet<&'a str> {
    let mut waiting: BTreeMap<&str, usize> = BTreeMap::new();
    for (from, to) in edges {
        *waiting.entry(from).or_default() += 1;
        waiting.entry(to).or_default();
    }
    let mut queue: VecDeque<&str> = waiting.iter().filter(|(_, &d)| d == 0).map(|(n, _)| *n).collect();
    let mut left: BTreeSet<&str> = waiting.keys().copied().collect();
    while let Some(n) = queue.pop_front() {
        left.remove(n);
        for m in next.get(n).into_iter().flatten() {
            let w = waiting.get_mut(m).unwrap();
            *w -= 1;
            if *w == 0 {
                queue.push_back(m);
            }
        }
    }
    left
}

/// Reads `dependent,dependency` rows; a header row with those names is skipped.
pub fn parse_edges(text: &[u8]) -> Result<Vec<(String, String)>, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 2 {
            return Err(format!("edge row {} has {} fields", i + 1, rec.len()));
        }
        if i == 0 && &rec[0] == "dependent" && &rec[1] == "dependency" {
            continue;
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nar::NarDigest;
    use crate::resolver::GitRef;

    fn named(n: &str) -> SourceRecord {
        SourceRecord::url_fetch(&[&format!("https://x/{n}.tar.gz")], [0; 32]).with_name(n)
    }

    fn e(a: &str, b: &str) -> (String, String) {
        (a.into(), b.into())
    }

    #[test]
    fn impact_counts_transitive_dependents_once() {
        let recs = [named("a"), named("b"), named("c"), named("d"), named("lonely")];
        let diamond = [e("a", "b"), e("a", "c"), e("b", "d"), e("c", "d")];
        assert_eq!(impact_rank(&recs, &diamond).unwrap(), vec![1, 2, 2, 4, 1]);
        let chain = [e("a", "b"), e("b", "c")];
        assert_eq!(impact_rank(&recs[..3], &chain).unwrap(), vec![1, 2, 3]);
        let cyc = [e("a", "b"), e("b", "a"), e("c", "a")];
        assert_eq!(impact_rank(&recs, &cyc), Err(ImpactError::CycleDetected(vec!["a".into(), "b".into()])));
    }

    #[test]
    fn census_buckets() {
        let git = SourceRecord::git_fetch("https://g/x", GitRef::Tag("1".into()), NarDigest([0; 32]));
        let recs = vec![git.clone(), git.clone(), git, named("t")];
        let c = census(&recs);
        assert_eq!(c.high_rel(), (0.75, 0.25));
        assert_eq!(download_kind("https://x/openjdk-9.181.tar.bz2"), DownloadKind::TarBz2);
        assert_eq!(download_kind("https://x/fix.patch?raw=1"), DownloadKind::Text);
        assert_eq!(download_kind("https://x/a.tar.lz"), DownloadKind::Other);
        assert_eq!(download_kind("https://x/a.zip"), DownloadKind::Zip);
    }

    #[test]
    fn edges_csv() {
        let edges = parse_edges(b"dependent,dependency\na, b\nb,c\n").unwrap();
        assert_eq!(edges, vec![e("a", "b"), e("b", "c")]);
        assert!(parse_edges(b"a,b,c\n").is_err());
    }
}
