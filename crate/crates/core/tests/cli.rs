//! The installed binary: exit codes, offline mocks, and where settings come from.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn heirloom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heirloom"))
        .args(args)
        .current_dir(dir)
        .env_remove("SWH_URL")
        .env_remove("SWH_TOKEN")
        .env_remove("HEIRLOOM_DB")
        .env_remove("HEIRLOOM_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

fn sample_dir(root: &Path) {
    std::fs::create_dir_all(root.join("pkg/sub")).unwrap();
    std::fs::write(root.join("pkg/a.txt"), "alpha\n").unwrap();
    std::fs::write(root.join("pkg/sub/b.txt"), "beta\n").unwrap();
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = heirloom(tmp.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = heirloom(tmp.path(), &["resolve", "--source", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--manifest"));
    let o = heirloom(tmp.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn nar_hash_and_swhid() {
    let tmp = tempfile::tempdir().unwrap();
    sample_dir(tmp.path());
    let o = heirloom(tmp.path(), &["nar-hash", "pkg"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].len(), 52);
    assert_eq!(lines[1].len(), 64);

    let o = heirloom(tmp.path(), &["--json", "nar-hash", "pkg"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["hex"], lines[1]);
    assert_eq!(v["base32"], lines[0]);

    let o = heirloom(tmp.path(), &["swhid", "pkg"]);
    let swhid = stdout(&o).trim().to_string();
    assert!(swhid.starts_with("swh:1:dir:"));
    if have("git") {
        let g = |args: &[&str]| {
            let o = Command::new("git").args(args).current_dir(tmp.path().join("pkg")).output().unwrap();
            String::from_utf8(o.stdout).unwrap().trim().to_string()
        };
        g(&["init", "-q"]);
        g(&["add", "-A"]);
        assert_eq!(swhid, format!("swh:1:dir:{}", g(&["write-tree"])));
        let o = heirloom(tmp.path(), &["swhid", "--checkout", "pkg"]);
        assert_eq!(stdout(&o).trim(), swhid);
    }

    let o = heirloom(tmp.path(), &["nar-hash", "no-such-dir"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn disassemble_assemble_and_tampering() {
    if !have("tar") || !have("gzip") {
        eprintln!("skipping: tar or gzip missing");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    sample_dir(tmp.path());
    let d = tmp.path();
    assert!(Command::new("tar").args(["cf", "pkg.tar", "pkg"]).current_dir(d).status().unwrap().success());
    assert!(Command::new("gzip").args(["-6", "pkg.tar"]).current_dir(d).status().unwrap().success());

    let o = heirloom(d, &["disassemble", "pkg.tar.gz", "-o", "pkg.sexp", "--content-dir", "content", "--store", "--db", "db"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let original = std::fs::read(d.join("pkg.tar.gz")).unwrap();
    let digest = hex::encode(Sha256::digest(&original));
    let o = heirloom(d, &["assemble", "--description", "pkg.sexp", "--content", "content", "-o", "out.tar.gz"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(d.join("out.tar.gz")).unwrap(), original);

    let o = heirloom(d, &["--db", "db", "assemble", "--sha256", &digest, "--content", "content", "-o", "again.tar.gz"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(d.join("again.tar.gz")).unwrap(), original);

    std::fs::write(d.join("content/a.txt"), "tampered\n").unwrap();
    let o = heirloom(d, &["assemble", "--description", "pkg.sexp", "--content", "content", "-o", "bad.tar.gz"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("content digest mismatch"), "{}", stderr(&o));
    assert!(!d.join("bad.tar.gz").exists());
}

fn write_routes(dir: &Path, routes: Value) {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("routes.json"), serde_json::to_vec(&routes).unwrap()).unwrap();
}

#[test]
fn resolve_with_offline_mocks() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let data = b"tarball from a mirror\n";
    std::fs::write(d.join("payload"), data).unwrap();
    write_routes(&d.join("mocks"), json!([
        {"method": "GET", "url": "https://ftp.example.org/dead.tar.gz", "status": 404},
        {"method": "GET", "url": "https://mirror.example.org/dist/x.tar.gz", "status": 200, "body_file": "../payload"}
    ]));
    let o = heirloom(d, &["emit-manifest", "--file", "https://ftp.example.org/dead.tar.gz=payload", "-o", "m1.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut m: Value = serde_json::from_slice(&std::fs::read(d.join("m1.json")).unwrap()).unwrap();
    m["sources"][0]["urls"].as_array_mut().unwrap().push(json!("https://mirror.example.org/dist/x.tar.gz"));
    std::fs::write(d.join("sources.json"), serde_json::to_vec(&m).unwrap()).unwrap();

    let o = heirloom(d, &["--offline-mocks", "mocks", "--json", "resolve", "--manifest", "sources.json", "--source", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["provenance"], "upstream");
    assert_eq!(v["trail"].as_array().unwrap().len(), 1);
    assert_eq!(std::fs::read(d.join("dead.tar.gz")).unwrap(), data);

    let o = heirloom(d, &["--offline", "resolve", "--manifest", "sources.json", "--source", "https://ftp.example.org/dead.tar.gz"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("offline"), "{}", stderr(&o));
}

#[test]
fn settings_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let data = b"archived";
    let sha = hex::encode(Sha256::digest(data));
    let answer = |host: &str, id: &str| {
        json!({"method": "GET", "url": format!("https://{host}/api/1/content/sha256:{sha}/"),
               "json": {"checksums": {"sha1_git": id.repeat(40)}}})
    };
    write_routes(&d.join("mocks"), json!([answer("flag.test", "a"), answer("env.test", "b"), answer("config.test", "c")]));
    std::fs::write(d.join("payload"), data).unwrap();
    heirloom(d, &["emit-manifest", "--file", "https://x.example.org/p.tar.gz=payload", "-o", "m.json"]);
    std::fs::write(d.join("config.json"), r#"{"swh_url": "https://config.test/api/1/"}"#).unwrap();

    let run = |flag: bool, env: bool| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_heirloom"));
        c.current_dir(d).env_remove("SWH_URL").env("HEIRLOOM_CONFIG", "config.json");
        c.args(["--offline-mocks", "mocks"]);
        if flag {
            c.args(["--swh-url", "https://flag.test/api/1/"]);
        }
        if env {
            c.env("SWH_URL", "https://env.test/api/1/");
        }
        let o = c.args(["lint-archival", "--manifest", "m.json"]).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o)
    };
    assert!(run(true, true).contains(&format!("swh:1:cnt:{}", "a".repeat(40))));
    assert!(run(false, true).contains(&format!("swh:1:cnt:{}", "b".repeat(40))));
    assert!(run(false, false).contains(&format!("swh:1:cnt:{}", "c".repeat(40))));
}

#[test]
fn audit_census_and_impact() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("sources.json"), include_bytes!("golden/sources.json")).unwrap();
    let o = heirloom(d, &["audit", "census", "--manifest", "sources.json", "--snapshot-label", "s1", "--date", "2024-01-01", "--split-dir", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().starts_with("date,label,total"), "{text}");
    assert!(text.contains("2024-01-01,s1,4,"), "{text}");
    for f in ["pog-types-high-rel.csv", "pog-types-vcs-rel.csv", "pog-types-dl-rel.csv"] {
        assert!(d.join("csv").join(f).exists(), "{f}");
    }

    std::fs::write(d.join("edges.csv"), "dependent,dependency\npinned,sed\ntexlive-bin,sed\n").unwrap();
    let o = heirloom(d, &["audit", "impact", "--manifest", "sources.json", "--edges", "edges.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("sources,https://ftpmirror.gnu.org/sed/sed-4.8.tar.gz,sed,3"), "{}", stdout(&o));

    std::fs::write(d.join("cycle.csv"), "dependent,dependency\npinned,sed\nsed,pinned\n").unwrap();
    let o = heirloom(d, &["audit", "impact", "--manifest", "sources.json", "--edges", "cycle.csv"]);
    assert_eq!(o.status.code(), Some(1));
}
