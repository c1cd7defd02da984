//! Round trips over archives written by the system's GNU tar, and header
//! fields checked against a Python dump of the same bytes.

use std::path::Path;
use std::process::Command;

use heirloom::nar::NarNode;
use heirloom::tar::{parse_tarball, serialize_tarball};

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok_and(|o| o.status.success())
}

fn populate(dir: &Path) {
    use std::os::unix::fs::{symlink, PermissionsExt};
    let root = dir.join("proj-1.0");
    std::fs::create_dir_all(root.join("src/nested/deeper")).unwrap();
    std::fs::create_dir_all(root.join("empty")).unwrap();
    std::fs::write(root.join("README"), "read me\n").unwrap();
    std::fs::write(root.join("src/main.c"), "int main(void) { return 0; }\n".repeat(40)).unwrap();
    std::fs::write(root.join("src/nested/deeper/blob.bin"), (0..5000u32).map(|i| (i * 7) as u8).collect::<Vec<_>>())
        .unwrap();
    std::fs::write(root.join("configure"), "#!/bin/sh\nexit 0\n").unwrap();
    std::fs::set_permissions(root.join("configure"), std::fs::Permissions::from_mode(0o755)).unwrap();
    let long = "a-rather-long-directory-name-that-keeps-going/".repeat(3) + "and-a-file-name-past-one-hundred-bytes.txt";
    std::fs::create_dir_all(root.join(&long).parent().unwrap()).unwrap();
    std::fs::write(root.join(&long), "long\n").unwrap();
    symlink("README", root.join("link-to-readme")).unwrap();
    symlink("x".repeat(120), root.join("long-link")).unwrap();
    std::fs::hard_link(root.join("README"), root.join("README.hard")).unwrap();
    std::fs::write(root.join("zero"), "").unwrap();
}

#[test]
fn gnu_tar_formats_round_trip() {
    if !have("tar") {
        eprintln!("skipping: tar not installed");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    populate(tmp.path());
    let mut checked = 0;
    for format in ["gnu", "oldgnu", "ustar", "posix", "v7"] {
        for extra in [&[][..], &["--owner=1234", "--group=99", "--mode=go-w", "--mtime=@1579061438"][..], &["--blocking-factor=1"]] {
            let out = tmp.path().join(format!("{format}-{}.tar", extra.len()));
            let status = Command::new("tar")
                .current_dir(tmp.path())
                .args(["--sort=name", &format!("--format={format}"), "-cf"])
                .arg(&out)
                .args(extra)
                .arg("proj-1.0")
                .output()
                .unwrap();
            if !status.status.success() {
                // v7 and ustar refuse some long names; that is tar's limitation.
                continue;
            }
            let bytes = std::fs::read(&out).unwrap();
            let (spec, tree) = parse_tarball(&bytes).unwrap_or_else(|e| panic!("{format} {extra:?}: {e}"));
            assert_eq!(spec.root, b"proj-1.0", "{format}");
            assert_eq!(serialize_tarball(&spec, &tree).unwrap(), bytes, "{format} {extra:?}");
            assert_eq!(tree.get(b"README"), Some(&NarNode::file("read me\n")));
            assert_eq!(tree.get(b"README.hard"), Some(&NarNode::file("read me\n")));
            assert_eq!(tree.get(b"configure"), Some(&NarNode::executable("#!/bin/sh\nexit 0\n")));
            assert_eq!(tree.get(b"link-to-readme"), Some(&NarNode::symlink("README")));
            checked += 1;
        }
    }
    assert!(checked >= 9, "only {checked} archives were produced");
}

const DUMP: &str = r#"
import sys
h = open(sys.argv[1], 'rb').read(512)
def octal(b):
    b = b.split(b'\0')[0].strip()
    return int(b, 8) if b else 0
print(h[0:100].rstrip(b'\0').decode())
for lo, hi in [(100,108),(108,116),(116,124),(124,136),(136,148),(148,154)]:
    print(octal(h[lo:hi]))
print(h[156])
print(h[265:297].rstrip(b'\0').decode())
print(h[297:329].rstrip(b'\0').decode())
"#;

#[test]
fn header_fields_match_independent_dump() {
    if !have("tar") || !have("python3") {
        eprintln!("skipping: tar or python3 not installed");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("hello.txt"), "hello, world\n").unwrap();
    let out = tmp.path().join("one.tar");
    let ok = Command::new("tar")
        .current_dir(tmp.path())
        .args(["--format=ustar", "--owner=alice:1001", "--group=staff:50", "--mtime=@1234567890", "--mode=640", "-cf"])
        .arg(&out)
        .arg("hello.txt")
        .status()
        .unwrap();
    assert!(ok.success());
    let dump = Command::new("python3").args(["-c", DUMP]).arg(&out).output().unwrap();
    assert!(dump.status.success());
    let text = String::from_utf8(dump.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();

    let (spec, _) = parse_tarball(&std::fs::read(&out).unwrap()).unwrap();
    let h = &spec.members[0].header;
    assert_eq!(String::from_utf8_lossy(&h.name), lines[0]);
    let nums = [h.mode.value, h.uid.value, h.gid.value, h.size.value, h.mtime.value, h.chksum];
    for (i, v) in nums.iter().enumerate() {
        assert_eq!(v.to_string(), lines[i + 1], "numeric field {i}");
    }
    assert_eq!(h.typeflag.to_string(), lines[7]);
    assert_eq!(String::from_utf8_lossy(&h.uname), lines[8]);
    assert_eq!(String::from_utf8_lossy(&h.gname), lines[9]);
    assert_eq!((h.uid.value, h.gid.value, h.mtime.value, h.mode.value), (1001, 50, 1234567890, 0o640));
}
