use std::io::Write;
use std::process::{Command, Stdio};

fn system_gzip(data: &[u8], level: u8, rsync: bool) -> Option<Vec<u8>> {
    let dir = tempfile::tempdir().ok()?;
    let path = dir.path().join("in");
    std::fs::File::create(&path).ok()?.write_all(data).ok()?;
    let mut cmd = Command::new("gzip");
    cmd.arg(format!("-{level}")).arg("-n").arg("-c");
    if rsync {
        cmd.arg("--rsyncable");
    }
    let out = cmd.arg(&path).stderr(Stdio::null()).output().ok()?;
    if !out.status.success() {
        return None;
    }
    let gz = out.stdout;
    Some(gz[10..gz.len() - 8].to_vec())
}

fn corpus() -> Vec<(String, Vec<u8>)> {
    let mut v = vec![("empty".into(), vec![]), ("one".into(), b"a".to_vec())];
    let mut text = Vec::new();
    for i in 0..60000u32 {
        text.extend_from_slice(format!("line {} value {}\n", i, i.wrapping_mul(2654435761) % 977).as_bytes());
    }
    v.push(("text".into(), text));
    let mut x: u64 = 0x9E3779B97F4A7C15;
    let mut rnd = Vec::new();
    for _ in 0..300_000 {
        x ^= x << 13; x ^= x >> 7; x ^= x << 17;
        rnd.push((x >> 56) as u8);
    }
    v.push(("random".into(), rnd.clone()));
    let mut mixed = Vec::new();
    for i in 0..400_000usize {
        let b = if (i / 5000) % 3 == 0 { rnd[i % rnd.len()] } else { b"abcabcabdabcdeabc"[(i * 7 / 3) % 17] };
        mixed.push(b);
    }
    v.push(("mixed".into(), mixed));
    v.push(("zeros".into(), vec![0u8; 200_000]));
    v
}

#[test]
fn matches_system_gzip() {
    if Command::new("gzip").arg("--version").output().is_err() {
        eprintln!("gzip not available; skipping");
        return;
    }
    let mut failures = vec![];
    for (name, data) in corpus() {
        for level in 1..=9u8 {
            for rsync in [false, true] {
                let Some(expected) = system_gzip(&data, level, rsync) else { continue };
                let ours = heirloom::compress::gnu_deflate::compress(&data, level, rsync);
                if ours != expected {
                    let first = ours.iter().zip(&expected).position(|(a, b)| a != b);
                    failures.push(format!("{name} -{level} rsync={rsync}: len {} vs {}, first diff {:?}", ours.len(), expected.len(), first));
                }
            }
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
