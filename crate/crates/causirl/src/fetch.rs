//! Dataset acquisition for the UCI Adult and German Credit files.
//!
//! Files are only ever downloaded by an explicit `fetch`; nothing in the
//! library downloads implicitly. Integrity is trust-on-first-use: the first
//! successful download records each file's SHA-256 in `checksums.lock` next
//! to the data, and every later fetch (or re-download) is verified against
//! the recorded digest. A structural row-count check guards against
//! truncated or wrong files independently of the lockfile.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ADULT_DATA_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data";
pub const ADULT_TEST_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.test";
pub const GERMAN_DATA_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/german/german.data";

pub const FILES: [(&str, &str); 3] = [
    ("adult.data", ADULT_DATA_URL),
    ("adult.test", ADULT_TEST_URL),
    ("german.data", GERMAN_DATA_URL),
];

const LOCKFILE: &str = "checksums.lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Published data-line counts (banner and blank lines excluded).
pub fn expected_rows(name: &str) -> Option<usize> {
    match name {
        "adult.data" => Some(32561),
        "adult.test" => Some(16281),
        "german.data" => Some(1000),
        _ => None,
    }
}

/// Count data lines the way the loaders do: blank lines and `|` banner lines
/// are not data.
pub fn count_data_rows(bytes: &[u8]) -> usize {
    String::from_utf8_lossy(bytes)
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('|'))
        .count()
}

fn read_lock(dir: &Path) -> Result<Vec<(String, String)>> {
    let path = dir.join(LOCKFILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(&path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some(name), Some(digest)) => entries.push((name.to_string(), digest.to_string())),
            _ => {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line: i + 1,
                    msg: "expected `<name> <sha256>`".into(),
                })
            }
        }
    }
    Ok(entries)
}

fn write_lock(dir: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut sorted = entries.to_vec();
    sorted.sort();
    let text: String = sorted.iter().map(|(n, d)| format!("{n} {d}\n")).collect();
    std::fs::write(dir.join(LOCKFILE), text)?;
    Ok(())
}

/// Verify `bytes` for `name` against the lockfile in `dir`, recording the
/// digest on first use. Also applies the structural row-count check.
pub fn verify_or_record(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    if let Some(expected) = expected_rows(name) {
        let rows = count_data_rows(bytes);
        if rows != expected {
            return Err(Error::Integrity(format!(
                "{name}: expected {expected} data rows, found {rows}"
            )));
        }
    }
    let digest = sha256_hex(bytes);
    let mut entries = read_lock(dir)?;
    match entries.iter().find(|(n, _)| n == name) {
        Some((_, recorded)) if *recorded == digest => Ok(()),
        Some((_, recorded)) => Err(Error::Integrity(format!(
            "{name}: checksum mismatch (recorded {recorded}, got {digest})"
        ))),
        None => {
            entries.push((name.to_string(), digest));
            write_lock(dir, &entries)
        }
    }
}

fn download(url: &str) -> Result<Vec<u8>> {
    let resp = reqwest::blocking::get(url)
        .map_err(|e| Error::Input(format!("download failed for {url}: {e}")))?;
    if !resp.status().is_success() {
        return Err(Error::Input(format!("download failed for {url}: HTTP {}", resp.status())));
    }
    resp.bytes()
        .map(|b| b.to_vec())
        .map_err(|e| Error::Input(format!("download failed for {url}: {e}")))
}

/// Fetch any of the three UCI files missing from `dir` and verify all of
/// them. Existing files are re-verified, not re-downloaded.
pub fn fetch_all(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, url) in FILES {
        let path = dir.join(name);
        let bytes = if path.exists() {
            std::fs::read(&path)?
        } else {
            let bytes = download(url)?;
            std::fs::write(&path, &bytes)?;
            bytes
        };
        verify_or_record(dir, name, &bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_value() {
        // sha256("abc"), a published test vector
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn row_counting_skips_banners_and_blanks() {
        let bytes = b"|1x3 Cross validator\n\na, b\nc, d\n\n";
        assert_eq!(count_data_rows(bytes), 2);
    }

    #[test]
    fn first_use_records_then_verifies() {
        let tmp = tempfile::tempdir().unwrap();
        let payload = b"x y z\n";
        verify_or_record(tmp.path(), "somefile", payload).unwrap();
        // same bytes verify cleanly
        verify_or_record(tmp.path(), "somefile", payload).unwrap();
        // changed bytes are an integrity error
        match verify_or_record(tmp.path(), "somefile", b"tampered\n") {
            Err(Error::Integrity(msg)) => assert!(msg.contains("checksum mismatch")),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_row_count_is_an_integrity_error() {
        let tmp = tempfile::tempdir().unwrap();
        match verify_or_record(tmp.path(), "german.data", b"only one row\n") {
            Err(Error::Integrity(msg)) => assert!(msg.contains("1000")),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn lockfile_is_sorted_and_parseable() {
        let tmp = tempfile::tempdir().unwrap();
        verify_or_record(tmp.path(), "zfile", b"z\n").unwrap();
        verify_or_record(tmp.path(), "afile", b"a\n").unwrap();
        let text = std::fs::read_to_string(tmp.path().join(LOCKFILE)).unwrap();
        let names: Vec<&str> = text.lines().map(|l| l.split(' ').next().unwrap()).collect();
        assert_eq!(names, ["afile", "zfile"]);
        std::fs::write(tmp.path().join(LOCKFILE), "garbage-without-digest\n ").unwrap();
        assert!(read_lock(tmp.path()).is_err());
    }
}
