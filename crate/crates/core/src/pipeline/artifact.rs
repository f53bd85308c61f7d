//! On-disk artifact container.
//!
//! Every artifact starts with one header line
//!
//! ```text
//! JOBMATCH <kind> v<version> key=<stage key> input=<input sha256>
//! ```
//!
//! followed by the payload. The stage key is a SHA-256 chained over the input
//! file and the configuration sections each stage depends on, so an artifact
//! left over from a different input or configuration is detected and refused.

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &str = "JOBMATCH";
pub const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Key of a stage: hash of its parent key, its name and its serialized settings.
pub fn stage_key<T: Serialize>(parent: &str, stage: &str, settings: &T) -> String {
    let mut h = Sha256::new();
    h.update(parent.as_bytes());
    h.update([0]);
    h.update(stage.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(settings).expect("settings serialize"));
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub kind: String,
    pub version: u32,
    pub key: String,
    pub input: String,
}

impl Header {
    pub fn render(&self) -> String {
        format!(
            "{MAGIC} {} v{} key={} input={}",
            self.kind, self.version, self.key, self.input
        )
    }

    pub fn parse(line: &str) -> Option<Header> {
        let mut parts = line.split(' ');
        if parts.next()? != MAGIC {
            return None;
        }
        let kind = parts.next()?.to_string();
        let version = parts.next()?.strip_prefix('v')?.parse().ok()?;
        let key = parts.next()?.strip_prefix("key=")?.to_string();
        let input = parts.next()?.strip_prefix("input=")?.to_string();
        if parts.next().is_some() {
            return None;
        }
        Some(Header {
            kind,
            version,
            key,
            input,
        })
    }
}

pub fn write(path: &Path, header: &Header, payload: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = header.render();
    text.push('\n');
    text.push_str(payload);
    // Write then rename so a crash never leaves a half-written artifact behind.
    let tmp = path.with_extension("partial");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads an artifact and checks it against the expected header. `stage` names
/// the subcommand that produces it, for the error message.
pub fn read(path: &Path, expected: &Header, stage: &str) -> Result<String> {
    let err = |message: String| Error::Artifact {
        stage: stage.to_string(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| {
        err(format!(
            "cannot read {} ({e}); run `jobmatch {stage}` first",
            path.display()
        ))
    })?;
    let (first, payload) = text.split_once('\n').unwrap_or((&text, ""));
    let header = Header::parse(first).ok_or_else(|| err(format!("{} is not a jobmatch artifact", path.display())))?;
    if header.kind != expected.kind {
        return Err(err(format!(
            "{} holds a {} artifact, expected {}",
            path.display(),
            header.kind,
            expected.kind
        )));
    }
    if header.version != expected.version {
        return Err(err(format!(
            "{} has format v{}, this build reads v{}; rerun `jobmatch {stage}`",
            path.display(),
            header.version,
            expected.version
        )));
    }
    if header.input != expected.input {
        return Err(err(format!(
            "{} was built from a different input file; rerun `jobmatch {stage}`",
            path.display()
        )));
    }
    if header.key != expected.key {
        return Err(err(format!(
            "{} is stale (built with different settings or upstream artifacts); rerun `jobmatch {stage}`",
            path.display()
        )));
    }
    Ok(payload.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(key: &str) -> Header {
        Header {
            kind: "corpus".into(),
            version: FORMAT_VERSION,
            key: key.into(),
            input: "ab".into(),
        }
    }

    #[test]
    fn header_round_trip() {
        let h = header("k1");
        assert_eq!(Header::parse(&h.render()), Some(h));
        assert_eq!(Header::parse("JOBMATCH corpus 1 key=a input=b"), None);
        assert_eq!(Header::parse("{\"json\":1}"), None);
    }

    #[test]
    fn stale_and_foreign_artifacts_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.art");
        write(&p, &header("k1"), "payload\nline 2\n").unwrap();
        assert_eq!(read(&p, &header("k1"), "ingest").unwrap(), "payload\nline 2\n");
        let e = read(&p, &header("k2"), "ingest").unwrap_err();
        assert!(e.to_string().contains("stale") && e.to_string().contains("ingest"));
        let other = Header {
            kind: "embeddings".into(),
            ..header("k1")
        };
        assert!(read(&p, &other, "embed").is_err());
        let missing = read(&dir.path().join("none.art"), &header("k1"), "embed").unwrap_err();
        assert!(missing.to_string().contains("jobmatch embed"));
    }

    #[test]
    fn keys_chain() {
        let a = stage_key("root", "ingest", &1);
        assert_eq!(a, stage_key("root", "ingest", &1));
        assert_ne!(a, stage_key("root", "ingest", &2));
        assert_ne!(a, stage_key("other", "ingest", &1));
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
