use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.txt";

/// Output directory writer. Paths are relative to the directory root and
/// always use `/`.
#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> CliResult<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(p)
    }

    pub fn write(&self, rel: &str, contents: &str) -> CliResult<()> {
        let p = self.path(rel)?;
        fs::write(&p, contents).map_err(|e| CliError::io(&p, e))
    }

    /// Rewrites the manifest over every file currently in the directory.
    pub fn write_manifest(&self) -> CliResult<String> {
        let text = manifest(&self.root)?;
        self.write(MANIFEST, &text)?;
        Ok(text)
    }
}

fn walk(dir: &Path, prefix: &str, out: &mut Vec<(String, PathBuf)>) -> CliResult<()> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let rel = if prefix.is_empty() { name.clone() } else { format!("{prefix}/{name}") };
        let path = entry.path();
        if path.is_dir() {
            walk(&path, &rel, out)?;
        } else if rel != MANIFEST {
            out.push((rel, path));
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `<sha256>  <relative path>` per file, sorted by path.
pub fn manifest(root: &Path) -> CliResult<String> {
    let mut files = Vec::new();
    walk(root, "", &mut files)?;
    files.sort();
    let mut out = String::new();
    for (rel, path) in files {
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        out.push_str(&format!("{}  {rel}\n", sha256_hex(&bytes)));
    }
    Ok(out)
}

/// Quotes a CSV field when it contains a separator, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_is_sorted_and_skips_itself() {
        let dir = tempfile::tempdir().unwrap();
        let a = Artifacts::new(dir.path()).unwrap();
        a.write("b/x.csv", "1\n").unwrap();
        a.write("a.csv", "2\n").unwrap();
        let m = a.write_manifest().unwrap();
        let paths: Vec<&str> = m.lines().map(|l| l.split("  ").nth(1).unwrap()).collect();
        assert_eq!(paths, vec!["a.csv", "b/x.csv"]);
        assert_eq!(a.write_manifest().unwrap(), m);
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
