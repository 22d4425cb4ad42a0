//! The single writer through which every artifact passes, and the manifest it leaves behind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub pass: bool,
    /// Artifact holding the full report.
    pub report: String,
    pub headline: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    /// Effective parameters of the run.
    pub settings: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub suites: Vec<SuiteEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct ManifestWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
    suites: Vec<SuiteEntry>,
}

impl ManifestWriter {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new(), suites: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        if self.files.iter().any(|f| f.path == name) || name == MANIFEST_NAME {
            return Err(CliError::Usage(format!("artifact {name} written twice")));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(CliError::io(&path))?;
        self.files.push(FileEntry { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()), bytes: contents.len() });
        Ok(())
    }

    pub fn suite(&mut self, name: &str, pass: bool, report: &str, headline: &[(&str, f64)]) {
        let headline = headline.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        self.suites.push(SuiteEntry { name: name.to_string(), pass, report: report.to_string(), headline });
    }

    /// Writes the manifest and fails with the first failing suite.
    pub fn finish(self, command: &str, seed: u64, settings: serde_json::Value) -> CliResult<Manifest> {
        let manifest = Manifest { command: command.to_string(), seed, settings, files: self.files, suites: self.suites };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
        let path = self.dir.join(MANIFEST_NAME);
        std::fs::write(&path, text).map_err(CliError::io(&path))?;
        if let Some(s) = manifest.suites.iter().find(|s| !s.pass) {
            return Err(CliError::SuiteFailed { suite: s.name.clone(), report: self.dir.join(&s.report) });
        }
        Ok(manifest)
    }
}

pub fn load_manifest(path: &Path) -> CliResult<Manifest> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Manifest { path: path.to_path_buf(), message: e.to_string() })
}

/// One line per suite, then one line per artifact whose hash no longer matches.
pub fn summarize(manifest: &Manifest, dir: &Path) -> (String, bool) {
    let mut out = String::new();
    let mut ok = true;
    for s in &manifest.suites {
        let verdict = if s.pass { "PASS" } else { "FAIL" };
        ok &= s.pass;
        let numbers: Vec<String> = s.headline.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
        out.push_str(&format!("{verdict} {} {} ({})\n", s.name, numbers.join(" "), s.report));
    }
    for f in &manifest.files {
        let current = std::fs::read(dir.join(&f.path)).ok().map(|b| sha256_hex(&b));
        if current.as_deref() != Some(f.sha256.as_str()) {
            ok = false;
            out.push_str(&format!("FAIL artifact {} does not match its recorded hash\n", f.path));
        }
    }
    (out, ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_hash() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn failing_suite_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ManifestWriter::create(dir.path()).unwrap();
        w.write("a.csv", "x\n1\n").unwrap();
        w.suite("check", false, "a.csv", &[("max_rel", 0.5)]);
        let err = w.finish("dn", 1, serde_json::json!({})).unwrap_err();
        assert!(matches!(err, CliError::SuiteFailed { .. }));
        let m = load_manifest(&dir.path().join(MANIFEST_NAME)).unwrap();
        let (text, ok) = summarize(&m, dir.path());
        assert!(!ok);
        assert_eq!(text, "FAIL check max_rel=0.5 (a.csv)\n");
    }

    #[test]
    fn duplicate_artifacts_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ManifestWriter::create(dir.path()).unwrap();
        w.write("a.csv", "1").unwrap();
        assert!(w.write("a.csv", "2").is_err());
    }
}
